import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barylab.barycenter import (
    SimplexConfig,
    all_forms,
    barycenter,
    cauchy_schwarz_slack,
    column_span,
    functional,
    jacobian,
    matched_frame_for_forms,
    q1_form,
    q2_form,
    q2bar_form,
    ratio,
    ratio_from_forms,
    solve_barycenter,
    spherical_point,
    straighten,
    straighten_derivative,
    tangent_basis,
    determinant_chain_check,
)
from barylab.errors import ConvergenceError, DegenerateMeasureError, PreconditionError
from barylab.liecore import build_cartan_frame, chamber_barycenter
from barylab.spd import (
    WeightedBoundaryMeasure,
    act,
    busemann_gradient,
    busemann_hessian,
    busemann,
    canonical_k,
    distance,
    exp_at,
    haar_so,
    log_at,
    mixture,
    push_measure,
    sample_boundary_measure,
    spd_sqrt,
)
from oracles import random_sl, random_traceless

seeds = st.integers(0, 2**31)


def point(m, rng, radius=1.0):
    return exp_at(np.eye(m), random_traceless(m, rng, radius * rng.uniform()))


def config(m, k, rng, N=128, radius=1.0, seed=0):
    return SimplexConfig.from_vertices([point(m, rng, radius) for _ in range(k + 1)], N, seed)


def interior(k, rng):
    a = np.sqrt(rng.dirichlet(np.ones(k + 1)))
    return a / np.linalg.norm(a)


class TestFunctional:
    def test_single_atom(self, rng):
        nu = sample_boundary_measure(np.eye(3), 1, 4)
        x = point(3, rng)
        value, grad, hess = functional(x, nu, check=False)
        assert value == pytest.approx(busemann(x, nu.atoms[0]))
        assert np.linalg.norm(grad) == pytest.approx(1.0)
        with pytest.raises(DegenerateMeasureError):
            functional(x, nu)

    def test_hessian_is_sum(self, rng):
        nu = sample_boundary_measure(np.eye(3), 7, 2)
        x = point(3, rng)
        _, grad, hess = functional(x, nu)
        f = build_cartan_frame(3)
        direct = sum(w * busemann_hessian(x, th) for w, th in zip(nu.weights, nu.atoms))
        g = sum(w * f.coords(busemann_gradient(x, th)) for w, th in zip(nu.weights, nu.atoms))
        assert np.allclose(hess, direct, atol=1e-12)
        assert np.allclose(grad, g, atol=1e-12)


class TestBarycenter:
    @given(st.integers(2, 5), seeds)
    @settings(max_examples=15)
    def test_first_order(self, m, seed):
        rng = np.random.default_rng(seed)
        nu = sample_boundary_measure(point(m, rng), 64, seed)
        res = solve_barycenter(nu)
        assert res.grad_norm <= 1e-10
        _, g, _ = functional(res.point, nu)
        assert np.linalg.norm(g) <= 1e-10

    @given(st.integers(3, 4), seeds)
    @settings(max_examples=10)
    def test_equivariance(self, m, seed):
        rng = np.random.default_rng(seed)
        nu = sample_boundary_measure(point(m, rng), 64, seed)
        g = random_sl(m, rng, 0.3)
        x = barycenter(nu)
        y = barycenter(push_measure(g, nu))
        assert np.allclose(y, act(g, x), atol=1e-8)

    def test_symmetric_midpoint(self, rng):
        # atoms of the second measure are images under the geodesic symmetry
        # at o, which fixes o; transporting by g moves the fixed point to g.o
        m = 4
        x = point(m, rng, 1.5)
        nu = sample_boundary_measure(x, 200, 1)
        w0 = np.eye(m)[::-1]
        flipped = canonical_k(_fix_det(np.linalg.inv(spd_sqrt(x)) @ sample_boundary_measure(np.eye(m), 200, 1).ks @ w0))
        sym = WeightedBoundaryMeasure(flipped, nu.weights.copy())
        both = mixture([nu, sym], [0.5, 0.5])
        assert np.allclose(barycenter(both), np.eye(m), atol=1e-8)
        g = random_sl(m, rng, 0.3)
        moved = barycenter(push_measure(g, both))
        mid = exp_at(act(g, x), 0.5 * log_at(act(g, x), act(g, np.linalg.inv(x))))
        assert np.allclose(moved, mid, atol=1e-8)

    def test_monte_carlo_base(self):
        errs = [distance(barycenter(sample_boundary_measure(np.eye(3), N, 5)), np.eye(3)) for N in (256, 4096)]
        assert errs[1] < 0.05 and errs[1] < errs[0]

    def test_convergence_error(self, rng):
        nu = sample_boundary_measure(np.eye(3), 64, 0)
        with pytest.raises(ConvergenceError) as exc:
            solve_barycenter(nu, x0=point(3, rng, 3.0), max_iter=1)
        assert exc.value.trace


def _fix_det(k):
    k = k.copy()
    neg = np.linalg.det(k) < 0
    k[neg, :, 0] *= -1
    return k


class TestStraighten:
    def test_vertex(self, rng):
        cfg = config(3, 2, rng, N=512)
        for i in range(3):
            e = np.eye(3)[i]
            x = straighten(cfg, e)
            assert np.allclose(x, barycenter(cfg.measures[i]))
            assert distance(x, cfg.vertices[i]) < 0.2

    def test_constant(self, rng):
        v = point(3, rng)
        cfg = SimplexConfig.from_vertices([v, v, v], 64, 3)
        a = straighten(cfg, interior(2, rng))
        b = straighten(cfg, interior(2, rng))
        assert np.allclose(a, b, atol=1e-10)

    def test_equivariance(self, rng):
        cfg = config(3, 2, rng)
        g = random_sl(3, rng, 0.3)
        d = interior(2, rng)
        assert np.allclose(straighten(cfg.transported(g), d), act(g, straighten(cfg, d)), atol=1e-8)

    def test_spherical_point(self):
        with pytest.raises(PreconditionError):
            spherical_point([0.5, 0.5])
        with pytest.raises(PreconditionError):
            spherical_point([-0.6, 0.8])


class TestDerivative:
    @pytest.mark.parametrize("m,k", [(3, 2), (4, 3)])
    def test_finite_differences(self, m, k, rng):
        cfg = config(m, k, rng, N=96)
        d = interior(k, rng)
        x = straighten(cfg, d)
        U = tangent_basis(d)
        M = straighten_derivative(cfg, d, x, U)
        f = build_cartan_frame(m)
        h = 1e-4
        for j in range(k):
            plus = d + h * U[:, j]
            minus = d - h * U[:, j]
            xp = straighten(cfg, plus / np.linalg.norm(plus), x)
            xm = straighten(cfg, minus / np.linalg.norm(minus), x)
            fd = (f.coords(log_at(x, xp)) - f.coords(log_at(x, xm))) / (2 * h)
            assert np.linalg.norm(fd - M[:, j]) <= 1e-4 * np.linalg.norm(M[:, j])

    def test_duplicate_vertices(self, rng):
        v = point(3, rng)
        cfg = SimplexConfig.from_vertices([v, v], 64, 0)
        M = straighten_derivative(cfg, np.array([0.6, 0.8]))
        assert np.max(np.abs(M)) < 1e-10

    def test_equivariance(self, rng):
        cfg = config(3, 3, rng)
        d = interior(3, rng)
        g = random_sl(3, rng, 0.3)
        s1 = np.linalg.svd(straighten_derivative(cfg, d), compute_uv=False)
        s2 = np.linalg.svd(straighten_derivative(cfg.transported(g), d), compute_uv=False)
        assert np.allclose(s1, s2, atol=1e-8)


class TestForms:
    def test_single_atom(self, rng):
        nu = sample_boundary_measure(np.eye(4), 1, 0)
        x = point(4, rng)
        assert np.linalg.matrix_rank(q1_form(x, nu).matrix, tol=1e-10) == 1
        P = q2bar_form(x, nu).matrix
        assert np.allclose(P @ P, P, atol=1e-12)
        assert np.linalg.matrix_rank(P, tol=1e-10) == 9 - 3

    @given(st.integers(2, 5), seeds)
    @settings(max_examples=15)
    def test_q2_dominates_projector(self, m, seed):
        rng = np.random.default_rng(seed)
        nu = sample_boundary_measure(point(m, rng), 32, seed)
        x = point(m, rng)
        q1, q2, q2b = all_forms(x, nu)
        f = build_cartan_frame(m)
        c = f.root_values(chamber_barycenter(f).matrix(f)).min()
        assert np.linalg.eigvalsh(q2.matrix - c * q2b.matrix).min() >= -1e-9
        assert np.trace(q1.matrix) == pytest.approx(1.0)
        assert np.linalg.eigvalsh(q1.matrix).max() <= 1.0 + 1e-12
        S, _ = np.linalg.qr(rng.standard_normal((f.n, min(3, f.n))))
        assert np.linalg.det(S.T @ q2.matrix @ S) >= np.linalg.det(c * S.T @ q2b.matrix @ S) * (1 - 1e-9)

    def test_monte_carlo_symmetry(self):
        N = 2048
        nu = sample_boundary_measure(np.eye(4), N, 9)
        q1, _, q2b = all_forms(np.eye(4), nu)
        n, r = 9, 3
        assert np.linalg.norm(q1.matrix - np.eye(n) / n, 2) <= 3 / np.sqrt(N)
        assert np.linalg.norm(q2b.matrix - (n - r) / n * np.eye(n), 2) <= 3 / np.sqrt(N)


class TestRatio:
    def test_diagonal(self):
        S = np.eye(5)[:, :3]
        assert ratio_from_forms(2 * np.eye(5), 3 * np.eye(5), S) == pytest.approx(2**1.5 / 27)

    def test_rebasis(self, rng):
        nu = sample_boundary_measure(point(3, rng), 64, 1)
        x = point(3, rng)
        S, _ = np.linalg.qr(rng.standard_normal((5, 3)))
        O, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        assert ratio(x, nu, S @ O) == pytest.approx(ratio(x, nu, S), rel=1e-10)

    def test_degenerate(self):
        assert ratio_from_forms(np.eye(3), np.diag([1.0, 1.0, 0.0]), np.eye(3)) == np.inf

    def test_preconditions(self, rng):
        nu = sample_boundary_measure(np.eye(3), 8, 0)
        with pytest.raises(PreconditionError):
            ratio(np.eye(3), nu, np.ones((5, 1)))

    def test_regression_baseline(self):
        # recorded value: x = o, 2048 atoms seed 0, m = 5, S of dimension 12 from seed 1
        nu = sample_boundary_measure(np.eye(5), 2048, 0)
        S, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((14, 12)))
        val = ratio(np.eye(5), nu, S)
        assert np.isfinite(val) and val > 0
        assert val == pytest.approx(REGRESSION_RATIO_M5, rel=1e-6)

    def test_column_span(self, rng):
        M = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 4))
        S, rank = column_span(M)
        assert rank == 2 and np.allclose(S.T @ S, np.eye(2))


REGRESSION_RATIO_M5 = 0.001780852707132003


class TestJacobian:
    @given(st.integers(3, 4), seeds)
    @settings(max_examples=6)
    def test_bound(self, m, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, m * (m + 1) // 2))
        rec = jacobian(config(m, k, rng, N=64, seed=seed), interior(k, rng))
        assert rec.ok
        assert rec.jac <= rec.bound * (1 + 1e-6)

    def test_duplicate(self, rng):
        v = point(3, rng)
        w = point(3, rng)
        cfg = SimplexConfig.from_vertices([v, v, w], 64, 0)
        # identical atom sets make the map depend on a_0^2 + a_1^2 only
        rec = jacobian(cfg, interior(2, rng))
        assert rec.jac == 0.0 and rec.degenerate
        cfg = SimplexConfig.from_vertices([v, v], 64, 0)
        rec = jacobian(cfg, np.array([0.6, 0.8]))
        assert rec.jac == 0.0 and rec.degenerate

    def test_volume_distortion(self, rng):
        # jac is the volume change of the straightening map between the
        # round metric on the sphere and the symmetric metric
        m, k = 3, 2
        cfg = config(m, k, rng, N=96)
        d = interior(k, rng)
        rec = jacobian(cfg, d)
        U = tangent_basis(d)
        f = build_cartan_frame(m)
        x = rec.point
        h = 1e-4
        cols = []
        for j in range(k):
            p = d + h * U[:, j]
            q = d - h * U[:, j]
            xp = straighten(cfg, p / np.linalg.norm(p), x)
            xq = straighten(cfg, q / np.linalg.norm(q), x)
            cols.append((f.coords(log_at(x, xp)) - f.coords(log_at(x, xq))) / (2 * h))
        F = np.array(cols).T
        assert np.sqrt(np.linalg.det(F.T @ F)) == pytest.approx(rec.jac, rel=1e-3)

    def test_invariance(self, rng):
        cfg = config(3, 2, rng)
        d = interior(2, rng)
        g = random_sl(3, rng, 0.3)
        a, b = jacobian(cfg, d), jacobian(cfg.transported(g), d)
        assert b.jac == pytest.approx(a.jac, rel=1e-8)
        assert b.ratio == pytest.approx(a.ratio, rel=1e-8)

    def test_cauchy_schwarz(self, rng):
        cfg = config(4, 5, rng, N=64)
        d = interior(5, rng)
        rec = jacobian(cfg, d)
        M = straighten_derivative(cfg, d, rec.point)
        nu = mixture(cfg.measures, d**2)
        q1, q2, _ = all_forms(rec.point, nu)
        U = rng.standard_normal((5, 200))
        U /= np.linalg.norm(U, axis=0)
        V = rng.standard_normal((9, 200))
        assert cauchy_schwarz_slack(q1.matrix, q2.matrix, M, U, V) >= -1e-8


class TestChainCertificate:
    def test_no_small_eigenvalue(self):
        n = 14
        Q1 = np.eye(n) / n
        Q2 = 0.5 * np.eye(n)
        S = np.eye(n)[:, :12]
        cert = determinant_chain_check(Q1, Q2, S, None, 0.2)
        assert cert.k == 0 and cert.holds
        assert cert.bound == pytest.approx(0.2**-12)

    def test_synthetic_k1(self):
        # one small Q2 eigenvalue along the flat direction e_0; the matched
        # frame holds r root-space vectors with tiny Q1 values
        m, r, n = 5, 4, 14
        L = 1e-3
        Q2 = np.eye(n)
        Q2[0, 0] = L
        q1 = np.full(n, 0.05)
        q1[[4, 5, 6, 7]] = 0.5 * L
        Q1 = np.diag(q1 / q1.sum())
        S = np.eye(n)[:, : n - 2]
        V = np.eye(n)[:, [4, 5, 6, 7]]
        cert = determinant_chain_check(Q1, Q2, S, V, 0.2, owners=(0, 0, 0, 0))
        assert cert.applicable and cert.k == 1
        assert all(ok for ok, _ in cert.steps.values())
        assert cert.ratio <= cert.bound

    def test_real_configuration(self, rng):
        m = 5
        f = build_cartan_frame(m)
        ks = canonical_k(np.array([
            np.linalg.qr(np.eye(m) + 0.03 * (A - A.T))[0] for A in rng.standard_normal((400, m, m))
        ]))
        ks[np.linalg.det(ks) < 0, :, 0] *= -1
        nu = WeightedBoundaryMeasure(canonical_k(ks), np.full(400, 1 / 400))
        x = barycenter(nu)
        q1, q2, _ = all_forms(x, nu)
        S = np.eye(f.n)
        res = matched_frame_for_forms(f, q2.matrix, S, 0.2)
        assert res is not None
        cert = determinant_chain_check(q1, q2, S, res, 0.2)
        assert cert.holds and cert.ratio <= cert.bound

    def test_preconditions(self):
        with pytest.raises(PreconditionError):
            determinant_chain_check(np.eye(14), np.eye(14), np.eye(14), None, 0.5)
        Q2 = np.eye(14)
        Q2[0, 0] = 1e-3
        with pytest.raises(PreconditionError):
            determinant_chain_check(np.eye(14) / 14, Q2, np.eye(14), None, 0.1)
