import json
import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from barylab.errors import ConstructionError, SizeError
from barylab.liecore import (
    CartanFrame,
    build_cartan_frame,
    chamber_barycenter,
    chamber_vector,
    frame_from_json,
    frame_to_json,
    maximally_singular_near,
    orthogonal_root_indices,
    orthogonal_root_sum,
    root_system,
    sl_constants,
    verify_root_action,
)


def load(golden_dir, name):
    with open(os.path.join(golden_dir, name)) as fh:
        return json.load(fh)


class TestRootSystem:
    @pytest.mark.parametrize("name", ["A2", "A3", "B2"])
    def test_root_counts(self, golden_dir, name):
        total, positive = load(golden_dir, "expected.json")["root_counts"][name]
        rs = root_system(name[0], int(name[1:]))
        assert rs.roots.shape[0] == total
        assert rs.n_positive == positive

    @pytest.mark.parametrize(
        "family,rank",
        [("A", r) for r in range(1, 5)]
        + [("B", r) for r in range(1, 5)]
        + [("C", r) for r in range(1, 5)]
        + [("D", r) for r in range(2, 5)],
    )
    def test_crystallographic_closure(self, family, rank):
        rs = root_system(family, rank)
        assert rs.crystallographic_residual() < 1e-10
        R = rs.roots
        # closed under negation
        for a in R:
            assert np.min(np.linalg.norm(R + a, axis=1)) < 1e-12

    @pytest.mark.parametrize("r", range(1, 8))
    def test_type_a_positive_count(self, r):
        rs = root_system("A", r)
        assert rs.n_positive == (r + 1) * r // 2
        assert set(rs.multiplicities) == {1}

    def test_simple_roots_type_a(self):
        rs = root_system("A", 3)
        assert len(rs.simple_roots()) == 3

    @pytest.mark.parametrize("family,rank", [("D", 1), ("E", 6), ("A", 0), ("B", -1)])
    def test_invalid(self, family, rank):
        with pytest.raises(ConstructionError):
            root_system(family, rank)


class TestCartanFrame:
    @pytest.mark.parametrize("m,n,r,P", [(2, 2, 1, 1), (3, 5, 2, 3), (4, 9, 3, 6)])
    def test_sizes(self, m, n, r, P):
        f = build_cartan_frame(m)
        assert (f.n, f.r, len(f.roots)) == (n, r, P)
        assert all(b.shape == (1, m, m) for b in f.p_blocks)

    @pytest.mark.parametrize("m", range(2, 9))
    def test_orthonormal_traceless(self, m):
        f = build_cartan_frame(m)
        B = f.basis.reshape(f.n, -1)
        assert np.max(np.abs(B @ B.T - np.eye(f.n))) < 1e-12
        assert np.max(np.abs(np.trace(f.basis, axis1=1, axis2=2))) < 1e-12
        assert np.allclose(f.basis, np.swapaxes(f.basis, 1, 2))

    @pytest.mark.parametrize("m", [1, 13, 2.5])
    def test_size_error(self, m):
        with pytest.raises(SizeError):
            build_cartan_frame(m)

    @given(st.integers(2, 6), st.integers(0, 2**31))
    def test_coords_roundtrip(self, m, seed):
        f = build_cartan_frame(m)
        c = np.random.default_rng(seed).standard_normal(f.n)
        assert np.allclose(f.coords(f.matrix(c)), c, atol=1e-12)

    def test_golden_m3(self, golden_dir):
        expected = load(golden_dir, "frame_m3.json")
        got = json.loads(frame_to_json(build_cartan_frame(3)))
        assert got["roots"] == expected["roots"]
        for key in ("a_basis", "p_blocks", "k_blocks"):
            assert np.allclose(got[key], expected[key], atol=1e-15)

    @pytest.mark.parametrize("m", [2, 5])
    def test_json_roundtrip(self, m):
        f = build_cartan_frame(m)
        g = frame_from_json(frame_to_json(f))
        assert np.array_equal(g.basis, f.basis)
        assert g.roots == f.roots

    @pytest.mark.parametrize("m", [3, 5])
    def test_root_action(self, m):
        rep = verify_root_action(build_cartan_frame(m))
        assert rep.ok and rep.max_residual <= 1e-12

    def test_root_action_corrupted(self):
        f = build_cartan_frame(4)
        p = list(f.p_blocks)
        p[2] = 2.0 * p[2]
        bad = CartanFrame(f.m, f.a_basis, f.roots, tuple(p), f.k_blocks,
                          np.concatenate([f.a_basis] + p, axis=0))
        rep = verify_root_action(bad)
        assert not rep.ok
        kinds = {v[1] for v in rep.violations}
        assert "pairing" in kinds and "gram" in kinds
        assert any(v[0] == 2 for v in rep.violations)


class TestChamber:
    def test_barycenter_m3(self, golden_dir):
        f = build_cartan_frame(3)
        b = chamber_barycenter(f).matrix(f)
        assert np.allclose(np.diag(b), load(golden_dir, "expected.json")["chamber_barycenter_m3"])

    def test_barycenter_m2(self):
        f = build_cartan_frame(2)
        assert np.allclose(chamber_barycenter(f).matrix(f), np.diag([1, -1]) / np.sqrt(2))

    @pytest.mark.parametrize("m", range(2, 9))
    def test_barycenter_regular(self, m):
        b = chamber_barycenter(build_cartan_frame(m))
        assert b.unit and b.regular and b.values().min() > 0

    def test_vanishing(self):
        rs = root_system("A", 2)
        f = build_cartan_frame(3)
        v = chamber_vector(rs, f.a_coords(np.diag([1.0, 1.0, -2.0]) / np.sqrt(6)))
        assert v.vanishing == (0,)


def _wall_a2():
    f = build_cartan_frame(3)
    w = f.a_coords(np.diag([1.0, 1.0, -2.0]) / np.sqrt(6))
    nrm = f.a_coords(np.diag([1.0, -1.0, 0.0]) / np.sqrt(2))
    return f, w, nrm


class TestMaximallySingular:
    def test_barycenter_fixed(self):
        f = build_cartan_frame(4)
        b = chamber_barycenter(f)
        assert np.allclose(maximally_singular_near(b, 0.05).coords, b.coords)

    def test_on_wall_fixed(self):
        f, w, _ = _wall_a2()
        v = chamber_vector(f.root_system, w)
        assert np.allclose(maximally_singular_near(v, 0.05).coords, w)

    def test_projects_to_near_wall(self):
        f, w, nrm = _wall_a2()
        v = chamber_vector(f.root_system, np.cos(0.1) * w + np.sin(0.1) * nrm)
        out = maximally_singular_near(v, 0.2)
        assert np.allclose(out.coords, w, atol=1e-12)
        assert out.vanishing == (0,)

    def test_far_wall_ignored(self):
        f, w, nrm = _wall_a2()
        v = chamber_vector(f.root_system, np.cos(0.3) * w + np.sin(0.3) * nrm)
        assert np.allclose(maximally_singular_near(v, 0.2).coords, v.coords)

    @given(st.floats(0, 2 * np.pi), st.sampled_from([0.05, 0.2, 0.45]))
    def test_idempotent_rank2(self, phi, rho):
        rs = root_system("A", 2)
        v = chamber_vector(rs, [np.cos(phi), np.sin(phi)])
        a = maximally_singular_near(v, rho)
        b = maximally_singular_near(a, rho)
        assert np.allclose(a.coords, b.coords, atol=1e-12)

    def test_not_idempotent_rank3(self):
        # a second application may reach a deeper face that is rho-close to
        # the first projection but not to the original vector
        rs = root_system("A", 3)
        v = chamber_vector(rs, [0.89393416, 0.27402918, -0.35466848] / np.linalg.norm(
            [0.89393416, 0.27402918, -0.35466848]))
        a = maximally_singular_near(v, 0.3)
        b = maximally_singular_near(a, 0.3)
        assert len(b.vanishing) > len(a.vanishing)

    @given(st.integers(0, 2**31), st.sampled_from([0.1, 0.3]))
    def test_output_within_rho_and_more_singular(self, seed, rho):
        rs = root_system("A", 3)
        c = np.random.default_rng(seed).standard_normal(3)
        v = chamber_vector(rs, c / np.linalg.norm(c))
        out = maximally_singular_near(v, rho)
        assert out.unit
        assert np.arccos(np.clip(out.coords @ v.coords, -1, 1)) <= rho + 1e-12
        assert len(out.vanishing) >= len(v.vanishing)

    def test_bad_inputs(self):
        rs = root_system("A", 2)
        with pytest.raises(ValueError):
            maximally_singular_near(chamber_vector(rs, [2.0, 0.0]), 0.2)
        with pytest.raises(ValueError):
            maximally_singular_near(chamber_vector(rs, [1.0, 0.0]), 0.5)


class TestOrthogonalRootSum:
    def test_regular_m4(self):
        f = build_cartan_frame(4)
        Q = orthogonal_root_sum(f, chamber_barycenter(f))
        assert Q.shape[0] == 6

    def test_singular_m4(self):
        f = build_cartan_frame(4)
        v = chamber_vector(f.root_system, f.a_coords(np.diag([1.0, 1, 1, -3]) / np.sqrt(12)))
        Q = orthogonal_root_sum(f, v)
        assert Q.shape[0] == 3
        assert all(np.any(q[:, 3] != 0) for q in Q)
        assert len(orthogonal_root_indices(f, v)) == 3

    def test_wall_m3(self):
        f, w, _ = _wall_a2()
        assert orthogonal_root_sum(f, chamber_vector(f.root_system, w)).shape[0] == 2


class TestConstants:
    def test_table(self, golden_dir):
        for m, vals in load(golden_dir, "expected.json")["sl_constants"].items():
            c = sl_constants(int(m))
            assert [c.n, c.r, c.threshold, c.splitting_rank] == vals

    @pytest.mark.parametrize("m", range(2, 9))
    def test_matches_frame(self, m):
        assert sl_constants(m).n == build_cartan_frame(m).basis.shape[0]

    def test_invalid(self):
        with pytest.raises(SizeError):
            sl_constants(1)
