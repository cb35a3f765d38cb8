"""Barycentric straightening on SL(m, R)/SO(m) with its certification tooling."""

from .errors import (
    BaryLabError,
    CapabilityError,
    ConditioningError,
    ConstructionError,
    ConvergenceError,
    DegeneracyError,
    DegenerateMeasureError,
    InfeasibleFrameError,
    PreconditionError,
    SizeError,
)
from .liecore import (
    CartanFrame,
    ChamberVector,
    RootSystem,
    build_cartan_frame,
    chamber_vector,
    maximally_singular_near,
    root_system,
    sl_constants,
)
from .spd import (
    BoundaryAtom,
    WeightedBoundaryMeasure,
    busemann,
    busemann_gradient,
    busemann_hessian,
    distance,
    exp_at,
    iwasawa_kan,
    log_at,
    sample_boundary_measure,
)
from .barycenter import (
    SimplexConfig,
    barycenter,
    jacobian,
    q1_form,
    q2_form,
    straighten,
    straighten_derivative,
)

__version__ = "0.1.0"
