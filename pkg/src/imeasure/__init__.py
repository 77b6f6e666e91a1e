"""Operator-valued measures on atomic spaces: semivariation, integration,
bounded convergence checks and convex-closure certificates."""

from .closure import (
    ConvexSetSpec,
    GridFunction,
    GridSpace,
    HullMode,
    Inside,
    SeparationCertificate,
    chebyshev_distance,
    distance_basis_experiment,
    metric_null_search,
    separate,
    step_function_demo,
    unbounded_demo,
)
from .integration import (
    ConvergenceError,
    FunctionSequence,
    VectorFunction,
    integrate,
    linfty_counterexample,
    verify_bnc,
    verify_bwc,
    verify_bwstarc,
    weak_star_integrate,
)
from .measures import (
    AtomicSpace,
    GeometricTail,
    MeasurableSet,
    OperatorMeasure,
    ScalarMeasure,
    control_measure,
    is_absolutely_continuous,
    measure_of,
    semivariation,
    variation,
)
from .spaces import NormedSpace, NormTag, Operator, Vector, operator_norm

__version__ = "0.1.0"
