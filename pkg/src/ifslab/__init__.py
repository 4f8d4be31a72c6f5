"""ifslab: a laboratory for a two-map piecewise-linear random iteration.

The system: two increasing piecewise-linear bijections of [0, 1] with slopes
2c and 2(1-c) swapping at 1/2, picked i.i.d. with equal probability.  Its
only stationary law is the point mass at 0, yet almost every trajectory
converges to an endpoint and time averages split two ways, so the strong law
of large numbers fails for generic starts.  The subpackages provide exact
map/measure arithmetic, reproducible Monte Carlo, backward-iteration
synchronization thresholds, and report-producing verification experiments.
"""

__version__ = "0.1.0"

from .pwl_core import (
    AmParams,
    Ifs,
    PwlMap,
    UnitPoint,
    Word,
    am_ifs,
    am_map,
    compose_word,
    conjugated_eval,
)
from .measure_ops import (
    DiscreteMeasure,
    TestFunction,
    cesaro_dual,
    dual_apply,
    endpoint_limit,
    push,
    push_n,
    wasserstein1,
)
from .mc_sim import (
    Classification,
    EnsembleReport,
    SymbolStream,
    birkhoff,
    classify,
    ensemble,
    expectation_at,
    trajectory,
)
from .sync import (
    Agreement,
    SyncSample,
    equivariance_residual,
    ks_uniform,
    threshold_agreement,
    upsilon,
    upsilon_sample,
)
from .verify import (
    DriftReport,
    EchainReport,
    EscapeReport,
    SllnReport,
    acceptance_suite,
    drift_check,
    echain_modulus,
    invariant_escape,
    slln_gap,
)

__all__ = [
    "__version__",
    "AmParams", "Ifs", "PwlMap", "UnitPoint", "Word",
    "am_ifs", "am_map", "compose_word", "conjugated_eval",
    "DiscreteMeasure", "TestFunction",
    "cesaro_dual", "dual_apply", "endpoint_limit", "push", "push_n", "wasserstein1",
    "Classification", "EnsembleReport", "SymbolStream",
    "birkhoff", "classify", "ensemble", "expectation_at", "trajectory",
    "Agreement", "SyncSample",
    "equivariance_residual", "ks_uniform", "threshold_agreement", "upsilon", "upsilon_sample",
    "DriftReport", "EchainReport", "EscapeReport", "SllnReport",
    "acceptance_suite", "drift_check", "echain_modulus", "invariant_escape", "slln_gap",
]
