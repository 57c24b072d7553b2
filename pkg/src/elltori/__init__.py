"""Normal forms for lower-dimensional elliptic tori at desk scale."""

__version__ = "0.1.0"

from .ledger import IndexList, band_count, build_nu, log2_value, pick_heaviest
from .model import HamiltonianState, ModelSpec, ingest
from .normalization import (GeneratingFunction, RunData, StepReport,
                            ZeroDivisor, check_nonresonance, normalize_model,
                            normalization_step, transform_point)
from .series import (Caps, ClassTag, NormParameters, PoissonSeries,
                     average_q, class_of, evaluate, lie_derivative,
                     lie_series_apply, poisson_bracket, realify_check,
                     weighted_norm)

__all__ = [
    "Caps", "ClassTag", "GeneratingFunction", "HamiltonianState",
    "IndexList", "ModelSpec", "NormParameters", "PoissonSeries", "RunData",
    "StepReport", "ZeroDivisor", "average_q", "band_count", "build_nu",
    "check_nonresonance", "class_of", "evaluate", "ingest", "lie_derivative",
    "lie_series_apply", "log2_value", "normalization_step", "normalize_model",
    "pick_heaviest", "poisson_bracket", "realify_check", "transform_point",
    "weighted_norm",
]
