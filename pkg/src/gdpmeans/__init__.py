"""Generalized DP-means clustering with f-separable distortion measures."""

from .core import (
    ClusteringConfig,
    ClusterState,
    FitResult,
    assign_step,
    fit,
    fit_to_target_k,
    objective_eval,
    refine_center,
)
from .divergences import Alpha, Binomial, DivergenceSpec, ExpLoss, SquaredDistance
from .errors import GDPMeansError, InputError, NumericalError
from .fgen import Linear, LogSumExp, PowerMean, effective_beta
from .influence import (
    Robustness,
    analytic_influence,
    classify_robustness,
    empirical_influence,
    influence_curve_1d,
)
from .metrics import distortion_stats, nmi

__version__ = "0.1.0"

__all__ = [
    "Alpha",
    "Binomial",
    "ClusterState",
    "ClusteringConfig",
    "DivergenceSpec",
    "ExpLoss",
    "FitResult",
    "GDPMeansError",
    "InputError",
    "Linear",
    "LogSumExp",
    "NumericalError",
    "PowerMean",
    "Robustness",
    "SquaredDistance",
    "analytic_influence",
    "assign_step",
    "classify_robustness",
    "distortion_stats",
    "effective_beta",
    "empirical_influence",
    "fit",
    "fit_to_target_k",
    "influence_curve_1d",
    "nmi",
    "objective_eval",
    "refine_center",
]
