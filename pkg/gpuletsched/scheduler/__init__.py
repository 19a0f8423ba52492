from .dispatch import schedule
from .elastic import elastic_partitioning, find_best_fit, fit_residual, grid_curve
from .ideal import gpu_layouts, ideal_exhaustive
from .plan import Interference, Mode, SchedulePlan, Verdict, WorkloadSpec, resolve_factor
from .sbp import squishy_bin_packing

__all__ = [
    "Interference",
    "Mode",
    "SchedulePlan",
    "Verdict",
    "WorkloadSpec",
    "elastic_partitioning",
    "find_best_fit",
    "fit_residual",
    "gpu_layouts",
    "grid_curve",
    "ideal_exhaustive",
    "resolve_factor",
    "schedule",
    "squishy_bin_packing",
]
