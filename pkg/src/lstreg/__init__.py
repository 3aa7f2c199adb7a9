"""Least sum of squares of trimmed residuals (LST) regression."""

__version__ = "0.1.0"

from .estimator import (FitOptions, FitResult, SingularDesign, fit_ls,
                        fit_lst, fit_lts, gradient, hessian, lts_objective)
from .inference import (AsymptoticConstants, RegionSpec, asymptotic_covariance,
                        bootstrap_cloud, confidence_ball, constants,
                        depth_trim_region, projection_depth, region_contains)
from .model import Dataset, design_matrix, residuals
from .robust_stats import (TrimConfig, TrimSummary, mad, median, objective,
                           outlyingness, trim_summary)
from .simulation import example11_dataset

__all__ = [
    "AsymptoticConstants", "Dataset", "FitOptions", "FitResult", "RegionSpec",
    "SingularDesign", "TrimConfig", "TrimSummary", "asymptotic_covariance",
    "bootstrap_cloud", "confidence_ball", "constants", "depth_trim_region",
    "design_matrix", "example11_dataset", "fit_ls", "fit_lst", "fit_lts",
    "gradient", "hessian", "lts_objective", "mad", "median", "objective",
    "outlyingness", "projection_depth", "region_contains", "residuals",
    "trim_summary",
]
