"""Low-rank plus sparse matrix estimation from noisy, partially observed,
outlier-corrupted data: convex and factored nonconvex estimators, data
generators and diagnostics."""

from .convex import ConvexOptions, ConvexSolution, KktReport, default_lambda_tau, kkt_residuals, rank_r_truncate, solve_convex, solve_oracle_denoise
from .data import GroundTruth, ModelParams, ObservationSet, Outliers, assemble, generate
from .errors import ParameterError, SolverError
from .linalg import IndexMask, TangentSpace, procrustes_align, truncated_svd
from .nonconvex import NcvxOptions, NcvxResult, NcvxState, leave_one_out_run, run
from .prox import singular_value_threshold, soft_threshold

__all__ = [
    "ConvexOptions", "ConvexSolution", "KktReport", "default_lambda_tau", "kkt_residuals", "rank_r_truncate",
    "solve_convex", "solve_oracle_denoise", "GroundTruth", "ModelParams", "ObservationSet", "Outliers",
    "assemble", "generate", "ParameterError", "SolverError", "IndexMask", "TangentSpace", "procrustes_align",
    "truncated_svd", "NcvxOptions", "NcvxResult", "NcvxState", "leave_one_out_run", "run",
    "singular_value_threshold", "soft_threshold",
]
