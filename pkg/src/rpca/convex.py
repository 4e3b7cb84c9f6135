"""Convex estimator: nuclear norm plus l1 penalised least squares on the
observed entries,

    minimize  1/2 ||P_obs(L + S - M)||_F^2 + lam ||L||_* + tau ||S||_1.

Solved by proximal gradient on L with S minimised exactly in closed form
(``S = P_obs(soft_threshold(M - L, tau))``) after every L update. Eliminating S
this way leaves a Huber-type smooth term in L whose gradient is 1-Lipschitz.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .data import ObservationSet
from .errors import ParameterError, SolverError
from .linalg import TangentSpace, project_tangent, project_tangent_perp, truncated_svd
from .prox import singular_value_threshold, soft_threshold
from .trace import SolveTrace

TRACE_COLUMNS = ("iter", "objective", "kkt_pt_r1", "kkt_ptperp_r1", "kkt_r2_off", "wall_ms")


@dataclass
class ConvexOptions:
    max_iters: int = 5000
    step: float = 0.5
    rel_obj_tol: float = 1e-10
    kkt_tol: float = 1e-6
    use_acceleration: bool = True
    kkt_every: int = 10

    def __post_init__(self):
        if not 0 < self.step <= 0.5:
            raise ParameterError(f"step must lie in (0, 0.5], got {self.step}")
        # rel_obj_tol = 0 switches the objective-change test off
        if self.rel_obj_tol < 0 or self.kkt_tol <= 0:
            raise ParameterError("tolerances must be positive")
        if self.max_iters < 1 or self.kkt_every < 1:
            raise ParameterError("iteration counts must be positive")


@dataclass
class KktReport:
    pt_r1_fro: float
    ptperp_r1_op: float
    r2_on_support_max: float
    r2_off_support_max: float
    numerical_rank: int

    def violation(self) -> float:
        """Largest violation of the four optimality conditions (0 at an exact minimiser)."""
        return max(
            self.pt_r1_fro,
            self.ptperp_r1_op - 1.0,
            self.r2_on_support_max,
            self.r2_off_support_max - 1.0,
            0.0,
        )

    def satisfied(self, tol: float) -> bool:
        return self.violation() <= tol


@dataclass
class ConvexSolution:
    L: np.ndarray
    S: np.ndarray
    trace: SolveTrace
    converged: bool
    kkt_report: KktReport
    iterations: int = 0
    objective: float = math.nan
    lam: float = math.nan
    tau: float = math.nan


def default_lambda_tau(n1: int, n2: int, p: float, sigma: float) -> tuple[float, float]:
    """Experimental regularisation levels ``lam = 5 sigma sqrt(n1 p)``,
    ``tau = 2 sigma sqrt(log n2)``."""
    if not 0 < p <= 1:
        raise ParameterError(f"p must lie in (0, 1], got {p}")
    if sigma < 0:
        raise ParameterError("sigma must be nonnegative")
    return 5.0 * sigma * math.sqrt(n1 * p), 2.0 * sigma * math.sqrt(math.log(n2))


def objective(L, S, obs: ObservationSet, lam, tau, nuclear: float | None = None) -> float:
    R = np.where(obs.omega_obs.dense, L + S - obs.M, 0.0)
    if nuclear is None:
        nuclear = float(np.linalg.svd(L, compute_uv=False).sum())
    return 0.5 * float(np.vdot(R, R)) + lam * nuclear + tau * float(np.abs(S).sum())


def best_sparse(L, obs: ObservationSet, tau) -> np.ndarray:
    """Exact minimiser over S for fixed L: ``P_obs(soft_threshold(M - L, tau))``."""
    return soft_threshold(obs.M - L, tau, obs.omega_obs)


def _numerical_factors(L, rel=1e-8):
    U, s, Vt = np.linalg.svd(L, full_matrices=False)
    k = int(np.count_nonzero(s > rel * s[0])) if s.size and s[0] > 0 else 0
    return U[:, :k], s[:k], Vt[:k].T


def kkt_residuals(L, S, obs: ObservationSet, lam, tau, factors=None) -> KktReport:
    """Residuals of the subgradient optimality conditions at ``(L, S)``.

    ``R1 = U V^T + P_obs(L + S - M) / lam`` with ``U, V`` the singular vectors
    of ``L`` above ``1e-8 * s_max``; ``R2 = sign(S) + P_obs(L + S - M) / tau``
    on the observed entries.
    """
    if lam <= 0 or tau <= 0:
        raise ParameterError("KKT residuals need lam > 0 and tau > 0")
    L = np.asarray(L, dtype=float)
    S = np.asarray(S, dtype=float)
    obs_d = obs.omega_obs.dense
    resid = np.where(obs_d, L + S - obs.M, 0.0)
    U, _, V = factors if factors is not None else _numerical_factors(L)
    R1 = U @ V.T + resid / lam
    if U.shape[1]:
        T = TangentSpace(U, V)
        pt = float(np.linalg.norm(project_tangent(R1, T)))
        perp = project_tangent_perp(R1, T)
    else:
        pt, perp = 0.0, R1
    ptperp = float(np.linalg.norm(perp, 2)) if perp.size else 0.0
    R2 = np.sign(S) + resid / tau
    on = S != 0
    off = obs_d & ~on
    r2_on = float(np.abs(R2[on]).max()) if on.any() else 0.0
    r2_off = float(np.abs(R2[off]).max()) if off.any() else 0.0
    return KktReport(pt, ptperp, r2_on, r2_off, int(U.shape[1]))


def solve_convex(
    obs: ObservationSet,
    lam: float,
    tau: float,
    opts: ConvexOptions | None = None,
    L0: np.ndarray | None = None,
) -> ConvexSolution:
    """Minimise the convex program from ``L0`` (zero by default).

    Each iteration takes a singular-value-thresholding step on L from the
    (optionally extrapolated) point, then sets S to its exact block minimiser.
    Momentum is reset whenever the objective would increase, so the
    objective trace is nonincreasing in both modes.
    """
    opts = opts or ConvexOptions()
    if lam < 0 or tau < 0:
        raise ParameterError("lam and tau must be nonnegative")
    mask = obs.omega_obs.dense
    M = obs.M
    step = opts.step
    L = np.zeros(M.shape) if L0 is None else np.array(L0, dtype=float)
    S = best_sparse(L, obs, tau)
    nuc = float(np.linalg.svd(L, compute_uv=False).sum()) if L0 is not None else 0.0
    obj = objective(L, S, obs, lam, tau, nuclear=nuc)
    factors = _numerical_factors(L) if L0 is not None else (np.zeros((M.shape[0], 0)), np.zeros(0), np.zeros((M.shape[1], 0)))

    trace = SolveTrace(TRACE_COLUMNS)
    t0 = time.perf_counter()
    trace.append(iter=0, objective=obj, wall_ms=0.0)
    Z, theta = L, 1.0
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        while True:
            SZ = best_sparse(Z, obs, tau) if Z is not L else S
            grad = np.where(mask, Z + SZ - M, 0.0)
            try:
                L_new, (U, s, V) = singular_value_threshold(Z - step * grad, step * lam, return_svd=True)
            except np.linalg.LinAlgError as exc:
                raise SolverError(f"SVD failed in convex solver: {exc}", it) from exc
            S_new = best_sparse(L_new, obs, tau)
            obj_new = objective(L_new, S_new, obs, lam, tau, nuclear=float(s.sum()))
            if not math.isfinite(obj_new):
                raise SolverError("non-finite objective in convex solver", it)
            if obj_new <= obj or Z is L:
                break
            # momentum overshot: restart from the last iterate
            Z, theta = L, 1.0
        if opts.use_acceleration:
            theta_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
            Z = L_new + ((theta - 1.0) / theta_new) * (L_new - L)
            theta = theta_new
        rel_change = abs(obj - obj_new) / max(abs(obj), np.finfo(float).tiny)
        L, S, obj = L_new, S_new, obj_new
        if not opts.use_acceleration:
            Z = L
        keep = s > 1e-8 * s[0] if s.size else np.zeros(0, dtype=bool)
        factors = (U[:, keep], s[keep], V[:, keep])
        row = dict(iter=it, objective=obj, wall_ms=1e3 * (time.perf_counter() - t0))
        if it % opts.kkt_every == 0 and lam > 0 and tau > 0:
            rep = kkt_residuals(L, S, obs, lam, tau, factors)
            row.update(kkt_pt_r1=rep.pt_r1_fro, kkt_ptperp_r1=rep.ptperp_r1_op, kkt_r2_off=rep.r2_off_support_max)
            if rep.satisfied(opts.kkt_tol):
                converged = True
        trace.append(**row)
        if converged:
            break
        if opts.rel_obj_tol > 0 and rel_change < opts.rel_obj_tol:
            converged = True
            break

    if lam > 0 and tau > 0:
        report = kkt_residuals(L, S, obs, lam, tau, factors)
    else:
        report = KktReport(math.nan, math.nan, math.nan, math.nan, int(factors[0].shape[1]))
    return ConvexSolution(L, S, trace, converged, report, it, obj, lam, tau)


def solve_oracle_denoise(A: np.ndarray, lam: float) -> np.ndarray:
    """Closed-form minimiser of ``1/2 ||L - A||_F^2 + lam ||L||_*``."""
    return singular_value_threshold(A, lam)


@dataclass
class RankTruncation:
    L: np.ndarray
    residual_fro: float = field(default=0.0)


def rank_r_truncate(L: np.ndarray, r: int) -> RankTruncation:
    """Best rank-r approximation of ``L`` and its Frobenius distance to ``L``."""
    Lr = truncated_svd(L, r).reconstruct()
    return RankTruncation(Lr, float(np.linalg.norm(Lr - L)))
