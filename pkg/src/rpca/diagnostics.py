"""Error metrics and empirical checks of the sampling, noise and support
conditions behind the convex/nonconvex analysis.

Checks return raw ratios; thresholds live with the callers.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .convex import ConvexSolution, KktReport, kkt_residuals  # noqa: F401  (re-exported)
from .data import GroundTruth, ObservationSet
from .errors import ParameterError
from .linalg import IndexMask, TangentSpace, norm
from .nonconvex import NcvxResult


@dataclass
class ErrorReport:
    fro: float
    spectral: float
    linf: float
    two_inf: float
    rel_fro: float
    rel_spectral: float
    rel_linf: float
    s_fro: float
    s_spectral: float

    def as_dict(self) -> dict:
        return asdict(self)


def _ratio(a, b):
    return a / b if b > 0 else (0.0 if a == 0 else math.inf)


def error_report(Lhat, Shat, gt: GroundTruth) -> ErrorReport:
    if np.shape(Lhat) != gt.Lstar.shape or np.shape(Shat) != gt.Sstar.shape:
        raise ParameterError("estimate shapes do not match the ground truth")
    D = np.asarray(Lhat, dtype=float) - gt.Lstar
    DS = np.asarray(Shat, dtype=float) - gt.Sstar
    fro, op, inf = norm(D, "fro"), norm(D, "spectral"), norm(D, "linf")
    return ErrorReport(
        fro=fro,
        spectral=op,
        linf=inf,
        two_inf=norm(D, "two_inf"),
        rel_fro=_ratio(fro, norm(gt.Lstar, "fro")),
        rel_spectral=_ratio(op, norm(gt.Lstar, "spectral")),
        rel_linf=_ratio(inf, norm(gt.Lstar, "linf")),
        s_fro=norm(DS, "fro"),
        s_spectral=norm(DS, "spectral"),
    )


def tangent_probe(T: TangentSpace, rng: np.random.Generator) -> np.ndarray:
    """``U A^T + B V^T`` with standard Gaussian ``A`` and ``B``, redrawn if zero."""
    if T.rank == 0:
        raise ParameterError("tangent space of a rank-0 matrix has no probes")
    n1, n2 = T.shape
    while True:
        A = rng.standard_normal((n2, T.rank))
        B = rng.standard_normal((n1, T.rank))
        H = T.U @ A.T + B @ T.V.T
        if np.linalg.norm(H) > 0:
            return H


def _energy_ratio(H, mask: IndexMask, scale):
    kept = np.where(mask.dense, H, 0.0)
    return float(np.vdot(kept, kept)) / (scale * float(np.vdot(H, H)))


def check_near_isometry(T: TangentSpace, omega0: IndexMask, rho0: float, probes: int, rng) -> dict:
    """Extreme values of ``||P_omega0(H)||_F^2 / (rho0 ||H||_F^2)`` over tangent probes."""
    if probes < 1:
        raise ParameterError("need at least one probe")
    if not rho0 > 0:
        raise ParameterError("rho0 must be positive")
    ratios = [_energy_ratio(tangent_probe(T, rng), omega0, rho0) for _ in range(probes)]
    return {"min_ratio": min(ratios), "max_ratio": max(ratios)}


def check_injectivity(
    T: TangentSpace, omega_obs: IndexMask, omega_star: IndexMask, p: float, kappa: float, probes: int, rng
) -> dict:
    """Empirical lower constant on ``P_obs`` and upper constant on ``P_star``
    restricted to T, next to the reference levels ``1/(32 kappa)`` and ``1/(128 kappa)``."""
    if probes < 1:
        raise ParameterError("need at least one probe")
    lo, hi = math.inf, 0.0
    for _ in range(probes):
        H = tangent_probe(T, rng)
        lo = min(lo, _energy_ratio(H, omega_obs, p))
        hi = max(hi, _energy_ratio(H, omega_star, p))
    return {
        "c_lower": lo,
        "c_upper": hi,
        "ref_lower": 1.0 / (32.0 * kappa),
        "ref_upper": 1.0 / (128.0 * kappa),
    }


def check_operator_concentration(A, B, omega0: IndexMask, rho0: float) -> float:
    """``||P_omega0(A B^T) - rho0 A B^T|| / (sqrt(n rho0) ||A||_{2,inf} ||B||_{2,inf})``, n the larger side."""
    ABt = np.asarray(A) @ np.asarray(B).T
    n = max(ABt.shape)
    denom = math.sqrt(n * rho0) * norm(A, "two_inf") * norm(B, "two_inf")
    if denom == 0:
        return 0.0
    return norm(np.where(omega0.dense, ABt, 0.0) - rho0 * ABt, "spectral") / denom


def check_noise_bound(E, omega_obs: IndexMask, sigma: float, p: float) -> dict:
    """``||P_obs(E)|| / (sigma sqrt(n p))`` and ``||P_obs(E)||_F / (sigma n sqrt(p))``."""
    PE = np.where(omega_obs.dense, E, 0.0)
    n = max(PE.shape)
    op, fro = norm(PE, "spectral"), norm(PE, "fro")
    return {
        "op_ratio": _ratio(op, sigma * math.sqrt(n * p)),
        "fro_ratio": _ratio(fro, sigma * n * math.sqrt(p)),
    }


def cvx_ncvx_distance(cvx: ConvexSolution, ncvx: NcvxResult) -> dict:
    state = ncvx.best_state
    return {
        "dL_fro": norm(cvx.L - state.X @ state.Y.T, "fro"),
        "dS_fro": norm(cvx.S - state.S, "fro"),
    }


def support_decomposition(L, S, obs: ObservationSet, gt: GroundTruth, tau: float, dL, dS) -> dict:
    """Index sets of the support argument for a nonconvex point ``(L = X Y^T, S)``
    and its offsets ``dL = L_cvx - L``, ``dS = S_cvx - S``.

    omega  : support of S
    omega1 : observed entries with ``|dS_ij| <= ||P_obs(dL + dS)||_inf``
    omega2 : observed entries with ``tau - ||P_obs(dL + dS)||_inf <= |(M - L)_ij| <= tau``
    """
    obs_d = obs.omega_obs.dense
    gap = float(np.abs(np.where(obs_d, dL + dS, 0.0)).max()) if obs_d.any() else 0.0
    resid = np.abs(obs.M - L)
    omega = IndexMask(np.asarray(S) != 0)
    omega1 = IndexMask(obs_d & (np.abs(dS) <= gap))
    omega2 = IndexMask(obs_d & (resid >= tau - gap) & (resid <= tau))
    return {
        "omega": omega,
        "omega1": omega1,
        "omega2": omega2,
        "gap_inf": gap,
        "inclusions": {
            "omega2_disjoint_omega": omega2.isdisjoint(omega),
            "unsupported_in_omega1_or_omega2": (obs.omega_obs - omega).issubset(omega1 | omega2),
            "omega_or_omega2_in_star": (omega | omega2).issubset(gt.omega_star),
        },
    }
