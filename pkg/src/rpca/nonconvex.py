"""Factored nonconvex surrogate and its alternating gradient / soft-threshold scheme.

    f(X, Y; S) = 1/(2p) ||P_obs(X Y^T + S - M)||_F^2 + lam/(2p) (||X||_F^2 + ||Y||_F^2)
    F(X, Y, S) = f(X, Y; S) + tau/p ||S||_1

One iteration takes a gradient step on (X, Y) at frozen S and then sets S to
its exact minimiser ``soft_threshold(P_obs(M - X Y^T), tau)`` at the new
factors. Leave-one-out variants swap one row or column of the sampled term
for its population counterpart and pin that slice of S to the truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import GroundTruth, ObservationSet
from .errors import ParameterError, SolverError
from .linalg import norm, procrustes_align, stack
from .prox import soft_threshold
from .trace import SolveTrace

TRACE_COLUMNS = ("iter", "F", "f", "grad_norm", "balancedness", "err_fro", "err_op", "err_inf", "err_2inf")
LOO_COLUMNS = TRACE_COLUMNS + ("proximity", "aligned_err")
DESCENT_RTOL = 1e-9


@dataclass
class NcvxState:
    X: np.ndarray
    Y: np.ndarray
    S: np.ndarray
    t: int = 0

    def __post_init__(self):
        if self.X.ndim != 2 or self.Y.ndim != 2 or self.X.shape[1] != self.Y.shape[1]:
            raise ParameterError(f"factor shapes {self.X.shape} and {self.Y.shape} are inconsistent")
        if self.S.shape != (self.X.shape[0], self.Y.shape[0]):
            raise ParameterError(f"S has shape {self.S.shape}, expected {(self.X.shape[0], self.Y.shape[0])}")

    @property
    def F(self) -> np.ndarray:
        return stack(self.X, self.Y)

    @property
    def L(self) -> np.ndarray:
        return self.X @ self.Y.T

    def copy(self) -> "NcvxState":
        return NcvxState(self.X.copy(), self.Y.copy(), self.S.copy(), self.t)


@dataclass
class NcvxOptions:
    eta: float | None = None
    max_iters: int = 10000
    grad_tol: float | None = None
    init: str = "ground_truth"
    record_every: int = 1
    assert_descent: bool = True
    descent_rtol: float = DESCENT_RTOL
    init_state: NcvxState | None = None

    def __post_init__(self):
        if self.eta is not None and not self.eta > 0:
            raise ParameterError(f"eta must be positive, got {self.eta}")
        if self.init not in ("ground_truth", "spectral", "provided"):
            raise ParameterError(f"unknown init {self.init!r}")
        if self.init == "provided" and self.init_state is None:
            raise ParameterError("init='provided' needs init_state")
        if self.descent_rtol < 0:
            raise ParameterError("descent_rtol must be nonnegative")
        if self.max_iters < 0 or self.record_every < 1:
            raise ParameterError("max_iters must be >= 0 and record_every >= 1")


@dataclass
class NcvxResult:
    best_state: NcvxState
    trace: SolveTrace
    t_star: int
    min_grad_norm: float
    final_state: NcvxState | None = None
    eta: float = math.nan
    grad_tol: float = math.nan
    extras: dict = field(default_factory=dict)


class _Loss:
    """Sampled least-squares loss, optionally with one slice left out.

    ``fit`` marks the entries in the sampled term, ``pop`` the slice carried
    by the population term ``1/2 ||P_pop(X Y^T - L_star)||^2`` and ``pin`` the
    entries of S held at ``S_star``.
    """

    def __init__(self, obs, lam, tau, p, pop=None, Lstar=None, Sstar=None):
        if p is None:
            p = obs.sampling_rate
        if not 0 < p <= 1:
            raise ParameterError(f"p must lie in (0, 1], got {p}")
        if lam < 0 or tau < 0:
            raise ParameterError("lam and tau must be nonnegative")
        self.M = obs.M
        self.fit = obs.omega_obs.dense
        self.lam, self.tau, self.p = lam, tau, p
        self.pop = pop
        self.Lstar = Lstar
        self.Sstar_pinned = None
        if pop is not None:
            self.fit = self.fit & ~pop
            self.Sstar_pinned = np.where(pop, Sstar, 0.0)

    def residual(self, X, Y, S):
        XY = X @ Y.T
        R = np.where(self.fit, XY + S - self.M, 0.0)
        Rpop = np.where(self.pop, XY - self.Lstar, 0.0) if self.pop is not None else None
        return R, Rpop

    def f(self, X, Y, S, R=None, Rpop=None):
        if R is None:
            R, Rpop = self.residual(X, Y, S)
        val = 0.5 / self.p * float(np.vdot(R, R))
        if Rpop is not None:
            val += 0.5 * float(np.vdot(Rpop, Rpop))
        return val + 0.5 * self.lam / self.p * (float(np.vdot(X, X)) + float(np.vdot(Y, Y)))

    def F(self, X, Y, S, R=None, Rpop=None):
        return self.f(X, Y, S, R, Rpop) + self.tau / self.p * float(np.abs(S).sum())

    def grad(self, X, Y, S, R=None, Rpop=None):
        if R is None:
            R, Rpop = self.residual(X, Y, S)
        G = R / self.p
        if Rpop is not None:
            G = G + Rpop
        c = self.lam / self.p
        return G @ Y + c * X, G.T @ X + c * Y

    def best_S(self, X, Y):
        S = soft_threshold(np.where(self.fit, self.M - X @ Y.T, 0.0), self.tau)
        if self.Sstar_pinned is not None:
            S = S + self.Sstar_pinned
        return S


def loss_f(state: NcvxState, obs: ObservationSet, lam, p=None) -> float:
    return _Loss(obs, lam, 0.0, p).f(state.X, state.Y, state.S)


def loss_F(state: NcvxState, obs: ObservationSet, lam, tau, p=None) -> float:
    return _Loss(obs, lam, tau, p).F(state.X, state.Y, state.S)


def _gram_gap(X, Y):
    return X.T @ X - Y.T @ Y


def loss_f_diff(state: NcvxState, *_args, **_kw) -> float:
    """``-1/8 ||X^T X - Y^T Y||_F^2``."""
    D = _gram_gap(state.X, state.Y)
    return -0.125 * float(np.vdot(D, D))


def loss_f_aug(state: NcvxState, obs: ObservationSet, lam, p=None) -> float:
    """``f + 1/8 ||X^T X - Y^T Y||_F^2``."""
    D = _gram_gap(state.X, state.Y)
    return loss_f(state, obs, lam, p) + 0.125 * float(np.vdot(D, D))


def grad_f(state: NcvxState, obs: ObservationSet, lam, p=None):
    """Gradient of f in (X, Y) with S held fixed."""
    return _Loss(obs, lam, 0.0, p).grad(state.X, state.Y, state.S)


def balancedness(state: NcvxState) -> float:
    return float(np.linalg.norm(_gram_gap(state.X, state.Y)))


def _check_finite(t, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise SolverError("non-finite iterate in nonconvex solver", t)


def _advance(loss: _Loss, state: NcvxState, eta, R=None, Rpop=None) -> NcvxState:
    Gx, Gy = loss.grad(state.X, state.Y, state.S, R, Rpop)
    X = state.X - eta * Gx
    Y = state.Y - eta * Gy
    S = loss.best_S(X, Y)
    _check_finite(state.t + 1, X, Y, S)
    return NcvxState(X, Y, S, state.t + 1)


def step(state: NcvxState, obs: ObservationSet, lam, tau, eta, p=None) -> NcvxState:
    """One iteration: gradient step on (X, Y), then exact S update at the new factors."""
    if not eta > 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    return _advance(_Loss(obs, lam, tau, p), state, eta)


def spectral_estimates(obs: ObservationSet, r: int, p=None) -> tuple[float, float]:
    """Top and r-th singular values of ``P_obs(M) / p``."""
    p = obs.sampling_rate if p is None else p
    s = np.linalg.svd(obs.M / p, compute_uv=False)
    return float(s[0]), float(s[r - 1])


def spectral_init(obs: ObservationSet, r: int, tau, p=None) -> NcvxState:
    """Top-r factors of ``P_obs(M - S0) / p`` with ``S0 = soft_threshold(P_obs(M), tau)``."""
    p = obs.sampling_rate if p is None else p
    S0 = soft_threshold(obs.M, tau, obs.omega_obs)
    U, s, Vt = np.linalg.svd(np.where(obs.omega_obs.dense, obs.M - S0, 0.0) / p, full_matrices=False)
    root = np.sqrt(s[:r])
    return NcvxState(U[:, :r] * root, Vt[:r].T * root, S0)


def _initial_state(opts: NcvxOptions, obs, tau, p, gt, r):
    if opts.init == "provided":
        return opts.init_state.copy()
    if opts.init == "ground_truth":
        if gt is None:
            raise ParameterError("init='ground_truth' needs a GroundTruth")
        return NcvxState(gt.Xstar.copy(), gt.Ystar.copy(), gt.Sstar.copy())
    return spectral_init(obs, r, tau, p)


def _resolve(opts, obs, lam, p, r):
    p = obs.sampling_rate if p is None else p
    eta, tol = opts.eta, opts.grad_tol
    if eta is None or tol is None:
        smax, smin = spectral_estimates(obs, r, p)
        if eta is None:
            eta = 0.5 / smax
        if tol is None:
            tol = 1e-8 * (lam / p) * math.sqrt(max(smin, 0.0))
    return p, eta, tol


def _error_columns(state: NcvxState, gt: GroundTruth | None):
    if gt is None:
        return {}
    Fstar = gt.Fstar
    D = state.F @ procrustes_align(state.F, Fstar).H - Fstar
    return dict(
        err_fro=norm(D, "fro"), err_op=norm(D, "spectral"), err_inf=norm(D, "linf"), err_2inf=norm(D, "two_inf")
    )


def _descent_guard(opts, F_prev, F_new, t):
    if opts.assert_descent and F_new > F_prev + opts.descent_rtol * abs(F_prev):
        raise SolverError(f"objective increased from {F_prev!r} to {F_new!r}", t)


def run(
    obs: ObservationSet,
    lam: float,
    tau: float,
    opts: NcvxOptions | None = None,
    gt: GroundTruth | None = None,
    p: float | None = None,
    r: int | None = None,
) -> NcvxResult:
    """Iterate until the gradient norm drops below ``grad_tol`` or ``max_iters``.

    Returns the recorded iterate with the smallest ``||grad f||_F``.
    """
    opts = opts or NcvxOptions()
    if r is None:
        r = gt.params.r if gt is not None else (opts.init_state.X.shape[1] if opts.init_state is not None else None)
    if r is None:
        raise ParameterError("rank unknown: pass r, gt or an initial state")
    p, eta, tol = _resolve(opts, obs, lam, p, r)
    loss = _Loss(obs, lam, tau, p)
    state = _initial_state(opts, obs, tau, p, gt, r)
    trace = SolveTrace(TRACE_COLUMNS)

    best, best_g, t_star = state, math.inf, 0
    F_prev = None
    while True:
        t = state.t
        R, Rpop = loss.residual(state.X, state.Y, state.S)
        f_val = loss.f(state.X, state.Y, state.S, R, Rpop)
        F_val = f_val + tau / p * float(np.abs(state.S).sum())
        if not math.isfinite(F_val):
            raise SolverError("non-finite objective in nonconvex solver", t)
        if F_prev is not None:
            _descent_guard(opts, F_prev, F_val, t)
        Gx, Gy = loss.grad(state.X, state.Y, state.S, R, Rpop)
        g = math.sqrt(float(np.vdot(Gx, Gx)) + float(np.vdot(Gy, Gy)))
        done = g <= tol or t >= opts.max_iters
        if t % opts.record_every == 0 or done:
            trace.append(iter=t, F=F_val, f=f_val, grad_norm=g, balancedness=balancedness(state), **_error_columns(state, gt))
            if g < best_g:
                best, best_g, t_star = state, g, t
        if done:
            break
        X = state.X - eta * Gx
        Y = state.Y - eta * Gy
        S = loss.best_S(X, Y)
        _check_finite(t + 1, X, Y, S)
        state = NcvxState(X, Y, S, t + 1)
        F_prev = F_val
    return NcvxResult(best, trace, t_star, best_g, state, eta, tol)


def _slice_mask(l: int, shape) -> np.ndarray:
    n1, n2 = shape
    if not 1 <= l <= n1 + n2:
        raise ParameterError(f"leave-one-out index {l} outside [1, {n1 + n2}]")
    mask = np.zeros(shape, dtype=bool)
    if l <= n1:
        mask[l - 1, :] = True
    else:
        mask[:, l - n1 - 1] = True
    return mask


def leave_one_out_run(
    l: int,
    obs: ObservationSet,
    gt: GroundTruth,
    lam: float,
    tau: float,
    opts: NcvxOptions | None = None,
    p: float | None = None,
) -> NcvxResult:
    """Run the l-th leave-one-out sequence (1-based; rows first, then columns)
    in lockstep with the original sequence, both started at the truth.

    The trace adds ``proximity = ||F^t H^t - F^{t,(l)} R^{t,(l)}||_F`` with
    ``H^t`` aligning ``F^t`` to ``F_star`` and ``R^{t,(l)}`` aligning the
    leave-one-out factors to ``F^t``, and ``aligned_err = ||F^t H^t - F_star||_F``.
    """
    if gt is None:
        raise ParameterError("leave-one-out sequences need the ground truth")
    opts = opts or NcvxOptions()
    pop = _slice_mask(l, obs.shape)
    r = gt.params.r
    p, eta, tol = _resolve(opts, obs, lam, p, r)
    base = _Loss(obs, lam, tau, p)
    loo = _Loss(obs, lam, tau, p, pop=pop, Lstar=gt.Lstar, Sstar=gt.Sstar)
    start = replace(opts, init="ground_truth", init_state=None)
    state = _initial_state(start, obs, tau, p, gt, r)
    other = state.copy()
    Fstar = gt.Fstar
    trace = SolveTrace(LOO_COLUMNS)

    best, best_g, t_star = other, math.inf, 0
    F_prev = None
    while True:
        t = other.t
        R, Rpop = loo.residual(other.X, other.Y, other.S)
        f_val = loo.f(other.X, other.Y, other.S, R, Rpop)
        F_val = f_val + tau / p * float(np.abs(other.S).sum())
        if F_prev is not None:
            _descent_guard(opts, F_prev, F_val, t)
        Gx, Gy = loo.grad(other.X, other.Y, other.S, R, Rpop)
        g = math.sqrt(float(np.vdot(Gx, Gx)) + float(np.vdot(Gy, Gy)))
        done = g <= tol or t >= opts.max_iters
        if t % opts.record_every == 0 or done:
            Ft, Fl = state.F, other.F
            FH = Ft @ procrustes_align(Ft, Fstar).H
            prox = float(np.linalg.norm(FH - Fl @ procrustes_align(Fl, Ft).H))
            trace.append(
                iter=t, F=F_val, f=f_val, grad_norm=g, balancedness=balancedness(other),
                proximity=prox, aligned_err=float(np.linalg.norm(FH - Fstar)), **_error_columns(other, gt),
            )
            if g < best_g:
                best, best_g, t_star = other, g, t
        if done:
            break
        X = other.X - eta * Gx
        Y = other.Y - eta * Gy
        S = loo.best_S(X, Y)
        _check_finite(t + 1, X, Y, S)
        other = NcvxState(X, Y, S, t + 1)
        state = _advance(base, state, eta)
        F_prev = F_val
    return NcvxResult(best, trace, t_star, best_g, other, eta, tol, extras={"original_final": state})
