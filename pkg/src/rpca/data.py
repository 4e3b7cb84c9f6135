"""Synthetic robust-PCA instances: low-rank truth, Bernoulli sampling, sparse
outliers with random or fixed signs, and Gaussian noise.

Every random component is drawn from its own substream of a single 64-bit
seed (numpy ``SeedSequence`` feeding PCG64), so two instances built from the
same ``(seed, trial)`` share their mask, outlier locations and base noise
draw even when sigma or the sign mode differ.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io
from .errors import ParameterError
from .linalg import IndexMask, TruncatedSvd, norm, project_mask, truncated_svd

STREAMS = {"factors": 0, "mask": 1, "outliers": 2, "noise": 3, "aug": 4, "probe": 5}


def substream(seed: int, trial: int, stream: str) -> np.random.Generator:
    """Independent generator for ``stream`` of trial ``trial`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed) % 2**64, spawn_key=(int(trial), STREAMS[stream]))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class Outliers:
    """Magnitude law for outlier entries: ``gaussian`` with variance ``value``
    or ``constant`` equal to ``value``."""

    kind: str = "gaussian"
    value: float = 10.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "constant"):
            raise ParameterError(f"unknown outlier law {self.kind!r}")


@dataclass(frozen=True)
class ModelParams:
    n1: int = 200
    n2: int = 200
    r: int = 5
    p: float = 1.0
    rho_s: float = 0.1
    sigma: float = 1e-3
    outliers: Outliers = field(default_factory=Outliers)
    sign_mode: str = "random"
    seed: int = 0
    spectrum: tuple[float, ...] | None = None  # singular values of L*, default all ones
    rho_aug: float | None = None  # use the over-sampling/rejection model when set
    noise: str = "gaussian"

    def __post_init__(self):
        if not 1 <= self.r <= min(self.n1, self.n2):
            raise ParameterError(f"rank {self.r} outside [1, {min(self.n1, self.n2)}]")
        if not 0 < self.p <= 1:
            raise ParameterError(f"p must lie in (0, 1], got {self.p}")
        if not 0 <= self.rho_s < 1:
            raise ParameterError(f"rho_s must lie in [0, 1), got {self.rho_s}")
        if self.sigma < 0:
            raise ParameterError("sigma must be nonnegative")
        if self.sign_mode not in ("random", "fixed_positive"):
            raise ParameterError(f"unknown sign mode {self.sign_mode!r}")
        if self.noise not in ("gaussian", "rademacher"):
            raise ParameterError(f"unknown noise law {self.noise!r}")
        if self.spectrum is not None and len(self.spectrum) != self.r:
            raise ParameterError("spectrum length must equal r")
        if self.rho_aug is not None and not self.rho_s <= self.rho_aug <= 1:
            raise ParameterError("need rho_s <= rho_aug <= 1")

    def replace(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["spectrum"] = list(self.spectrum) if self.spectrum is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        d = dict(d)
        d["outliers"] = Outliers(**d["outliers"])
        if d.get("spectrum") is not None:
            d["spectrum"] = tuple(d["spectrum"])
        return cls(**d)


@dataclass
class ObservationSet:
    M: np.ndarray
    omega_obs: IndexMask
    p: float | None = None

    def __post_init__(self):
        self.M = project_mask(self.M, self.omega_obs)

    @property
    def shape(self):
        return self.M.shape

    @property
    def sampling_rate(self) -> float:
        """``p`` if known, else the observed fraction (floored away from 0)."""
        if self.p is not None:
            return self.p
        n1, n2 = self.shape
        return max(self.omega_obs.count, 1) / (n1 * n2)


@dataclass
class GroundTruth:
    Xstar: np.ndarray
    Ystar: np.ndarray
    Lstar: np.ndarray
    Sstar: np.ndarray
    E: np.ndarray
    omega_obs: IndexMask
    omega_star: IndexMask
    mu: float
    kappa: float
    sigma_min: float
    sigma_max: float
    params: ModelParams | None = None
    omega_aug: IndexMask | None = None
    trial: int = 0

    @property
    def Fstar(self) -> np.ndarray:
        return np.vstack([self.Xstar, self.Ystar])


# ---------------------------------------------------------------------------
# generators


def _haar_orthonormal(n: int, r: int, rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((n, r)))
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d


def gen_low_rank(params: ModelParams, rng: np.random.Generator):
    """Balanced factors ``X* = U* S^1/2``, ``Y* = V* S^1/2`` with Haar-random
    orthonormal ``U*``, ``V*``. Returns ``(Xstar, Ystar, Lstar)``."""
    n1, n2, r = params.n1, params.n2, params.r
    if not 1 <= r <= min(n1, n2):
        raise ParameterError(f"rank {r} outside [1, {min(n1, n2)}]")
    U = _haar_orthonormal(n1, r, rng)
    V = _haar_orthonormal(n2, r, rng)
    spec = np.ones(r) if params.spectrum is None else np.asarray(params.spectrum, dtype=float)
    root = np.sqrt(spec)
    X, Y = U * root, V * root
    return X, Y, X @ Y.T


def gen_mask(n1: int, n2: int, p: float, rng: np.random.Generator) -> IndexMask:
    """I.i.d. Bernoulli(p) membership."""
    if not 0 < p <= 1:
        raise ParameterError(f"p must lie in (0, 1], got {p}")
    return IndexMask(rng.random((n1, n2)) < p)


def gen_outliers(
    omega_obs: IndexMask,
    rho_s: float,
    magnitude: Outliers,
    sign_mode: str,
    rng: np.random.Generator,
    locations: IndexMask | None = None,
):
    """Outlier matrix and its support.

    Each observed entry is corrupted with probability ``rho_s`` unless
    ``locations`` fixes the support. Draws are taken over the full grid in a
    fixed order (locations, magnitudes, signs) so that changing the sign mode
    or the mask leaves the other draws unchanged.
    """
    if not 0 <= rho_s < 1:
        raise ParameterError(f"rho_s must lie in [0, 1), got {rho_s}")
    shape = omega_obs.shape
    u = rng.random(shape)
    if magnitude.kind == "gaussian":
        mag = np.abs(rng.standard_normal(shape)) * math.sqrt(magnitude.value)
    else:
        rng.standard_normal(shape)  # keep stream aligned across magnitude laws
        mag = np.full(shape, float(magnitude.value))
    signs = np.where(rng.random(shape) < 0.5, 1.0, -1.0)
    if sign_mode == "fixed_positive":
        signs = np.ones(shape)
    elif sign_mode != "random":
        raise ParameterError(f"unknown sign mode {sign_mode!r}")
    if locations is None:
        loc = omega_obs.dense & (u < rho_s)
    else:
        loc = locations.dense & omega_obs.dense
    S = np.where(loc, signs * mag, 0.0)
    # a zero magnitude draw would silently shrink the support
    loc = loc & (S != 0)
    return S, IndexMask(loc)


def gen_noise(n1: int, n2: int, sigma: float, rng: np.random.Generator, law: str = "gaussian"):
    if sigma < 0:
        raise ParameterError("sigma must be nonnegative")
    if law == "gaussian":
        Z = rng.standard_normal((n1, n2))
    elif law == "rademacher":
        Z = np.where(rng.random((n1, n2)) < 0.5, 1.0, -1.0)
    else:
        raise ParameterError(f"unknown noise law {law!r}")
    return sigma * Z


def gen_mask_augmented(n1, n2, p, rho_aug, rho_s, rng: np.random.Generator):
    """Over-sampling/rejection model for the outlier support.

    ``omega_obs ~ Bernoulli(p)``; each observed entry joins ``omega_aug`` with
    probability ``rho_aug``; each augmented entry joins ``omega_star`` with
    probability ``rho_s / rho_aug``. Marginally identical to sampling
    ``omega_star`` from ``omega_obs`` at rate ``rho_s``.
    """
    if not rho_s <= rho_aug <= 1:
        raise ParameterError("need rho_s <= rho_aug <= 1")
    obs = gen_mask(n1, n2, p, rng)
    aug = obs.dense & (rng.random((n1, n2)) < rho_aug)
    accept = 0.0 if rho_aug == 0 else rho_s / rho_aug
    star = aug & (rng.random((n1, n2)) < accept) if accept < 1 else aug.copy()
    return obs, IndexMask(aug), IndexMask(star)


def measure_incoherence(svd: TruncatedSvd) -> tuple[float, float]:
    """``mu = max(n1 ||U||_{2,inf}^2, n2 ||V||_{2,inf}^2) / r`` and
    ``kappa = s_max / s_min`` (``inf`` when ``s_min`` is zero)."""
    U, s, V = svd
    r = U.shape[1]
    mu = max(U.shape[0] * norm(U, "two_inf") ** 2, V.shape[0] * norm(V, "two_inf") ** 2) / r
    kappa = math.inf if s[-1] <= 0 else float(s[0] / s[-1])
    return float(mu), kappa


def generate(params: ModelParams, trial: int = 0) -> GroundTruth:
    """Draw a full instance; identical ``(params, trial)`` give bitwise identical output."""
    seed = params.seed
    X, Y, L = gen_low_rank(params, substream(seed, trial, "factors"))
    n1, n2 = params.n1, params.n2
    omega_aug = None
    if params.rho_aug is None:
        obs = gen_mask(n1, n2, params.p, substream(seed, trial, "mask"))
        S, star = gen_outliers(obs, params.rho_s, params.outliers, params.sign_mode, substream(seed, trial, "outliers"))
    else:
        obs, omega_aug, locs = gen_mask_augmented(
            n1, n2, params.p, params.rho_aug, params.rho_s, substream(seed, trial, "aug")
        )
        S, star = gen_outliers(
            obs, params.rho_s, params.outliers, params.sign_mode, substream(seed, trial, "outliers"), locations=locs
        )
    E = gen_noise(n1, n2, params.sigma, substream(seed, trial, "noise"), params.noise)
    svd = truncated_svd(L, params.r)
    mu, kappa = measure_incoherence(svd)
    return GroundTruth(
        Xstar=X, Ystar=Y, Lstar=L, Sstar=S, E=E, omega_obs=obs, omega_star=star,
        mu=mu, kappa=kappa, sigma_min=float(svd.singular_values[-1]),
        sigma_max=float(svd.singular_values[0]), params=params, omega_aug=omega_aug, trial=trial,
    )


def assemble(gt: GroundTruth) -> ObservationSet:
    """``M = P_obs(L* + S* + E)``."""
    p = gt.params.p if gt.params is not None else None
    return ObservationSet(project_mask(gt.Lstar + gt.Sstar + gt.E, gt.omega_obs), gt.omega_obs, p)


def fixed_sign_target(gt: GroundTruth, c0: float = 5.0) -> np.ndarray:
    """``L* + E[S*]`` for constant positive outliers ``c0 * sigma`` at rate ``rho_s``."""
    pr = gt.params
    return gt.Lstar + c0 * pr.rho_s * pr.sigma * np.ones_like(gt.Lstar)


# ---------------------------------------------------------------------------
# serialization

_MATRICES = ("Xstar", "Ystar", "Lstar", "Sstar", "E")


def save_ground_truth(gt: GroundTruth, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in _MATRICES:
        io.write_matrix(d / f"{name}.txt", getattr(gt, name))
    io.write_mask(d / "omega_obs.mask", gt.omega_obs)
    io.write_mask(d / "omega_star.mask", gt.omega_star)
    if gt.omega_aug is not None:
        io.write_mask(d / "omega_aug.mask", gt.omega_aug)
    obs = assemble(gt)
    io.write_matrix(d / "M.txt", obs.M)
    meta = {
        "params": gt.params.to_dict() if gt.params is not None else None,
        "trial": gt.trial,
        "mu": gt.mu,
        "kappa": gt.kappa,
        "sigma_min": gt.sigma_min,
        "sigma_max": gt.sigma_max,
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return d


def load_ground_truth(directory) -> GroundTruth:
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text())
    mats = {name: io.read_matrix(d / f"{name}.txt") for name in _MATRICES}
    aug = io.read_mask(d / "omega_aug.mask") if (d / "omega_aug.mask").exists() else None
    params = ModelParams.from_dict(meta["params"]) if meta["params"] else None
    return GroundTruth(
        **mats, omega_obs=io.read_mask(d / "omega_obs.mask"), omega_star=io.read_mask(d / "omega_star.mask"),
        mu=meta["mu"], kappa=meta["kappa"], sigma_min=meta["sigma_min"], sigma_max=meta["sigma_max"],
        params=params, omega_aug=aug, trial=meta["trial"],
    )


def load_observations(m_path, mask_path, p: float | None = None) -> ObservationSet:
    return ObservationSet(io.read_matrix(m_path), io.read_mask(mask_path), p)
