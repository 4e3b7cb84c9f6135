"""Dense matrix primitives: truncated SVD, mask and tangent-space projections,
Procrustes alignment and the matrix norms used throughout the package."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ParameterError


# ---------------------------------------------------------------------------
# index masks


@dataclass(frozen=True, eq=False)
class IndexMask:
    """A set of (i, j) positions of an ``rows x cols`` matrix.

    Stored as a dense boolean view; ``indices`` gives the sorted (row-major)
    index list.
    """

    dense: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.dense, dtype=bool)
        if d.ndim != 2:
            raise ParameterError("mask must be two-dimensional")
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "dense", d)

    @classmethod
    def full(cls, rows: int, cols: int) -> "IndexMask":
        return cls(np.ones((rows, cols), dtype=bool))

    @classmethod
    def empty(cls, rows: int, cols: int) -> "IndexMask":
        return cls(np.zeros((rows, cols), dtype=bool))

    @classmethod
    def from_indices(cls, rows: int, cols: int, indices) -> "IndexMask":
        idx = np.asarray(indices, dtype=np.int64).reshape(-1, 2)
        if idx.size and ((idx < 0).any() or (idx[:, 0] >= rows).any() or (idx[:, 1] >= cols).any()):
            raise ParameterError("mask index out of range")
        d = np.zeros((rows, cols), dtype=bool)
        d[idx[:, 0], idx[:, 1]] = True
        return cls(d)

    @property
    def shape(self) -> tuple[int, int]:
        return self.dense.shape

    @property
    def indices(self) -> np.ndarray:
        return np.argwhere(self.dense)

    @property
    def count(self) -> int:
        return int(self.dense.sum())

    def __len__(self) -> int:
        return self.count

    def __contains__(self, ij) -> bool:
        i, j = ij
        return bool(self.dense[i, j])

    def __eq__(self, other) -> bool:
        return isinstance(other, IndexMask) and np.array_equal(self.dense, other.dense)

    def __hash__(self):
        return hash((self.shape, self.dense.tobytes()))

    def _check(self, other: "IndexMask"):
        if other.shape != self.shape:
            raise ParameterError(f"mask shape mismatch {self.shape} vs {other.shape}")

    def __and__(self, other: "IndexMask") -> "IndexMask":
        self._check(other)
        return IndexMask(self.dense & other.dense)

    def __or__(self, other: "IndexMask") -> "IndexMask":
        self._check(other)
        return IndexMask(self.dense | other.dense)

    def __sub__(self, other: "IndexMask") -> "IndexMask":
        self._check(other)
        return IndexMask(self.dense & ~other.dense)

    def complement(self) -> "IndexMask":
        return IndexMask(~self.dense)

    def issubset(self, other: "IndexMask") -> bool:
        self._check(other)
        return not bool((self.dense & ~other.dense).any())

    def isdisjoint(self, other: "IndexMask") -> bool:
        self._check(other)
        return not bool((self.dense & other.dense).any())


def support(A: np.ndarray, tol: float = 0.0) -> IndexMask:
    """Positions where ``|A_ij| > tol``."""
    return IndexMask(np.abs(A) > tol)


def project_mask(A: np.ndarray, omega: IndexMask) -> np.ndarray:
    """Keep the entries of ``A`` on ``omega`` and zero the rest."""
    A = np.asarray(A, dtype=float)
    if A.shape != omega.shape:
        raise ParameterError(f"matrix shape {A.shape} does not match mask {omega.shape}")
    return np.where(omega.dense, A, 0.0)


# ---------------------------------------------------------------------------
# SVD and tangent spaces


class TruncatedSvd(NamedTuple):
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.singular_values) @ self.V.T


def truncated_svd(A: np.ndarray, r: int) -> TruncatedSvd:
    """Top-``r`` singular triplets of ``A`` from an exact dense SVD."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ParameterError("expected a matrix")
    if not 1 <= r <= min(A.shape):
        raise ParameterError(f"rank {r} outside [1, {min(A.shape)}]")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    return TruncatedSvd(U[:, :r], s[:r], Vt[:r].T)


def best_rank_r(A: np.ndarray, r: int) -> np.ndarray:
    return truncated_svd(A, r).reconstruct()


@dataclass(frozen=True)
class TangentSpace:
    """Tangent space ``{U A^T + B V^T}`` of the rank-r manifold at a point with
    column space ``U`` and row space ``V``."""

    U: np.ndarray
    V: np.ndarray

    @classmethod
    def at(cls, L: np.ndarray, r: int) -> "TangentSpace":
        svd = truncated_svd(L, r)
        return cls(svd.U, svd.V)

    @classmethod
    def of_factors(cls, X: np.ndarray, Y: np.ndarray) -> "TangentSpace":
        # column spaces of X and Y are those of X Y^T when both have full column rank
        return cls(np.linalg.qr(X)[0], np.linalg.qr(Y)[0])

    @property
    def shape(self) -> tuple[int, int]:
        return self.U.shape[0], self.V.shape[0]

    @property
    def rank(self) -> int:
        return self.U.shape[1]


def _check_tangent(A: np.ndarray, T: TangentSpace) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.shape != T.shape:
        raise ParameterError(f"matrix shape {A.shape} does not match tangent space {T.shape}")
    return A


def project_tangent(A: np.ndarray, T: TangentSpace) -> np.ndarray:
    A = _check_tangent(A, T)
    UtA = T.U.T @ A
    AV = A @ T.V
    return T.U @ UtA + AV @ T.V.T - T.U @ (UtA @ T.V) @ T.V.T


def project_tangent_perp(A: np.ndarray, T: TangentSpace) -> np.ndarray:
    A = _check_tangent(A, T)
    return A - project_tangent(A, T)


# ---------------------------------------------------------------------------
# Procrustes alignment


class Alignment(NamedTuple):
    H: np.ndarray
    unique: bool


def _fix_signs(A: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # largest-magnitude entry of each left singular vector made positive
    idx = np.argmax(np.abs(A), axis=0)
    signs = np.sign(A[idx, np.arange(A.shape[1])])
    signs[signs == 0] = 1.0
    return A * signs, B * signs


def procrustes_align(F: np.ndarray, Fstar: np.ndarray, rtol: float = 1e-12) -> Alignment:
    """Orthonormal ``H`` minimising ``||F H - Fstar||_F``.

    ``H = A B^T`` with ``A S B^T`` the SVD of ``F^T Fstar``. ``unique`` is False
    when ``F^T Fstar`` is numerically rank deficient; ``H`` is then one of
    several minimisers, chosen by a fixed sign convention.
    """
    F = np.asarray(F, dtype=float)
    Fstar = np.asarray(Fstar, dtype=float)
    if F.shape != Fstar.shape:
        raise ParameterError(f"shape mismatch {F.shape} vs {Fstar.shape}")
    if F.shape[1] > F.shape[0]:
        raise ParameterError("need r <= rows")
    A, s, Bt = np.linalg.svd(F.T @ Fstar)
    A, B = _fix_signs(A, Bt.T)
    unique = bool(s[-1] > rtol * max(s[0], np.finfo(float).tiny))
    return Alignment(A @ B.T, unique)


def stack(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Stack factor pairs into the ``(n1 + n2) x r`` matrix ``[X; Y]``."""
    return np.vstack([X, Y])


# ---------------------------------------------------------------------------
# norms

NORM_KINDS = ("fro", "spectral", "nuclear", "l1", "linf", "two_inf")
_ALIASES = {"op": "spectral", "inf": "linf", "2inf": "two_inf", "F": "fro"}


def norm(A: np.ndarray, kind: str = "fro") -> float:
    """Matrix norm by name: fro, spectral, nuclear, l1, linf or two_inf
    (largest row l2 norm)."""
    kind = _ALIASES.get(kind, kind)
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    if kind == "fro":
        # rescale so tiny or huge entries do not under/overflow when squared
        m = float(np.abs(A).max())
        return m * float(np.linalg.norm(A / m)) if 0 < m < np.inf else float(np.linalg.norm(A))
    if kind == "spectral":
        return float(np.linalg.norm(A, 2)) if A.ndim == 2 else float(np.linalg.norm(A))
    if kind == "nuclear":
        return float(np.linalg.svd(A, compute_uv=False).sum())
    if kind == "l1":
        return float(np.abs(A).sum())
    if kind == "linf":
        return float(np.abs(A).max())
    if kind == "two_inf":
        return float(np.linalg.norm(A, axis=1).max()) if A.ndim == 2 else float(np.abs(A).max())
    raise ParameterError(f"unknown norm {kind!r}; choose from {NORM_KINDS}")
