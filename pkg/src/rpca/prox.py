"""Proximal maps of the entrywise l1 norm and the nuclear norm."""

from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .linalg import IndexMask, project_mask


def _check_level(tau):
    if tau < 0:
        raise ParameterError(f"threshold must be nonnegative, got {tau}")


def soft_threshold_scalar(x: float, tau: float) -> float:
    _check_level(tau)
    return float(np.sign(x) * max(abs(x) - tau, 0.0))


def soft_threshold(A, tau: float, mask: IndexMask | None = None) -> np.ndarray:
    """Entrywise ``sign(a) * max(|a| - tau, 0)``, zeroed off ``mask`` if given.

    ``|a| == tau`` maps to exactly zero.
    """
    _check_level(tau)
    A = np.asarray(A, dtype=float)
    out = np.sign(A) * np.maximum(np.abs(A) - tau, 0.0)
    if mask is not None:
        out = project_mask(out, mask)
    return out


def singular_value_threshold(A, lam: float, return_svd: bool = False):
    """Prox of ``lam * ||.||_*``: shrink every singular value of ``A`` by ``lam``.

    Uses a full SVD since the rank of the output is not known in advance. With
    ``return_svd`` also returns the thin factors ``(U, s, V)`` of the output,
    trimmed to its nonzero singular values.
    """
    _check_level(lam)
    A = np.asarray(A, dtype=float)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    s = np.maximum(s - lam, 0.0)
    k = int(np.count_nonzero(s))
    out = (U[:, :k] * s[:k]) @ Vt[:k]
    if return_svd:
        return out, (U[:, :k], s[:k], Vt[:k].T)
    return out


soft_threshold_matrix = soft_threshold
