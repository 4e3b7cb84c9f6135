"""Plain-text matrix and mask files.

Matrix: header ``rows cols`` then one whitespace-separated row per line.
Mask: header ``rows cols k`` then ``k`` lines ``i j`` (zero-based).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParameterError
from .linalg import IndexMask


def write_matrix(path, A: np.ndarray) -> None:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    rows, cols = A.shape
    with open(path, "w") as fh:
        fh.write(f"{rows} {cols}\n")
        for row in A:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def read_matrix(path) -> np.ndarray:
    lines = Path(path).read_text().split("\n")
    try:
        rows, cols = (int(t) for t in lines[0].split())
        body = [ln.split() for ln in lines[1:] if ln.strip()]
        A = np.array(body, dtype=float).reshape(rows, cols) if rows * cols else np.zeros((rows, cols))
    except (ValueError, IndexError) as exc:
        raise ParameterError(f"malformed matrix file {path}: {exc}") from exc
    if len(body) != rows:
        raise ParameterError(f"{path}: expected {rows} rows, found {len(body)}")
    return A


def write_mask(path, mask: IndexMask) -> None:
    idx = mask.indices
    rows, cols = mask.shape
    with open(path, "w") as fh:
        fh.write(f"{rows} {cols} {len(idx)}\n")
        for i, j in idx:
            fh.write(f"{i} {j}\n")


def read_mask(path) -> IndexMask:
    lines = [ln for ln in Path(path).read_text().split("\n") if ln.strip()]
    try:
        rows, cols, k = (int(t) for t in lines[0].split())
        idx = np.array([ln.split() for ln in lines[1:]], dtype=np.int64).reshape(-1, 2)
    except (ValueError, IndexError) as exc:
        raise ParameterError(f"malformed mask file {path}: {exc}") from exc
    if len(idx) != k:
        raise ParameterError(f"{path}: header says {k} entries, found {len(idx)}")
    return IndexMask.from_indices(rows, cols, idx)
