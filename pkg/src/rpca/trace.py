from __future__ import annotations

import csv
import math

import numpy as np


class SolveTrace:
    """Per-iteration records with a fixed column order."""

    def __init__(self, columns):
        self.columns = list(columns)
        self.rows: list[dict] = []

    def append(self, **values):
        self.rows.append(values)

    def __len__(self):
        return len(self.rows)

    def column(self, name) -> np.ndarray:
        return np.array([row.get(name, math.nan) for row in self.rows], dtype=float)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow(["" if row.get(c) is None else _fmt(row.get(c)) for c in self.columns])


def _fmt(x):
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return x
