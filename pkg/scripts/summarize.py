"""Print per-sweep means and log-log slopes from figure CSVs.

    python3 scripts/summarize.py results/fig1b.csv [results/fig1a.csv ...]
"""

import math
import sys

from rpca.experiments import loglog_slope, mean_by, read_rows


def summarize(path):
    rows = read_rows(path)
    figure = rows[0]["figure"] if rows else "?"
    means = mean_by(rows, "err_fro")
    print(f"== {path} ({figure})")
    for est in sorted({k[0] for k in means}):
        pts = sorted((s, v) for (e, s), v in means.items() if e == est)
        cells = "  ".join(f"{s:g}:{v:.4g}" for s, v in pts)
        line = f"  {est:<12} {cells}"
        if len(pts) > 1 and all(s > 0 and v > 0 for s, v in pts):
            xs = [math.sqrt(s) if figure in ("fig1a", "fig5") else s for s, _ in pts]
            line += f"   slope {loglog_slope(xs, [v for _, v in pts]):.3f}"
        print(line)


if __name__ == "__main__":
    for arg in sys.argv[1:]:
        summarize(arg)
