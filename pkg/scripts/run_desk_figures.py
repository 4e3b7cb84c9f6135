"""Run every figure protocol at desk scale and write CSVs plus gnuplot scripts.

    python3 scripts/run_desk_figures.py [--out results] [--trials 10] [--scale 0.2] [--workers 1]

Use --scale 1 --trials 50 for the full-size protocols (hours on one core).
"""

import argparse
import time
from pathlib import Path

from rpca.experiments import FIGURES, ExperimentConfig, rows_to_csv, run_figure, write_gnuplot


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--scale", type=float, default=0.2)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("figures", nargs="*", default=list(FIGURES))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for fig in args.figures:
        cfg = ExperimentConfig(figure=fig, trials=args.trials, scale=args.scale, seed=args.seed,
                               workers=args.workers, p=0.2 if fig in ("fig1b", "fig2", "fig4") else None)
        t0 = time.perf_counter()
        rows = run_figure(cfg)
        path = out / f"{fig}.csv"
        rows_to_csv(rows, path)
        write_gnuplot(rows, path, fig)
        print(f"{fig}: {len(rows)} rows in {time.perf_counter() - t0:.0f} s -> {path}")


if __name__ == "__main__":
    main()
