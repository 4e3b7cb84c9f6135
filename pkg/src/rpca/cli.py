"""Command-line front end.

    rpca <subcommand> --config <path> [--seed N] [--trials N] [--scale X] [--out PATH]

Exit codes: 0 success, 2 solver failure, 3 configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .convex import ConvexOptions, default_lambda_tau, solve_convex
from .data import ModelParams, generate, load_observations, save_ground_truth
from .errors import ParameterError, SolverError
from .experiments import FIGURES, ExperimentConfig, rows_to_csv, run_check, run_figure, write_gnuplot
from .io import write_matrix
from .nonconvex import NcvxOptions

log = logging.getLogger("rpca")

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3
SUBCOMMANDS = FIGURES + ("check", "solve", "generate")


class ConfigError(Exception):
    pass


def _floats(text):
    return tuple(float(t) for t in text.replace(",", " ").split())


def _typed(dc, section: configparser.SectionProxy, skip=()):
    """Keyword arguments for dataclass ``dc`` from an INI section, typed by the defaults."""
    known = {f.name: f for f in fields(dc)}
    out = {}
    for key in section:
        if key in skip:
            continue
        if key not in known:
            raise ConfigError(f"[{section.name}] unknown key {key!r}")
        if key == "init_state":
            raise ConfigError(f"[{section.name}] init_state cannot be set from a file")
        default = getattr(dc(), key)
        try:
            if isinstance(default, bool):
                out[key] = section.getboolean(key)
            elif isinstance(default, int):
                out[key] = section.getint(key)
            elif isinstance(default, str):
                out[key] = section[key].strip()
            else:
                raw = section[key].strip()
                out[key] = None if raw.lower() in ("", "none") else float(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section.name}] {key}: {exc}") from exc
    return out


_EXPERIMENT_KEYS = {
    "figure": str, "trials": int, "seed": int, "scale": float, "output": str, "r": int,
    "p": float, "rho_s": float, "sigma": float, "workers": int, "plot": bool,
    "eta_scale": float, "fig5_rho_s": float, "sweep": _floats, "ranks": _floats,
}


def load_config(path, subcommand: str, overrides: argparse.Namespace | None = None):
    """Parse an INI file into an ExperimentConfig plus the raw parser."""
    parser = configparser.ConfigParser()
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
    kw = {}
    if parser.has_section("experiment"):
        sec = parser["experiment"]
        for key in sec:
            if key not in _EXPERIMENT_KEYS:
                raise ConfigError(f"[experiment] unknown key {key!r}")
            conv = _EXPERIMENT_KEYS[key]
            try:
                kw[key] = sec.getboolean(key) if conv is bool else conv(sec[key])
            except ValueError as exc:
                raise ConfigError(f"[experiment] {key}: {exc}") from exc
    if "output" in kw:
        kw["output_path"] = kw.pop("output")
    if "ranks" in kw:
        kw["ranks"] = tuple(int(r) for r in kw["ranks"])
    if subcommand in FIGURES:
        kw.setdefault("figure", subcommand)
        if kw["figure"] != subcommand:
            raise ConfigError(f"config is for {kw['figure']}, not {subcommand}")
    else:
        kw["figure"] = "custom"
    if overrides is not None:
        for key in ("seed", "trials", "scale", "workers"):
            val = getattr(overrides, key, None)
            if val is not None:
                kw[key] = val
        if getattr(overrides, "out", None):
            kw["output_path"] = overrides.out
    figure = kw.get("figure")
    if "sweep" in kw and figure in ("fig1a", "fig5"):
        kw["sweep"] = tuple(int(round(v)) for v in kw["sweep"])
    try:
        cvx = ConvexOptions(**_typed(ConvexOptions, parser["convex"])) if parser.has_section("convex") else None
        ncvx = NcvxOptions(**_typed(NcvxOptions, parser["ncvx"])) if parser.has_section("ncvx") else None
        cfg = ExperimentConfig(**kw)
    except (ParameterError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    if cvx is not None:
        cfg.convex = cvx
    if ncvx is not None:
        cfg.ncvx = ncvx
    return cfg, parser


def cmd_figure(cfg: ExperimentConfig) -> int:
    rows = run_figure(cfg)
    out = cfg.output_path or f"{cfg.figure}.csv"
    rows_to_csv(rows, out)
    if cfg.plot:
        write_gnuplot(rows, out, cfg.figure)
    bad = [r for r in rows if r["status"].startswith("solver_error")]
    log.info("wrote %d rows to %s", len(rows), out)
    return EXIT_SOLVER if bad else EXIT_OK


def cmd_check(cfg: ExperimentConfig) -> int:
    for line in run_check(cfg):
        print(line)
    return EXIT_OK


def cmd_generate(cfg: ExperimentConfig, parser) -> int:
    trial = parser.getint("generate", "trial", fallback=0) if parser.has_section("generate") else 0
    try:
        prm = ModelParams(n1=cfg.n, n2=cfg.n, r=cfg.r, p=cfg.p if cfg.p is not None else 1.0,
                          rho_s=cfg.rho_s, sigma=cfg.sigma, seed=cfg.seed)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc
    out = save_ground_truth(generate(prm, trial), cfg.output_path or "instance")
    print(out)
    return EXIT_OK


def cmd_solve(cfg: ExperimentConfig, parser) -> int:
    if not parser.has_section("solve"):
        raise ConfigError("solve needs a [solve] section with matrix and mask paths")
    sec = parser["solve"]
    try:
        obs = load_observations(sec["matrix"], sec["mask"], sec.getfloat("p", fallback=None))
        p = obs.sampling_rate
        if "lambda" in sec and "tau" in sec:
            lam, tau = sec.getfloat("lambda"), sec.getfloat("tau")
        else:
            lam, tau = default_lambda_tau(*obs.shape, p, sec.getfloat("sigma", fallback=cfg.sigma))
    except (KeyError, ValueError, ParameterError) as exc:
        raise ConfigError(f"[solve] {exc}") from exc
    sol = solve_convex(obs, lam, tau, cfg.convex)
    out = Path(cfg.output_path or sec.get("out", "solution"))
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "L.txt", sol.L)
    write_matrix(out / "S.txt", sol.S)
    sol.trace.to_csv(out / "trace.csv")
    rep = sol.kkt_report
    with open(out / "kkt.txt", "w") as fh:
        for k, v in dict(converged=sol.converged, iterations=sol.iterations, objective=sol.objective,
                         lam=lam, tau=tau, **vars(rep)).items():
            fh.write(f"{k}={v}\n")
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rpca", description="Robust PCA experiments with convex and nonconvex solvers.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="INI file with [experiment], [convex], [ncvx], [solve] sections")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--trials", type=int)
    ap.add_argument("--scale", type=float)
    ap.add_argument("--out")
    ap.add_argument("--workers", type=int)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg, parser = load_config(args.config, args.subcommand, args)
        if args.subcommand in FIGURES:
            return cmd_figure(cfg)
        if args.subcommand == "check":
            return cmd_check(cfg)
        if args.subcommand == "generate":
            return cmd_generate(cfg, parser)
        return cmd_solve(cfg, parser)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
