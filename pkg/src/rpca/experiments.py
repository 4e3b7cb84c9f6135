"""Figure protocols: instance generation, solver runs and one CSV row per
(sweep value, trial, estimator).

Every trial draws its instance from substreams keyed on ``(seed, trial)``
only, so all sweep values and estimators of a trial share the same draws.
"""

from __future__ import annotations

import csv
import io
import math
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .convex import ConvexOptions, default_lambda_tau, rank_r_truncate, solve_convex, solve_oracle_denoise
from .data import ModelParams, Outliers, assemble, fixed_sign_target, generate
from .errors import ParameterError, SolverError
from .linalg import norm
from .nonconvex import NcvxOptions, run

CSV_HEADER = (
    "figure", "sweep", "trial", "estimator", "err_fro", "err_op", "err_inf",
    "rel_fro", "rel_op", "rel_inf", "dist_L", "dist_S", "status", "wall_ms", "seed",
)
FIGURES = ("fig1a", "fig1b", "fig2", "fig3", "fig4", "fig5")
SIGMA_SWEEP = (1e-4, 3e-4, 1e-3, 3e-3, 1e-2)
N_SWEEP_FULL = (500, 1000, 1500, 2000)  # multiplied by scale
RHO_SWEEP = tuple(round(0.02 * k, 2) for k in range(1, 11))

# convex settings for experiments: stop on the KKT test only, since the
# objective stalls at rounding level well before the iterates settle
EXPERIMENT_CONVEX = ConvexOptions(rel_obj_tol=0.0, kkt_tol=1e-6)


@dataclass
class ExperimentConfig:
    figure: str = "fig1b"
    sweep: tuple = ()
    trials: int = 10
    seed: int = 0
    scale: float = 0.2
    output_path: str | None = None
    r: int = 5
    p: float | None = None
    rho_s: float = 0.1
    sigma: float = 1e-3
    ranks: tuple = (2, 4, 6)
    workers: int = 1
    plot: bool = False
    fig5_rho_s: float | None = None  # default 1 / log n
    eta_scale: float = 0.5  # nonconvex step eta = eta_scale / sigma_max(L_star)
    convex: ConvexOptions = field(default_factory=lambda: replace(EXPERIMENT_CONVEX))
    ncvx: NcvxOptions = field(default_factory=NcvxOptions)

    def __post_init__(self):
        if self.figure not in FIGURES + ("custom",):
            raise ParameterError(f"unknown figure {self.figure!r}")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if not self.scale > 0:
            raise ParameterError("scale must be positive")
        if not self.sweep:
            self.sweep = default_sweep(self.figure, self.scale)
        self.sweep = tuple(self.sweep)
        if not self.sweep:
            raise ParameterError("sweep must be nonempty")

    @property
    def n(self) -> int:
        return max(2, int(round(1000 * self.scale)))


def default_sweep(figure: str, scale: float) -> tuple:
    if figure in ("fig1a", "fig5"):
        return tuple(max(2, int(round(n * scale))) for n in N_SWEEP_FULL)
    if figure == "fig3":
        return RHO_SWEEP
    return SIGMA_SWEEP


def _errors(Lhat, Lref):
    D = Lhat - Lref
    fro, op, inf = norm(D, "fro"), norm(D, "spectral"), norm(D, "linf")
    return dict(
        err_fro=fro, err_op=op, err_inf=inf,
        rel_fro=fro / norm(Lref, "fro"), rel_op=op / norm(Lref, "spectral"), rel_inf=inf / norm(Lref, "linf"),
    )


def _rel(a, b):
    # with no outliers the S errors are reported unnormalised
    return a / b if b > 0 else a


def _row(cfg, sweep, trial, estimator, status="ok", wall_ms=0.0, **values):
    row = dict(figure=cfg.figure, sweep=sweep, trial=trial, estimator=estimator,
               status=status, wall_ms=wall_ms, seed=cfg.seed)
    row.update(values)
    return row


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, 1e3 * (time.perf_counter() - t0)


def _cvx_row(cfg, sweep, trial, gt, obs, lam, tau, tag="cvx", extra=None):
    try:
        sol, ms = _timed(solve_convex, obs, lam, tau, cfg.convex)
    except SolverError as exc:
        return None, _row(cfg, sweep, trial, tag, status=f"solver_error@{exc.iteration}")
    status = "ok" if sol.converged else "max_iters"
    return sol, _row(cfg, sweep, trial, tag, status, ms, **_errors(sol.L, gt.Lstar), **(extra or {}))


def _params(cfg: ExperimentConfig, **over) -> ModelParams:
    base = dict(n1=cfg.n, n2=cfg.n, r=cfg.r, p=cfg.p if cfg.p is not None else 1.0,
                rho_s=cfg.rho_s, sigma=cfg.sigma, seed=cfg.seed)
    base.update(over)
    return ModelParams(**base)


def _oracle_row(cfg, sweep, trial, gt, lam):
    A = gt.Lstar + gt.E
    Lhat, ms = _timed(solve_oracle_denoise, A, lam)
    return _row(cfg, sweep, trial, "oracle", "ok", ms, **_errors(Lhat, gt.Lstar))


def trial_fig1a(cfg, n, trial):
    prm = _params(cfg, n1=n, n2=n, p=1.0)
    gt = generate(prm, trial)
    lam, tau = default_lambda_tau(n, n, 1.0, prm.sigma)
    _, row = _cvx_row(cfg, n, trial, gt, assemble(gt), lam, tau)
    return [row, _oracle_row(cfg, n, trial, gt, lam)]


def trial_fig1b(cfg, sigma, trial):
    prm = _params(cfg, sigma=sigma, p=cfg.p if cfg.p is not None else 0.2)
    gt = generate(prm, trial)
    lam, tau = default_lambda_tau(prm.n1, prm.n2, prm.p, sigma)
    _, row = _cvx_row(cfg, sigma, trial, gt, assemble(gt), lam, tau)
    # the oracle sees every entry of L* + E
    lam_full, _ = default_lambda_tau(prm.n1, prm.n2, 1.0, sigma)
    return [row, _oracle_row(cfg, sigma, trial, gt, lam_full)]


def trial_fig2(cfg, sigma, trial):
    prm = _params(cfg, sigma=sigma, p=cfg.p if cfg.p is not None else 0.2)
    gt = generate(prm, trial)
    lam, tau = default_lambda_tau(prm.n1, prm.n2, prm.p, sigma)
    sol, row = _cvx_row(cfg, sigma, trial, gt, assemble(gt), lam, tau)
    rows = [row]
    if sol is not None:
        trunc = rank_r_truncate(sol.L, prm.r)
        rows.append(_row(cfg, sigma, trial, "cvx_rank_r", row["status"], 0.0,
                         dist_L=trunc.residual_fro, **_errors(trunc.L, gt.Lstar)))
    return rows


def trial_fig3(cfg, rho_s, trial):
    rows = []
    for r in cfg.ranks:
        p = min(1.0, 0.1 * r)
        prm = _params(cfg, r=r, p=p, rho_s=rho_s)
        gt = generate(prm, trial)
        lam, tau = default_lambda_tau(prm.n1, prm.n2, p, prm.sigma)
        _, row = _cvx_row(cfg, rho_s, trial, gt, assemble(gt), lam, tau, tag=f"cvx_r{r}")
        rows.append(row)
    return rows


def trial_fig4(cfg, sigma, trial):
    prm = _params(cfg, sigma=sigma, p=cfg.p if cfg.p is not None else 0.2)
    gt = generate(prm, trial)
    obs = assemble(gt)
    lam, tau = default_lambda_tau(prm.n1, prm.n2, prm.p, sigma)
    sol, cvx_row = _cvx_row(cfg, sigma, trial, gt, obs, lam, tau)
    opts = replace(cfg.ncvx, eta=cfg.ncvx.eta or cfg.eta_scale / gt.sigma_max)
    try:
        res, ms = _timed(run, obs, lam, tau, opts, gt, prm.p)
    except SolverError as exc:
        return [cvx_row, _row(cfg, sigma, trial, "ncvx", status=f"solver_error@{exc.iteration}")]
    state = res.best_state
    Ln = state.X @ state.Y.T
    ncvx_row = _row(cfg, sigma, trial, "ncvx", "ok" if res.min_grad_norm <= res.grad_tol else "max_iters", ms,
                    **_errors(Ln, gt.Lstar))
    rows = [cvx_row, ncvx_row]
    if sol is None:
        return rows
    s_ref = norm(gt.Sstar, "fro")
    dL = norm(sol.L - Ln, "fro") / norm(gt.Lstar, "fro")
    dS = _rel(norm(sol.S - state.S, "fro"), s_ref)
    cvx_row.update(dist_L=dL, dist_S=dS)
    ncvx_row.update(dist_L=dL, dist_S=dS)
    for tag, S in (("cvx_S", sol.S), ("ncvx_S", state.S)):
        D = S - gt.Sstar
        fro, op, inf = norm(D, "fro"), norm(D, "spectral"), norm(D, "linf")
        rows.append(_row(cfg, sigma, trial, tag, "ok", 0.0, err_fro=fro, err_op=op, err_inf=inf,
                         rel_fro=_rel(fro, s_ref), rel_op=_rel(op, norm(gt.Sstar, "spectral")),
                         rel_inf=_rel(inf, norm(gt.Sstar, "linf")), dist_L=dL, dist_S=dS))
    return rows


def fig5_params(cfg, n, sign_mode) -> ModelParams:
    rho = cfg.fig5_rho_s if cfg.fig5_rho_s is not None else 1.0 / math.log(n)
    return _params(cfg, n1=n, n2=n, p=1.0, rho_s=rho, sign_mode=sign_mode,
                   outliers=Outliers("constant", 5.0 * cfg.sigma))


def trial_fig5(cfg, n, trial):
    rows = []
    for mode, tag in (("random", "cvx_random"), ("fixed_positive", "cvx_fixed")):
        prm = fig5_params(cfg, n, mode)
        gt = generate(prm, trial)
        lam, tau = default_lambda_tau(n, n, 1.0, prm.sigma)
        sol, row = _cvx_row(cfg, n, trial, gt, assemble(gt), lam, tau, tag=tag)
        if sol is not None:
            target = fixed_sign_target(gt) if mode == "fixed_positive" else gt.Lstar
            row["dist_L"] = norm(sol.L - target, "fro")
        rows.append(row)
    return rows


TRIALS = {
    "fig1a": trial_fig1a, "fig1b": trial_fig1b, "fig2": trial_fig2,
    "fig3": trial_fig3, "fig4": trial_fig4, "fig5": trial_fig5,
}


def _job(args):
    cfg, value, trial = args
    return TRIALS[cfg.figure](cfg, value, trial)


def run_figure(cfg: ExperimentConfig) -> list[dict]:
    """All rows of a figure, ordered by (sweep index, trial) whatever the worker count."""
    if cfg.figure not in TRIALS:
        raise ParameterError(f"{cfg.figure!r} is not a figure protocol")
    jobs = [(cfg, v, t) for v in cfg.sweep for t in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    return [row for rows in results for row in rows]


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, float):
        if not math.isfinite(x):
            raise SolverError(f"non-finite value {x!r} in result row")
        return repr(x)
    return str(x)


def rows_to_csv(rows, path=None, include_wall=True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow(["" if (c == "wall_ms" and not include_wall) else _cell(row.get(c)) for c in CSV_HEADER])
    text = buf.getvalue()
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def mean_by(rows, value="err_fro", estimator=None) -> dict:
    """Mean of ``value`` per (estimator, sweep) over ok trials."""
    acc = defaultdict(list)
    for row in rows:
        if row.get("status") != "ok" or row.get(value) in (None, ""):
            continue
        if estimator is not None and row["estimator"] != estimator:
            continue
        acc[(row["estimator"], float(row["sweep"]))].append(float(row[value]))
    return {k: float(np.mean(v)) for k, v in sorted(acc.items())}


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])


def write_summary(rows, path) -> Path:
    """Per-(estimator, sweep) means of err_fro, rel_fro, rel_op, rel_inf, dist_L."""
    path = Path(path)
    cols = ("err_fro", "rel_fro", "rel_op", "rel_inf", "dist_L")
    means = {c: mean_by(rows, c) for c in cols}
    keys = sorted(means["err_fro"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("estimator", "sweep") + cols)
        for k in keys:
            w.writerow([k[0], repr(k[1])] + [repr(means[c][k]) if k in means[c] else "" for c in cols])
    return path


XLABEL = {"fig1a": "n", "fig1b": "sigma", "fig2": "sigma", "fig3": "rho_s", "fig4": "sigma", "fig5": "n"}


def write_gnuplot(rows, csv_path, figure) -> Path:
    """Summary CSV next to ``csv_path`` plus a gnuplot script plotting mean err_fro per estimator."""
    csv_path = Path(csv_path)
    summary = write_summary(rows, csv_path.with_name(csv_path.stem + "_mean.csv"))
    estimators = sorted({k[0] for k in mean_by(rows)})
    logx = "set logscale x\n" if figure in ("fig1b", "fig2", "fig4") else ""
    plots = ", \\\n  ".join(
        f"'< grep ^{e}, {summary.name}' using 2:3 with linespoints title '{e}'" for e in estimators
    )
    script = (
        "set datafile separator ','\n"
        f"set terminal pngcairo size 800,600\nset output '{csv_path.stem}.png'\n"
        f"set xlabel '{XLABEL.get(figure, 'sweep')}'\nset ylabel 'mean ||L - L*||_F'\n"
        f"{logx}set logscale y\nplot {plots}\n"
    )
    gp = csv_path.with_suffix(".gp")
    gp.write_text(script)
    return gp


def _line(name, value, rule, ok):
    status = "INFO" if ok is None else ("PASS" if ok else "FAIL")
    return f"{status} {name}={value:.6g} ({rule})"


def run_check(cfg: ExperimentConfig) -> list[str]:
    """Diagnostics suite on one instance; one line per threshold."""
    from .diagnostics import (
        check_injectivity, check_near_isometry, check_noise_bound, check_operator_concentration,
        cvx_ncvx_distance, support_decomposition,
    )
    from .data import substream
    from .linalg import TangentSpace

    p = cfg.p if cfg.p is not None else 0.2
    prm = _params(cfg, p=p)
    gt = generate(prm, 0)
    obs = assemble(gt)
    rng = substream(cfg.seed, 0, "probe")
    T = TangentSpace.of_factors(gt.Xstar, gt.Ystar)
    lines = []

    iso = check_near_isometry(T, gt.omega_obs, p, 100, rng)
    lines.append(_line("isometry_min", iso["min_ratio"], ">= 0.4", iso["min_ratio"] >= 0.4))
    lines.append(_line("isometry_max", iso["max_ratio"], "<= 1.6", iso["max_ratio"] <= 1.6))

    inj = check_injectivity(T, gt.omega_obs, gt.omega_star, p, gt.kappa, 100, rng)
    lines.append(_line("inj_lower", inj["c_lower"], f">= 1/(32 kappa) = {inj['ref_lower']:.4g}",
                       inj["c_lower"] >= inj["ref_lower"]))
    lines.append(_line("inj_upper", inj["c_upper"], "<= inj_lower / 4", inj["c_upper"] <= inj["c_lower"] / 4))

    conc = check_operator_concentration(gt.Xstar, gt.Ystar, gt.omega_obs, p)
    lines.append(_line("concentration_const", conc, "<= 10", conc <= 10))

    if prm.sigma > 0:
        nb = check_noise_bound(gt.E, gt.omega_obs, prm.sigma, p)
        lines.append(_line("noise_op_ratio", nb["op_ratio"], "<= 2.5", nb["op_ratio"] <= 2.5))
        lines.append(_line("noise_fro_ratio", nb["fro_ratio"], "in [0.9, 1.1]", 0.9 <= nb["fro_ratio"] <= 1.1))

    lam, tau = default_lambda_tau(prm.n1, prm.n2, p, prm.sigma)
    if lam > 0:
        PE = np.where(gt.omega_obs.dense, gt.E, 0.0)
        lines.append(_line("noise_op_over_lambda", norm(PE, "spectral") / lam, "reference 1/16", None))
        sol = solve_convex(obs, lam, tau, replace(cfg.convex, kkt_tol=1e-8, rel_obj_tol=0.0))
        rep = sol.kkt_report
        lines.append(_line("kkt_pt_r1", rep.pt_r1_fro, "<= 1e-6", rep.pt_r1_fro <= 1e-6))
        lines.append(_line("kkt_ptperp_r1", rep.ptperp_r1_op, "<= 1 + 1e-6", rep.ptperp_r1_op <= 1 + 1e-6))
        lines.append(_line("kkt_r2_on", rep.r2_on_support_max, "<= 1e-6", rep.r2_on_support_max <= 1e-6))
        lines.append(_line("kkt_r2_off", rep.r2_off_support_max, "<= 1 + 1e-6", rep.r2_off_support_max <= 1 + 1e-6))

        opts = replace(cfg.ncvx, eta=cfg.ncvx.eta or cfg.eta_scale / gt.sigma_max)
        res = run(obs, lam, tau, opts, gt, p)
        st = res.best_state
        L = st.X @ st.Y.T
        dist = cvx_ncvx_distance(sol, res)
        lines.append(_line("cvx_ncvx_dL", dist["dL_fro"], "reference", None))
        dec = support_decomposition(L, st.S, obs, gt, tau, sol.L - L, sol.S - st.S)
        for name, ok in dec["inclusions"].items():
            lines.append(_line(name, float(ok), "set relation", bool(ok)))
    return lines
