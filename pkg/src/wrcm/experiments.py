"""Experiment drivers behind the command-line subcommands.

Every driver writes CSV files whose first line is ``# config_hash=<hash>``
and returns an in-memory result for programmatic use. CSV content depends
only on the resolved configuration, so re-running a configuration
reproduces the files byte for byte; wall-clock timings go to
``timings.csv`` and ``manifest.txt`` instead.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .connection import degree_k_truncation_radius
from .graph import DegreeKProcess, count_degrees_capped, planted_degree_experiment
from .sampler import CapacityError, DEFAULT_POINT_CAP, SeedSpec, expected_points, sample_ppp
from .scaling import (
    NoSolutionError,
    asymptotic_sigma_polynomial,
    check_assumptions,
    recommended_parameters,
    solve_scg,
    stretched_ratio,
    weight_for_mean_degree,
)
from .stats import dispersion_band, loglog_slope, poisson_gof, subbox_counts_test, summarize_counts
from .weights import Family, h_of_w, left_quantile_ws, mu_plus

__all__ = [
    "run_solve",
    "run_simulate",
    "run_fig1",
    "run_check",
    "run_planted",
    "SimulationResult",
    "Fig1Result",
]

log = logging.getLogger(__name__)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, columns, rows, config_hash: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
            writer.writerow([_fmt(v) for v in row])


class _Run:
    """Output directory, config hash and timing bookkeeping for one driver call."""

    def __init__(self, cfg: RunConfig, out: Path | str | None):
        self.cfg = cfg
        self.hash = cfg.hash()
        self.out = Path(out) if out is not None else None
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)
        self.timings: list[tuple[str, float]] = []
        self.files: list[str] = []
        self._t0 = time.perf_counter()

    def csv(self, name, columns, rows):
        if self.out is None:
            return
        write_csv(self.out / name, columns, rows, self.hash)
        self.files.append(name)

    def lap(self, label):
        now = time.perf_counter()
        self.timings.append((label, now - self._t0))
        self._t0 = now

    def manifest(self, extra_timings=()):
        if self.out is None:
            return
        import numba
        import scipy

        from . import __version__

        rows = list(self.timings) + list(extra_timings)
        if rows:
            with open(self.out / "timings.csv", "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["stage", "seconds"])
                writer.writerows([(k, f"{v:.6f}") for k, v in rows])
        lines = [
            f"config_hash: {self.hash}",
            f"experiment: {self.cfg.experiment.kind}",
            f"wrcm: {__version__}",
            f"python: {platform.python_version()}",
            f"numpy: {np.__version__}",
            f"scipy: {scipy.__version__}",
            f"numba: {numba.__version__}",
            f"threads: {self.cfg.run.threads}",
            f"files: {', '.join(self.files)}",
            f"total_seconds: {sum(v for _, v in self.timings):.3f}",
            "config: " + json.dumps(self.cfg.to_dict(), sort_keys=True),
        ]
        (self.out / "manifest.txt").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# solve


def _asymptotics(cfg: RunConfig, sol):
    law = cfg.law
    if law.family is Family.POLYNOMIAL_LEFT:
        const = asymptotic_sigma_polynomial(law, sol.k, cfg.model.a)
        return const, sol.sigma_s**law.rho / sol.s
    if law.family is Family.STRETCHED_EXPONENTIAL_LEFT:
        return math.nan, stretched_ratio(sol, law)
    return math.nan, math.nan


SOLVE_COLUMNS = ["s", "k", "sigma_s", "v_s", "residual", "n_evals", "asymptotic", "ratio", "error"]


def run_solve(cfg: RunConfig, out=None):
    """One row per ``(s, k)``: the largest root and its asymptotic comparison.

    For polynomial left tails ``ratio = sigma^rho / s`` and ``asymptotic`` is
    its limit; for stretched left tails ``ratio = sigma / log(s)^(1+1/rho)``.
    Solver failures are recorded in the ``error`` column.
    """
    run = _Run(cfg, out)
    rows = []
    for s in cfg.run.s:
        for k in cfg.run.k:
            try:
                sol = solve_scg(cfg.law, cfg.spec, s, k)
            except (NoSolutionError, ArithmeticError, ValueError) as exc:
                rows.append([s, k, math.nan, math.nan, math.nan, 0, math.nan, math.nan, type(exc).__name__ + ": " + str(exc)])
                continue
            const, ratio = _asymptotics(cfg, sol)
            rows.append([s, k, sol.sigma_s, sol.v_s, sol.residual, sol.n_evals, const, ratio, ""])
    run.lap("solve")
    run.csv("solve.csv", SOLVE_COLUMNS, rows)
    run.manifest()
    return rows


# ---------------------------------------------------------------------------
# simulate


@dataclass
class _Level:
    """Solved scale and truncation for one ``(s, k)``."""

    s: float
    k: int
    sigma: float
    v_s: float
    R: float


def _levels(cfg: RunConfig, s: float, ks) -> list[_Level]:
    out = []
    for k in ks:
        sol = solve_scg(cfg.law, cfg.spec, s, k)
        R = degree_k_truncation_radius(cfg.spec, cfg.law, s, sol.v_s, k, cfg.run.eps, cfg.model.d)
        out.append(_Level(s, k, sol.sigma_s, sol.v_s, R))
    return out


def _pad_for(cfg: RunConfig, levels) -> float:
    R = max(lv.R for lv in levels)
    if cfg.run.pad is None:
        return R
    if cfg.run.pad < R:
        raise ConfigError(f"constraint pad >= truncation radius violated: pad = {cfg.run.pad}, R = {R:.6g}")
    return cfg.run.pad


def _replicate(cfg: RunConfig, levels, pad, s_index, r):
    t0 = time.perf_counter()
    seed = SeedSpec(cfg.run.master_seed, s_index * cfg.run.replications + r)
    cloud = sample_ppp(cfg.law, levels[0].s, cfg.model.d, pad, seed)
    queries = np.flatnonzero(cloud.in_cube())
    procs = []
    for lv in levels:
        deg = count_degrees_capped(cloud, cfg.spec, lv.v_s, lv.R, cap=lv.k, queries=queries)
        sel = queries[deg == lv.k]
        procs.append(DegreeKProcess(lv.k, cloud.positions[sel], cloud.weights[sel]))
    return len(cloud), len(queries), procs, time.perf_counter() - t0


def _map_replications(cfg: RunConfig, fn, n):
    if cfg.run.threads == 1:
        return [fn(r) for r in range(n)]
    with ThreadPoolExecutor(max_workers=cfg.run.threads) as pool:
        return list(pool.map(fn, range(n)))


@dataclass
class SimulationResult:
    levels: list
    counts: dict = field(default_factory=dict)       # (s, k) -> array of D
    processes: dict = field(default_factory=dict)    # (s, k) -> list of DegreeKProcess
    cube_points: dict = field(default_factory=dict)  # s -> array of points in the cube
    reports: list = field(default_factory=list)


REPLICATION_COLUMNS = ["s", "r", "k", "D", "n_cube", "n_window", "R", "sigma_s"]
SUMMARY_COLUMNS = ["s", "k", "test", "statistic", "dof", "p_value", "passed", "detail"]


def _summary_rows(s, k, counts, procs, m, d):
    from scipy import stats as sps

    summary = summarize_counts(counts)
    z = summary.mean_z()
    rows = [[s, k, "mean", summary.mean, len(counts) - 1, float(2 * sps.norm.sf(abs(z))), abs(z) <= 3.0, f"stderr={summary.stderr!r}"]]
    lo, hi = dispersion_band(len(counts))
    rows.append([s, k, "dispersion", summary.dispersion, len(counts) - 1, math.nan,
                 bool(lo <= summary.dispersion <= hi), f"band=[{lo!r},{hi!r}]"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        gof = poisson_gof(counts, 1.0)
        sub = subbox_counts_test(procs, m, d)
    rows.append([s, k, "poisson_gof", gof.statistic, gof.dof, gof.p_value, gof.passed, f"bins={gof.pooled_bins}"])
    rows.append([s, k, "subbox", sub.statistic, sub.dof, sub.p_value, sub.passed,
                 f"m={m};marginal_p={sub.details['marginal_p']!r};covariance_p={sub.details['covariance_p']!r}"])
    return rows


def run_simulate(cfg: RunConfig, out=None) -> SimulationResult:
    """Replications of the degree-k count in the unit cube for each ``s``.

    All ``k`` share one sampled cloud per replication; each uses its own
    ``v_{s,k}`` and truncation radius.
    """
    run = _Run(cfg, out)
    result = SimulationResult(levels=[])
    rep_rows, sum_rows, rep_times = [], [], []
    n = cfg.run.replications
    try:
        for si, s in enumerate(cfg.run.s):
            levels = _levels(cfg, s, cfg.run.k)
            pad = _pad_for(cfg, levels)
            mean_points = expected_points(s, cfg.model.d, pad)
            if mean_points > DEFAULT_POINT_CAP:
                raise CapacityError(f"s={s:g}: expected {mean_points:.3g} points exceeds the cap")
            result.levels.extend(levels)
            log.info("s=%g: pad %.4g, %g expected points per replication", s, pad, mean_points)
            run.lap(f"setup s={s:g}")
            outs = _map_replications(cfg, lambda r: _replicate(cfg, levels, pad, si, r), n)
            run.lap(f"replications s={s:g}")
            result.cube_points[s] = np.array([o[1] for o in outs])
            for j, lv in enumerate(levels):
                procs = [o[2][j] for o in outs]
                counts = np.array([p.D for p in procs])
                result.counts[(s, lv.k)] = counts
                result.processes[(s, lv.k)] = procs
                for r, o in enumerate(outs):
                    rep_rows.append([s, r, lv.k, o[2][j].D, o[1], o[0], lv.R, lv.sigma])
                if n >= 2:
                    sum_rows.extend(_summary_rows(s, lv.k, counts, procs, cfg.run.subbox_m, cfg.model.d))
            rep_times.extend((f"s={s:g} r={r}", o[3]) for r, o in enumerate(outs))
    finally:
        # flush whatever finished, including after a capacity error
        run.csv("replications.csv", REPLICATION_COLUMNS, rep_rows)
        run.csv("summary.csv", SUMMARY_COLUMNS, sum_rows)
        run.manifest(rep_times)
    result.reports = sum_rows
    return result


# ---------------------------------------------------------------------------
# isolated-point weights (fig1)


@dataclass
class Fig1Result:
    medians: list          # (s, median isolated weight, n isolated)
    fit: object            # SlopeFit or None
    dropped: list
    scatter: np.ndarray    # rows (x..., weight, isolated)


DEFAULT_SCATTER_S = 1000.0


def run_fig1(cfg: RunConfig, out=None) -> Fig1Result:
    """Median weight of isolated unit-cube points against intensity.

    The median is over all isolated points pooled across replications.
    Intensities without any isolated point are dropped from the fit. The
    scatter dump uses ``experiment.scatter_s``, else s = 1000 when it is on
    the grid, else the first intensity.
    """
    if cfg.law.family is not Family.POLYNOMIAL_LEFT:
        raise ConfigError("fig1 needs a polynomial left tail")
    run = _Run(cfg, out)
    n = cfg.run.replications
    scatter_s = cfg.experiment.scatter_s
    if scatter_s is None:
        scatter_s = DEFAULT_SCATTER_S if DEFAULT_SCATTER_S in cfg.run.s else cfg.run.s[0]
    if scatter_s not in cfg.run.s:
        raise ConfigError(f"experiment.scatter_s = {scatter_s} is not in the s grid")
    if not 0 <= cfg.experiment.scatter_replication < n:
        raise ConfigError("experiment.scatter_replication out of range")
    medians, dropped, right_rows = [], [], []
    scatter = np.empty((0, cfg.model.d + 2))
    for si, s in enumerate(cfg.run.s):
        levels = _levels(cfg, s, (0,))
        pad = _pad_for(cfg, levels)
        outs = _map_replications(cfg, lambda r: _replicate(cfg, levels, pad, si, r), n)
        iso = np.concatenate([o[2][0].weights for o in outs])
        w_s = left_quantile_ws(cfg.law, s)
        if len(iso) == 0:
            warnings.warn(f"no isolated points at s={s:g}; dropped from the fit", RuntimeWarning, stacklevel=2)
            dropped.append(s)
            right_rows.append([s, math.nan, 0, w_s, levels[0].sigma])
        else:
            med = float(np.median(iso))
            medians.append((s, med, len(iso)))
            right_rows.append([s, med, len(iso), w_s, levels[0].sigma])
        if s == scatter_s:
            seed = SeedSpec(cfg.run.master_seed, si * n + cfg.experiment.scatter_replication)
            cloud = sample_ppp(cfg.law, s, cfg.model.d, pad, seed)
            inside = np.flatnonzero(cloud.in_cube())
            lv = levels[0]
            deg = count_degrees_capped(cloud, cfg.spec, lv.v_s, lv.R, cap=0, queries=inside)
            scatter = np.column_stack([cloud.positions[inside], cloud.weights[inside], deg == 0])
        run.lap(f"s={s:g}")
    fit = loglog_slope([(s, m) for s, m, _ in medians]) if len(medians) >= 4 else None
    if fit is None:
        warnings.warn("fewer than 4 intensities with isolated points; no slope fitted", RuntimeWarning, stacklevel=2)
    coord_cols = [f"x{i + 1}" for i in range(cfg.model.d)]
    run.csv("fig1_left.csv", coord_cols + ["weight", "isolated"],
            [list(row[:-1]) + [int(row[-1])] for row in scatter])
    run.csv("fig1_right.csv", ["s", "median_isolated_weight", "n_isolated", "w_s", "sigma_s"], right_rows)
    fit_row = [[fit.slope, fit.intercept, fit.stderr, len(fit.points)]] if fit else [[math.nan] * 3 + [0]]
    run.csv("fig1_fit.csv", ["slope", "intercept", "stderr", "n_points"], fit_row)
    run.manifest()
    return Fig1Result(medians, fit, dropped, scatter)


# ---------------------------------------------------------------------------
# assumptions


def run_check(cfg: RunConfig, out=None):
    """Assumption diagnostics along the s grid, one report per ``k``."""
    run = _Run(cfg, out)
    law, spec = cfg.law, cfg.spec
    eta, K = cfg.experiment.eta, cfg.experiment.K
    if eta is None or K is None:
        rec_eta, rec_K = recommended_parameters(law, spec)
        eta = rec_eta if eta is None else eta
        K = rec_K if K is None else K
    reports, value_rows, verdict_rows = [], [], []
    for k in cfg.run.k:
        rep = check_assumptions(law, spec, k, eta, K, cfg.run.s)
        reports.append(rep)
        for row in rep.rows():
            value_rows.append([k, eta, K, row["s"], row["sigma_s"], row["w_s"], row["A1"], row["A2"], row["A3"]])
        for name in ("A1", "A2", "A3"):
            verdict_rows.append([k, eta, K, name, rep.slopes[name], rep.verdicts[name]])
    run.lap("check")
    run.csv("check.csv", ["k", "eta", "K", "s", "sigma_s", "w_s", "A1", "A2", "A3"], value_rows)
    run.csv("check_verdicts.csv", ["k", "eta", "K", "assumption", "loglog_slope", "passed"], verdict_rows)
    run.manifest()
    return reports


# ---------------------------------------------------------------------------
# planted point

PLANTED_COLUMNS = [
    "s", "k", "target", "w", "R", "reps",
    "mean_degree", "se_degree", "expected_degree", "z_degree",
    "mean_out", "se_out", "expected_out", "z_out",
    "dispersion_degree", "dispersion_out",
]


def run_planted(cfg: RunConfig, out=None):
    """Degrees of a planted point whose weight gives mean degree ``target``.

    The expected degree is ``sigma h(w)`` and the expected out-degree
    (neighbours at least as heavy) is ``sigma w mu_plus(w)``.
    """
    run = _Run(cfg, out)
    law, spec = cfg.law, cfg.spec
    rows = []
    idx = 0
    for s in cfg.run.s:
        for k in cfg.run.k:
            sol = solve_scg(law, spec, s, k)
            for target in cfg.experiment.planted_mean_degrees:
                w = weight_for_mean_degree(law, spec, sol.sigma_s, target)
                res = planted_degree_experiment(
                    law, spec, s, sol.v_s, w, cfg.run.replications, cfg.model.d,
                    SeedSpec(cfg.run.master_seed, idx), eps=cfg.run.eps,
                )
                idx += 1
                exp_deg = sol.sigma_s * float(h_of_w(law, spec.a, w))
                exp_out = sol.sigma_s * w * float(mu_plus(law, spec.a, w))
                row = [s, k, target, w, res.R, len(res.degrees)]
                for obs, expected in ((res.degrees, exp_deg), (res.out_degrees, exp_out)):
                    mean = float(obs.mean())
                    se = float(obs.std(ddof=1) / math.sqrt(len(obs))) if len(obs) > 1 else math.nan
                    row += [mean, se, expected, (mean - expected) / se if se > 0 else math.nan]
                for obs in (res.degrees, res.out_degrees):
                    mean = float(obs.mean())
                    row.append(float(obs.var(ddof=1)) / mean if mean > 0 and len(obs) > 1 else math.nan)
                rows.append(row)
    run.lap("planted")
    run.csv("planted.csv", PLANTED_COLUMNS, rows)
    run.manifest()
    return rows


DRIVERS = {
    "solve": run_solve,
    "simulate": run_simulate,
    "fig1": run_fig1,
    "check": run_check,
    "planted": run_planted,
}
