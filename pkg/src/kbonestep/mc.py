"""Monte Carlo replication engine and the statistics that grade it.

Replication r owns the seed base_seed + r and nothing else, so runs are
embarrassingly parallel and the aggregation is a seed-ordered reduction that
parallelism cannot perturb. Aggregates are plain moments of the stored rows
(recomputable to machine precision), plus a fully specified Anderson-Darling
normality check and log-log rate fits for the convergence-rate claims.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, KbError, StatisticalFailure
from .kbfilter import run_filter
from .model import ModelSpec, TimeGrid, CaseTag
from .onestep import adaptive_filter, m_star, one_step_mle, one_step_process
from .prelim import (DELTA_RANGES, estimate_example1, estimate_example2,
                     estimate_generic, learning_interval)
from .simulate import simulate_path

__all__ = ["McConfig", "McReport", "run_replications", "normality_check",
           "rate_fit", "prelim_mse_curve", "delta_sweep", "report_to_files"]

_ALL_ESTIMATORS = frozenset({"prelim", "onestep", "process", "mstar", "adaptive"})
_PRELIM_METHODS = ("auto", "generic", "example1", "example2")


@dataclass(frozen=True)
class McConfig:
    model: ModelSpec
    theta0: float
    delta: float
    n_rep: int
    grid: TimeGrid
    base_seed: int = 0
    checkpoints: tuple[float, ...] = ()
    estimators: frozenset[str] = frozenset({"prelim", "onestep"})
    prelim_method: str = "auto"
    delta_use: str = "theorem2"

    def __post_init__(self):
        if self.n_rep < 2:
            raise InputError(f"n_rep must be >= 2, got {self.n_rep}")
        if not self.model.contains(self.theta0, closed=False):
            raise InputError(f"theta0={self.theta0} outside the parameter interval")
        bad = set(self.estimators) - _ALL_ESTIMATORS
        if bad:
            raise InputError(f"unknown estimators {sorted(bad)}")
        if self.prelim_method not in _PRELIM_METHODS:
            raise InputError(f"prelim_method must be one of {_PRELIM_METHODS}")
        if self.delta_use not in DELTA_RANGES:
            raise InputError(f"unknown delta_use {self.delta_use!r}")
        T = self.model.T
        if any(not (0.0 < t <= T + 1e-12) for t in self.checkpoints):
            raise InputError("checkpoints must lie in (0, T]")
        if ({"process", "mstar", "adaptive"} & self.estimators) and not self.checkpoints:
            raise InputError("checkpoint estimators requested without checkpoints")

    @property
    def tau_eps(self) -> float:
        eps = self.model.eps
        if eps == 0.0:
            # noise-free degeneracy runs: any fixed learning interval works,
            # use the cap value
            lo, hi = DELTA_RANGES[self.delta_use]
            if not (lo < self.delta < hi):
                raise InputError(
                    f"delta={self.delta} outside ({lo}, {hi:.6g}) for "
                    f"{self.delta_use}")
            return self.model.T / 2.0
        return learning_interval(eps, self.delta, self.model.T,
                                 use=self.delta_use)


def _prelim(cfg: McConfig, traj):
    tau = cfg.tau_eps
    method = cfg.prelim_method
    if method == "auto":
        method = ("example1" if cfg.model.case_tag is CaseTag.THETA_IN_F
                  else "example2")
        try:
            fn = {"example1": estimate_example1, "example2": estimate_example2}[method]
            return fn(cfg.model, traj, tau)
        except InputError:
            return estimate_generic(cfg.model, traj, tau)
    fn = {"generic": estimate_generic, "example1": estimate_example1,
          "example2": estimate_example2}[method]
    return fn(cfg.model, traj, tau)


def _run_one(cfg: McConfig, seed: int) -> dict:
    """One full replication; returns a flat row dict (or an error row)."""
    row: dict = {"seed": seed}
    try:
        traj = simulate_path(cfg.model, cfg.theta0, cfg.grid, seed)
        prelim = _prelim(cfg, traj)
        row["theta_bar"] = prelim.theta_bar
        row["prelim_clamped"] = int(prelim.clamped)

        proc = None
        if {"onestep", "process", "mstar", "adaptive"} & cfg.estimators:
            proc = one_step_process(cfg.model, traj, prelim)
        if "onestep" in cfg.estimators:
            row["theta_star"] = one_step_mle(cfg.model, traj, prelim).theta_star
        if "process" in cfg.estimators:
            for i, tc in enumerate(cfg.checkpoints):
                row[f"theta_proc_{i}"] = proc.theta_at(tc)
        if {"mstar", "adaptive"} & cfg.estimators:
            ref = run_filter(cfg.model, cfg.theta0, traj)
            if "mstar" in cfg.estimators:
                for i, tc in enumerate(cfg.checkpoints):
                    ms = m_star(cfg.model, traj, proc, tc)
                    row[f"mstar_err_{i}"] = ms.m_star - float(ref.m_at(ms.t))
            if "adaptive" in cfg.estimators:
                af = adaptive_filter(cfg.model, traj, proc)
                for i, tc in enumerate(cfg.checkpoints):
                    row[f"adaptive_err_{i}"] = af.m_at(tc) - float(ref.m_at(tc))
        row["error"] = ""
    except KbError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


@dataclass(frozen=True)
class McReport:
    config_summary: dict
    rows: list[dict] = field(repr=False)
    aggregates: dict = field(repr=False)


def _columns(cfg: McConfig) -> list[str]:
    cols = ["seed", "theta_bar", "prelim_clamped"]
    if "onestep" in cfg.estimators:
        cols.append("theta_star")
    for tag, name in (("process", "theta_proc"), ("mstar", "mstar_err"),
                      ("adaptive", "adaptive_err")):
        if tag in cfg.estimators:
            cols += [f"{name}_{i}" for i in range(len(cfg.checkpoints))]
    cols.append("error")
    return cols


def _aggregate(cfg: McConfig, rows: list[dict]) -> dict:
    ok = [r for r in rows if r["error"] == ""]
    eps = cfg.model.eps
    agg: dict = {
        "schema": 1,
        "n_rep": cfg.n_rep,
        "n_failed": cfg.n_rep - len(ok),
        "theta0": cfg.theta0,
        "eps": eps,
        "delta": cfg.delta,
        "tau_eps": cfg.tau_eps,
        "clamp_fraction": (sum(r["prelim_clamped"] for r in ok) / len(ok)
                           if ok else math.nan),
    }

    def stats(key: str) -> dict | None:
        vals = np.array([r[key] for r in ok])
        if not len(vals):
            return None
        out = {"mean": float(np.mean(vals)),
               "variance": float(np.var(vals, ddof=1)) if len(vals) > 1 else 0.0}
        return out

    for key, label in [("theta_bar", "prelim"), ("theta_star", "onestep")]:
        if ok and key in ok[0]:
            s = stats(key)
            s["bias"] = s["mean"] - cfg.theta0
            s["mse"] = s["variance"] + s["bias"] ** 2
            if eps > 0:
                s["variance_scaled"] = s["variance"] / eps ** 2
                s["mse_scaled"] = s["mse"] / eps ** 2
            agg[label] = s
    if "onestep" in agg and eps > 0 and len(ok) >= 100:
        samples = np.array([(r["theta_star"] - cfg.theta0) / eps for r in ok])
        if np.var(samples) > 0:
            from .fisher import fisher_full
            info = fisher_full(cfg.model, cfg.theta0, cfg.grid)
            stat, p = normality_check(samples, 1.0 / info)
            agg["onestep"]["ad_statistic"] = stat
            agg["onestep"]["ad_p_value"] = p
    for tag, name in (("process", "theta_proc"), ("mstar", "mstar_err"),
                      ("adaptive", "adaptive_err")):
        if tag in cfg.estimators:
            per = {}
            for i, tc in enumerate(cfg.checkpoints):
                s = stats(f"{name}_{i}")
                if s is None:
                    continue
                if tag == "process":
                    s["bias"] = s["mean"] - cfg.theta0
                    s["mse"] = s["variance"] + s["bias"] ** 2
                else:
                    s["mse"] = float(np.mean([r[f"{name}_{i}"] ** 2 for r in ok]))
                if eps > 0:
                    s["variance_scaled"] = s["variance"] / eps ** 2
                    s["mse_scaled"] = s["mse"] / eps ** 2
                per[repr(float(tc))] = s
            agg[tag] = per
    return agg


def run_replications(cfg: McConfig) -> McReport:
    """All replications, seed-ordered; >5% failures aborts the run."""
    if cfg.checkpoints and min(cfg.checkpoints) <= cfg.tau_eps:
        raise InputError(
            f"checkpoints must lie past the learning interval tau={cfg.tau_eps}")
    seeds = [cfg.base_seed + r for r in range(cfg.n_rep)]
    workers = int(os.environ.get("KB_ONESTEP_THREADS", "1"))
    if workers > 1 and cfg.n_rep >= 4 * workers:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one, [cfg] * cfg.n_rep, seeds,
                                 chunksize=max(1, cfg.n_rep // (4 * workers))))
    else:
        rows = [_run_one(cfg, s) for s in seeds]
    rows.sort(key=lambda r: r["seed"])
    n_failed = sum(1 for r in rows if r["error"])
    if n_failed > 0.05 * cfg.n_rep:
        raise StatisticalFailure(
            f"{n_failed}/{cfg.n_rep} replications failed (>5%); first error: "
            + next(r["error"] for r in rows if r["error"]))
    summary = {"theta0": cfg.theta0, "delta": cfg.delta, "n_rep": cfg.n_rep,
               "base_seed": cfg.base_seed, "eps": cfg.model.eps,
               "checkpoints": list(cfg.checkpoints),
               "estimators": sorted(cfg.estimators)}
    return McReport(config_summary=summary, rows=rows,
                    aggregates=_aggregate(cfg, rows))


def report_to_files(report: McReport, cfg: McConfig, rows_csv, agg_json) -> None:
    cols = _columns(cfg)
    with open(rows_csv, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in report.rows:
            cells = []
            for c in cols:
                v = row.get(c, "")
                if isinstance(v, float):
                    v = repr(v)
                cells.append(str(v))
            fh.write(",".join(cells) + "\n")
    with open(agg_json, "w") as fh:
        json.dump(report.aggregates, fh, sort_keys=True, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

def _adinf(z: float) -> float:
    """Asymptotic CDF of the Anderson-Darling statistic, fully specified case
    (Marsaglia & Marsaglia 2004 rational approximations)."""
    if z <= 0.0:
        return 0.0
    if z < 2.0:
        return (math.exp(-1.2337141 / z) / math.sqrt(z)
                * (2.00012 + (0.247105 - (0.0649821 - (0.0347962
                   - (0.0116720 - 0.00168691 * z) * z) * z) * z) * z))
    return math.exp(-math.exp(1.0776 - (2.30695 - (0.43424 - (0.082433
                    - (0.008056 - 0.0003146 * z) * z) * z) * z) * z))


def normality_check(samples, target_var: float) -> tuple[float, float]:
    """Anderson-Darling test of samples/sqrt(target_var) against N(0,1).

    The reference distribution is fully specified (no parameters estimated
    from the data), so a variance mismatch is detected, not absorbed.
    """
    z = np.asarray(samples, dtype=float)
    n = len(z)
    if n < 100:
        raise InputError(f"normality check needs >= 100 samples, got {n}")
    if target_var <= 0:
        raise InputError(f"target_var must be positive, got {target_var}")
    if np.var(z) == 0.0:
        raise InputError("degenerate (constant) sample")
    u = np.sort(z / math.sqrt(target_var))
    cdf = 0.5 * (1.0 + np.array([math.erf(v / math.sqrt(2.0)) for v in u]))
    cdf = np.clip(cdf, 1e-300, 1.0 - 1e-16)
    i = np.arange(1, n + 1)
    a2 = -n - np.mean((2 * i - 1) * (np.log(cdf) + np.log1p(-cdf[::-1])))
    p = 1.0 - _adinf(float(a2))
    return float(a2), float(p)


def rate_fit(x_scale, mse) -> tuple[float, float]:
    """Least-squares slope of log(mse) on log(x_scale), with its standard error."""
    x = np.asarray(x_scale, dtype=float)
    y = np.asarray(mse, dtype=float)
    if len(x) != len(y) or len(x) < 3:
        raise InputError("rate fit needs >= 3 matching scale points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise InputError("rate fit needs strictly positive inputs")
    lx, ly = np.log(x), np.log(y)
    lx0 = lx - lx.mean()
    sxx = float(np.sum(lx0 ** 2))
    if sxx == 0.0:
        raise InputError("all scale points identical")
    slope = float(np.sum(lx0 * ly) / sxx)
    resid = ly - ly.mean() - slope * lx0
    dof = len(x) - 2
    stderr = math.sqrt(float(np.sum(resid ** 2)) / dof / sxx) if dof else 0.0
    return slope, stderr


# ---------------------------------------------------------------------------
# experiment helpers (rate curves and the learning-exponent sweep)
# ---------------------------------------------------------------------------

def prelim_mse_curve(model: ModelSpec, theta0: float, eps_values, delta: float,
                     n_rep: int, grid: TimeGrid | None = None,
                     base_seed: int = 0, prelim_method: str = "auto",
                     delta_use: str = "theorem1") -> list[tuple[float, float, float]]:
    """(eps, tau_eps, MSE of the preliminary estimator) per noise level."""
    out = []
    for eps in eps_values:
        m = model.with_eps(float(eps))
        cfg = McConfig(model=m, theta0=theta0, delta=delta, n_rep=n_rep,
                       grid=grid or m.default_grid(), base_seed=base_seed,
                       estimators=frozenset({"prelim"}),
                       prelim_method=prelim_method, delta_use=delta_use)
        rep = run_replications(cfg)
        out.append((float(eps), cfg.tau_eps, rep.aggregates["prelim"]["mse"]))
    return out


def delta_sweep(model: ModelSpec, theta0: float, deltas, n_rep: int,
                grid: TimeGrid | None = None, base_seed: int = 0,
                prelim_method: str = "auto",
                delta_use: str = "theorem1") -> list[tuple[float, float]]:
    """(delta, prelim MSE) over a grid of learning-interval exponents."""
    out = []
    for d in deltas:
        cfg = McConfig(model=model, theta0=theta0, delta=float(d), n_rep=n_rep,
                       grid=grid or model.default_grid(), base_seed=base_seed,
                       estimators=frozenset({"prelim"}),
                       prelim_method=prelim_method, delta_use=delta_use)
        rep = run_replications(cfg)
        out.append((float(d), rep.aggregates["prelim"]["mse"]))
    return out
