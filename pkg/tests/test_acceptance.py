"""Acceptance suite: eleven numbered end-to-end criteria.

Each test prints exactly one ``criterion N PASS/FAIL`` line with the measured
quantities, then asserts. Monte Carlo sizes and tolerances are fixed here;
every random input is seeded, so the suite is deterministic.
"""

import math
import shutil
import subprocess
import sys

import numpy as np
import pytest

from kbonestep import (Branch, McConfig, PrelimResult, TimeGrid,
                       bundled_model_path, fisher_full, limit_system,
                       mse_lower_bound, one_step_mle, one_step_process,
                       run_filter, run_replications, simulate_path,
                       solve_riccati)
from kbonestep.mc import delta_sweep, prelim_mse_curve, rate_fit
from kbonestep.onestep import m_star, robust_integral_G
from kbonestep.prelim import estimate_generic


def _report(n: int, ok: bool, detail: str) -> None:
    print(f"criterion {n} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {n}: {detail}"


def test_criterion_01_riccati_analytic(ex1, grid10k):
    g, _ = solve_riccati(ex1, 1.0, grid10k)
    err = float(np.max(np.abs(g - np.tanh(grid10k.nodes))))
    _report(1, err <= 1e-8,
            f"Riccati vs tanh at h=1e-4, max abs error {err:.3e} (tol 1e-8)")


def test_criterion_02_noise_free_degeneracy(ex1, grid10k):
    m0 = ex1.with_eps(0.0)
    tol = 5.0 * grid10k.h * m0.T
    traj = simulate_path(m0, 1.0, grid10k, seed=0)
    lim = limit_system(m0, 1.0, grid10k)
    filt_err = float(np.max(np.abs(run_filter(m0, 1.0, traj).m - lim.y)))
    pre = estimate_generic(m0, traj, 0.2)
    res = one_step_mle(m0, traj, pre)
    proc = one_step_process(m0, traj, pre)
    ms = m_star(m0, traj, proc, 0.75)
    errs = {
        "filter": filt_err,
        "prelim": abs(pre.theta_bar - 1.0),
        "onestep": abs(res.theta_star - 1.0),
        "process": float(np.max(np.abs(proc.theta_star_t - 1.0))),
        "mstar": abs(ms.m_star - float(lim.y_at(0.75))),
    }
    worst = max(errs.values())
    _report(2, worst <= tol,
            "eps=0 recovery errors " +
            ", ".join(f"{k}={v:.2e}" for k, v in errs.items()) +
            f" (tol {tol:.1e})")


def test_criterion_03_filter_risk_identity(ex1, grid10k):
    n_rep = 10_000
    idx = [grid10k.index_at_or_after(t) for t in (0.25, 0.5, 1.0)]
    sq = np.zeros((n_rep, len(idx)))
    for s in range(n_rep):
        traj = simulate_path(ex1, 1.0, grid10k, seed=s)
        m = run_filter(ex1, 1.0, traj).m
        sq[s] = [(m[k] - traj.Y[k]) ** 2 for k in idx]
    g, _ = solve_riccati(ex1, 1.0, grid10k)
    details, ok = [], True
    for j, k in enumerate(idx):
        target = ex1.eps ** 2 * g[k]
        mean = float(np.mean(sq[:, j]))
        se = float(np.std(sq[:, j], ddof=1)) / math.sqrt(n_rep)
        z = abs(mean - target) / se
        ok &= z <= 3.0
        details.append(f"t={grid10k.nodes[k]:.2f} z={z:.2f}")
    _report(3, ok, "E(m-Y)^2 vs eps^2 gamma*, " + ", ".join(details) +
            " (each |z| <= 3)")


def test_criterion_04_prelim_rate_obs_drift(ex1):
    curve = prelim_mse_curve(ex1, 1.0, [0.1, 0.05, 0.02, 0.01], 0.5, 2000,
                             delta_use="theorem1")
    x = [eps ** 2 / tau for eps, tau, _ in curve]
    slope, se = rate_fit(x, [v for _, _, v in curve])
    _report(4, abs(slope - 1.0) <= 0.2,
            f"MSE(prelim) vs eps^2/tau slope {slope:.3f} +/- {se:.3f} "
            "(target 1 +/- 0.2)")


def test_criterion_05_prelim_rate_state_drift(ex2):
    delta = 0.4
    curve = prelim_mse_curve(ex2, 1.0, [0.05, 0.02, 0.01, 0.005], delta, 2000,
                             delta_use="prop1")
    x = [eps ** (2.0 - 3.0 * delta) for eps, _, _ in curve]
    slope, se = rate_fit(x, [v for _, _, v in curve])
    _report(5, abs(slope - 1.0) <= 0.2,
            f"MSE(prelim) vs eps^(2-3d) slope {slope:.3f} +/- {se:.3f} "
            "(target 1 +/- 0.2)")


def test_criterion_06_onestep_normal_and_efficient(ex1, grid10k):
    cfg = McConfig(model=ex1, theta0=1.0, delta=0.8, n_rep=2000, grid=grid10k,
                   estimators=frozenset({"prelim", "onestep"}),
                   delta_use="theorem2")
    ag = run_replications(cfg).aggregates["onestep"]
    target = 1.0 / fisher_full(ex1, 1.0, grid10k)
    rel = abs(ag["variance_scaled"] - target) / target
    ok = ag["ad_p_value"] > 0.01 and rel <= 0.15
    _report(6, ok,
            f"AD p={ag['ad_p_value']:.3f} (>0.01), scaled variance "
            f"{ag['variance_scaled']:.3f} vs 1/I={target:.3f}, rel dev "
            f"{rel:.3f} (<=0.15)")


def test_criterion_07_process_variance(ex2_slow):
    model = ex2_slow.with_eps(0.002)
    grid = model.default_grid()
    cps = (0.5, 0.75, 1.0)
    cfg = McConfig(model=model, theta0=1.0, delta=0.25, n_rep=1000, grid=grid,
                   checkpoints=cps, estimators=frozenset({"prelim", "process"}),
                   prelim_method="generic", delta_use="prop3")
    rep = run_replications(cfg)
    lim = limit_system(model, 1.0, grid)
    details, ok = [], True
    for tc in cps:
        s = rep.aggregates["process"][repr(float(tc))]
        ratio = s["variance_scaled"] * lim.fisher(0.0, tc)
        ok &= abs(ratio - 1.0) <= 0.2
        details.append(f"t={tc} ratio={ratio:.3f}")
    _report(7, ok, "scaled process variance x I_0^t, " + ", ".join(details) +
            " (each within 20% of 1)")


def test_criterion_08_robust_integral_identity(ex1, grid10k):
    tau, t, theta = 0.1, 1.0, 0.9
    g, D = solve_riccati(ex1, theta, grid10k)
    h = grid10k.h
    Lp = -g * theta ** 2
    L = np.concatenate(([0.0], np.cumsum(0.5 * (Lp[1:] + Lp[:-1]) * h)))
    k0 = grid10k.index_at_or_after(tau)
    F = D * np.exp(-(L - L[k0]))
    worst = 0.0
    for seed in range(20):
        traj = simulate_path(ex1, 1.0, grid10k, seed=seed)
        G = robust_integral_G(ex1, theta, traj, tau, t)
        ito = float(np.sum(F[k0:-1] * traj.dX[k0:]))
        worst = max(worst, abs(G - ito) / abs(ito))
    _report(8, worst <= 1e-3,
            f"by-parts vs direct observation sum, worst rel gap {worst:.2e} "
            "over 20 seeds (tol 1e-3)")


def test_criterion_09_mean_estimator_efficiency(ex1, grid10k):
    t = 0.5
    cfg = McConfig(model=ex1, theta0=1.0, delta=0.8, n_rep=2000, grid=grid10k,
                   checkpoints=(t,), estimators=frozenset({"prelim", "mstar"}),
                   delta_use="theorem2")
    rep = run_replications(cfg)
    errs = np.array([r["mstar_err_0"] for r in rep.rows if r["error"] == ""])
    sq = (errs / ex1.eps) ** 2
    mse = float(np.mean(sq))
    se = float(np.std(sq, ddof=1)) / math.sqrt(len(sq))
    bound = mse_lower_bound(ex1, 1.0, t, grid10k).bound
    ok = mse <= 1.25 * bound and mse >= bound - 2.0 * se
    _report(9, ok,
            f"scaled MSE(m*) {mse:.4f} vs floor {bound:.4f} at t={t} "
            f"(<= 1.25x floor, >= floor - 2se, se={se:.4f})")


def test_criterion_10_learning_exponent_optimum(ex2):
    deltas = [0.2, 0.3, 0.4, 0.5, 0.6]
    sweep = delta_sweep(ex2, 1.0, deltas, 2000, delta_use="prop1")
    best = min(sweep, key=lambda dv: dv[1])[0]
    _report(10, abs(best - 0.4) <= 0.1,
            "prelim MSE by delta " +
            ", ".join(f"{d}:{v:.2e}" for d, v in sweep) +
            f"; minimizer {best} (target 0.4 +/- 0.1)")


def test_criterion_11_cli_determinism(tmp_path):
    model = tmp_path / "ex1.json"
    shutil.copyfile(bundled_model_path("ex1"), model)
    commands = [
        ["simulate", "--theta", "1.0", "--seed", "7", "--steps", "2000"],
        ["filter", "--theta", "1.0", "--seed", "7", "--steps", "2000",
         "--derivative"],
        ["estimate", "--theta", "1.0", "--seed", "7", "--steps", "2000",
         "--delta", "0.8"],
        ["montecarlo", "--theta", "1.0", "--reps", "5", "--delta", "0.8",
         "--steps", "2000"],
        ["bound", "--theta", "1.0", "--steps", "2000"],
    ]
    snapshots = []
    for run in ("a", "b"):
        out = tmp_path / run
        for cmd in commands:
            proc = subprocess.run(
                [sys.executable, "-m", "kbonestep.cli", cmd[0],
                 "--model", str(model), "-o", str(out / cmd[0])] + cmd[1:],
                capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
        snapshots.append({
            str(p.relative_to(out)): p.read_bytes()
            for p in sorted(out.rglob("*")) if p.is_file()})
    ok = snapshots[0] == snapshots[1]
    _report(11, ok,
            f"{sum(len(c) > 0 for c in commands)} CLI commands rerun, "
            f"{len(snapshots[0])} output files byte-identical" if ok
            else "CLI outputs differ between identical reruns")
