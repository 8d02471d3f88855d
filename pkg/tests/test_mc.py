import json

import numpy as np
import pytest

from kbonestep import (InputError, McConfig, StatisticalFailure, TimeGrid,
                       normality_check, rate_fit, run_replications)
from kbonestep.errors import IntegrationError
from kbonestep.mc import report_to_files


def _cfg(model, **kw):
    base = dict(model=model, theta0=1.0, delta=0.5, n_rep=50,
                grid=model.default_grid(2000), base_seed=0,
                estimators=frozenset({"prelim", "onestep"}))
    base.update(kw)
    return McConfig(**base)


def test_config_validation(ex1):
    with pytest.raises(InputError):
        _cfg(ex1, n_rep=1)
    with pytest.raises(InputError):
        _cfg(ex1, theta0=0.5)
    with pytest.raises(InputError):
        _cfg(ex1, estimators=frozenset({"prelim", "bogus"}))
    with pytest.raises(InputError):
        _cfg(ex1, checkpoints=(2.0,))
    with pytest.raises(InputError):
        _cfg(ex1, estimators=frozenset({"process"}))  # needs checkpoints


def test_checkpoints_must_clear_learning_interval(ex1):
    cfg = _cfg(ex1, delta=0.5, checkpoints=(0.05,),
               estimators=frozenset({"prelim", "process"}))
    with pytest.raises(InputError):
        run_replications(cfg)  # tau = 0.1 > 0.05


def test_determinism_bytes(tmp_path, ex1):
    cfg = _cfg(ex1, n_rep=20)
    outs = []
    for tag in ("a", "b"):
        rep = run_replications(cfg)
        rows, agg = tmp_path / f"r{tag}.csv", tmp_path / f"a{tag}.json"
        report_to_files(rep, cfg, rows, agg)
        outs.append((rows.read_bytes(), agg.read_bytes()))
    assert outs[0] == outs[1]


def test_noise_free_rows_have_zero_variance(ex1):
    cfg = _cfg(ex1.with_eps(0.0), n_rep=2)
    rep = run_replications(cfg)
    vals = [r["theta_star"] for r in rep.rows]
    assert vals[0] == vals[1]
    assert rep.aggregates["onestep"]["variance"] == 0.0


def test_aggregates_recomputable_from_rows(ex1):
    cfg = _cfg(ex1, n_rep=60)
    rep = run_replications(cfg)
    vals = np.array([r["theta_star"] for r in rep.rows if r["error"] == ""])
    assert rep.aggregates["onestep"]["variance"] == \
        pytest.approx(float(np.var(vals, ddof=1)), rel=1e-12)
    assert rep.aggregates["onestep"]["mean"] == \
        pytest.approx(float(np.mean(vals)), rel=1e-12)


def test_mean_estimate_unbiased_to_first_order(ex1):
    cfg = _cfg(ex1, n_rep=400, delta=0.8)
    rep = run_replications(cfg)
    ag = rep.aggregates["onestep"]
    sd = np.sqrt(ag["variance"])
    assert abs(ag["mean"] - 1.0) <= 3.0 * sd / np.sqrt(cfg.n_rep)


def test_failure_isolation_and_threshold(ex1, monkeypatch):
    import kbonestep.mc as mcmod
    real = mcmod.simulate_path

    def flaky(model, theta0, grid, seed, eps=None):
        if seed % 3 == 0:
            raise IntegrationError("synthetic divergence")
        return real(model, theta0, grid, seed, eps)

    monkeypatch.setattr(mcmod, "simulate_path", flaky)
    with pytest.raises(StatisticalFailure):
        run_replications(_cfg(ex1, n_rep=30))

    def rare(model, theta0, grid, seed, eps=None):
        if seed == 0:
            raise IntegrationError("synthetic divergence")
        return real(model, theta0, grid, seed, eps)

    monkeypatch.setattr(mcmod, "simulate_path", rare)
    rep = run_replications(_cfg(ex1, n_rep=30))
    assert rep.aggregates["n_failed"] == 1
    assert rep.rows[0]["error"].startswith("IntegrationError")


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

def test_normality_null_and_alternative():
    rng = np.random.default_rng(42)
    z = rng.standard_normal(2000)
    _, p_null = normality_check(z, 1.0)
    assert p_null > 0.01
    _, p_alt = normality_check(3.0 * z, 1.0)
    assert p_alt < 0.01


def test_normality_check_input_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(InputError):
        normality_check(rng.standard_normal(50), 1.0)
    with pytest.raises(InputError):
        normality_check(np.ones(200), 1.0)
    with pytest.raises(InputError):
        normality_check(rng.standard_normal(200), 0.0)


def test_rate_fit_exact_power_laws():
    x = np.array([0.1, 0.2, 0.5, 1.0])
    s1, e1 = rate_fit(x, 3.0 * x)
    assert s1 == pytest.approx(1.0, abs=1e-12)
    assert e1 == pytest.approx(0.0, abs=1e-10)
    s2, _ = rate_fit(x, 0.5 * x ** 2)
    assert s2 == pytest.approx(2.0, abs=1e-12)


def test_rate_fit_input_errors():
    with pytest.raises(InputError):
        rate_fit([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(InputError):
        rate_fit([1.0, 2.0, -1.0], [1.0, 2.0, 3.0])
    with pytest.raises(InputError):
        rate_fit([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


def test_report_schema_and_columns(tmp_path, ex1):
    cfg = _cfg(ex1, n_rep=5, checkpoints=(0.5, 1.0),
               estimators=frozenset({"prelim", "onestep", "process"}))
    rep = run_replications(cfg)
    rows, agg = tmp_path / "rows.csv", tmp_path / "agg.json"
    report_to_files(rep, cfg, rows, agg)
    header = rows.read_text().splitlines()[0].split(",")
    assert header == ["seed", "theta_bar", "prelim_clamped", "theta_star",
                      "theta_proc_0", "theta_proc_1", "error"]
    payload = json.loads(agg.read_text())
    assert payload["schema"] == 1
    assert payload["n_rep"] == 5
