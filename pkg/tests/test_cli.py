import json
import shutil
from pathlib import Path

import pytest

from kbonestep import bundled_model_path
from kbonestep.cli import main


@pytest.fixture(scope="module")
def model_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("models")
    p = d / "ex1.json"
    shutil.copyfile(bundled_model_path("ex1"), p)
    return str(p)


def _run(*argv):
    return main(list(argv))


def test_simulate_writes_contracted_files(tmp_path, model_file):
    out = tmp_path / "out"
    code = _run("simulate", "--model", model_file, "--theta", "1.0",
                "--eps", "0.01", "--steps", "2000", "--seed", "7",
                "-o", str(out))
    assert code == 0
    assert (out / "trajectory.csv").exists() and (out / "meta.json").exists()
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,X,Y"
    meta = json.loads((out / "meta.json").read_text())
    assert meta["seed"] == 7 and meta["eps"] == 0.01


def test_missing_model_file_is_config_error(tmp_path):
    assert _run("simulate", "--model", str(tmp_path / "no.json"),
                "--theta", "1.0", "-o", str(tmp_path)) == 2


def test_bad_delta_is_config_error(tmp_path, model_file):
    assert _run("estimate", "--model", model_file, "--theta", "1.0",
                "--delta", "1.5", "-o", str(tmp_path)) == 2


def test_numeric_failure_exit_code(tmp_path, model_file):
    # zero-length information window at t = 0
    assert _run("bound", "--model", model_file, "--theta", "1.0",
                "--times", "0", "-o", str(tmp_path)) == 3


def test_filter_and_estimate_outputs(tmp_path, model_file):
    out = tmp_path / "o"
    assert _run("filter", "--model", model_file, "--theta", "1.0",
                "--steps", "2000", "--seed", "3", "--derivative",
                "-o", str(out)) == 0
    header = (out / "filter.csv").read_text().splitlines()[0]
    assert header == "t,m,gamma_star,D,mdot"

    assert _run("estimate", "--model", model_file, "--theta", "1.0",
                "--steps", "2000", "--seed", "3", "--delta", "0.8",
                "-o", str(out)) == 0
    est = json.loads((out / "estimate.json").read_text())
    for key in ("theta_bar", "theta_star", "tau_eps", "branch",
                "fisher_used", "prelim_clamped"):
        assert key in est
    assert (out / "process.csv").read_text().startswith("t,theta_star,fisher_cum")


def test_estimate_from_saved_trajectory(tmp_path, model_file):
    out = tmp_path / "o"
    _run("simulate", "--model", model_file, "--theta", "1.0",
         "--steps", "2000", "--seed", "3", "-o", str(out))
    assert _run("estimate", "--model", model_file,
                "--trajectory", str(out / "trajectory.csv"),
                "--meta", str(out / "meta.json"), "--steps", "2000",
                "--delta", "0.8", "-o", str(out)) == 0


def test_montecarlo_smoke_and_files(tmp_path, model_file):
    out = tmp_path / "mc"
    assert _run("montecarlo", "--model", model_file, "--theta", "1.0",
                "--reps", "2", "--delta", "0.8", "--steps", "2000",
                "-o", str(out)) == 0
    assert (out / "rows.csv").exists() and (out / "aggregates.json").exists()
    agg = json.loads((out / "aggregates.json").read_text())
    assert agg["schema"] == 1


def test_montecarlo_needs_delta(tmp_path, model_file):
    assert _run("montecarlo", "--model", model_file, "--theta", "1.0",
                "--reps", "2", "-o", str(tmp_path)) == 2


def test_delta_sweep_assert_failure_is_statistical(tmp_path, model_file):
    # a sweep that cannot contain the optimum must exit 4 under --assert
    code = _run("montecarlo", "--model", model_file, "--theta", "1.0",
                "--reps", "10", "--steps", "2000", "--use", "theorem1",
                "--delta-sweep", "0.6:0.7:0.1", "--assert", "delta-optimum",
                "-o", str(tmp_path))
    assert code == 4
    assert (Path(tmp_path) / "sweep.json").exists()


def test_bound_output(tmp_path, model_file):
    out = tmp_path / "b"
    assert _run("bound", "--model", model_file, "--theta", "1.0",
                "--times", "0.5,1.0", "--steps", "2000", "-o", str(out)) == 0
    payload = json.loads((out / "bound.json").read_text())
    assert [e["t"] for e in payload["bounds"]] == [0.5, 1.0]


def _snapshot(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_reruns_are_byte_identical(tmp_path, model_file):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        _run("simulate", "--model", model_file, "--theta", "1.0",
             "--steps", "2000", "--seed", "9", "-o", str(out))
        _run("estimate", "--model", model_file, "--theta", "1.0",
             "--steps", "2000", "--seed", "9", "--delta", "0.8", "-o", str(out))
    assert _snapshot(a) == _snapshot(b)
