"""Sample-path generation with reproducible, stream-separated randomness.

Each replication seed owns two counter-based Philox substreams: stream 0
drives the hidden-state noise, stream 1 the observation noise. Substreams
are carved out with ``SeedSequence(seed, spawn_key=(stream,))`` so identical
seeds give bit-identical paths and disjoint seeds are independent, which
makes replications embarrassingly parallel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._kernels import em_path
from .errors import InputError
from .model import DeterministicLimit, ModelSpec, TimeGrid, _eval_on, limit_system

__all__ = ["Trajectory", "simulate_path", "moment_scaling_probe",
           "trajectory_to_csv", "load_trajectory"]

_STATE_STREAM = 0
_OBS_STREAM = 1


def _normals(seed: int, stream: int, n: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(ss)).standard_normal(n)


@dataclass(frozen=True)
class Trajectory:
    """Discretized (X, Y) pair with the seed that produced it."""

    grid: TimeGrid
    X: np.ndarray
    Y: np.ndarray
    seed: int
    theta_true: float
    eps: float

    def __post_init__(self):
        n = self.grid.n_steps
        if len(self.X) != n + 1 or len(self.Y) != n + 1:
            raise InputError("trajectory arrays must have n_steps + 1 entries")

    def x_at(self, t) -> float | np.ndarray:
        return np.interp(t, self.grid.nodes, self.X)

    def y_at(self, t) -> float | np.ndarray:
        return np.interp(t, self.grid.nodes, self.Y)

    @property
    def dX(self) -> np.ndarray:
        return np.diff(self.X)


def simulate_path(model: ModelSpec, theta0: float, grid: TimeGrid,
                  seed: int, eps: float | None = None) -> Trajectory:
    """Euler-Maruyama path of the coupled system at the true parameter."""
    if not model.contains(theta0, closed=False):
        raise InputError(
            f"theta0={theta0} outside the open interval "
            f"({model.theta_lo}, {model.theta_hi})")
    eps = model.eps if eps is None else float(eps)
    nodes = grid.nodes
    f0 = _eval_on(model.f, theta0, nodes)
    a0 = _eval_on(model.a, theta0, nodes)
    sig0 = _eval_on(model.sigma, theta0, nodes)
    b0 = _eval_on(model.b, theta0, nodes)
    n = grid.n_steps
    xi = _normals(seed, _STATE_STREAM, n)
    eta = _normals(seed, _OBS_STREAM, n)
    X, Y = em_path(f0, a0, sig0, b0, grid.h, eps, model.y0, xi, eta)
    X.setflags(write=False)
    Y.setflags(write=False)
    return Trajectory(grid=grid, X=X, Y=Y, seed=seed, theta_true=theta0, eps=eps)


def moment_scaling_probe(model: ModelSpec, theta0: float, taus, n_rep: int,
                         grid: TimeGrid | None = None,
                         base_seed: int = 0) -> list[tuple[float, float]]:
    """Empirical E|X_tau - x_tau|^2 / eps^2 per tau, for moment-scaling fits."""
    if n_rep < 2:
        raise InputError(f"n_rep must be >= 2, got {n_rep}")
    taus = [float(t) for t in taus]
    if any(t <= 0 or t > model.T for t in taus):
        raise InputError("each tau must lie in (0, T]")
    if model.eps <= 0:
        raise InputError("moment scaling needs eps > 0")
    grid = grid or model.default_grid()
    limit = limit_system(model, theta0, grid)
    acc = np.zeros(len(taus))
    for r in range(n_rep):
        traj = simulate_path(model, theta0, grid, base_seed + r)
        for j, tau in enumerate(taus):
            acc[j] += (traj.x_at(tau) - limit.x_at(tau)) ** 2
    acc /= n_rep * model.eps ** 2
    return list(zip(taus, acc.tolist()))


# ---------------------------------------------------------------------------
# file formats: CSV path + JSON sidecar
# ---------------------------------------------------------------------------

def trajectory_to_csv(traj: Trajectory, csv_path, meta_path=None) -> None:
    nodes = traj.grid.nodes
    with open(csv_path, "w") as fh:
        fh.write("t,X,Y\n")
        for t, x, y in zip(nodes, traj.X, traj.Y):
            fh.write(f"{float(t)!r},{float(x)!r},{float(y)!r}\n")
    if meta_path is not None:
        meta = {"seed": traj.seed, "theta_true": traj.theta_true,
                "eps": traj.eps, "h": traj.grid.h}
        with open(meta_path, "w") as fh:
            json.dump(meta, fh, sort_keys=True, indent=2)
            fh.write("\n")


def load_trajectory(csv_path, meta_path) -> Trajectory:
    with open(meta_path) as fh:
        meta = json.load(fh)
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    t, X, Y = data[:, 0], data[:, 1], data[:, 2]
    grid = TimeGrid(len(t) - 1, float(t[-1]))
    return Trajectory(grid=grid, X=X, Y=Y, seed=int(meta["seed"]),
                      theta_true=float(meta["theta_true"]), eps=float(meta["eps"]))
