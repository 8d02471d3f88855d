"""Kalman-Bucy filter in the rescaled (eps-free gain) form.

The variance equation is integrated in the rescaled form gamma* = gamma/eps^2,
whose ODE contains no eps, so the filter gain D = gamma* f / sigma^2 never
becomes stiff as the noise shrinks. gamma* is a deterministic function of
(model, theta, grid) and is cached; only the mean recursion touches the
observed path. The optional derivative filter integrates the
parameter-differentiated mean equation, with the gain derivative obtained by
differentiating the Riccati ODE itself (finite differences never enter).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._kernels import euler_filter, euler_filter_dot, rk4_riccati, rk4_riccati_dot
from .errors import InputError, IntegrationError
from .model import ModelSpec, TimeGrid, _eval_on
from .simulate import Trajectory

__all__ = ["FilterOutput", "solve_riccati", "solve_riccati_dot", "run_filter",
           "filter_to_csv"]


@dataclass(frozen=True)
class FilterOutput:
    grid: TimeGrid
    theta: float
    m: np.ndarray
    gamma_star: np.ndarray
    D: np.ndarray
    mdot: np.ndarray | None = None

    def m_at(self, t):
        return np.interp(t, self.grid.nodes, self.m)

    def mdot_at(self, t):
        if self.mdot is None:
            raise InputError("filter was run without the derivative")
        return np.interp(t, self.grid.nodes, self.mdot)


def _check_gamma(g: np.ndarray, grid: TimeGrid, theta: float) -> np.ndarray:
    bad = np.flatnonzero(~np.isfinite(g))
    if bad.size:
        raise IntegrationError(
            f"non-finite gamma* at node {bad[0]} (t={grid.nodes[bad[0]]:.6g}, "
            f"theta={theta})")
    if np.min(g) < -1e-12:
        k = int(np.argmin(g))
        raise IntegrationError(
            f"gamma* negative ({g[k]:.3e}) at node {k} (theta={theta})")
    # absorb harmless -0.0 / roundoff-level negatives
    return np.where(g < 0.0, 0.0, g)


@lru_cache(maxsize=512)
def solve_riccati(model: ModelSpec, theta: float, grid: TimeGrid):
    """gamma* and the gain D on the grid; independent of any trajectory."""
    half = grid.half_nodes
    a_h = _eval_on(model.a, theta, half)
    f_h = _eval_on(model.f, theta, half)
    sig_h = _eval_on(model.sigma, theta, half)
    b_h = _eval_on(model.b, theta, half)
    g = rk4_riccati(a_h, f_h, sig_h * sig_h, b_h * b_h, grid.h, grid.n_steps)
    g = _check_gamma(g, grid, theta)
    D = g * f_h[::2] / sig_h[::2] ** 2
    g.setflags(write=False)
    D.setflags(write=False)
    return g, D


@lru_cache(maxsize=512)
def solve_riccati_dot(model: ModelSpec, theta: float, grid: TimeGrid):
    """gamma*, its theta-derivative, and the gain pair (D, Ddot)."""
    half = grid.half_nodes
    a_h = _eval_on(model.a, theta, half)
    ad_h = _eval_on(model.a_dtheta, theta, half)
    f_h = _eval_on(model.f, theta, half)
    fd_h = _eval_on(model.f_dtheta, theta, half)
    sig_h = _eval_on(model.sigma, theta, half)
    b_h = _eval_on(model.b, theta, half)
    g, gd = rk4_riccati_dot(a_h, ad_h, f_h, fd_h, sig_h * sig_h, b_h * b_h,
                            grid.h, grid.n_steps)
    g = _check_gamma(g, grid, theta)
    if not np.all(np.isfinite(gd)):
        raise IntegrationError(f"non-finite gamma*-derivative (theta={theta})")
    s2 = sig_h[::2] ** 2
    f0 = f_h[::2]
    D = g * f0 / s2
    Ddot = (gd * f0 + g * fd_h[::2]) / s2
    for arr in (g, gd, D, Ddot):
        arr.setflags(write=False)
    return g, gd, D, Ddot


def run_filter(model: ModelSpec, theta: float, traj: Trajectory,
               with_derivative: bool = False) -> FilterOutput:
    """Conditional-mean recursion driven by the observed increments."""
    grid = traj.grid
    nodes = grid.nodes
    a0 = _eval_on(model.a, theta, nodes)
    f0 = _eval_on(model.f, theta, nodes)
    dX = traj.dX
    if with_derivative:
        g, gd, D, Ddot = solve_riccati_dot(model, theta, grid)
        ad0 = _eval_on(model.a_dtheta, theta, nodes)
        fd0 = _eval_on(model.f_dtheta, theta, nodes)
        m, md = euler_filter_dot(a0, ad0, f0, fd0, D, Ddot, dX, grid.h, model.y0)
    else:
        g, D = solve_riccati(model, theta, grid)
        m = euler_filter(a0, f0, D, dX, grid.h, model.y0)
        md = None
    if not np.all(np.isfinite(m)) or (md is not None and not np.all(np.isfinite(md))):
        raise IntegrationError(f"non-finite filter state (theta={theta})")
    m.setflags(write=False)
    if md is not None:
        md.setflags(write=False)
    return FilterOutput(grid=grid, theta=theta, m=m, gamma_star=g, D=D, mdot=md)


def filter_to_csv(out: FilterOutput, path) -> None:
    nodes = out.grid.nodes
    with open(path, "w") as fh:
        if out.mdot is None:
            fh.write("t,m,gamma_star,D\n")
            for row in zip(nodes, out.m, out.gamma_star, out.D):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        else:
            fh.write("t,m,gamma_star,D,mdot\n")
            for row in zip(nodes, out.m, out.gamma_star, out.D, out.mdot):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
