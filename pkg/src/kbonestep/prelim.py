"""Preliminary estimation on the shrinking learning interval [0, tau].

The rough estimator inverts the noise-free observation map theta -> x_tau(theta)
at the observed value X_tau, clamping to the parameter interval when the
observation falls outside the attainable range. Two closed-form variants cover
the worked multiplicative cases (parameter in the observation drift, parameter
in the state drift). The learning interval tau = eps^delta is validated
against the admissible delta range of whichever asymptotic result the caller
intends to invoke downstream.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import rk4_xy
from .errors import DegenerateModelError, InputError, ModelAssumptionError
from .model import ModelSpec, _eval_on
from .simulate import Trajectory

__all__ = ["Branch", "PrelimResult", "learning_interval", "estimate_generic",
           "estimate_example1", "estimate_example2", "DELTA_RANGES"]

# admissible delta per downstream consumer (open intervals)
DELTA_RANGES = {
    "theorem1": (0.0, 2.0),      # preliminary alone, parameter in f
    "prop1": (0.0, 2.0 / 3.0),   # preliminary alone, parameter in a
    "theorem2": (0.0, 1.0),      # one-step correction, parameter in f
    "prop2": (0.0, 1.0 / 3.0),   # one-step correction, parameter in a
    "prop3": (0.0, 1.0 / 3.0),   # one-step process (same conditions as prop2)
}

_MIN_LOCAL_NODES = 100
_BISECT_REL_TOL = 1e-12


class Branch(str, enum.Enum):
    CLAMPED_LOW = "ClampedLow"
    INTERIOR = "Interior"
    CLAMPED_HIGH = "ClampedHigh"


@dataclass(frozen=True)
class PrelimResult:
    theta_bar: float
    tau_eps: float
    branch: Branch
    solver_iters: int

    @property
    def clamped(self) -> bool:
        return self.branch is not Branch.INTERIOR


def learning_interval(eps: float, delta: float, T: float,
                      use: str = "theorem1") -> float:
    """tau = eps^delta, capped at T/2; delta checked against the target result."""
    if not (0.0 < eps < 1.0):
        raise InputError(f"eps must lie in (0,1), got {eps}")
    try:
        lo, hi = DELTA_RANGES[use]
    except KeyError:
        raise InputError(
            f"unknown downstream use {use!r}; expected one of {sorted(DELTA_RANGES)}"
        ) from None
    if not (lo < delta < hi):
        raise InputError(
            f"delta={delta} outside the admissible range ({lo}, {hi:.6g}) "
            f"required by {use}")
    return min(eps ** delta, T / 2.0)


def _local_steps(tau: float, grid_h: float) -> int:
    return max(_MIN_LOCAL_NODES, int(math.ceil(tau / grid_h)))


def _xy_on_interval(model: ModelSpec, theta: float, tau: float, n: int):
    """Noise-free (x, y) on [0, tau] with its own fine grid."""
    half = np.linspace(0.0, tau, 2 * n + 1)
    f_h = _eval_on(model.f, theta, half)
    a_h = _eval_on(model.a, theta, half)
    return rk4_xy(f_h, a_h, tau / n, n, model.y0), half


def x_tau(model: ModelSpec, theta: float, tau: float, grid_h: float) -> float:
    """Endpoint of the noise-free observation map on the learning interval."""
    (x, _y), _ = _xy_on_interval(model, theta, tau, _local_steps(tau, grid_h))
    return float(x[-1])


def _observed_at(traj: Trajectory, tau: float) -> float:
    if tau > traj.grid.horizon + 1e-12:
        raise InputError(f"tau={tau} exceeds the trajectory horizon")
    return float(traj.x_at(tau))


def estimate_generic(model: ModelSpec, traj: Trajectory, tau_eps: float) -> PrelimResult:
    """Invert x_tau(.) at X_tau by bisection, clamping outside the range."""
    X_tau = _observed_at(traj, tau_eps)
    h = traj.grid.h
    lo, hi = model.theta_lo, model.theta_hi

    probes = np.linspace(lo, hi, 5)
    vals = [x_tau(model, th, tau_eps, h) for th in probes]
    diffs = np.diff(vals)
    if np.any(diffs > 0) and np.any(diffs < 0):
        raise ModelAssumptionError(
            "x_tau(theta) is not monotone on the parameter interval; the "
            "preliminary inversion is not defined for this model")
    increasing = vals[-1] >= vals[0]
    x_lo, x_hi = (vals[0], vals[-1]) if increasing else (vals[-1], vals[0])

    if X_tau <= x_lo:
        theta = lo if increasing else hi
        branch = Branch.CLAMPED_LOW if increasing else Branch.CLAMPED_HIGH
        return PrelimResult(theta, tau_eps, branch, 0)
    if X_tau >= x_hi:
        theta = hi if increasing else lo
        branch = Branch.CLAMPED_HIGH if increasing else Branch.CLAMPED_LOW
        return PrelimResult(theta, tau_eps, branch, 0)

    a, b = lo, hi
    fa = vals[0] - X_tau
    tol = _BISECT_REL_TOL * (hi - lo)
    iters = 0
    while b - a > tol and iters < 200:
        mid = 0.5 * (a + b)
        fm = x_tau(model, mid, tau_eps, h) - X_tau
        same_side = (fm > 0) == (fa > 0)
        if same_side:
            a, fa = mid, fm
        else:
            b = mid
        iters += 1
    return PrelimResult(0.5 * (a + b), tau_eps, Branch.INTERIOR, iters)


def _clamped(model: ModelSpec, theta: float, tau_eps: float,
             iters: int = 0) -> PrelimResult:
    if theta <= model.theta_lo:
        return PrelimResult(model.theta_lo, tau_eps, Branch.CLAMPED_LOW, iters)
    if theta >= model.theta_hi:
        return PrelimResult(model.theta_hi, tau_eps, Branch.CLAMPED_HIGH, iters)
    return PrelimResult(theta, tau_eps, Branch.INTERIOR, iters)


def estimate_example1(model: ModelSpec, traj: Trajectory, tau_eps: float) -> PrelimResult:
    """Closed form for f(theta,t) = theta * f_t with a parameter-free: the
    ratio of X_tau to the integral of f_t * y_t over the learning interval."""
    f_t = model.f_dtheta
    if f_t.depends_on_theta or model.a.depends_on_theta:
        raise InputError(
            "closed-form variant 1 needs f multiplicative in theta and a "
            "parameter-free")
    n = _local_steps(tau_eps, traj.grid.h)
    (_x, y), half = _xy_on_interval(model, model.theta_mid, tau_eps, n)
    integrand = _eval_on(f_t, model.theta_mid, half[::2]) * y
    denom = float(np.trapezoid(integrand, dx=tau_eps / n))
    if abs(denom) < 1e-300:
        raise DegenerateModelError("learning-interval integral of f*y is zero")
    return _clamped(model, _observed_at(traj, tau_eps) / denom, tau_eps)


def estimate_example2(model: ModelSpec, traj: Trajectory, tau_eps: float) -> PrelimResult:
    """Closed form for a(theta,t) = theta * a_t with f parameter-free: the
    quadratic-in-tau expansion of X_tau solved for theta."""
    a_t = model.a_dtheta
    if a_t.depends_on_theta or model.f.depends_on_theta:
        raise InputError(
            "closed-form variant 2 needs a multiplicative in theta and f "
            "parameter-free")
    th = model.theta_mid
    f0 = float(model.f(th, 0.0))
    a0 = float(a_t(th, 0.0))
    denom = f0 * a0 * model.y0
    if denom == 0.0:
        raise ModelAssumptionError(
            "f(0) * da/dtheta(0) * y0 = 0: the quadratic term of the "
            "learning-interval expansion vanishes")
    n = _local_steps(tau_eps, traj.grid.h)
    s = np.linspace(0.0, tau_eps, n + 1)
    f_int = float(np.trapezoid(_eval_on(model.f, th, s), dx=tau_eps / n))
    num = _observed_at(traj, tau_eps) - model.y0 * f_int
    theta = 2.0 * num / (denom * tau_eps ** 2)
    return _clamped(model, theta, tau_eps)
