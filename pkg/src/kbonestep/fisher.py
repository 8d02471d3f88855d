"""Fisher-information queries and the efficiency floor for mean estimation.

A single cumulative array (built once per (model, theta, grid) by the limit
system and cached there) backs the full-horizon, tail, and windowed flavors,
so additivity over adjacent windows is exact by construction. The mean-square
floor for estimating the conditional expectation at time t is the squared
derivative profile over the cumulative information up to t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularInformationError
from .model import DeterministicLimit, ModelSpec, TimeGrid, limit_system

__all__ = ["EfficiencyBound", "FISHER_FLOOR", "fisher_full", "fisher_tail",
           "fisher_between", "mse_lower_bound"]

FISHER_FLOOR = 1e-12


def _limit(model: ModelSpec, theta: float, grid: TimeGrid | None) -> DeterministicLimit:
    return limit_system(model, theta, grid or model.default_grid())


def fisher_full(model: ModelSpec, theta: float,
                grid: TimeGrid | None = None) -> float:
    """I(theta) over the whole horizon."""
    return _limit(model, theta, grid).fisher_full


def fisher_tail(model: ModelSpec, theta: float, tau: float,
                grid: TimeGrid | None = None) -> float:
    """I_tau(theta) over [tau, T]."""
    lim = _limit(model, theta, grid)
    return lim.fisher(tau, lim.grid.horizon)


def fisher_between(model: ModelSpec, theta: float, tau: float, t: float,
                   grid: TimeGrid | None = None) -> float:
    """I over the window [tau, t]."""
    return _limit(model, theta, grid).fisher(tau, t)


@dataclass(frozen=True)
class EfficiencyBound:
    t: float
    bound: float
    theta0: float


def mse_lower_bound(model: ModelSpec, theta0: float, t: float,
                    grid: TimeGrid | None = None) -> EfficiencyBound:
    """Floor on eps^-2 E|m_hat(t) - m(theta0,t)|^2 for any estimator."""
    lim = _limit(model, theta0, grid)
    info = lim.fisher(0.0, t) if t > 0 else 0.0
    if info < FISHER_FLOOR:
        raise SingularInformationError(
            f"cumulative information {info:.3e} below floor at t={t}")
    ydot = float(lim.ydot_at(t))
    return EfficiencyBound(t=t, bound=ydot ** 2 / info, theta0=theta0)
