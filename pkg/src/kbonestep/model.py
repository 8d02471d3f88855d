"""Statistical model definition and its noise-free limit.

A model couples an observed diffusion with drift ``f(theta,t) * Y_t`` to a
hidden linear diffusion with drift ``a(theta,t) * Y_t``; both noise
intensities carry the same small factor ``eps``. The unknown scalar parameter
lives in the open interval (alpha, beta), and exactly one of ``f`` or ``a``
carries it, selected by the case tag (which also selects which regularity
conditions are checked at construction).

The noise-free (eps = 0) limit system, the derivative profile of the filter
mean, and the cumulative Fisher information integral all live here; they are
the deterministic backbone every estimator is built on.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache

import numpy as np

from . import expr as ex
from ._kernels import rk4_limit
from .errors import InputError, IntegrationError, ModelAssumptionError

__all__ = [
    "CaseTag",
    "TimeGrid",
    "ModelSpec",
    "DeterministicLimit",
    "eval_coeff",
    "limit_system",
    "fisher_window",
    "model_from_dict",
    "model_to_dict",
    "load_model",
]

_COND_MESH = 200    # theta mesh for the separation-from-zero checks
_SEPARATION = 1e-12


class CaseTag(str, enum.Enum):
    THETA_IN_F = "ThetaInF"
    THETA_IN_A = "ThetaInA"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T] with n_steps intervals."""

    n_steps: int
    horizon: float

    def __post_init__(self):
        if self.n_steps < 1:
            raise InputError(f"n_steps must be positive, got {self.n_steps}")
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise InputError(f"horizon must be positive, got {self.horizon}")

    @property
    def h(self) -> float:
        return self.horizon / self.n_steps

    @cached_property
    def nodes(self) -> np.ndarray:
        t = np.linspace(0.0, self.horizon, self.n_steps + 1)
        t.setflags(write=False)
        return t

    @cached_property
    def half_nodes(self) -> np.ndarray:
        """Nodes plus step midpoints (length 2 n_steps + 1)."""
        t = np.linspace(0.0, self.horizon, 2 * self.n_steps + 1)
        t.setflags(write=False)
        return t

    def index_at_or_after(self, t: float) -> int:
        """Smallest node index k with t_k >= t (tolerating roundoff)."""
        if t <= 0.0:
            return 0
        k = int(np.ceil(t / self.h - 1e-9))
        return min(k, self.n_steps)


def _eval_on(e: ex.CoefficientExpr, theta, ts) -> np.ndarray:
    ts = np.asarray(ts, float)
    out = np.asarray(e(theta, ts), float)
    if out.shape != ts.shape:
        out = np.ascontiguousarray(np.broadcast_to(out, ts.shape))
    return out


@dataclass(frozen=True)
class ModelSpec:
    """Coefficients, parameter interval, initial value, horizon and noise level."""

    f: ex.CoefficientExpr
    a: ex.CoefficientExpr
    sigma: ex.CoefficientExpr
    b: ex.CoefficientExpr
    theta_lo: float
    theta_hi: float
    y0: float
    T: float
    eps: float
    case_tag: CaseTag = CaseTag.THETA_IN_F

    def __post_init__(self):
        if not (np.isfinite(self.theta_lo) and np.isfinite(self.theta_hi)
                and self.theta_lo < self.theta_hi):
            raise InputError(
                f"need finite theta_lo < theta_hi, got ({self.theta_lo}, {self.theta_hi})")
        if self.y0 == 0.0 or not np.isfinite(self.y0):
            raise ModelAssumptionError("y0 must be nonzero and finite")
        if not (np.isfinite(self.T) and self.T > 0):
            raise InputError(f"horizon T must be positive, got {self.T}")
        if not (np.isfinite(self.eps) and self.eps >= 0):
            raise InputError(f"eps must be >= 0, got {self.eps}")
        if self.sigma.depends_on_theta:
            raise InputError("sigma must depend on t only")
        if self.b.depends_on_theta:
            raise InputError("b must depend on t only")

        tmesh = np.linspace(0.0, self.T, _COND_MESH + 1)
        sig = _eval_on(self.sigma, 0.5 * (self.theta_lo + self.theta_hi), tmesh)
        if not np.all(np.isfinite(sig)) or np.min(np.abs(sig)) <= _SEPARATION:
            raise ModelAssumptionError("sigma(t) must be bounded away from 0 on [0,T]")

        thmesh = np.linspace(self.theta_lo, self.theta_hi, _COND_MESH)
        if self.case_tag is CaseTag.THETA_IN_F:
            f0 = _eval_on(self.f, thmesh, np.zeros(_COND_MESH))
            fd0 = _eval_on(self.f.d_theta(), thmesh, np.zeros(_COND_MESH))
            if np.min(np.abs(f0)) <= _SEPARATION or np.min(np.abs(fd0)) <= _SEPARATION:
                raise ModelAssumptionError(
                    "ThetaInF requires |f(theta,0)| and |df/dtheta(theta,0)| "
                    "separated from zero on the parameter interval")
        else:
            a0 = _eval_on(self.a, thmesh, np.zeros(_COND_MESH))
            ad0 = _eval_on(self.a.d_theta(), thmesh, np.zeros(_COND_MESH))
            if np.min(a0) <= _SEPARATION or np.min(ad0) <= _SEPARATION:
                raise ModelAssumptionError(
                    "ThetaInA requires a(theta,0) and da/dtheta(theta,0) "
                    "positive and separated from zero on the parameter interval")

    # derivative trees, built once
    @cached_property
    def f_dtheta(self) -> ex.CoefficientExpr:
        return self.f.d_theta()

    @cached_property
    def a_dtheta(self) -> ex.CoefficientExpr:
        return self.a.d_theta()

    @cached_property
    def f_dt(self) -> ex.CoefficientExpr:
        return self.f.d_t()

    @cached_property
    def sigma_dt(self) -> ex.CoefficientExpr:
        return self.sigma.d_t()

    @property
    def theta_mid(self) -> float:
        return 0.5 * (self.theta_lo + self.theta_hi)

    def contains(self, theta: float, closed: bool = True) -> bool:
        if closed:
            return self.theta_lo <= theta <= self.theta_hi
        return self.theta_lo < theta < self.theta_hi

    def clamp(self, theta: float) -> float:
        return min(max(theta, self.theta_lo), self.theta_hi)

    def with_eps(self, eps: float) -> "ModelSpec":
        return replace(self, eps=eps)

    def default_grid(self, n_steps: int = 10_000) -> TimeGrid:
        return TimeGrid(n_steps, self.T)


def eval_coeff(model: ModelSpec, which: str, theta: float, t) -> float | np.ndarray:
    """Evaluate one of the model coefficients with domain checking."""
    try:
        e = {"f": model.f, "a": model.a, "sigma": model.sigma, "b": model.b}[which]
    except KeyError:
        raise InputError(f"unknown coefficient {which!r}") from None
    if not (model.theta_lo <= theta <= model.theta_hi):
        raise InputError(
            f"theta={theta} outside [{model.theta_lo}, {model.theta_hi}]")
    tarr = np.asarray(t, float)
    if np.any(tarr < 0) or np.any(tarr > model.T):
        raise InputError(f"t outside [0, {model.T}]")
    return e(theta, t)


@dataclass(frozen=True)
class DeterministicLimit:
    """Noise-free system on a grid, with cumulative Fisher information.

    ``ydot`` is the eps = 0 profile of the filter-mean derivative (the
    solution of the linear derivative ODE, not d y_t / d theta), ``Mdot``
    is the score weight fdot*y + f*ydot, and ``fisher_cum[k]`` holds the
    trapezoid accumulation of (Mdot/sigma)^2 up to t_k.
    """

    grid: TimeGrid
    theta: float
    x: np.ndarray
    y: np.ndarray
    ydot: np.ndarray
    gamma_star: np.ndarray
    Mdot: np.ndarray
    fisher_cum: np.ndarray

    def _interp(self, arr: np.ndarray, t) -> float | np.ndarray:
        return np.interp(t, self.grid.nodes, arr)

    def x_at(self, t):
        return self._interp(self.x, t)

    def y_at(self, t):
        return self._interp(self.y, t)

    def ydot_at(self, t):
        return self._interp(self.ydot, t)

    def fisher(self, tau: float, t: float) -> float:
        """Windowed Fisher information over [tau, t]."""
        if not (0.0 <= tau < t <= self.grid.horizon + 1e-12):
            raise InputError(f"need 0 <= tau < t <= T, got tau={tau}, t={t}")
        return float(self._interp(self.fisher_cum, t) - self._interp(self.fisher_cum, tau))

    @property
    def fisher_full(self) -> float:
        return float(self.fisher_cum[-1])


@lru_cache(maxsize=512)
def limit_system(model: ModelSpec, theta: float, grid: TimeGrid) -> DeterministicLimit:
    """Solve the coupled noise-free system plus Riccati on the grid.

    4th-order one-step integration for the ODE block; trapezoid accumulation
    for the Fisher integral. Results are cached per (model, theta, grid).
    """
    th = model.clamp(float(theta))
    half = grid.half_nodes
    f_h = _eval_on(model.f, th, half)
    fd_h = _eval_on(model.f_dtheta, th, half)
    a_h = _eval_on(model.a, th, half)
    ad_h = _eval_on(model.a_dtheta, th, half)
    sig_h = _eval_on(model.sigma, th, half)
    b_h = _eval_on(model.b, th, half)

    x, y, yd, g = rk4_limit(f_h, fd_h, a_h, ad_h, sig_h * sig_h, b_h * b_h,
                            grid.h, grid.n_steps, model.y0)
    for name, arr in (("x", x), ("y", y), ("ydot", yd), ("gamma_star", g)):
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise IntegrationError(
                f"non-finite {name} at node {bad[0]} (t={grid.nodes[bad[0]]:.6g}, "
                f"theta={th})")

    nodes_f = f_h[::2]
    nodes_fd = fd_h[::2]
    nodes_sig = sig_h[::2]
    Mdot = nodes_fd * y + nodes_f * yd
    integrand = (Mdot / nodes_sig) ** 2
    fisher_cum = np.concatenate(
        ([0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * grid.h)))

    for arr in (x, y, yd, g, Mdot, fisher_cum):
        arr.setflags(write=False)
    return DeterministicLimit(grid=grid, theta=th, x=x, y=y, ydot=yd,
                              gamma_star=g, Mdot=Mdot, fisher_cum=fisher_cum)


def fisher_window(limit: DeterministicLimit, tau: float, t: float) -> float:
    """I over [tau, t], linear interpolation between grid nodes."""
    return limit.fisher(tau, t)


# ---------------------------------------------------------------------------
# model (de)serialization
# ---------------------------------------------------------------------------

def model_from_dict(d: dict) -> ModelSpec:
    try:
        return ModelSpec(
            f=ex.parse_sexpr(d["f"]),
            a=ex.parse_sexpr(d["a"]),
            sigma=ex.parse_sexpr(d["sigma"]),
            b=ex.parse_sexpr(d["b"]),
            theta_lo=float(d["alpha"]),
            theta_hi=float(d["beta"]),
            y0=float(d["y0"]),
            T=float(d["T"]),
            eps=float(d["eps"]),
            case_tag=CaseTag(d.get("case", "ThetaInF")),
        )
    except KeyError as e:
        raise InputError(f"model file missing field {e.args[0]!r}") from None
    except (TypeError, ValueError) as e:
        if isinstance(e, InputError):
            raise
        raise InputError(f"malformed model file: {e}") from None


def model_to_dict(model: ModelSpec) -> dict:
    return {
        "f": ex.to_sexpr(model.f),
        "a": ex.to_sexpr(model.a),
        "sigma": ex.to_sexpr(model.sigma),
        "b": ex.to_sexpr(model.b),
        "alpha": model.theta_lo,
        "beta": model.theta_hi,
        "y0": model.y0,
        "T": model.T,
        "eps": model.eps,
        "case": model.case_tag.value,
    }


def load_model(path) -> ModelSpec:
    try:
        with open(path) as fh:
            return model_from_dict(json.load(fh))
    except FileNotFoundError:
        raise InputError(f"model file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"model file is not valid JSON: {e}") from None
