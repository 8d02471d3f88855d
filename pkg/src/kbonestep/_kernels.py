"""Hot inner loops, jitted with numba when available.

All kernels operate on pre-evaluated coefficient arrays so no Python objects
cross into the loops. Half-grid arrays (length ``2n+1``) carry coefficient
values at the step endpoints and midpoints needed by the classical 4th-order
one-step method; node arrays (length ``n+1``) back the Euler recursions
driven by observed increments.

The Riccati stage arithmetic is written with the exact same expression shape
in every kernel that steps a Riccati equation, so a fixed-parameter run and
an adaptive run with the parameter frozen produce bit-compatible states.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard dep, fallback for safety
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


@njit(cache=True)
def _ric_rhs(g, a, f, s2, b2):
    return 2.0 * a * g - g * g * (f * f) / s2 + b2


@njit(cache=True)
def rk4_riccati(a_h, f_h, s2_h, b2_h, h, n):
    """Rescaled Riccati: g' = 2ag - g^2 f^2/s^2 + b^2, g(0) = 0."""
    g = np.zeros(n + 1)
    for k in range(n):
        i0 = 2 * k
        i1 = i0 + 1
        i2 = i0 + 2
        gk = g[k]
        k1 = _ric_rhs(gk, a_h[i0], f_h[i0], s2_h[i0], b2_h[i0])
        k2 = _ric_rhs(gk + 0.5 * h * k1, a_h[i1], f_h[i1], s2_h[i1], b2_h[i1])
        k3 = _ric_rhs(gk + 0.5 * h * k2, a_h[i1], f_h[i1], s2_h[i1], b2_h[i1])
        k4 = _ric_rhs(gk + h * k3, a_h[i2], f_h[i2], s2_h[i2], b2_h[i2])
        g[k + 1] = gk + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return g


@njit(cache=True)
def rk4_riccati_dot(a_h, adot_h, f_h, fdot_h, s2_h, b2_h, h, n):
    """Riccati jointly with its parameter derivative gd (structural d/dtheta)."""
    g = np.zeros(n + 1)
    gd = np.zeros(n + 1)
    for k in range(n):
        i0 = 2 * k
        i1 = i0 + 1
        i2 = i0 + 2
        gk = g[k]
        dk = gd[k]
        # stage 1
        k1g = _ric_rhs(gk, a_h[i0], f_h[i0], s2_h[i0], b2_h[i0])
        k1d = (2.0 * adot_h[i0] * gk + 2.0 * a_h[i0] * dk
               - (2.0 * gk * dk * f_h[i0] * f_h[i0]
                  + 2.0 * gk * gk * f_h[i0] * fdot_h[i0]) / s2_h[i0])
        # stage 2
        g2 = gk + 0.5 * h * k1g
        d2 = dk + 0.5 * h * k1d
        k2g = _ric_rhs(g2, a_h[i1], f_h[i1], s2_h[i1], b2_h[i1])
        k2d = (2.0 * adot_h[i1] * g2 + 2.0 * a_h[i1] * d2
               - (2.0 * g2 * d2 * f_h[i1] * f_h[i1]
                  + 2.0 * g2 * g2 * f_h[i1] * fdot_h[i1]) / s2_h[i1])
        # stage 3
        g3 = gk + 0.5 * h * k2g
        d3 = dk + 0.5 * h * k2d
        k3g = _ric_rhs(g3, a_h[i1], f_h[i1], s2_h[i1], b2_h[i1])
        k3d = (2.0 * adot_h[i1] * g3 + 2.0 * a_h[i1] * d3
               - (2.0 * g3 * d3 * f_h[i1] * f_h[i1]
                  + 2.0 * g3 * g3 * f_h[i1] * fdot_h[i1]) / s2_h[i1])
        # stage 4
        g4 = gk + h * k3g
        d4 = dk + h * k3d
        k4g = _ric_rhs(g4, a_h[i2], f_h[i2], s2_h[i2], b2_h[i2])
        k4d = (2.0 * adot_h[i2] * g4 + 2.0 * a_h[i2] * d4
               - (2.0 * g4 * d4 * f_h[i2] * f_h[i2]
                  + 2.0 * g4 * g4 * f_h[i2] * fdot_h[i2]) / s2_h[i2])
        g[k + 1] = gk + (h / 6.0) * (k1g + 2.0 * k2g + 2.0 * k3g + k4g)
        gd[k + 1] = dk + (h / 6.0) * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
    return g, gd


@njit(cache=True)
def rk4_xy(f_h, a_h, h, n, y0):
    """Noise-free limit system x' = f y, y' = a y."""
    x = np.zeros(n + 1)
    y = np.empty(n + 1)
    y[0] = y0
    for k in range(n):
        i0 = 2 * k
        i1 = i0 + 1
        i2 = i0 + 2
        xk = x[k]
        yk = y[k]
        k1y = a_h[i0] * yk
        k1x = f_h[i0] * yk
        y2 = yk + 0.5 * h * k1y
        k2y = a_h[i1] * y2
        k2x = f_h[i1] * y2
        y3 = yk + 0.5 * h * k2y
        k3y = a_h[i1] * y3
        k3x = f_h[i1] * y3
        y4 = yk + h * k3y
        k4y = a_h[i2] * y4
        k4x = f_h[i2] * y4
        y[k + 1] = yk + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        x[k + 1] = xk + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    return x, y


@njit(cache=True)
def rk4_limit(f_h, fdot_h, a_h, adot_h, s2_h, b2_h, h, n, y0):
    """Joint limit system: x, y, the filter-mean derivative yd, and gamma*.

    yd' = (a - D f) yd + (adot - D fdot) y  with  D = g f / s^2,
    which is the noise-free reduction of the derivative-filter equation.
    """
    x = np.zeros(n + 1)
    y = np.empty(n + 1)
    yd = np.zeros(n + 1)
    g = np.zeros(n + 1)
    y[0] = y0
    for k in range(n):
        i0 = 2 * k
        i1 = i0 + 1
        i2 = i0 + 2
        xk = x[k]
        yk = y[k]
        ydk = yd[k]
        gk = g[k]

        # stage 1
        D = gk * f_h[i0] / s2_h[i0]
        k1x = f_h[i0] * yk
        k1y = a_h[i0] * yk
        k1g = _ric_rhs(gk, a_h[i0], f_h[i0], s2_h[i0], b2_h[i0])
        k1d = (a_h[i0] - D * f_h[i0]) * ydk + (adot_h[i0] - D * fdot_h[i0]) * yk
        # stage 2
        y2 = yk + 0.5 * h * k1y
        yd2 = ydk + 0.5 * h * k1d
        g2 = gk + 0.5 * h * k1g
        D = g2 * f_h[i1] / s2_h[i1]
        k2x = f_h[i1] * y2
        k2y = a_h[i1] * y2
        k2g = _ric_rhs(g2, a_h[i1], f_h[i1], s2_h[i1], b2_h[i1])
        k2d = (a_h[i1] - D * f_h[i1]) * yd2 + (adot_h[i1] - D * fdot_h[i1]) * y2
        # stage 3
        y3 = yk + 0.5 * h * k2y
        yd3 = ydk + 0.5 * h * k2d
        g3 = gk + 0.5 * h * k2g
        D = g3 * f_h[i1] / s2_h[i1]
        k3x = f_h[i1] * y3
        k3y = a_h[i1] * y3
        k3g = _ric_rhs(g3, a_h[i1], f_h[i1], s2_h[i1], b2_h[i1])
        k3d = (a_h[i1] - D * f_h[i1]) * yd3 + (adot_h[i1] - D * fdot_h[i1]) * y3
        # stage 4
        y4 = yk + h * k3y
        yd4 = ydk + h * k3d
        g4 = gk + h * k3g
        D = g4 * f_h[i2] / s2_h[i2]
        k4x = f_h[i2] * y4
        k4y = a_h[i2] * y4
        k4g = _ric_rhs(g4, a_h[i2], f_h[i2], s2_h[i2], b2_h[i2])
        k4d = (a_h[i2] - D * f_h[i2]) * yd4 + (adot_h[i2] - D * fdot_h[i2]) * y4

        x[k + 1] = xk + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y[k + 1] = yk + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        yd[k + 1] = ydk + (h / 6.0) * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
        g[k + 1] = gk + (h / 6.0) * (k1g + 2.0 * k2g + 2.0 * k3g + k4g)
    return x, y, yd, g


@njit(cache=True)
def em_path(f0, a0, sig0, b0, h, eps, y0, xi, eta):
    """Euler-Maruyama discretization of the coupled observation/state pair."""
    n = xi.shape[0]
    sq = np.sqrt(h)
    X = np.zeros(n + 1)
    Y = np.empty(n + 1)
    Y[0] = y0
    for k in range(n):
        Y[k + 1] = Y[k] + a0[k] * Y[k] * h + eps * b0[k] * sq * xi[k]
        X[k + 1] = X[k] + f0[k] * Y[k] * h + eps * sig0[k] * sq * eta[k]
    return X, Y


@njit(cache=True)
def euler_filter(a0, f0, D0, dX, h, m0):
    """Conditional-mean recursion driven by observed increments."""
    n = dX.shape[0]
    m = np.empty(n + 1)
    m[0] = m0
    for k in range(n):
        m[k + 1] = m[k] + (a0[k] - D0[k] * f0[k]) * m[k] * h + D0[k] * dX[k]
    return m


@njit(cache=True)
def euler_filter_dot(a0, adot0, f0, fdot0, D0, Ddot0, dX, h, m0):
    """Mean and its parameter derivative, stepped jointly."""
    n = dX.shape[0]
    m = np.empty(n + 1)
    md = np.zeros(n + 1)
    m[0] = m0
    for k in range(n):
        m[k + 1] = m[k] + (a0[k] - D0[k] * f0[k]) * m[k] * h + D0[k] * dX[k]
        md[k + 1] = (md[k] + (a0[k] - D0[k] * f0[k]) * md[k] * h
                     + Ddot0[k] * dX[k]
                     + (adot0[k] - Ddot0[k] * f0[k] - D0[k] * fdot0[k]) * m[k] * h)
    return m, md


@njit(cache=True)
def adaptive_filter_loop(a_n, a_m, a_p, f_n, f_m, f_p,
                         s2_n, s2_m, s2_p, b2_n, b2_m, b2_p,
                         X, h, k0, m0, g0):
    """Adaptive mean/variance recursion with a per-node frozen parameter.

    Coefficient arrays are pre-evaluated at (theta_k, t_k), (theta_k, t_k + h/2)
    and (theta_k, t_{k+1}); the parameter is held piecewise constant over each
    step, so a run with a constant parameter reproduces the plain filter.
    """
    n = X.shape[0] - 1
    m = np.full(n + 1, np.nan)
    g = np.full(n + 1, np.nan)
    m[k0] = m0
    g[k0] = g0
    for k in range(k0, n):
        gk = g[k]
        D = gk * f_n[k] / s2_n[k]
        dX = X[k + 1] - X[k]
        m[k + 1] = m[k] + (a_n[k] - D * f_n[k]) * m[k] * h + D * dX
        k1 = _ric_rhs(gk, a_n[k], f_n[k], s2_n[k], b2_n[k])
        k2 = _ric_rhs(gk + 0.5 * h * k1, a_m[k], f_m[k], s2_m[k], b2_m[k])
        k3 = _ric_rhs(gk + 0.5 * h * k2, a_m[k], f_m[k], s2_m[k], b2_m[k])
        k4 = _ric_rhs(gk + h * k3, a_p[k], f_p[k], s2_p[k], b2_p[k])
        g[k + 1] = gk + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return m, g
