"""Independent reference solutions.

Closed-form and one-dimensional numerical references for radially
symmetric growth: the spatially uniform density ODE, the self-similar
ball solution, the linear volume law, and a radial finite-difference
solver for the morphogen equation.  None of these reuse the 2-D finite
element code.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .fields import ResponseFunction

ODE_DT = 1e-4


def integrate_density_ode(g, w0, t, dt=ODE_DT):
    """Classical RK4 for ``w' = -g(w) w``, ``w(0) = w0``, evaluated at time ``t``."""
    if w0 < 0 or dt <= 0:
        raise ValueError("need w0 >= 0 and dt > 0")
    if t <= 0 or w0 == 0:
        return float(w0)
    n = max(1, math.ceil(t / dt - 1e-12))
    h = t / n
    f = g.scalar
    w = float(w0)
    for _ in range(n):
        k1 = -f(w) * w
        y = w + 0.5 * h * k1
        k2 = -f(y) * y
        y = w + 0.5 * h * k2
        k3 = -f(y) * y
        y = w + h * k3
        k4 = -f(y) * y
        w += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return w


def density_ode_trajectory(g, w0, times, dt=ODE_DT):
    """RK4 solution at an increasing sequence of times (restarts between samples)."""
    out, w, t_prev = [], float(w0), 0.0
    for t in times:
        w = integrate_density_ode(g, w, t - t_prev, dt) if t > t_prev else w
        out.append(w)
        t_prev = max(t, t_prev)
    return np.array(out)


@dataclass(frozen=True)
class BallOracle:
    """Uniform density ``w0`` on a ball of radius ``r0`` in dimension ``d``."""

    w0: float
    response: ResponseFunction
    r0: float = 1.0
    d: int = 2

    def __post_init__(self):
        if self.w0 < 0 or self.r0 <= 0:
            raise ValueError("need w0 >= 0 and r0 > 0")


@dataclass(frozen=True)
class BallSolution:
    w: float
    u: float
    radius_scale: float
    v_coefficient: float
    p: float

    @property
    def radius(self):
        return self.radius_scale


def ball_solution(oracle, t, dt=ODE_DT):
    """Self-similar solution: ``u = w(t)``, ``v = (g(w)/d) x``, ``p = g(w)/d``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if oracle.w0 == 0:
        return BallSolution(0.0, 0.0, 1.0, 0.0, 0.0)
    w = integrate_density_ode(oracle.response, oracle.w0, t, dt)
    gw = oracle.response.scalar(w)
    return BallSolution(
        w=w,
        u=w,
        radius_scale=(oracle.w0 / w) ** (1.0 / oracle.d),
        v_coefficient=gw / oracle.d,
        p=gw / oracle.d,
    )


def expected_volume(area0, kappa0, a, t):
    """Volume under linear response ``g(u) = a u``: grows at the constant rate ``a kappa0 area0``."""
    return area0 * (1.0 + kappa0 * a * t)


def radial_morphogen(w_of_r, R=1.0, n=10_000):
    """Finite-difference solve of ``u'' + u'/r - u = -w`` on ``[0, R]`` with ``u'(0) = u'(R) = 0``.

    Parameters
    ----------
    w_of_r : callable or array of length ``n + 1``
        Density as a function of radius, or its values on the grid.
    R : float
        Outer radius.
    n : int
        Number of intervals (``n >= 100``).

    Returns
    -------
    r, u : ndarray
        Grid ``r_j = j R / n`` and the solution values.
    """
    if n < 100:
        raise ValueError("radial grid needs n >= 100")
    r = np.linspace(0.0, R, n + 1)
    w = np.asarray(w_of_r(r) if callable(w_of_r) else w_of_r, dtype=float)
    if w.shape != r.shape or not np.all(np.isfinite(w)):
        raise ValueError("density table must be finite with n + 1 entries")
    dr = R / n
    inv = 1.0 / (dr * dr)
    lower = np.zeros(n + 1)  # coefficient of u_{j-1}
    diag = np.zeros(n + 1)
    upper = np.zeros(n + 1)  # coefficient of u_{j+1}
    j = np.arange(1, n)
    lower[j] = inv - 1.0 / (2.0 * r[j] * dr)
    upper[j] = inv + 1.0 / (2.0 * r[j] * dr)
    diag[j] = -2.0 * inv - 1.0
    # symmetry at the origin: lap u(0) ~ 4 (u1 - u0) / dr^2
    diag[0] = -4.0 * inv - 1.0
    upper[0] = 4.0 * inv
    # Neumann at R through a mirrored ghost node
    diag[n] = -2.0 * inv - 1.0
    lower[n] = 2.0 * inv
    ab = np.zeros((3, n + 1))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    u = solve_banded((1, 1), ab, -w)
    return r, u
