import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from morphosim.fields import ResponseFunction
from morphosim.oracles import (
    BallOracle,
    ball_solution,
    density_ode_trajectory,
    expected_volume,
    integrate_density_ode,
    radial_morphogen,
)

LIN = ResponseFunction.linear(1.0)


def test_linear_ode_closed_form():
    assert integrate_density_ode(LIN, 1.0, 1.0) == pytest.approx(0.5, abs=1e-8)


def test_zero_response_keeps_w0():
    assert integrate_density_ode(ResponseFunction.linear(0.0), 0.7, 12.3) == 0.7


def test_threshold_limit():
    g = ResponseFunction.threshold(a=1.0, c=0.5, s0=0.05)
    fine = integrate_density_ode(g, 1.0, 50.0, dt=1e-4)
    assert abs(fine - 0.5) <= 1e-3
    assert fine > 0.5
    # the fine-step reference at dt/100 agrees with the default step
    assert integrate_density_ode(g, 1.0, 50.0, dt=1e-2) == pytest.approx(fine, abs=1e-8)


def test_ball_at_zero():
    g = ResponseFunction.saturating(1.5)
    s = ball_solution(BallOracle(2.0, g), 0.0)
    assert s.w == 2.0 and s.radius_scale == 1.0
    assert s.v_coefficient == pytest.approx(g(2.0) / 2)


@pytest.mark.parametrize("t,w,scale", [(1.0, 0.5, math.sqrt(2)), (3.0, 0.25, 2.0)])
def test_ball_linear(t, w, scale):
    s = ball_solution(BallOracle(1.0, LIN), t)
    assert s.w == pytest.approx(w, abs=1e-10)
    assert s.radius_scale == pytest.approx(scale, rel=1e-10)
    assert s.v_coefficient == pytest.approx(w / 2, abs=1e-10)
    assert s.p == pytest.approx(w / 2, abs=1e-10)


def test_expected_volume():
    assert expected_volume(math.pi, 1.0, 1.0, 1.0) == pytest.approx(2 * math.pi, rel=1e-15)
    assert expected_volume(2.0, 3.0, 0.0, 9.0) == 2.0
    assert expected_volume(2.0, 3.0, 1.0, 0.0) == 2.0


def test_radial_constant():
    r, u = radial_morphogen(lambda r: np.ones_like(r), n=10_000)
    assert np.allclose(u, 1.0, atol=1e-8)


def _gauss(r):
    return np.exp(-r ** 2 / 0.08)


def test_radial_self_convergence():
    n = 1000
    u = [radial_morphogen(_gauss, n=k * n)[1][:: k] for k in (1, 2, 4)]
    ratio = np.max(np.abs(u[0] - u[1])) / np.max(np.abs(u[1] - u[2]))
    assert ratio == pytest.approx(4.0, abs=0.5)


def test_radial_integral_identity():
    r, u = radial_morphogen(_gauss, n=10_000)
    lhs = np.trapezoid(u * r, r)
    rhs = np.trapezoid(_gauss(r) * r, r)
    assert lhs == pytest.approx(rhs, rel=1e-6)


@settings(max_examples=20, deadline=None)
@given(w0=st.floats(0.01, 5.0), g_max=st.floats(0.1, 3.0))
def test_ode_monotone_positive(w0, g_max):
    ts = np.linspace(0, 4, 9)
    w = density_ode_trajectory(ResponseFunction.saturating(g_max), w0, ts, dt=1e-3)
    assert np.all(np.diff(w) <= 0) and np.all(w > 0)


@settings(max_examples=10, deadline=None)
@given(a=st.floats(0.1, 2.0), w0=st.floats(0.1, 3.0), t=st.floats(0.0, 10.0))
def test_ball_consistency(a, w0, t):
    g = ResponseFunction.linear(a)
    s = ball_solution(BallOracle(w0, g), t)
    assert s.w == pytest.approx(w0 / (1 + a * w0 * t), abs=1e-8)
    area = math.pi * s.radius_scale ** 2
    assert area == pytest.approx(expected_volume(math.pi, w0, a, t), rel=1e-8)
