import dataclasses
import math

import numpy as np
import pytest

from morphosim.errors import BreakdownError, ConfigError, StepTooLargeError
from morphosim.fields import ResponseFunction, ScalarField, VectorField, integrate
from morphosim.growth import (
    BreakdownThresholds,
    DensitySpec,
    DomainSpec,
    SimConfig,
    SimState,
    StepReport,
    advect_mesh,
    check_lagrangian_density,
    detect_breakdown,
    element_velocity_gradients,
    ensure_fields,
    remesh_state,
    run,
    step,
    update_density,
)
from morphosim.oracles import density_ode_trajectory

LIN = ResponseFunction.linear(1.0)


def config(**kw):
    base = dict(domain=DomainSpec("disk", h=0.1), density=DensitySpec("constant", value=1.0),
                response=LIN, t_end=0.1, dt=0.01)
    base.update(kw)
    return SimConfig(**base)


def half_x(mesh):
    return VectorField.from_function(mesh, lambda p: 0.5 * p)


def test_advect_scales_disk(disk10):
    moved = advect_mesh(disk10, half_x(disk10), 0.2, cfl_guard=0.5)
    assert np.allclose(moved.nodes, 1.1 * disk10.nodes, rtol=1e-15, atol=1e-15)
    assert moved.area == pytest.approx(1.21 * disk10.area, rel=1e-13)
    assert np.array_equal(moved.triangles, disk10.triangles)


def test_advect_zero_velocity(disk10):
    moved = advect_mesh(disk10, VectorField.zeros(disk10), 0.3)
    assert np.array_equal(moved.nodes, disk10.nodes)


def test_advect_cfl_violation(disk10):
    with pytest.raises(StepTooLargeError):
        advect_mesh(disk10, half_x(disk10), 1.5, cfl_guard=0.25)


def test_update_density_uniform_dilation(disk10):
    w = update_density(ScalarField.constant(disk10, 1.0), half_x(disk10), disk10, 0.1)
    assert np.allclose(w.values, 1 / 1.1025, rtol=1e-13)
    assert w.values[0] == pytest.approx(0.907029, abs=1e-6)


def test_update_density_zero_velocity(disk10):
    w0 = ScalarField.from_function(disk10, lambda p: 1 + p[:, 0] ** 2)
    w = update_density(w0, VectorField.zeros(disk10), disk10, 0.1)
    assert np.array_equal(w.values, w0.values)


def test_ball_one_step():
    cfg = config()
    mesh0 = cfg.domain.build()
    state, report = step(SimState(mesh0, ScalarField.constant(mesh0, 1.0)), cfg)
    one_step = 1 / 1.005 ** 2
    assert np.allclose(state.w.values, one_step, rtol=1e-10)
    # continuum value differs at second order in dt
    assert abs(one_step - 1 / 1.01) < 0.01 ** 2
    assert report.mass == pytest.approx(mesh0.area, rel=1e-9)
    assert report.t == 0.01 and report.dt_used == 0.01 and report.step == 1


def test_zero_density_is_stationary():
    cfg = config(density=DensitySpec("constant", value=0.0))
    mesh = cfg.domain.build()
    state = SimState(mesh, ScalarField.constant(mesh, 0.0))
    new, report = step(state, cfg)
    assert np.array_equal(new.mesh.nodes, mesh.nodes)
    assert not np.any(new.w.values)
    assert new.t == pytest.approx(0.01)
    assert report.area == mesh.area


def test_lshape_gaussian_step(lshape):
    cfg = config(domain=DomainSpec("polygon", h=0.2, vertices=((0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2))),
                 density=DensitySpec("gaussian", center=(0.5, 0.5), width=0.4, amplitude=2.0))
    state = SimState(lshape, cfg.density.evaluate(lshape))
    new, report = step(state, cfg)
    assert all(math.isfinite(x) for x in report.scalars().values())
    assert report.mass == pytest.approx(integrate(state.w), rel=1e-9)
    assert report.area > lshape.area


def test_mass_conserved_per_step_and_cumulative():
    cfg = config(density=DensitySpec("gaussian", center=(0.3, -0.2), width=0.4, amplitude=3.0), t_end=0.3, dt=0.03)
    result = run(cfg)
    masses = np.array([r.mass for r in result.reports])
    assert np.all(np.abs(np.diff(masses)) <= 1e-9 * masses[0])
    assert abs(masses[-1] - masses[0]) <= 1e-6 * masses[0]


def test_saturating_run_tracks_ode():
    g = ResponseFunction.saturating(0.5)
    result = run(config(response=g, t_end=0.5, dt=0.02))
    assert result.completed
    areas = np.array([r.area for r in result.reports])
    assert np.all(np.diff(areas) > 0)
    ts = [r.t for r in result.reports]
    ref = density_ode_trajectory(g, 1.0, ts)
    w_mean = np.array([0.5 * (r.w_min + r.w_max) for r in result.reports])
    assert np.allclose(w_mean, ref, rtol=0.01)


def test_large_dt_is_halved():
    # |grad v0| = 1/2, so dt = 0.6 gives 0.3 > 0.25 and must be halved
    result = run(config(t_end=1.2, dt=0.6))
    assert result.completed
    assert result.reports[1].dt_used == pytest.approx(0.3)
    assert result.reports[-1].t == pytest.approx(1.2)


def test_dt_underflow_is_breakdown():
    cfg = config(cfl_guard=1e-6)
    mesh = cfg.domain.build()
    with pytest.raises(BreakdownError) as info:
        step(SimState(mesh, ScalarField.constant(mesh, 1.0)), cfg)
    assert info.value.reason == "mesh-degeneracy"
    result = run(cfg)
    assert result.status == "mesh-degeneracy" and len(result.reports) == 1


def test_lagrangian_zero_at_start(disk10):
    state = SimState(disk10, ScalarField.from_function(disk10, lambda p: 1 + p[:, 1]))
    assert check_lagrangian_density(state) == 0.0


def test_lagrangian_one_step_exact(lshape):
    cfg = config(deformation_update="euler")
    state = SimState(lshape, ScalarField.from_function(lshape, lambda p: np.exp(-np.sum((p - 0.5) ** 2, axis=1))))
    new, _ = step(state, cfg)
    assert check_lagrangian_density(new, state.w) <= 1e-10


def test_determinant_identity_ball():
    cfg = config(t_end=0.05, dt=0.01)
    mesh = cfg.domain.build()
    state = ensure_fields(SimState(mesh, ScalarField.constant(mesh, 1.0)), cfg.response)
    for _ in range(5):
        G = element_velocity_gradients(state.mesh, state.fields.v)
        div = G[:, 0, 0] + G[:, 1, 1]
        det0 = np.linalg.det(state.F)
        new, rep = step(state, cfg)
        rate = (np.linalg.det(new.F) - det0) / rep.dt_used
        assert np.allclose(rate, det0 * div, rtol=cfg.dt)
        state = new


def _report(**kw):
    base = dict(step=0, t=0.0, area=1.0, mass=1.0, u_min=0.0, u_max=1.0, w_min=0.0, w_max=1.0,
                div_residual_l2=0.0, rad_min=1.0, min_angle=40.0, lagrangian_density_error=0.0, dt_used=0.01)
    base.update(kw)
    return StepReport(**base)


def test_detect_breakdown_thresholds():
    cfg = config(breakdown=BreakdownThresholds(rad_min=0.1, w_max=10.0, min_angle_deg=5.0))
    assert detect_breakdown(_report(), cfg) == "ok"
    assert detect_breakdown(_report(rad_min=0.05), cfg) == "curvature-collapse"
    assert detect_breakdown(_report(w_max=11.0), cfg) == "density-blowup"
    assert detect_breakdown(_report(min_angle=2.0), cfg) == "mesh-degeneracy"
    assert detect_breakdown(_report(w_max=float("nan")), cfg) == "density-blowup"


def test_ball_reports_ok():
    result = run(config(t_end=0.2, dt=0.02))
    assert result.status == "completed"
    assert len(result.reports) == 11
    for r in result.reports:
        assert r.u_min == pytest.approx(1 / (1 + r.t), rel=0.02)


def test_immediate_breakdown():
    result = run(config(breakdown=BreakdownThresholds(rad_min=5.0)))
    assert result.status == "curvature-collapse"
    assert len(result.reports) == 1


def test_remesh_restores_mass_and_reference():
    cfg = config(density=DensitySpec("gaussian", center=(0.2, 0.0), width=0.5, amplitude=1.0), t_end=0.04, dt=0.02)
    res = run(cfg)
    state = res.state
    new = remesh_state(state, 0.1, cfg.response)
    assert integrate(new.w) == pytest.approx(integrate(state.w), rel=1e-12)
    assert check_lagrangian_density(new) == 0.0
    assert new.t == state.t


def test_remesh_option_runs():
    cfg = config(remesh=True, t_end=0.04, dt=0.02)
    assert run(cfg).completed


def test_config_validation():
    with pytest.raises(ConfigError):
        config(dt=-0.1)
    with pytest.raises(ConfigError):
        config(t_end=0.001)
    with pytest.raises(ConfigError):
        config(cfl_guard=0.8)


def test_run_is_deterministic():
    cfg = config(density=DensitySpec("gaussian", center=(0.1, 0.1), width=0.5), t_end=0.04, dt=0.02)
    a, b = run(cfg), run(cfg)
    assert [dataclasses.astuple(r) for r in a.reports] == [dataclasses.astuple(r) for r in b.reports]
