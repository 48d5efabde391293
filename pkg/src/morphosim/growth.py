"""Time stepping of the growing domain.

One step on the current mesh: solve for the morphogen, turn it into a
growth rate, solve for the velocity, move every node by ``dt * v`` and
push the density forward so that mass is conserved node by node.  The
per-element deformation gradient of the Lagrangian flow map is carried
along so the density can be cross-checked against ``w0 / det F``.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import (
    BreakdownError,
    ConfigError,
    InvalidGeometryError,
    InversionError,
    MorphosimError,
    StepTooLargeError,
)
from .fields import ResponseFunction, ScalarField, integrate, interpolate_points
from .mesh import (
    Mesh,
    boundary_diagnostics,
    build_disk_mesh,
    build_polygon_mesh,
    cassini_boundary,
    element_quality,
    ellipse_boundary,
)
from .morphogen import MorphogenSolution, solve_morphogen
from .velocity import VelocitySolution, solve_velocity, velocity_gradient_bound

logger = logging.getLogger(__name__)

BREAKDOWN_REASONS = ("density-blowup", "curvature-collapse", "mesh-degeneracy")
REMESH_ANGLE_DEG = 10.0


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DomainSpec:
    """Initial domain.  ``kind`` is one of disk, polygon, ellipse, dumbbell."""

    kind: str = "disk"
    h: float = 0.05
    radius: float = 1.0
    center: tuple = (0.0, 0.0)
    vertices: tuple = ()
    semi_axes: tuple = (2.0, 1.0)
    a: float = 1.0
    b: float = 1.05

    def build(self, seed=None):
        if self.kind == "disk":
            return build_disk_mesh(self.radius, self.h, center=self.center, seed=seed)
        if self.kind == "polygon":
            return build_polygon_mesh(np.asarray(self.vertices, dtype=float), self.h, seed=seed)
        if self.kind == "ellipse":
            pts = ellipse_boundary(self.semi_axes, self.h, center=self.center)
            return build_polygon_mesh(pts, self.h, seed=seed)
        if self.kind == "dumbbell":
            pts = cassini_boundary(self.a, self.b, self.h) + np.asarray(self.center, dtype=float)
            return build_polygon_mesh(pts, self.h, seed=seed)
        raise ConfigError(f"unknown domain kind {self.kind!r}", key="domain.kind")


@dataclass(frozen=True)
class DensitySpec:
    """Initial density of signaling cells.

    ``constant``: ``value``; ``gaussian``:
    ``amplitude * exp(-|x - center|^2 / width^2)``; ``nodal``: explicit
    values, one per mesh node.
    """

    kind: str = "constant"
    value: float = 1.0
    center: tuple = (0.0, 0.0)
    width: float = 0.25
    amplitude: float = 1.0
    values: tuple = ()

    def evaluate(self, mesh):
        if self.kind == "constant":
            return ScalarField.constant(mesh, self.value, 1)
        if self.kind == "gaussian":
            c = np.asarray(self.center, dtype=float)
            r2 = np.sum((mesh.nodes - c) ** 2, axis=1)
            return ScalarField(mesh, 1, self.amplitude * np.exp(-r2 / self.width ** 2))
        if self.kind == "nodal":
            if len(self.values) != mesh.n_nodes:
                raise ConfigError(
                    f"nodal density has {len(self.values)} values but the mesh has {mesh.n_nodes} nodes",
                    key="density.values",
                )
            return ScalarField(mesh, 1, np.asarray(self.values, dtype=float))
        raise ConfigError(f"unknown density kind {self.kind!r}", key="density.kind")

    @property
    def is_radial_about(self):
        """Center about which the density is radially symmetric, or None."""
        if self.kind == "constant":
            return "any"
        if self.kind == "gaussian":
            return tuple(self.center)
        return None


@dataclass(frozen=True)
class BreakdownThresholds:
    """Absolute thresholds; ``None`` means derive from the initial report."""

    rad_min: Optional[float] = None
    w_max: Optional[float] = None
    min_angle_deg: Optional[float] = None
    rad_fraction: float = 0.02
    w_factor: float = 1e3
    angle_floor_deg: float = 5.0

    def resolve(self, initial):
        return dataclasses.replace(
            self,
            rad_min=self.rad_fraction * initial.rad_min if self.rad_min is None else self.rad_min,
            w_max=self.w_factor * initial.w_max if self.w_max is None else self.w_max,
            min_angle_deg=self.angle_floor_deg if self.min_angle_deg is None else self.min_angle_deg,
        )


@dataclass(frozen=True)
class OutputPlan:
    """Strides (in steps) for mesh snapshots and stored SVG boundaries; 0 disables."""

    snapshot_every: int = 0
    svg_every: int = 10

    def __post_init__(self):
        for key in ("snapshot_every", "svg_every"):
            val = getattr(self, key)
            if isinstance(val, bool) or not isinstance(val, int) or val < 0:
                raise ConfigError(f"{key} must be a non-negative integer", key=f"output.{key}")


@dataclass(frozen=True)
class SimConfig:
    domain: DomainSpec
    density: DensitySpec
    response: ResponseFunction
    t_end: float
    dt: float = 0.01
    cfl_guard: float = 0.25
    breakdown: BreakdownThresholds = field(default_factory=BreakdownThresholds)
    remesh: bool = False
    deformation_update: str = "exponential"
    output: OutputPlan = field(default_factory=lambda: OutputPlan())
    max_halvings: int = 6

    def __post_init__(self):
        if not (isinstance(self.dt, (int, float)) and self.dt > 0):
            raise ConfigError("dt must be positive", key="dt")
        if not self.t_end >= self.dt:
            raise ConfigError("t_end must be at least dt", key="t_end")
        if not 0 < self.cfl_guard <= 0.5:
            raise ConfigError("cfl_guard must lie in (0, 0.5]", key="cfl_guard")
        if self.deformation_update not in ("exponential", "euler"):
            raise ConfigError("deformation_update must be 'exponential' or 'euler'", key="deformation_update")


# --------------------------------------------------------------------------
# state and reports
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StateFields:
    morphogen: MorphogenSolution
    source: ScalarField
    velocity: VelocitySolution

    @property
    def u(self):
        return self.morphogen.u

    @property
    def v(self):
        return self.velocity.v

    @property
    def p(self):
        return self.velocity.p


@dataclass(frozen=True, eq=False)
class SimState:
    """Mesh, density and Lagrangian bookkeeping at one time.

    ``F`` holds the per-element deformation gradient of the flow map
    relative to the reference configuration, whose element areas and nodal
    density are kept in ``ref_areas`` and ``w0``.
    """

    mesh: Mesh
    w: ScalarField
    t: float = 0.0
    F: np.ndarray = None
    step_index: int = 0
    w0: np.ndarray = None
    ref_areas: np.ndarray = None
    fields: Optional[StateFields] = None

    def __post_init__(self):
        m = self.mesh.n_triangles
        if self.F is None:
            object.__setattr__(self, "F", np.broadcast_to(np.eye(2), (m, 2, 2)).copy())
        if self.w0 is None:
            object.__setattr__(self, "w0", np.array(self.w.values))
        if self.ref_areas is None:
            object.__setattr__(self, "ref_areas", np.array(self.mesh.signed_areas))

    def with_fields(self, fields):
        return dataclasses.replace(self, fields=fields)


@dataclass(frozen=True)
class StepReport:
    step: int
    t: float
    area: float
    mass: float
    u_min: float
    u_max: float
    w_min: float
    w_max: float
    div_residual_l2: float
    rad_min: float
    min_angle: float
    lagrangian_density_error: float
    dt_used: float

    def scalars(self):
        return dataclasses.asdict(self)


@dataclass
class RunResult:
    reports: list
    state: SimState
    status: str
    message: str = ""

    @property
    def completed(self):
        return self.status == "completed"


def initial_state(config, mesh=None, seed=None):
    mesh = config.domain.build(seed=seed) if mesh is None else mesh
    return SimState(mesh, config.density.evaluate(mesh))


def solve_fields(state, response):
    morph = solve_morphogen(state.mesh, state.w)
    source = ScalarField(state.mesh, 1, response(morph.u.values))
    return StateFields(morph, source, solve_velocity(state.mesh, source))


def ensure_fields(state, response):
    return state if state.fields is not None else state.with_fields(solve_fields(state, response))


def make_report(state, dt_used):
    f = state.fields
    mesh = state.mesh
    diag = boundary_diagnostics(mesh)
    u = f.u.values
    return StepReport(
        step=state.step_index,
        t=float(state.t),
        area=mesh.area,
        mass=integrate(state.w),
        u_min=float(u.min()),
        u_max=float(u.max()),
        w_min=float(state.w.values.min()),
        w_max=float(state.w.values.max()),
        div_residual_l2=float(f.velocity.div_residual_l2),
        rad_min=diag.rad_min,
        min_angle=element_quality(mesh),
        lagrangian_density_error=check_lagrangian_density(state),
        dt_used=float(dt_used),
    )


# --------------------------------------------------------------------------
# the four sub-steps
# --------------------------------------------------------------------------

def element_velocity_gradients(mesh, v):
    """Gradient of the piecewise-affine interpolant of the vertex velocities, (m, 2, 2)."""
    vv = v.vertex_values[mesh.triangles]  # (m, 3, 2)
    return np.einsum("mki,mkj->mij", vv, mesh.lambda_gradients)


def advect_mesh(mesh, v, dt, cfl_guard=0.25):
    """Move every node ``x -> x + dt v(x)``; connectivity is kept.

    Raises :class:`StepTooLargeError` when ``dt * max|grad v| > cfl_guard``
    and :class:`InversionError` if an element inverts or the boundary
    self-intersects.
    """
    lip = velocity_gradient_bound(v)
    if dt * lip > cfl_guard:
        raise StepTooLargeError(f"dt * |grad v| = {dt * lip:.4g} exceeds cfl_guard = {cfl_guard}")
    moved = mesh.with_nodes(mesh.nodes + dt * v.vertex_values)
    if np.any(moved.signed_areas <= 0.0):
        raise InversionError("element inverted during advection")
    try:
        moved.validate()
    except InvalidGeometryError as exc:
        raise InversionError(f"advected mesh invalid: {exc}") from None
    return moved


def jacobian_ratios(mesh, moved):
    """Per-element ``det(I + dt grad v)`` and its area-weighted nodal average."""
    det_e = moved.signed_areas / mesh.signed_areas
    det_n = moved.node_areas / mesh.node_areas
    return det_e, det_n


def update_density(w, v, mesh, dt, cfl_guard=0.25, moved=None):
    """Push the density forward: ``w'(x + dt v) = w(x) / det(I + dt grad v)``.

    The nodal Jacobian is the ratio of the barycentric dual areas after and
    before the move, i.e. the area-weighted mean of the element
    determinants.  This makes ``int w`` exactly invariant.
    """
    if moved is None:
        moved = advect_mesh(mesh, v, dt, cfl_guard)
    det_e, det_n = jacobian_ratios(mesh, moved)
    if np.any(det_e <= 0.5) or np.any(det_n <= 0.5):
        raise StepTooLargeError("det(I + dt grad v) <= 1/2")
    return ScalarField(moved, 1, w.values / det_n)


def deformation_increment(G, dt, mode="exponential"):
    """Per-element increment of the flow-map gradient over one step."""
    if mode == "euler":
        return np.eye(2) + dt * G
    return scipy.linalg.expm(dt * G)


def check_lagrangian_density(state, w0=None):
    """Disagreement between the Eulerian density and ``w0 / det F``.

    The Lagrangian Jacobian at a node is the reference-area-weighted mean of
    ``det F`` over adjacent elements.  Returns the max nodal difference
    divided by ``max w0``.
    """
    w0 = state.w0 if w0 is None else np.asarray(getattr(w0, "values", w0), dtype=float)
    scale = float(np.max(np.abs(w0))) if len(w0) else 0.0
    if scale == 0.0:
        return 0.0
    mesh = state.mesh
    detF = np.linalg.det(state.F)
    num = np.zeros(mesh.n_nodes)
    den = np.zeros(mesh.n_nodes)
    tri = mesh.triangles.ravel()
    np.add.at(num, tri, np.repeat(state.ref_areas * detF, 3))
    np.add.at(den, tri, np.repeat(state.ref_areas, 3))
    w_lag = w0 / (num / den)
    return float(np.max(np.abs(state.w.values - w_lag)) / scale)


def remesh_state(state, h, response):
    """Re-triangulate the current boundary, interpolate ``w`` and restore mass.

    The Lagrangian reference is restarted on the new mesh.
    """
    mass = integrate(state.w)
    mesh = build_polygon_mesh(state.mesh.boundary_points, h)
    w = np.clip(interpolate_points(state.w, mesh.nodes), 0.0, None)
    wf = ScalarField(mesh, 1, w)
    new_mass = integrate(wf)
    if new_mass > 0:
        wf = ScalarField(mesh, 1, w * (mass / new_mass))
    logger.info("remeshed at t=%.6g: %d -> %d nodes, mass rescaled by %.12g",
                state.t, state.mesh.n_nodes, mesh.n_nodes, mass / new_mass if new_mass > 0 else 1.0)
    new = SimState(mesh, wf, t=state.t, step_index=state.step_index)
    return new.with_fields(solve_fields(new, response))


def _next_dt(t, config):
    remaining = config.t_end - t
    if remaining >= config.dt or abs(remaining - config.dt) <= 1e-9 * config.dt:
        return config.dt
    return remaining


def step(state, config):
    """Advance one time step; returns ``(new_state, report)``.

    On :class:`StepTooLargeError` the step is retried with ``dt/2`` down to
    ``dt / 2**max_halvings``; beyond that a :class:`BreakdownError` is raised.
    """
    state = ensure_fields(state, config.response)
    v = state.fields.v
    mesh = state.mesh
    dt_target = _next_dt(state.t, config)
    dt = dt_target
    last_error = None
    for _ in range(config.max_halvings + 1):
        try:
            moved = advect_mesh(mesh, v, dt, config.cfl_guard)
            w_new = update_density(state.w, v, mesh, dt, config.cfl_guard, moved=moved)
            break
        except StepTooLargeError as exc:
            last_error = exc
            logger.info("step %d: %s; halving dt %.4g -> %.4g", state.step_index, exc, dt, dt / 2)
            dt /= 2.0
    else:
        raise BreakdownError(
            f"time-step underflow at t={state.t:.6g}: {last_error}",
            reason="mesh-degeneracy",
            diagnostics={"t": state.t, "dt_min": dt_target / 2 ** config.max_halvings},
        )
    G = element_velocity_gradients(mesh, v)
    F = np.einsum("mij,mjk->mik", deformation_increment(G, dt, config.deformation_update), state.F)
    t_new = state.t + dt
    if dt == dt_target and abs(config.t_end - t_new) <= 1e-9 * config.dt:
        t_new = config.t_end
    new = SimState(moved, w_new, t=t_new, F=F, step_index=state.step_index + 1,
                   w0=state.w0, ref_areas=state.ref_areas)
    if config.remesh and element_quality(moved) < REMESH_ANGLE_DEG:
        new = remesh_state(new, config.domain.h, config.response)
    new = ensure_fields(new, config.response)
    return new, make_report(new, dt)


def detect_breakdown(report, config):
    """``"ok"`` or the first breakdown reason triggered by the report."""
    th = config.breakdown if isinstance(config, SimConfig) else config
    vals = report.scalars()
    if not all(math.isfinite(x) for x in vals.values()):
        return "density-blowup" if not math.isfinite(report.w_max) else "mesh-degeneracy"
    if th.w_max is not None and report.w_max > th.w_max:
        return "density-blowup"
    if th.rad_min is not None and report.rad_min < th.rad_min:
        return "curvature-collapse"
    if th.min_angle_deg is not None and report.min_angle < th.min_angle_deg:
        return "mesh-degeneracy"
    return "ok"


def run(config, state=None, callback: Optional[Callable] = None):
    """Iterate :func:`step` until ``t_end`` or breakdown.

    ``callback(state, report)`` is invoked for the initial state and after
    every completed step.  Breakdown never raises: the partial trajectory is
    returned with ``status`` set to the breakdown reason.
    """
    state = initial_state(config) if state is None else state
    state = ensure_fields(state, config.response)
    report = make_report(state, config.dt)
    config = dataclasses.replace(config, breakdown=config.breakdown.resolve(report))
    reports = [report]
    if callback:
        callback(state, report)
    status, message = detect_breakdown(report, config), ""
    while status == "ok" and state.t < config.t_end - 1e-12 * max(1.0, config.t_end):
        try:
            state, report = step(state, config)
        except BreakdownError as exc:
            status, message = exc.reason, str(exc)
            break
        except MorphosimError as exc:
            status, message = "mesh-degeneracy", f"{type(exc).__name__}: {exc}"
            break
        reports.append(report)
        if callback:
            callback(state, report)
        status = detect_breakdown(report, config)
        if status != "ok":
            message = f"{status} at t={report.t:.6g}"
    if status != "ok":
        logger.warning("breakdown: %s", message)
    return RunResult(reports, state, "completed" if status == "ok" else status, message)
