"""Mesh and time-step refinement studies against the reference solutions."""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import UnsupportedCaseError
from .fields import QUAD4, integrate_values
from .growth import run
from .mesh import build_disk_mesh
from .morphogen import solve_morphogen
from .oracles import expected_volume, integrate_density_ode, radial_morphogen


def observed_orders(errors, ratio=2.0):
    """``log(e_k / e_{k+1}) / log(ratio)`` for consecutive refinements."""
    e = np.asarray(errors, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(e[:-1] / e[1:]) / math.log(ratio)


def _radial_profile(density, radius):
    if density.kind == "constant":
        return lambda r: np.full_like(r, density.value)
    return lambda r: density.amplitude * np.exp(-(r ** 2) / density.width ** 2)


def morphogen_l2_error(mesh, density, radius, center=(0.0, 0.0), n_radial=20_000):
    """L2 distance between the finite element morphogen and the radial reference.

    The reference is evaluated at the degree-4 quadrature points by linear
    interpolation of the radial finite-difference solution.
    """
    w = density.evaluate(mesh)
    u = solve_morphogen(mesh, w).u
    r, ur = radial_morphogen(_radial_profile(density, radius), R=radius, n=n_radial)
    bary, wq = QUAD4
    pts = np.einsum("qk,mkd->mqd", bary, mesh.nodes[mesh.triangles])
    rq = np.hypot(pts[..., 0] - center[0], pts[..., 1] - center[1])
    diff = u.at_bary(bary) - np.interp(rq, r, ur)
    return math.sqrt(integrate_values(mesh, diff ** 2, wq))


def _check_radial(config):
    dom, den = config.domain, config.density
    if dom.kind != "disk":
        raise UnsupportedCaseError(f"no reference solution for domain kind {dom.kind!r}; need a disk")
    if den.kind == "nodal" or (den.kind == "gaussian" and not np.allclose(den.center, dom.center)):
        raise UnsupportedCaseError("density must be constant or radially symmetric about the disk center")


def morphogen_convergence(config, levels=3):
    """Errors and orders for ``h, h/2, h/4`` on the configured disk."""
    _check_radial(config)
    dom = config.domain
    hs = [dom.h / 2 ** k for k in range(levels)]
    errors = []
    for h in hs:
        mesh = build_disk_mesh(dom.radius, h, center=dom.center)
        errors.append(morphogen_l2_error(mesh, config.density, dom.radius, dom.center))
    return hs, errors, observed_orders(errors)


def reference_area(config, area0, t):
    """Area of the growing domain at time ``t`` from the scalar references."""
    den, g = config.density, config.response
    if den.kind == "constant":
        if den.value == 0:
            return area0
        return area0 * den.value / integrate_density_ode(g, den.value, t)
    if g.kind == "linear":
        return None  # needs the initial mass; handled by the caller
    raise UnsupportedCaseError("area reference needs constant density or a linear response")


def dt_convergence(config, levels=3):
    """Run at ``dt, dt/2, dt/4`` and return area errors and lagrangian errors at ``t_end``.

    Returns
    -------
    dts, area_errors, lagrangian_errors : list
    """
    _check_radial(config)
    dts, area_err, lag_err = [], [], []
    for k in range(levels):
        cfg = dataclasses.replace(config, dt=config.dt / 2 ** k)
        result = run(cfg)
        if not result.completed:
            raise UnsupportedCaseError(f"run at dt={cfg.dt:g} stopped early: {result.status}")
        first, last = result.reports[0], result.reports[-1]
        ref = reference_area(cfg, first.area, last.t)
        if ref is None:
            ref = expected_volume(first.area, first.mass / first.area, cfg.response.a, last.t)
        dts.append(cfg.dt)
        area_err.append(abs(last.area - ref))
        lag_err.append(last.lagrangian_density_error)
    return dts, area_err, lag_err
