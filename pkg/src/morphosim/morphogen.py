"""Stationary morphogen concentration: Neumann diffusion-absorption solve."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDensityError
from .fields import ScalarField, integrate
from .sparse import TripletAccumulator, compress, solve_spd

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MorphogenSolution:
    u: ScalarField
    residual_l2: float
    min_value: float


def p1_matrices(mesh):
    """Assembled P1 stiffness and consistent mass matrices (lower-triangle storage)."""
    g = mesh.lambda_gradients
    area = mesh.signed_areas
    k_loc = area[:, None, None] * np.einsum("mid,mjd->mij", g, g)
    m_loc = area[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))[None]
    rows = np.repeat(mesh.triangles, 3, axis=1)
    cols = np.tile(mesh.triangles, (1, 3))
    out = []
    for loc in (k_loc, m_loc):
        acc = TripletAccumulator(mesh.n_nodes)
        acc.add_block(rows, cols, loc.reshape(len(area), 9))
        out.append(compress(acc))
    return out


def solve_morphogen(mesh, w):
    """Galerkin solution of ``-lap u + u = w`` with zero Neumann data.

    Equivalently the minimiser over P1 fields of
    ``int |grad u|^2/2 + u^2/2 - w u``.
    """
    if w.mesh is not mesh:
        raise ValueError("density lives on a different mesh")
    if w.degree != 1:
        raise ValueError("density must be a degree-1 field")
    wv = w.values
    scale = max(1.0, float(np.max(np.abs(wv))) if len(wv) else 0.0)
    if np.any(wv < -1e-12 * scale):
        raise InvalidDensityError(f"density has negative nodal values (min {wv.min():.3g})")
    stiff, mass = p1_matrices(mesh)
    A = stiff.full() + mass.full()
    rhs = mass.full() @ wv
    if not np.any(rhs):
        u = np.zeros(mesh.n_nodes)
    else:
        u = solve_spd(A, rhs)
    residual = float(np.linalg.norm(A @ u - rhs))
    umin = float(u.min())
    if umin < -1e-9 * max(1.0, float(u.max())):
        logger.warning("discrete maximum principle violated: min u = %.3e", umin)
    return MorphogenSolution(ScalarField(mesh, 1, u), residual, umin)


def morphogen_balance(mesh, u, w):
    """``int u - int w``; vanishes for the Neumann problem."""
    if u.mesh is not mesh or w.mesh is not mesh:
        raise ValueError("fields live on a different mesh")
    return integrate(u) - integrate(w)
