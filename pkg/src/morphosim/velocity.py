"""Growth velocity: divergence-constrained minimisation of the strain energy.

The velocity ``v`` minimises ``1/2 int |sym grad v|^2`` subject to
``div v = source``.  Its Euler-Lagrange system is a Stokes-like saddle
problem with traction-free boundary, discretised with Taylor-Hood
elements (quadratic velocity, linear pressure).  The rigid-motion null
space is removed by three Lagrange multipliers enforcing zero mean
velocity and zero mean rotation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import QUAD4, ScalarField, VectorField, basis_gradients, basis_values, integrate_values
from .sparse import TripletAccumulator, compress, solve_symmetric_indefinite

VERTEX_BARY = np.eye(3)


@dataclass(frozen=True)
class VelocitySolution:
    v: VectorField
    p: ScalarField
    div_residual_l2: float
    rigid_projection_norm: float


def _element_data(mesh):
    bary, wq = QUAD4
    dphi = basis_gradients(mesh, 2, bary)  # (m, nq, 6, 2)
    phi2 = basis_values(2, bary)  # (nq, 6)
    phi1 = basis_values(1, bary)  # (nq, 3)
    jw = mesh.signed_areas[:, None] * wq[None, :]  # (m, nq)
    return dphi, phi1, phi2, jw


def assemble_saddle(mesh, source):
    """Saddle matrix and right-hand side.

    Unknown layout: ``[v_x (n2), v_y (n2), p (n1), lambda (3)]``.
    """
    n1, n2 = mesh.n_nodes, mesh.n_p2
    N = 2 * n2 + n1 + 3
    dphi, phi1, phi2, jw = _element_data(mesh)
    cells2 = mesh.p2_cells
    cells1 = mesh.triangles
    m = mesh.n_triangles
    acc = TripletAccumulator(N)

    # strain energy blocks: 1/2 (delta_cd grad a . grad b + d_d a * d_c b)
    gg = np.einsum("mq,mqad,mqbd->mab", jw, dphi, dphi)
    for c in range(2):
        for d in range(2):
            cross = np.einsum("mq,mqa,mqb->mab", jw, dphi[..., d], dphi[..., c])
            block = 0.5 * (cross + (gg if c == d else 0.0))
            rows = c * n2 + np.repeat(cells2, 6, axis=1)
            cols = d * n2 + np.tile(cells2, (1, 6))
            acc.add_block(rows, cols, block.reshape(m, 36))

    # pressure-divergence coupling, B[k, (d, b)] = -int q_k d_d phi_b
    for d in range(2):
        blk = -np.einsum("mq,qk,mqb->mkb", jw, phi1, dphi[..., d])
        prow = 2 * n2 + np.repeat(cells1, 6, axis=1)
        vcol = d * n2 + np.tile(cells2, (1, 3))
        acc.add_block(prow, vcol, blk.reshape(m, 18))
        acc.add_block(vcol, prow, blk.reshape(m, 18))

    # rigid-motion multipliers: int v_x, int v_y, int (d1 v_y - d2 v_x)
    ell = 2 * n2 + n1
    scale = 1.0 / mesh.area
    ints = np.einsum("mq,qb->mb", jw, phi2) * scale
    rot_y = np.einsum("mq,mqb->mb", jw, dphi[..., 0]) * scale
    rot_x = -np.einsum("mq,mqb->mb", jw, dphi[..., 1]) * scale
    for row, cols, vals in (
        (ell, cells2, ints),
        (ell + 1, n2 + cells2, ints),
        (ell + 2, n2 + cells2, rot_y),
        (ell + 2, cells2, rot_x),
    ):
        r = np.full(vals.size, row)
        acc.add_block(r, cols.ravel(), vals.ravel())
        acc.add_block(cols.ravel(), r, vals.ravel())

    rhs = np.zeros(N)
    s_q = source.at_bary(QUAD4[0])  # (m, nq)
    np.add.at(rhs, 2 * n2 + cells1, -np.einsum("mq,qk,mq->mk", jw, phi1, s_q))
    return compress(acc), rhs


def div_residual_l2(v, source):
    bary, wq = QUAD4
    jac = v.jacobian_at(bary)
    div = jac[..., 0, 0] + jac[..., 1, 1]
    return math.sqrt(max(integrate_values(v.mesh, (div - source.at_bary(bary)) ** 2, wq), 0.0))


def _rigid_part(v):
    """Mean velocity, skew rate and centroid of a vector field."""
    mesh = v.mesh
    bary, wq = QUAD4
    area = mesh.area
    vq = v.at_bary(bary)
    vmean = np.array([integrate_values(mesh, vq[..., i], wq) for i in range(2)]) / area
    jac = v.jacobian_at(bary)
    omega = 0.5 * integrate_values(mesh, jac[..., 1, 0] - jac[..., 0, 1], wq) / area
    xq = mesh.nodes[mesh.triangles]
    xq = np.einsum("qk,mkd->mqd", bary, xq)
    centroid = np.array([integrate_values(mesh, xq[..., i], wq) for i in range(2)]) / area
    return vmean, omega, centroid


def rigid_normalize(v, mesh=None):
    """Subtract the rigid motion ``A x + b`` so that ``mean v = 0`` and ``skew mean grad v = 0``."""
    mesh = v.mesh if mesh is None else mesh
    vmean, omega, centroid = _rigid_part(v)
    pts = v.mesh.p2_points if v.degree == 2 else v.mesh.nodes
    rel = pts - centroid
    rigid = vmean + omega * np.column_stack([-rel[:, 1], rel[:, 0]])
    return VectorField(mesh, v.degree, v.values - rigid)


def _rigid_norm(v, w):
    """L2 norm of the difference of two fields."""
    bary, wq = QUAD4
    d = v.at_bary(bary) - w.at_bary(bary)
    return math.sqrt(max(integrate_values(v.mesh, np.sum(d * d, axis=-1), wq), 0.0))


def solve_velocity(mesh, source):
    """Energy-minimising velocity with ``div v = source`` and traction-free boundary.

    Parameters
    ----------
    mesh : Mesh
    source : ScalarField
        Degree-1 growth rate ``g(u)``.

    Returns
    -------
    VelocitySolution
        Rigidly normalised velocity (degree 2), pressure (degree 1), the
        L2 norm of ``div v - source`` and the size of the rigid component
        removed after the solve.
    """
    if source.mesh is not mesh or source.degree != 1:
        raise ValueError("source must be a degree-1 field on the same mesh")
    n1, n2 = mesh.n_nodes, mesh.n_p2
    if not np.any(source.values):
        v = VectorField.zeros(mesh, 2)
        return VelocitySolution(v, ScalarField.constant(mesh, 0.0, 1), 0.0, 0.0)
    K, rhs = assemble_saddle(mesh, source)
    x = solve_symmetric_indefinite(K, rhs)
    vraw = VectorField(mesh, 2, np.column_stack([x[:n2], x[n2:2 * n2]]))
    p = ScalarField(mesh, 1, x[2 * n2:2 * n2 + n1])
    v = rigid_normalize(vraw)
    return VelocitySolution(v, p, div_residual_l2(v, source), _rigid_norm(vraw, v))


def energy(v, mesh=None):
    """Strain energy ``1/2 int |sym grad v|^2``."""
    bary, wq = QUAD4
    jac = v.jacobian_at(bary)
    sym = 0.5 * (jac + np.swapaxes(jac, -1, -2))
    return 0.5 * integrate_values(v.mesh, np.sum(sym * sym, axis=(-1, -2)), wq)


def gradient_l2(v, remove_skew_mean=True):
    bary, wq = QUAD4
    jac = v.jacobian_at(bary)
    if remove_skew_mean:
        _, omega, _ = _rigid_part(v)
        jac = jac - np.array([[0.0, -omega], [omega, 0.0]])
    return math.sqrt(max(integrate_values(v.mesh, np.sum(jac * jac, axis=(-1, -2)), wq), 0.0))


def stability_bound_check(solution, u):
    """Ratio of ``||grad v - skew mean|| + ||p - mean p||`` to ``||u||`` (all L2)."""
    from .fields import l2_norm, mean

    p = solution.p
    p0 = ScalarField(p.mesh, p.degree, p.values - mean(p))
    num = gradient_l2(solution.v) + l2_norm(p0)
    return num / max(l2_norm(u), 1e-30)


def velocity_gradient_bound(v):
    """Max over elements and vertices of the spectral norm of ``grad v``."""
    jac = v.jacobian_at(VERTEX_BARY)
    if jac.size == 0:
        return 0.0
    return float(np.max(np.linalg.norm(jac, ord=2, axis=(-2, -1))))
