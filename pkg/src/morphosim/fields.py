"""Linear and quadratic Lagrange fields on a :class:`~morphosim.mesh.Mesh`.

Degree-1 fields carry one value per mesh node.  Degree-2 fields carry one
value per node followed by one per edge (at the edge midpoint, in the
order of ``mesh.edges``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import OutOfDomainError
from .mesh import Mesh, segment_distances

# Quadrature rules on the reference triangle: barycentric points, weights summing to 1.
_A = 0.44594849091596488632
_B = 0.091576213509770743460
_WA = 0.22338158967801146570
_WB = 0.10995174365532186764

QUAD2 = (
    np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
    np.full(3, 1 / 3),
)
QUAD4 = (
    np.array([
        [1 - 2 * _A, _A, _A], [_A, 1 - 2 * _A, _A], [_A, _A, 1 - 2 * _A],
        [1 - 2 * _B, _B, _B], [_B, 1 - 2 * _B, _B], [_B, _B, 1 - 2 * _B],
    ]),
    np.array([_WA] * 3 + [_WB] * 3),
)


def quadrature(degree):
    """Rule exact for polynomials of the given total degree (2 or 4)."""
    return QUAD2 if degree <= 2 else QUAD4


def basis_values(degree, bary):
    """Shape functions at barycentric points; shape (nq, 3) or (nq, 6)."""
    lam = np.atleast_2d(bary)
    if degree == 1:
        return lam.copy()
    l0, l1, l2 = lam[:, 0], lam[:, 1], lam[:, 2]
    return np.column_stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
    ])


def basis_gradients(mesh, degree, bary):
    """Physical shape-function gradients, shape (m, nq, nb, 2)."""
    lam = np.atleast_2d(bary)
    g = mesh.lambda_gradients  # (m, 3, 2)
    nq = len(lam)
    if degree == 1:
        return np.broadcast_to(g[:, None, :, :], (len(g), nq, 3, 2))
    # d/dlam_k of each P2 basis function, (nq, 6, 3)
    dl = np.zeros((nq, 6, 3))
    for i in range(3):
        dl[:, i, i] = 4 * lam[:, i] - 1
    for k, (i, j) in enumerate([(0, 1), (1, 2), (2, 0)]):
        dl[:, 3 + k, i] = 4 * lam[:, j]
        dl[:, 3 + k, j] = 4 * lam[:, i]
    return np.einsum("qbk,mkd->mqbd", dl, g)


def _dofs(mesh, degree):
    return mesh.triangles if degree == 1 else mesh.p2_cells


def dof_points(mesh, degree):
    return mesh.nodes if degree == 1 else mesh.p2_points


@dataclass(frozen=True, eq=False)
class ScalarField:
    mesh: Mesh
    degree: int
    values: np.ndarray

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        vals = np.array(self.values, dtype=float).ravel()
        n = self.mesh.n_nodes if self.degree == 1 else self.mesh.n_p2
        if len(vals) != n:
            raise ValueError(f"expected {n} values for a degree-{self.degree} field, got {len(vals)}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, mesh, value, degree=1):
        n = mesh.n_nodes if degree == 1 else mesh.n_p2
        return cls(mesh, degree, np.full(n, float(value)))

    @classmethod
    def from_function(cls, mesh, func, degree=1):
        """Nodal interpolant of ``func(points) -> values`` (points shape (n, 2))."""
        return cls(mesh, degree, func(dof_points(mesh, degree)))

    @property
    def vertex_values(self):
        return self.values[: self.mesh.n_nodes]

    def at_bary(self, bary):
        """Values at barycentric points of every element, shape (m, nq)."""
        phi = basis_values(self.degree, bary)
        return self.values[_dofs(self.mesh, self.degree)] @ phi.T


@dataclass(frozen=True, eq=False)
class VectorField:
    mesh: Mesh
    degree: int
    values: np.ndarray

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        vals = np.array(self.values, dtype=float).reshape(-1, 2)
        n = self.mesh.n_nodes if self.degree == 1 else self.mesh.n_p2
        if len(vals) != n:
            raise ValueError(f"expected {n} values for a degree-{self.degree} field, got {len(vals)}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, mesh, func, degree=2):
        return cls(mesh, degree, func(dof_points(mesh, degree)))

    @classmethod
    def zeros(cls, mesh, degree=2):
        n = mesh.n_nodes if degree == 1 else mesh.n_p2
        return cls(mesh, degree, np.zeros((n, 2)))

    def component(self, i):
        return ScalarField(self.mesh, self.degree, self.values[:, i])

    @property
    def vertex_values(self):
        return self.values[: self.mesh.n_nodes]

    def at_bary(self, bary):
        """Values at barycentric points of every element, shape (m, nq, 2)."""
        phi = basis_values(self.degree, bary)
        return np.einsum("mbd,qb->mqd", self.values[_dofs(self.mesh, self.degree)], phi)

    def jacobian_at(self, bary):
        """Velocity gradient ``J[..., i, j] = d v_i / d x_j`` at barycentric points, (m, nq, 2, 2)."""
        dphi = basis_gradients(self.mesh, self.degree, bary)
        return np.einsum("mbi,mqbj->mqij", self.values[_dofs(self.mesh, self.degree)], dphi)


# --------------------------------------------------------------------------
# integration, gradients, point evaluation
# --------------------------------------------------------------------------

def integrate_values(mesh, values_at_q, weights):
    """Sum of area-weighted quadrature values; ``values_at_q`` shape (m, nq)."""
    return float(np.sum(mesh.signed_areas * (values_at_q @ weights)))


def integrate(f):
    """Exact integral of a degree-1 or degree-2 scalar field."""
    bary, w = quadrature(2 * f.degree)
    return integrate_values(f.mesh, f.at_bary(bary), w)


def mean(f):
    return integrate(f) / f.mesh.area


def l2_norm(f):
    bary, w = quadrature(2 * f.degree)
    return math.sqrt(max(integrate_values(f.mesh, f.at_bary(bary) ** 2, w), 0.0))


def gradient(f, bary=None):
    """Element gradients of a scalar field.

    Degree 1 gives one constant gradient per triangle, shape (m, 2).
    Degree 2 gives gradients at ``bary`` (default: the degree-4 quadrature
    points), shape (m, nq, 2).
    """
    if f.degree == 1 and bary is None:
        return np.einsum("mb,mbd->md", f.values[f.mesh.triangles], f.mesh.lambda_gradients)
    if bary is None:
        bary = QUAD4[0]
    dphi = basis_gradients(f.mesh, f.degree, bary)
    return np.einsum("mb,mqbd->mqd", f.values[_dofs(f.mesh, f.degree)], dphi)


def _barycentric(mesh, tri_idx, pts):
    p = mesh.nodes[mesh.triangles[tri_idx]]  # (k, 3, 2)
    g = mesh.lambda_gradients[tri_idx]  # (k, 3, 2)
    rel = pts - p[:, 0]
    l12 = np.einsum("kjd,kd->kj", g[:, 1:], rel)
    return np.column_stack([1.0 - l12.sum(axis=1), l12])


def locate(mesh, points, tol=1e-9, k_candidates=12):
    """Containing triangle and barycentric coordinates for each point.

    Points within ``tol`` of the mesh are snapped into the nearest element;
    anything farther raises :class:`OutOfDomainError`.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    cen = mesh.nodes[mesh.triangles].mean(axis=1)
    k = min(k_candidates, mesh.n_triangles)
    _, cand = cKDTree(cen).query(pts, k=k)
    cand = np.asarray(cand).reshape(len(pts), k)
    tri = np.empty(len(pts), dtype=np.int64)
    bary = np.empty((len(pts), 3))
    best = np.full(len(pts), -np.inf)
    for c in range(k):
        lam = _barycentric(mesh, cand[:, c], pts)
        score = lam.min(axis=1)
        better = score > best
        best[better] = score[better]
        tri[better] = cand[better, c]
        bary[better] = lam[better]
    for i in np.nonzero(best < -1e-12)[0]:
        lam = _barycentric(mesh, np.arange(mesh.n_triangles), np.broadcast_to(pts[i], (mesh.n_triangles, 2)))
        j = int(np.argmax(lam.min(axis=1)))
        tri[i], bary[i], best[i] = j, lam[j], lam[j].min()
        if best[i] >= -1e-12:
            continue
        bp = mesh.boundary_points
        dist = segment_distances(pts[i], bp, np.roll(bp, -1, axis=0)).min()
        if dist > tol:
            raise OutOfDomainError(f"point {pts[i].tolist()} lies {dist:.3g} outside the mesh")
        lam = np.clip(lam[j], 0.0, None)
        bary[i] = lam / lam.sum()
    return tri, bary


def interpolate_points(f, points):
    """Evaluate a scalar field at many points."""
    tri, bary = locate(f.mesh, points)
    phi = basis_values(f.degree, bary)  # (k, nb)
    return np.einsum("kb,kb->k", f.values[_dofs(f.mesh, f.degree)[tri]], phi)


def interpolate_at(f, point):
    """Evaluate a scalar field at one point."""
    return float(interpolate_points(f, np.asarray(point, dtype=float).reshape(1, 2))[0])


# --------------------------------------------------------------------------
# growth response
# --------------------------------------------------------------------------

def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10.0 - 15.0 * x + 6.0 * x * x)


def _smoothstep_prime(x):
    inside = (x > 0.0) & (x < 1.0)
    xc = np.clip(x, 0.0, 1.0)
    return np.where(inside, 30.0 * xc * xc * (1.0 - xc) ** 2, 0.0)


@dataclass(frozen=True)
class ResponseFunction:
    """Growth response ``g`` turning morphogen concentration into volumetric growth.

    ``linear``: ``a*s``; ``saturating``: ``g_max*(1 - exp(-s/g_max))``;
    ``threshold``: ``a*smoothstep((s - c)/s0)`` with the quintic C2 smoothstep.
    """

    kind: str
    a: float = 1.0
    g_max: float = 1.0
    c: float = 0.0
    s0: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "saturating", "threshold"):
            raise ValueError(f"unknown response kind {self.kind!r}")
        if self.kind == "saturating" and not self.g_max > 0:
            raise ValueError("g_max must be positive")
        if self.kind == "threshold" and not self.s0 > 0:
            raise ValueError("s0 must be positive")

    @classmethod
    def linear(cls, a=1.0):
        return cls("linear", a=float(a))

    @classmethod
    def saturating(cls, g_max=1.0):
        return cls("saturating", g_max=float(g_max))

    @classmethod
    def threshold(cls, a=1.0, c=0.5, s0=0.05):
        return cls("threshold", a=float(a), c=float(c), s0=float(s0))

    def __call__(self, s):
        if np.ndim(s) == 0:
            return self.scalar(float(s))
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            return self.a * s
        if self.kind == "saturating":
            return self.g_max * -np.expm1(-s / self.g_max)
        return self.a * _smoothstep((s - self.c) / self.s0)

    def scalar(self, s):
        """Fast path for Python floats (used by the ODE oracle)."""
        if self.kind == "linear":
            return self.a * s
        if self.kind == "saturating":
            return -self.g_max * math.expm1(-s / self.g_max)
        x = (s - self.c) / self.s0
        if x <= 0.0:
            return 0.0
        if x >= 1.0:
            return self.a
        return self.a * x ** 3 * (10.0 - 15.0 * x + 6.0 * x * x)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            return np.full_like(s, self.a)
        if self.kind == "saturating":
            return np.exp(-s / self.g_max)
        return self.a / self.s0 * _smoothstep_prime((s - self.c) / self.s0)

    def lipschitz(self, u_max):
        """Lipschitz constant of ``g`` on ``[0, u_max]``."""
        if self.kind == "linear":
            return abs(self.a)
        if self.kind == "saturating":
            return 1.0
        lo, hi = -self.c / self.s0, (u_max - self.c) / self.s0
        peak = 0.5 if lo <= 0.5 <= hi else min(max(0.5, lo), hi)
        return abs(self.a) / self.s0 * float(_smoothstep_prime(np.array(peak)))


def eval_response(g, s):
    return g(s)
