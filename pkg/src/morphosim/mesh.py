"""Planar triangle meshes with an oriented boundary loop.

Meshes are built by a conforming Delaunay triangulation of the boundary
polygon plus jittered lattice Steiner points, followed by a few sweeps of
Laplacian smoothing.  Node ordering is fixed: boundary loop first (in
counterclockwise order), interior nodes after.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.spatial import Delaunay, cKDTree

from .errors import InvalidGeometryError, InvalidResolutionError

logger = logging.getLogger(__name__)

RAD_SENTINEL = 1e15
DEFAULT_SEED = 42

# Local P2 numbering: vertices 0,1,2 then midpoints of (0,1), (1,2), (2,0).
LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


def meshing_seed():
    """Seed for the Steiner-point jitter (``MORPHOSIM_SEED`` overrides)."""
    return int(os.environ.get("MORPHOSIM_SEED", DEFAULT_SEED))


# --------------------------------------------------------------------------
# polygon helpers
# --------------------------------------------------------------------------

def shoelace_area(points):
    """Signed area of a closed polyline (positive when counterclockwise)."""
    p = np.asarray(points, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def points_in_polygon(points, polygon):
    """Crossing-number inclusion test, vectorised over ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    poly = np.asarray(polygon, dtype=float)
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    xa, ya = poly[:, 0][None, :], poly[:, 1][None, :]
    xb, yb = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    straddle = (ya > y) != (yb > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = xa + (y - ya) * (xb - xa) / (yb - ya)
    hits = straddle & (x < xcross)
    return (np.count_nonzero(hits, axis=1) % 2) == 1


def segment_distances(points, a, b):
    """Distance matrix (n_points, n_segments) from points to segments [a, b]."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = b - a
    len2 = np.einsum("ij,ij->i", d, d)
    rel = pts[:, None, :] - a[None, :, :]
    s = np.clip(np.einsum("pij,ij->pi", rel, d) / np.where(len2 > 0, len2, 1.0), 0.0, 1.0)
    nearest = a[None, :, :] + s[..., None] * d[None, :, :]
    return np.linalg.norm(pts[:, None, :] - nearest, axis=2)


def _cross(o, a, b):
    return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (b[..., 0] - o[..., 0])


def polyline_self_intersects(points, tol=1e-12):
    """True if the closed polyline has two non-adjacent segments that touch."""
    p = np.asarray(points, dtype=float)
    k = len(p)
    if k < 4:
        return False
    a, b = p, np.roll(p, -1, axis=0)
    i, j = np.triu_indices(k, k=2)
    keep = ~((i == 0) & (j == k - 1))
    i, j = i[keep], j[keep]
    scale = max(float(np.ptp(p[:, 0])), float(np.ptp(p[:, 1])), 1e-300)
    eps = tol * scale * scale
    o1 = _cross(a[i], b[i], a[j])
    o2 = _cross(a[i], b[i], b[j])
    o3 = _cross(a[j], b[j], a[i])
    o4 = _cross(a[j], b[j], b[i])
    proper = (o1 * o2 < -eps * eps) & (o3 * o4 < -eps * eps)
    if np.any(proper):
        return True
    # vertices lying on a non-adjacent segment
    dist = segment_distances(p, a, b)
    idx = np.arange(k)
    dist[idx, idx] = np.inf
    dist[idx, (idx - 1) % k] = np.inf
    return bool(np.any(dist < tol * scale))


# --------------------------------------------------------------------------
# mesh type
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulated planar domain.

    Parameters
    ----------
    nodes : (n, 2) array
        Node coordinates.
    triangles : (m, 3) int array
        Counterclockwise node-index triples.
    boundary : (k,) int array
        Closed counterclockwise loop of boundary node indices (first node
        not repeated).
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float).reshape(-1, 2)
        tris = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        bnd = np.array(self.boundary, dtype=np.int64).ravel()
        for arr in (nodes, tris, bnd):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "boundary", bnd)

    # -- basic geometry ---------------------------------------------------
    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @cached_property
    def signed_areas(self):
        p = self.nodes[self.triangles]
        return 0.5 * _cross(p[:, 0], p[:, 1], p[:, 2])

    @property
    def areas(self):
        return self.signed_areas

    @cached_property
    def area(self):
        return float(np.sum(self.signed_areas))

    @cached_property
    def node_areas(self):
        """Barycentric dual areas: one third of every adjacent triangle."""
        out = np.zeros(self.n_nodes)
        np.add.at(out, self.triangles.ravel(), np.repeat(self.signed_areas / 3.0, 3))
        return out

    @cached_property
    def lambda_gradients(self):
        """Constant gradients of the barycentric coordinates, shape (m, 3, 2)."""
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
        g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
        return np.stack([-g1 - g2, g1, g2], axis=1)

    # -- edges and quadratic dofs -----------------------------------------
    @cached_property
    def _edge_tables(self):
        local = self.triangles[:, LOCAL_EDGES]  # (m, 3, 2)
        flat = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(flat, axis=0, return_inverse=True, return_counts=True)
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self):
        """Unique undirected edges, (E, 2) with sorted endpoints."""
        return self._edge_tables[0]

    @property
    def triangle_edges(self):
        """Edge index of each local edge (0,1), (1,2), (2,0); shape (m, 3)."""
        return self._edge_tables[1]

    @cached_property
    def edge_midpoints(self):
        return 0.5 * (self.nodes[self.edges[:, 0]] + self.nodes[self.edges[:, 1]])

    @property
    def n_p2(self):
        return self.n_nodes + len(self.edges)

    @cached_property
    def p2_points(self):
        return np.vstack([self.nodes, self.edge_midpoints])

    @cached_property
    def p2_cells(self):
        return np.hstack([self.triangles, self.n_nodes + self.triangle_edges])

    @cached_property
    def boundary_points(self):
        return self.nodes[self.boundary]

    @cached_property
    def h_max(self):
        e = self.nodes[self.edges[:, 0]] - self.nodes[self.edges[:, 1]]
        return float(np.max(np.linalg.norm(e, axis=1)))

    @cached_property
    def node_adjacency(self):
        t = self.triangles
        rows = np.concatenate([t[:, 0], t[:, 1], t[:, 2], t[:, 1], t[:, 2], t[:, 0]])
        cols = np.concatenate([t[:, 1], t[:, 2], t[:, 0], t[:, 0], t[:, 1], t[:, 2]])
        adj = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n_nodes,) * 2).tocsr()
        adj.data[:] = 1.0
        return adj

    # -- derived meshes ---------------------------------------------------
    def with_nodes(self, nodes):
        """Same connectivity, new coordinates (no validation)."""
        return Mesh(nodes, self.triangles, self.boundary)

    def transformed(self, rotation_deg=0.0, shift=(0.0, 0.0)):
        """Rigidly moved copy: rotate about the origin, then translate."""
        th = math.radians(rotation_deg)
        rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        return self.with_nodes(self.nodes @ rot.T + np.asarray(shift, dtype=float))

    # -- checks -----------------------------------------------------------
    def validate(self, check_simple=True):
        """Raise :class:`InvalidGeometryError` unless every mesh invariant holds."""
        if not np.all(np.isfinite(self.nodes)):
            raise InvalidGeometryError("non-finite node coordinates")
        if self.n_triangles == 0:
            raise InvalidGeometryError("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= self.n_nodes:
            raise InvalidGeometryError("triangle index out of range")
        if np.any(self.signed_areas <= 0.0):
            bad = int(np.count_nonzero(self.signed_areas <= 0.0))
            raise InvalidGeometryError(f"{bad} triangle(s) with non-positive signed area")
        counts = self._edge_tables[2]
        if np.any(counts > 2):
            raise InvalidGeometryError("edge shared by more than two triangles")
        bnd_edges = self.edges[counts == 1]
        loop = np.sort(np.stack([self.boundary, np.roll(self.boundary, -1)], axis=1), axis=1)
        if len(np.unique(self.boundary)) != len(self.boundary):
            raise InvalidGeometryError("boundary loop repeats a node")
        if len(loop) != len(bnd_edges):
            raise InvalidGeometryError("boundary loop does not match the mesh boundary edges")
        a = {tuple(e) for e in bnd_edges.tolist()}
        if a != {tuple(e) for e in loop.tolist()}:
            raise InvalidGeometryError("boundary loop does not match the mesh boundary edges")
        loop_area = shoelace_area(self.boundary_points)
        if loop_area <= 0.0:
            raise InvalidGeometryError("boundary loop is not counterclockwise")
        if abs(loop_area - self.area) > 1e-10 * abs(self.area):
            raise InvalidGeometryError("boundary loop does not enclose exactly the triangles")
        if check_simple and polyline_self_intersects(self.boundary_points):
            raise InvalidGeometryError("boundary loop self-intersects")
        return self


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------

def _lattice(lo, hi, h, rng, jitter=0.1):
    dy = h * math.sqrt(3.0) / 2.0
    ys = np.arange(lo[1], hi[1] + dy, dy)
    rows = []
    for j, y in enumerate(ys):
        xs = np.arange(lo[0] + (0.5 * h if j % 2 else 0.0), hi[0] + h, h)
        rows.append(np.column_stack([xs, np.full(len(xs), y)]))
    pts = np.vstack(rows)
    return pts + rng.uniform(-jitter * h, jitter * h, size=pts.shape)


def _thin(points, r):
    """Greedy removal of points closer than ``r`` to an earlier kept point."""
    tree = cKDTree(points)
    keep = np.ones(len(points), dtype=bool)
    for i, j in sorted(tree.query_pairs(r)):
        if keep[i] and keep[j]:
            keep[j] = False
    return points[keep]


def _encroached(points, seg_a, seg_b, factor=1.05):
    """Mask of points lying inside (or near) any segment's diametral circle."""
    if len(points) == 0:
        return np.zeros(0, dtype=bool)
    mid = 0.5 * (seg_a + seg_b)
    rad = 0.5 * np.linalg.norm(seg_b - seg_a, axis=1)
    d = np.linalg.norm(points[:, None, :] - mid[None, :, :], axis=2)
    return np.any(d < factor * rad[None, :], axis=1)


def _missing_segments(tri, k):
    """Boundary segments (i, i+1 mod k) that are not edges of ``tri``."""
    simp = tri.simplices
    e = np.sort(np.concatenate([simp[:, [0, 1]], simp[:, [1, 2]], simp[:, [2, 0]]]), axis=1)
    have = set(map(tuple, e.tolist()))
    segs = np.sort(np.column_stack([np.arange(k), (np.arange(k) + 1) % k]), axis=1)
    return [i for i, s in enumerate(map(tuple, segs.tolist())) if s not in have]


def _ghost_layer(bnd):
    """Points just outside each boundary segment.

    They keep the boundary off the convex hull of the point set, where
    Qhull would otherwise emit flat triangles for collinear boundary nodes.
    """
    a, b = bnd, np.roll(bnd, -1, axis=0)
    seg = b - a
    offset = 0.5 * math.sqrt(3.0) * np.linalg.norm(seg, axis=1)
    ghost = 0.5 * (a + b) + 0.5 * math.sqrt(3.0) * np.column_stack([seg[:, 1], -seg[:, 0]])
    ok = ~points_in_polygon(ghost, bnd)
    ok &= segment_distances(ghost, a, b).min(axis=1) >= 0.8 * offset
    return ghost[ok]


def _delaunay(pts, bnd):
    return Delaunay(np.vstack([pts, _ghost_layer(bnd)]))


def _triangulate(boundary_pts, h, seed, smoothing_sweeps=3):
    """Conforming Delaunay mesh of a refined simple CCW polygon."""
    bnd = np.asarray(boundary_pts, dtype=float)
    rng = np.random.default_rng(seed)
    lo, hi = bnd.min(axis=0), bnd.max(axis=0)
    interior = _lattice(lo - h, hi + h, h, rng)
    interior = interior[points_in_polygon(interior, bnd)]
    a, b = bnd, np.roll(bnd, -1, axis=0)
    if len(interior):
        interior = interior[segment_distances(interior, a, b).min(axis=1) >= 1.2 * h]
    # one layer of near-equilateral points along the boundary
    seg = b - a
    normal = np.column_stack([-seg[:, 1], seg[:, 0]])
    layer = 0.5 * (a + b) + 0.5 * math.sqrt(3.0) * normal
    offset = 0.5 * math.sqrt(3.0) * np.linalg.norm(seg, axis=1)
    inside = points_in_polygon(layer, bnd)
    layer, offset = layer[inside], offset[inside]
    if len(layer):
        # drop points that sit much closer to another segment than to their own
        layer = layer[segment_distances(layer, a, b).min(axis=1) >= 0.8 * offset]
        layer = _thin(layer, 0.7 * h)
    if len(layer) and len(interior):
        d, _ = cKDTree(layer).query(interior)
        interior = interior[d >= 0.7 * h]
    interior = np.vstack([layer.reshape(-1, 2), interior.reshape(-1, 2)])

    for _ in range(50):
        a, b = bnd, np.roll(bnd, -1, axis=0)
        if len(interior):
            dist = segment_distances(interior, a, b).min(axis=1)
            interior = interior[(dist >= 0.5 * h) & ~_encroached(interior, a, b)]
        pts = np.vstack([bnd, interior])
        tri = _delaunay(pts, bnd)
        missing = _missing_segments(tri, len(bnd))
        if not missing:
            break
        # split every missing segment at its midpoint and retry
        new = []
        miss = set(missing)
        for i in range(len(bnd)):
            new.append(bnd[i])
            if i in miss:
                new.append(0.5 * (bnd[i] + bnd[(i + 1) % len(bnd)]))
        bnd = np.array(new)
    else:
        raise InvalidGeometryError("could not recover the boundary in the triangulation")

    k = len(bnd)
    for _ in range(smoothing_sweeps):
        if len(interior) == 0:
            break
        pts = np.vstack([bnd, interior])
        simp = _inside_simplices(_delaunay(pts, bnd), pts, bnd)
        mesh = Mesh(pts, simp, np.arange(k))
        adj = mesh.node_adjacency
        deg = np.asarray(adj.sum(axis=1)).ravel()
        avg = (adj @ pts) / np.maximum(deg, 1.0)[:, None]
        cand = avg[k:]
        a, b = bnd, np.roll(bnd, -1, axis=0)
        ok = points_in_polygon(cand, bnd) & ~_encroached(cand, a, b)
        ok &= segment_distances(cand, a, b).min(axis=1) >= 0.3 * h
        interior = np.where(ok[:, None], cand, interior)

    pts = np.vstack([bnd, interior])
    tri = _delaunay(pts, bnd)
    if _missing_segments(tri, k):
        raise InvalidGeometryError("could not recover the boundary in the triangulation")
    simp = _inside_simplices(tri, pts, bnd)
    mesh = Mesh(pts, simp, np.arange(k))
    used = np.unique(simp)
    if len(used) != len(pts):
        raise InvalidGeometryError("triangulation left unused nodes")
    return mesh.validate()


def _inside_simplices(tri, pts, bnd):
    simp = tri.simplices
    simp = simp[np.all(simp < len(pts), axis=1)]
    cen = pts[simp].mean(axis=1)
    simp = simp[points_in_polygon(cen, bnd)]
    p = pts[simp]
    neg = _cross(p[:, 0], p[:, 1], p[:, 2]) < 0
    simp[neg] = simp[neg][:, [0, 2, 1]]
    return simp


def _check_polygon(pts):
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise InvalidGeometryError("polygon needs at least 3 vertices")
    if not np.all(np.isfinite(pts)):
        raise InvalidGeometryError("polygon has non-finite coordinates")
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    scale = float(np.max(seg))
    if np.any(seg <= 1e-12 * scale):
        raise InvalidGeometryError("polygon has repeated consecutive vertices")
    area = shoelace_area(pts)
    if abs(area) <= 1e-12 * scale * scale:
        raise InvalidGeometryError("degenerate polygon (zero area)")
    if area < 0:
        raise InvalidGeometryError("polygon must be counterclockwise")
    if polyline_self_intersects(pts):
        raise InvalidGeometryError("polygon self-intersects")


def refine_polyline(points, target_h):
    """Subdivide every edge of a closed polyline into pieces of length <= target_h."""
    pts = np.asarray(points, dtype=float)
    out = []
    for a, b in zip(pts, np.roll(pts, -1, axis=0)):
        n = max(1, math.ceil(np.linalg.norm(b - a) / target_h - 1e-9))
        s = np.arange(n)[:, None] / n
        out.append(a + s * (b - a))
    return np.vstack(out)


def build_polygon_mesh(boundary, target_h, seed=None):
    """Mesh the interior of a simple counterclockwise polygon.

    The input polyline is kept (its vertices stay boundary nodes) and every
    edge is subdivided to length ``<= target_h``.
    """
    pts = np.asarray(boundary, dtype=float)
    _check_polygon(pts)
    if not target_h > 0:
        raise InvalidResolutionError("target_h must be positive")
    seed = meshing_seed() if seed is None else seed
    return _triangulate(refine_polyline(pts, target_h), target_h, seed)


def build_disk_mesh(radius, target_h, center=(0.0, 0.0), seed=None):
    """Mesh of the regular polygon inscribed in a circle.

    Boundary nodes are ``ceil(2*pi*radius/target_h)`` equally spaced points
    on the circle.
    """
    if not radius > 0:
        raise InvalidResolutionError("radius must be positive")
    if not (0 < target_h < radius):
        raise InvalidResolutionError(f"need 0 < target_h < radius, got target_h={target_h}, radius={radius}")
    n = max(3, math.ceil(2.0 * math.pi * radius / target_h))
    th = 2.0 * math.pi * np.arange(n) / n
    c = np.asarray(center, dtype=float)
    bnd = c + radius * np.column_stack([np.cos(th), np.sin(th)])
    seed = meshing_seed() if seed is None else seed
    return _triangulate(bnd, target_h, seed)


def resample_closed_curve(points, target_h):
    """Resample a densely sampled closed curve at uniform arc-length spacing."""
    p = np.asarray(points, dtype=float)
    closed = np.vstack([p, p[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(3, math.ceil(s[-1] / target_h))
    q = np.arange(n) * s[-1] / n
    return np.column_stack([np.interp(q, s, closed[:, 0]), np.interp(q, s, closed[:, 1])])


def ellipse_boundary(semi_axes, target_h, center=(0.0, 0.0), dense=4096):
    a, b = semi_axes
    th = 2.0 * math.pi * np.arange(dense) / dense
    pts = np.column_stack([a * np.cos(th), b * np.sin(th)]) + np.asarray(center, dtype=float)
    return resample_closed_curve(pts, target_h)


def cassini_boundary(a, b, target_h, dense=4096):
    """Cassini oval ``|x - (a,0)| |x + (a,0)| = b**2``; dumbbell-shaped for b slightly above a."""
    if not b > a:
        raise InvalidGeometryError("Cassini oval needs b > a to be connected")
    th = 2.0 * math.pi * np.arange(dense) / dense
    s2 = np.sin(2 * th) ** 2
    r2 = a * a * np.cos(2 * th) + np.sqrt(b ** 4 - a ** 4 * s2)
    r = np.sqrt(r2)
    pts = np.column_stack([r * np.cos(th), r * np.sin(th)])
    return resample_closed_curve(pts, target_h)


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryDiagnostics:
    rad_min: float
    perimeter: float
    area: float


def circumradii(prev, cur, nxt):
    """Circumradius of each triple; collinear triples map to ``RAD_SENTINEL``."""
    a = np.linalg.norm(cur - prev, axis=1)
    b = np.linalg.norm(nxt - cur, axis=1)
    c = np.linalg.norm(nxt - prev, axis=1)
    twice_area = np.abs(_cross(prev, cur, nxt))
    degenerate = twice_area <= 1e-14 * a * b
    with np.errstate(divide="ignore", invalid="ignore"):
        r = a * b * c / (2.0 * twice_area)
    return np.where(degenerate | ~np.isfinite(r), RAD_SENTINEL, np.minimum(r, RAD_SENTINEL))


def boundary_diagnostics(mesh):
    p = mesh.boundary_points
    prev, nxt = np.roll(p, 1, axis=0), np.roll(p, -1, axis=0)
    rad = circumradii(prev, p, nxt)
    perim = float(np.sum(np.linalg.norm(nxt - p, axis=1)))
    return BoundaryDiagnostics(rad_min=float(np.min(rad)), perimeter=perim, area=shoelace_area(p))


def triangle_angles(mesh):
    """Interior angles in degrees, shape (m, 3)."""
    p = mesh.nodes[mesh.triangles]
    out = np.empty((len(p), 3))
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        v = p[:, (i + 2) % 3] - p[:, i]
        cross = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
        dot = np.einsum("ij,ij->i", u, v)
        out[:, i] = np.degrees(np.arctan2(cross, dot))
    return out


def element_quality(mesh):
    """Minimum interior angle over all triangles, in degrees."""
    return float(np.min(triangle_angles(mesh)))
