import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from morphosim.errors import InvalidGeometryError, InvalidResolutionError
from morphosim.mesh import (
    RAD_SENTINEL,
    Mesh,
    boundary_diagnostics,
    build_disk_mesh,
    build_polygon_mesh,
    circumradii,
    element_quality,
    ellipse_boundary,
    shoelace_area,
)

from conftest import L_SHAPE


def inscribed_area(n, r=1.0):
    return 0.5 * n * r * r * math.sin(2 * math.pi / n)


def test_disk_area_matches_inscribed_polygon(disk10):
    n = len(disk10.boundary)
    expected = inscribed_area(n)
    assert abs(expected - 3.1364) < 0.01
    assert disk10.area == pytest.approx(expected, rel=1e-12)


def test_disk_coarsest_resolution():
    mesh = build_disk_mesh(1.0, 0.9999)
    assert mesh.area >= 2.0
    mesh.validate()


@pytest.mark.parametrize("h", [1.0, 1.5, 0.0, -0.1])
def test_disk_rejects_bad_resolution(h):
    with pytest.raises(InvalidResolutionError):
        build_disk_mesh(1.0, h)


def test_disk_element_size_and_quality(disk05):
    assert disk05.h_max <= 1.5 * 0.05
    assert element_quality(disk05) > 25.0


def test_square_area_exact(square):
    assert square.area == pytest.approx(1.0, abs=1e-14)


def test_collinear_polygon_rejected():
    with pytest.raises(InvalidGeometryError):
        build_polygon_mesh(np.array([[0, 0], [1, 0], [2, 0]], dtype=float), 0.2)


def test_lshape_area(lshape):
    assert lshape.area == pytest.approx(shoelace_area(L_SHAPE), rel=1e-12)
    assert shoelace_area(L_SHAPE) == 3.0


def test_clockwise_polygon_rejected():
    with pytest.raises(InvalidGeometryError):
        build_polygon_mesh(L_SHAPE[::-1], 0.2)


def test_disk_rad_min_is_radius(disk10):
    assert boundary_diagnostics(disk10).rad_min == pytest.approx(1.0, rel=1e-10)


def test_square_rad_min_corner(square):
    # corner triple with two legs of length h: right isosceles circumradius h/sqrt(2)
    assert boundary_diagnostics(square).rad_min == pytest.approx(0.25 / math.sqrt(2), rel=1e-10)


def test_ellipse_rad_min():
    pts = ellipse_boundary((2.0, 1.0), 0.05)
    mesh = build_polygon_mesh(pts, 0.05)
    # max curvature a/b^2 at the ends of the major axis
    assert boundary_diagnostics(mesh).rad_min == pytest.approx(0.5, rel=0.05)


def test_diagnostics_area_is_shoelace(lshape):
    d = boundary_diagnostics(lshape)
    assert d.area == pytest.approx(shoelace_area(lshape.boundary_points), rel=1e-12)
    assert d.perimeter == pytest.approx(8.0, rel=1e-12)


def test_collinear_triple_uses_sentinel():
    p = np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]), np.array([[2.0, 0.0]])
    assert circumradii(*p)[0] == RAD_SENTINEL


def _single(tri_nodes):
    return Mesh(np.array(tri_nodes, dtype=float), np.array([[0, 1, 2]]), np.array([0, 1, 2]))


def test_quality_equilateral():
    assert element_quality(_single([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]])) == pytest.approx(60.0)


def test_quality_right_isosceles():
    assert element_quality(_single([[0, 0], [1, 0], [0, 1]])) == pytest.approx(45.0)


def test_quality_sliver():
    q = element_quality(_single([[0, 0], [1, 0], [0.5, 1e-6]]))
    assert q < 1e-3
    assert q == pytest.approx(math.degrees(math.atan(2e-6)), rel=1e-6)


def test_edge_tables(disk10):
    counts = disk10._edge_tables[2]
    assert set(np.unique(counts)) == {1, 2}
    assert np.count_nonzero(counts == 1) == len(disk10.boundary)
    # Euler characteristic of a disk
    assert disk10.n_nodes - len(disk10.edges) + disk10.n_triangles == 1
    assert disk10.p2_cells.shape == (disk10.n_triangles, 6)
    mid = disk10.p2_points[disk10.p2_cells[:, 3]]
    a, b = disk10.nodes[disk10.triangles[:, 0]], disk10.nodes[disk10.triangles[:, 1]]
    assert np.allclose(mid, 0.5 * (a + b))


def test_meshing_is_seeded(monkeypatch):
    a = build_disk_mesh(1.0, 0.2)
    b = build_disk_mesh(1.0, 0.2)
    assert np.array_equal(a.nodes, b.nodes)
    monkeypatch.setenv("MORPHOSIM_SEED", "7")
    c = build_disk_mesh(1.0, 0.2)
    assert not np.array_equal(a.nodes, c.nodes) or a.n_nodes != c.n_nodes


def test_validate_catches_inversion(disk10):
    flipped = Mesh(disk10.nodes, disk10.triangles[:, ::-1], disk10.boundary)
    with pytest.raises(InvalidGeometryError):
        flipped.validate()


@settings(max_examples=12, deadline=None)
@given(radius=st.floats(0.2, 5.0), frac=st.floats(0.04, 0.6))
def test_disk_invariants_randomized(radius, frac):
    mesh = build_disk_mesh(radius, frac * radius)
    mesh.validate()
    assert mesh.area == pytest.approx(shoelace_area(mesh.boundary_points), rel=1e-12)
    assert boundary_diagnostics(mesh).rad_min == pytest.approx(radius, rel=1e-10)


@settings(max_examples=10, deadline=None)
@given(r=st.floats(0.1, 10.0), n=st.integers(3, 200), phase=st.floats(0, 2 * math.pi))
def test_cocircular_boundary_rad(r, n, phase):
    th = phase + 2 * math.pi * np.arange(n) / n
    pts = r * np.column_stack([np.cos(th), np.sin(th)])
    rad = circumradii(np.roll(pts, 1, axis=0), pts, np.roll(pts, -1, axis=0))
    assert np.allclose(rad, r, rtol=1e-10)
