import math

import numpy as np
import pytest

from morphosim.errors import InvalidDensityError
from morphosim.fields import QUAD4, ScalarField, integrate, integrate_values
from morphosim.mesh import build_disk_mesh
from morphosim.morphogen import morphogen_balance, p1_matrices, solve_morphogen
from morphosim.oracles import radial_morphogen

WIDTH2 = 0.08


def gauss(p):
    return np.exp(-np.sum(p ** 2, axis=1) / WIDTH2)


def radial_l2_error(mesh, u):
    r, ur = radial_morphogen(lambda r: np.exp(-r ** 2 / WIDTH2), R=1.0, n=10_000)
    bary, wq = QUAD4
    x = np.einsum("qk,mkd->mqd", bary, mesh.nodes[mesh.triangles])
    ref = np.interp(np.hypot(x[..., 0], x[..., 1]), r, ur)
    err = math.sqrt(integrate_values(mesh, (u.at_bary(bary) - ref) ** 2, wq))
    return err, math.sqrt(integrate_values(mesh, ref ** 2, wq))


def test_constant_density_reproduced(disk10):
    sol = solve_morphogen(disk10, ScalarField.constant(disk10, 1.0))
    assert np.allclose(sol.u.values, 1.0, atol=1e-10)


def test_zero_density(square):
    sol = solve_morphogen(square, ScalarField.constant(square, 0.0))
    assert not np.any(sol.u.values)


def test_gaussian_matches_radial_oracle(disk05):
    u = solve_morphogen(disk05, ScalarField.from_function(disk05, gauss)).u
    err, norm = radial_l2_error(disk05, u)
    assert err <= 0.01 * norm


def test_convergence_order():
    errs = []
    for h in (0.1, 0.05, 0.025):
        mesh = build_disk_mesh(1.0, h)
        errs.append(radial_l2_error(mesh, solve_morphogen(mesh, ScalarField.from_function(mesh, gauss)).u)[0])
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(orders - 2.0) <= 0.3), orders


def test_balance(disk10):
    one = ScalarField.constant(disk10, 1.0)
    assert abs(morphogen_balance(disk10, solve_morphogen(disk10, one).u, one)) <= 1e-10 * disk10.area
    zero = ScalarField.constant(disk10, 0.0)
    assert morphogen_balance(disk10, solve_morphogen(disk10, zero).u, zero) == 0.0
    w = ScalarField.from_function(disk10, gauss)
    assert abs(morphogen_balance(disk10, solve_morphogen(disk10, w).u, w)) <= 1e-9 * integrate(w)


def test_constant_test_function_identity(disk10):
    K, M = p1_matrices(disk10)
    ones = np.ones(disk10.n_nodes)
    assert np.max(np.abs(K @ ones)) < 1e-12
    assert ones @ (M @ ones) == pytest.approx(disk10.area, rel=1e-13)


def test_maximum_principle(lshape):
    w = ScalarField.from_function(lshape, lambda p: np.exp(-8 * np.sum((p - [0.3, 1.6]) ** 2, axis=1)))
    u = solve_morphogen(lshape, w).u.values
    assert u.min() >= -1e-9 * u.max()
    assert w.values.min() - 1e-9 <= u.max() <= w.values.max() + 1e-9


def test_negative_density_rejected(disk10):
    vals = np.ones(disk10.n_nodes)
    vals[0] = -0.1
    with pytest.raises(InvalidDensityError):
        solve_morphogen(disk10, ScalarField(disk10, 1, vals))


def test_wrong_mesh_rejected(disk10, square):
    with pytest.raises(ValueError):
        solve_morphogen(disk10, ScalarField.constant(square, 1.0))
