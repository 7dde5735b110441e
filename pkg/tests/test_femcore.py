"""Quadrature rules, reference bases, and affine geometry."""
from math import factorial

import numpy as np
import pytest

from hdgns.femcore import (
    CellBasis,
    EdgeBasis,
    cell_geometry,
    dim_poly_tri,
    make_quadrature,
    monomial_exponents,
)
from hdgns.mesh import build_uniform_mesh


def tri_monomial_integral(a, b):
    """Exact integral of x^a y^b over the reference triangle."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("degree", [1, 2, 3, 5, 8, 13, 20, 31, 44])
def test_triangle_rule_integrates_monomials_exactly(degree):
    rule = make_quadrature("triangle", degree)
    x, y = rule.points[:, 0], rule.points[:, 1]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            got = float(np.sum(rule.weights * x ** a * y ** b))
            exact = tri_monomial_integral(a, b)
            assert abs(got - exact) <= 1e-14 * max(1.0, abs(exact) * 1e2), (a, b)


def test_triangle_rule_top_degree_at_cap():
    rule = make_quadrature("triangle", 60)
    x, y = rule.points[:, 0], rule.points[:, 1]
    for a, b in [(60, 0), (0, 60), (30, 30), (41, 19), (7, 53)]:
        got = float(np.sum(rule.weights * x ** a * y ** b))
        exact = tri_monomial_integral(a, b)
        assert abs(got - exact) <= 1e-16 + 1e-10 * abs(exact), (a, b)


@pytest.mark.parametrize("degree", list(range(1, 61, 7)))
def test_triangle_rule_weights_positive_points_inside(degree):
    rule = make_quadrature("triangle", degree)
    assert np.all(rule.weights > 0)
    x, y = rule.points[:, 0], rule.points[:, 1]
    assert np.all(x > -1e-14) and np.all(y > -1e-14)
    assert np.all(x + y < 1 + 1e-14)
    assert abs(rule.weights.sum() - 0.5) < 1e-14


@pytest.mark.parametrize("degree", [1, 4, 9, 17, 33])
def test_segment_rule_integrates_monomials_exactly(degree):
    rule = make_quadrature("segment", degree)
    for a in range(degree + 1):
        got = float(np.sum(rule.weights * rule.points ** a))
        assert abs(got - 1.0 / (a + 1)) < 1e-14, a
    assert np.all(rule.weights > 0)
    assert np.all((rule.points > 0) & (rule.points < 1))


def test_quadrature_rejects_bad_requests():
    with pytest.raises(ValueError):
        make_quadrature("square", 3)
    with pytest.raises(ValueError):
        make_quadrature("triangle", 61)
    with pytest.raises(ValueError):
        make_quadrature("triangle", -1)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_cell_basis_orthonormal(k):
    basis = CellBasis(k)
    rule = make_quadrature("triangle", 2 * k)
    P = basis.eval(rule.points)
    gram = np.einsum("q,qi,qj->ij", rule.weights, P, P)
    assert np.abs(gram - np.eye(P.shape[1])).max() < 1e-12


@pytest.mark.parametrize("k,tol", [(5, 1e-8), (7, 1e-4)])
def test_cell_basis_orthonormal_high_degree(k, tol):
    # the Cholesky orthonormalization loses digits with the conditioning of
    # the monomial Gram matrix; high degrees stay usable but not exact
    basis = CellBasis(k)
    rule = make_quadrature("triangle", 2 * k)
    P = basis.eval(rule.points)
    gram = np.einsum("q,qi,qj->ij", rule.weights, P, P)
    assert np.abs(gram - np.eye(P.shape[1])).max() < tol


@pytest.mark.parametrize("k", [1, 2, 4])
def test_cell_basis_gradient_matches_finite_differences(k):
    basis = CellBasis(k)
    rng = np.random.default_rng(3)
    pts = rng.uniform(0.05, 0.4, size=(6, 2))
    g = basis.grad(pts)
    h = 1e-6
    for d, e in enumerate(np.eye(2)):
        fd = (basis.eval(pts + h * e) - basis.eval(pts - h * e)) / (2 * h)
        assert np.abs(g[:, :, d] - fd).max() < 5e-8


def test_nodal_basis_is_kronecker_on_lattice():
    for k in (1, 2, 3):
        pts = CellBasis.lattice_points(k)
        vals = CellBasis(k, "nodal").eval(pts)
        assert np.abs(vals - np.eye(len(pts))).max() < 1e-11


@pytest.mark.parametrize("k", [0, 1, 3, 6])
def test_edge_basis_orthonormal_on_unit_interval(k):
    basis = EdgeBasis(k)
    rule = make_quadrature("segment", 2 * k)
    Chi = basis.eval(rule.points)
    gram = np.einsum("q,qi,qj->ij", rule.weights, Chi, Chi)
    assert np.abs(gram - np.eye(k + 1)).max() < 1e-12
    # mode zero is the constant one (relied on by the pressure mean shift)
    assert np.abs(Chi[:, 0] - 1.0).max() < 1e-13


def test_polynomial_dimensions_and_graded_exponents():
    for k in range(6):
        exps = monomial_exponents(k)
        assert dim_poly_tri(k) == (k + 1) * (k + 2) // 2
        assert len(exps) == dim_poly_tri(k)
        degs = exps.sum(axis=1)
        assert np.all(np.diff(degs) >= 0)
        assert degs.max() == k
        assert len({tuple(e) for e in exps}) == len(exps)


def test_cell_geometry_affine_map_and_jacobian():
    mesh = build_uniform_mesh(3)
    B, b0, det, invT = cell_geometry(mesh)
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    for c in range(mesh.num_cells):
        phys = ref @ B[c].T + b0[c]
        assert np.abs(phys - mesh.vertices[mesh.cells[c]]).max() < 1e-14
        assert abs(det[c] - 2.0 * mesh.areas[c]) < 1e-14
        # invT is the transposed inverse Jacobian (maps reference gradients
        # to physical gradients)
        assert np.abs(invT[c] - np.linalg.inv(B[c]).T).max() < 1e-12


def test_basis_rejects_negative_degree():
    with pytest.raises(ValueError):
        EdgeBasis(-1)
    with pytest.raises(ValueError):
        CellBasis(-1)
