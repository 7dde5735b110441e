"""Reference-element machinery: polynomial bases, quadrature, affine maps.

The reference triangle is {(x, y): x, y >= 0, x + y <= 1}; the reference
segment is [0, 1]. Interior bases are monomials orthonormalized against the
reference mass matrix, which keeps local solves well conditioned up to the
degrees used here. A nodal (Lagrange) cell variant is available for the few
places that want point values.
"""
from __future__ import annotations

import numpy as np
from scipy.special import roots_jacobi

MAX_QUAD_DEGREE = 60


def dim_poly_tri(k: int) -> int:
    """dim P_k on a triangle."""
    return (k + 1) * (k + 2) // 2


def monomial_exponents(k: int) -> np.ndarray:
    """(dim, 2) exponents of the 2D monomial basis, graded order."""
    exps = [(d - i, i) for d in range(k + 1) for i in range(d + 1)]
    return np.array(exps, dtype=np.int64)


def _eval_monomials(points, exps):
    x = points[:, 0][:, None]
    y = points[:, 1][:, None]
    return x ** exps[:, 0] * y ** exps[:, 1]


def _eval_monomial_grads(points, exps):
    x = points[:, 0][:, None]
    y = points[:, 1][:, None]
    a = exps[:, 0]
    b = exps[:, 1]
    gx = np.where(a > 0, a * x ** np.maximum(a - 1, 0) * y ** b, 0.0)
    gy = np.where(b > 0, b * x ** a * y ** np.maximum(b - 1, 0), 0.0)
    return np.stack([gx, gy], axis=2)


class QuadRule:
    """Quadrature rule on the reference triangle or segment.

    points are (npts, 2) on the triangle, (npts,) on the segment; the
    weights sum to the measure of the reference domain.
    """

    def __init__(self, domain, points, weights, exact_degree):
        self.domain = domain
        self.points = points
        self.weights = weights
        self.exact_degree = exact_degree

    @property
    def num_points(self):
        return len(self.weights)


def make_quadrature(domain: str, required_degree: int) -> QuadRule:
    """Rule integrating polynomials up to ``required_degree`` exactly.

    Triangle rules are collapsed Gauss-Legendre x Gauss-Jacobi tensor rules
    (all weights positive).
    """
    if required_degree < 0:
        raise ValueError("required_degree must be >= 0")
    if required_degree > MAX_QUAD_DEGREE:
        raise ValueError(
            f"quadrature degree {required_degree} not implemented "
            f"(maximum supported degree is {MAX_QUAD_DEGREE})"
        )
    n = required_degree // 2 + 1
    xg, wg = np.polynomial.legendre.leggauss(n)
    xg = 0.5 * (xg + 1.0)
    wg = 0.5 * wg
    if domain == "segment":
        order = np.argsort(xg)
        return QuadRule("segment", xg[order], wg[order], 2 * n - 1)
    if domain == "triangle":
        xj, wj = roots_jacobi(n, 1.0, 0.0)
        eta = 0.5 * (xj + 1.0)
        weta = 0.25 * wj  # absorbs the (1 - eta) collapse Jacobian
        xi = xg
        pts = np.empty((n * n, 2))
        wts = np.empty(n * n)
        idx = 0
        for j in range(n):
            for i in range(n):
                pts[idx, 0] = xi[i] * (1.0 - eta[j])
                pts[idx, 1] = eta[j]
                wts[idx] = wg[i] * weta[j]
                idx += 1
        return QuadRule("triangle", pts, wts, 2 * n - 1)
    raise ValueError(f"unknown quadrature domain {domain!r}")


def _orthonormal_coeffs(exps, domain_rule):
    """Cholesky-based orthonormalization of monomials w.r.t. the reference
    mass matrix; returns the (dim, dim) coefficient matrix R^-1 such that
    psi = monomials @ coeffs."""
    M = _eval_monomials(domain_rule.points, exps)
    G = (M * domain_rule.weights[:, None]).T @ M
    R = np.linalg.cholesky(G).T
    return np.linalg.inv(R)


class CellBasis:
    """Scalar polynomial basis of degree k on the reference triangle."""

    def __init__(self, k: int, variant: str = "orthonormal"):
        if k < 0:
            raise ValueError("degree must be >= 0")
        if variant not in ("orthonormal", "nodal"):
            raise ValueError(f"unknown cell basis variant {variant!r}")
        self.degree = k
        self.dim = dim_poly_tri(k)
        self.variant = variant
        self._exps = monomial_exponents(k)
        rule = make_quadrature("triangle", max(2 * k, 1))
        self._coeffs = _orthonormal_coeffs(self._exps, rule)
        if variant == "nodal":
            nodes = self.lattice_points(k)
            V = _eval_monomials(nodes, self._exps) @ self._coeffs
            self._coeffs = self._coeffs @ np.linalg.inv(V)

    @staticmethod
    def lattice_points(k: int) -> np.ndarray:
        """Equispaced lattice on the reference triangle ((k+1)(k+2)/2 points)."""
        if k == 0:
            return np.array([[1.0 / 3.0, 1.0 / 3.0]])
        pts = [(i / k, j / k) for d in range(k + 1) for i, j in [(d - l, l) for l in range(d + 1)]]
        return np.array(pts)

    def eval(self, points: np.ndarray) -> np.ndarray:
        """(npts, dim) basis values at reference points."""
        points = np.atleast_2d(points)
        return _eval_monomials(points, self._exps) @ self._coeffs

    def grad(self, points: np.ndarray) -> np.ndarray:
        """(npts, dim, 2) reference gradients."""
        points = np.atleast_2d(points)
        g = _eval_monomial_grads(points, self._exps)
        return np.einsum("qmd,mi->qid", g, self._coeffs)


class EdgeBasis:
    """Orthonormal (shifted Legendre) basis of degree k on [0, 1]."""

    def __init__(self, k: int):
        if k < 0:
            raise ValueError("degree must be >= 0")
        self.degree = k
        self.dim = k + 1
        self._scale = np.sqrt(2.0 * np.arange(k + 1) + 1.0)

    def eval(self, t: np.ndarray) -> np.ndarray:
        """(npts, dim) basis values at parameter values t in [0, 1]."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = 2.0 * t - 1.0
        out = np.empty((len(t), self.dim))
        for i in range(self.dim):
            c = np.zeros(i + 1)
            c[i] = 1.0
            out[:, i] = self._scale[i] * np.polynomial.legendre.legval(x, c)
        return out


def make_cell_basis(k: int, variant: str = "orthonormal") -> CellBasis:
    return CellBasis(k, variant)


def make_edge_basis(k: int) -> EdgeBasis:
    return EdgeBasis(k)


class AffineMap:
    """Affine map x = B xi + b from the reference triangle to a cell."""

    def __init__(self, verts: np.ndarray):
        verts = np.asarray(verts, dtype=float)
        self.b = verts[0]
        self.B = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
        self.det = float(np.linalg.det(self.B))
        if self.det <= 0:
            raise ValueError("cell is degenerate or clockwise (non-positive Jacobian)")
        self.inv_T = np.linalg.inv(self.B).T

    def to_physical(self, ref_points: np.ndarray) -> np.ndarray:
        return np.atleast_2d(ref_points) @ self.B.T + self.b

    def to_reference(self, phys_points: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(phys_points) - self.b) @ np.linalg.inv(self.B).T

    def push_gradient(self, ref_grads: np.ndarray) -> np.ndarray:
        """Physical gradients from reference gradients (..., 2)."""
        return ref_grads @ self.inv_T.T


def cell_geometry(mesh):
    """Vectorized affine-map data for every cell.

    Returns (B, b, det, inv_T) with shapes (nc,2,2), (nc,2), (nc,), (nc,2,2).
    """
    v = mesh.vertices[mesh.cells]
    B = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)
    det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
    inv = np.empty_like(B)
    inv[:, 0, 0] = B[:, 1, 1]
    inv[:, 0, 1] = -B[:, 0, 1]
    inv[:, 1, 0] = -B[:, 1, 0]
    inv[:, 1, 1] = B[:, 0, 0]
    inv /= det[:, None, None]
    inv_T = inv.transpose(0, 2, 1)
    return B, v[:, 0], det, inv_T
