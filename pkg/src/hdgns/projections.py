"""Local projection and interpolation operators.

Cell and edge L2 projections into P_r, and the moment-based interpolations
into the Raviart-Thomas space RT_r = [P_r]^2 + x P~_r and the
Brezzi-Douglas-Marini space BDM_r = [P_r]^2. The RT interpolation matches
edge-normal moments against P_r(E) and, for r >= 1, interior moments against
[P_{r-1}]^2; as a consequence it commutes with the divergence in the sense
(div P^RT v, q)_T = (div v, q)_T for all q in P_r(T). The BDM interpolation
matches edge-normal moments, gradient moments (v, grad p)_T for p in P_{r-1},
and curl-bubble moments (v, curl(b_T p))_T for p in P_{r-2}.

Vector-valued local bases are expressed in the scaled centered coordinates
X = (x - c_T) / h_T, which keeps the per-cell moment matrices well
conditioned. All local systems are solved by dense LU with partial pivoting;
the systems are tiny, so robustness wins over speed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .femcore import (
    CellBasis,
    EdgeBasis,
    cell_geometry,
    dim_poly_tri,
    make_quadrature,
    monomial_exponents,
)


def rt_dim(r: int) -> int:
    """dim RT_r on a triangle."""
    return (r + 1) * (r + 3)


def bdm_dim(r: int) -> int:
    """dim [P_r]^2 on a triangle."""
    return (r + 1) * (r + 2)


def _eval_monos(exps, X):
    """(npts, nmono) monomial values at (npts, 2) points."""
    return X[:, 0][:, None] ** exps[:, 0] * X[:, 1][:, None] ** exps[:, 1]


def _eval_mono_grads(exps, X):
    """(npts, nmono, 2) monomial gradients at (npts, 2) points."""
    x = X[:, 0][:, None]
    y = X[:, 1][:, None]
    a = exps[:, 0]
    b = exps[:, 1]
    gx = np.where(a > 0, a * x ** np.maximum(a - 1, 0) * y ** b, 0.0)
    gy = np.where(b > 0, b * x ** a * y ** np.maximum(b - 1, 0), 0.0)
    return np.stack([gx, gy], axis=2)


def _vector_basis(space: str, r: int, X: np.ndarray, inv_h: float):
    """Evaluate the local RT_r or BDM_r basis in scaled coordinates X.

    Returns (vals, divs) with shapes (npts, ndof, 2) and (npts, ndof);
    divergences are physical (the 1/h_T chain-rule factor is included).
    """
    exps = monomial_exponents(r)
    n_s = len(exps)
    mono = _eval_monos(exps, X)
    grad = _eval_mono_grads(exps, X)
    npts = len(X)
    ndof = rt_dim(r) if space == "RT" else bdm_dim(r)
    vals = np.zeros((npts, ndof, 2))
    divs = np.zeros((npts, ndof))
    vals[:, :n_s, 0] = mono
    divs[:, :n_s] = inv_h * grad[:, :, 0]
    vals[:, n_s:2 * n_s, 1] = mono
    divs[:, n_s:2 * n_s] = inv_h * grad[:, :, 1]
    if space == "RT":
        # X times the homogeneous monomials of degree r; by Euler's identity
        # div(X q) = (2 + r) q / h_T for q homogeneous of degree r
        hom = np.array([(r - i, i) for i in range(r + 1)], dtype=np.int64)
        q = _eval_monos(hom, X)
        vals[:, 2 * n_s:, 0] = X[:, 0][:, None] * q
        vals[:, 2 * n_s:, 1] = X[:, 1][:, None] * q
        divs[:, 2 * n_s:] = inv_h * (2 + r) * q
    return vals, divs


@dataclass
class ProjectedField:
    """Per-cell (or per-edge) coefficient blocks in a local target space.

    ``space`` is one of "P_cell", "P_edge", "RT", "BDM". Cell-based fields
    are evaluated at reference-triangle points of a given cell; edge fields
    at canonical edge parameters t in [0, 1].
    """

    space: str
    degree: int
    coeffs: np.ndarray
    mesh: object
    _cell_basis: CellBasis = field(default=None, repr=False)
    _edge_basis: EdgeBasis = field(default=None, repr=False)
    _geom: tuple = field(default=None, repr=False)

    def evaluate(self, index: int, where: np.ndarray) -> np.ndarray:
        """Field values on cell/edge ``index``.

        For cell spaces ``where`` is (npts, 2) reference coordinates and the
        result is (npts,) for "P_cell" or (npts, 2) for "RT"/"BDM"; for
        "P_edge" it is (npts,) parameter values with a (npts,) result.
        """
        if self.space == "P_cell":
            return self._cell_basis.eval(where) @ self.coeffs[index]
        if self.space == "P_edge":
            return self._edge_basis.eval(where) @ self.coeffs[index]
        X = self._scaled_points(index, where)
        vals, _ = _vector_basis(self.space, self.degree, X, 1.0)
        return np.einsum("qjd,j->qd", vals, self.coeffs[index])

    def divergence(self, index: int, ref_points: np.ndarray) -> np.ndarray:
        """Pointwise divergence of an RT/BDM field on cell ``index``."""
        if self.space not in ("RT", "BDM"):
            raise ValueError(f"divergence undefined for space {self.space!r}")
        X = self._scaled_points(index, ref_points)
        _, divs = _vector_basis(self.space, self.degree, X, 1.0 / self.mesh.h_T[index])
        return divs @ self.coeffs[index]

    def _scaled_points(self, cell, ref_points):
        B, b0, _, _ = self._geom
        phys = np.atleast_2d(ref_points) @ B[cell].T + b0[cell]
        c = self.mesh.vertices[self.mesh.cells[cell]].mean(axis=0)
        return (phys - c) / self.mesh.h_T[cell]


def project_l2_cell(mesh, v, r: int) -> ProjectedField:
    """Cellwise L2 projection of a scalar function v(x, y) into P_r."""
    if r < 0:
        raise ValueError("projection degree must be >= 0")
    basis = CellBasis(r)
    rule = make_quadrature("triangle", max(2 * r + 12, 14))
    B, b0, det, _ = cell_geometry(mesh)
    P = basis.eval(rule.points)  # (nq, dim)
    phys = np.einsum("cde,qe->cqd", B, rule.points) + b0[:, None, :]
    fvals = v(phys[:, :, 0], phys[:, :, 1])
    # orthonormal reference basis: (psi_i, psi_j)_T = det * delta_ij, so the
    # det factors cancel in the coefficient formula
    coeffs = np.einsum("q,cq,qi->ci", rule.weights, fvals, P)
    return ProjectedField("P_cell", r, coeffs, mesh,
                          _cell_basis=basis, _geom=(B, b0, det, None))


def project_l2_edge(mesh, v, r: int) -> ProjectedField:
    """Edgewise L2 projection of a scalar trace function v(x, y) into P_r(E)."""
    if r < 0:
        raise ValueError("projection degree must be >= 0")
    basis = EdgeBasis(r)
    rule = make_quadrature("segment", max(2 * r + 12, 14))
    Chi = basis.eval(rule.points)  # (nq, r+1)
    v0 = mesh.vertices[mesh.edges[:, 0]]
    v1 = mesh.vertices[mesh.edges[:, 1]]
    phys = v0[:, None, :] + rule.points[None, :, None] * (v1 - v0)[:, None, :]
    fvals = v(phys[:, :, 0], phys[:, :, 1])
    # basis orthonormal in the canonical parameter, so h_E cancels
    coeffs = np.einsum("q,eq,qi->ei", rule.weights, fvals, Chi)
    return ProjectedField("P_edge", r, coeffs, mesh, _edge_basis=basis)


def _moment_interpolation(mesh, v, r, space):
    """Shared driver for the RT and BDM moment interpolations."""
    geom = cell_geometry(mesh)
    B, b0, det, inv_T = geom
    ndof = rt_dim(r) if space == "RT" else bdm_dim(r)
    cell_rule = make_quadrature("triangle", max(2 * r + 12, 14))
    edge_rule = make_quadrature("segment", max(2 * r + 12, 14))
    edge_basis = EdgeBasis(r)
    Chi = edge_basis.eval(edge_rule.points)  # (nqe, r+1)
    normals = mesh.outward_normals()
    centers = mesh.vertices[mesh.cells].mean(axis=1)

    # reference-edge parametrizations matching the canonical (low->high)
    # direction of each local edge; orientation handled by sampling the
    # physical edge directly below
    coeffs = np.empty((mesh.num_cells, ndof))
    for c in range(mesh.num_cells):
        hT = mesh.h_T[c]
        ctr = centers[c]
        rows = []
        rhs = []
        # edge-normal moments against P_r on each of the three edges
        for l in range(3):
            e = mesh.cell_edges[c, l]
            n = normals[c, l]
            w0 = mesh.vertices[mesh.edges[e, 0]]
            w1 = mesh.vertices[mesh.edges[e, 1]]
            pts = w0[None, :] + edge_rule.points[:, None] * (w1 - w0)[None, :]
            X = (pts - ctr) / hT
            vals, _ = _vector_basis(space, r, X, 1.0 / hT)
            phi_n = vals @ n  # (nqe, ndof)
            fvals = np.asarray(v(pts[:, 0], pts[:, 1]))  # (2, nqe)
            f_n = n[0] * fvals[0] + n[1] * fvals[1]
            hE = mesh.h_E[e]
            w = hE * edge_rule.weights
            rows.append(np.einsum("q,qi,qj->ij", w, Chi, phi_n))
            rhs.append(Chi.T @ (w * f_n))

        phys = cell_rule.points @ B[c].T + b0[c]
        Xc = (phys - ctr) / hT
        vals, _ = _vector_basis(space, r, Xc, 1.0 / hT)
        fvals = np.asarray(v(phys[:, 0], phys[:, 1]))  # (2, nq)
        wq = det[c] * cell_rule.weights

        if space == "RT":
            if r >= 1:
                # interior moments against [P_{r-1}]^2
                test = CellBasis(r - 1).eval(cell_rule.points)  # (nq, n_{r-1})
                for comp in range(2):
                    rows.append(np.einsum("q,qi,qj->ij", wq, test, vals[:, :, comp]))
                    rhs.append(test.T @ (wq * fvals[comp]))
        else:
            # gradient moments (skip the constant, whose gradient vanishes)
            if r >= 1:
                gexps = monomial_exponents(r - 1)[1:]
                g = _eval_mono_grads(gexps, Xc) / hT  # (nq, nm, 2)
                rows.append(np.einsum("q,qmd,qjd->mj", wq, g, vals))
                rhs.append(np.einsum("q,qmd,dq->m", wq, g, fvals))
            # curl-bubble moments: curl(b_T p) with the cubic bubble b_T
            if r >= 2:
                lam = np.column_stack([
                    1.0 - cell_rule.points[:, 0] - cell_rule.points[:, 1],
                    cell_rule.points[:, 0],
                    cell_rule.points[:, 1],
                ])
                glam_ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
                glam = glam_ref @ inv_T[c].T  # (3, 2) physical gradients
                bub = lam[:, 0] * lam[:, 1] * lam[:, 2]
                gbub = (lam[:, [1]] * lam[:, [2]] * glam[0]
                        + lam[:, [0]] * lam[:, [2]] * glam[1]
                        + lam[:, [0]] * lam[:, [1]] * glam[2])
                pexps = monomial_exponents(r - 2)
                pv = _eval_monos(pexps, Xc)
                pg = _eval_mono_grads(pexps, Xc) / hT
                # grad(b p) = p grad b + b grad p, curl = rot90 of it
                gx = pv * gbub[:, [0]] + bub[:, None] * pg[:, :, 0]
                gy = pv * gbub[:, [1]] + bub[:, None] * pg[:, :, 1]
                curl = np.stack([gy, -gx], axis=2)  # (nq, nm, 2)
                rows.append(np.einsum("q,qmd,qjd->mj", wq, curl, vals))
                rhs.append(np.einsum("q,qmd,dq->m", wq, curl, fvals))

        M = np.vstack(rows)
        b = np.concatenate(rhs)
        try:
            coeffs[c] = np.linalg.solve(M, b)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(
                f"singular moment matrix on cell {c}; the cell is degenerate"
            ) from exc

    return ProjectedField(space, r, coeffs, mesh, _geom=geom)


def project_rt(mesh, v, r: int) -> ProjectedField:
    """Raviart-Thomas interpolation of a vector field into RT_r per cell.

    ``v(x, y)`` must return an array with the component axis first. For
    r = 0 the interpolation is determined by the edge-normal moments alone.
    """
    if r < 0:
        raise ValueError("RT degree must be >= 0")
    return _moment_interpolation(mesh, v, r, "RT")


def project_bdm(mesh, v, r: int) -> ProjectedField:
    """BDM interpolation of a vector field into [P_r]^2 per cell (r >= 1)."""
    if r < 1:
        raise ValueError("BDM interpolation requires degree r >= 1")
    return _moment_interpolation(mesh, v, r, "BDM")
