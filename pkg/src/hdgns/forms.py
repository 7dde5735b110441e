"""Degree-of-freedom layout and per-element assembly of the HDG forms.

Unknowns per element are a tensor field (the scaled velocity gradient), the
velocity, the pressure, plus single-valued velocity/pressure traces on the
edges and one scalar multiplier pinning the pressure mean. Local coefficient
ordering:

    interior : [tensor (4*n_t) | velocity (2*n_s) | pressure (n_q)]
    boundary : [trace velocity, 3 edges x 2*n_e | trace pressure,
                3 edges x n_e | mean multiplier]

Vector/tensor components are component-major: a velocity block is
[x-coeffs, y-coeffs]; a tensor block is ordered (0,0), (0,1), (1,0), (1,1).
Assembly is vectorized over all cells; per-cell views are available through
``assemble_local``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import femcore
from .femcore import CellBasis, EdgeBasis, dim_poly_tri, make_quadrature
from .manufactured import example_solution
from .mesh import Mesh


class DofLayout:
    """Polynomial degrees and per-cell/per-edge dof counts.

    k >= 1 is the velocity/trace degree; the tensor degree m is k by default
    and may be set to k - 1. The interior pressure has degree k - 1.
    """

    def __init__(self, k: int, m: int | None = None):
        if k < 1:
            raise ValueError("velocity degree k must be >= 1")
        if m is None:
            m = k
        if m not in (k - 1, k):
            raise ValueError(f"tensor degree m must be k or k-1, got m={m} for k={k}")
        self.k = k
        self.m = m
        self.n_s = dim_poly_tri(k)        # scalar cell space, degree k
        self.n_t = dim_poly_tri(m)        # scalar tensor-component space
        self.n_q = dim_poly_tri(k - 1)    # pressure space
        self.n_e = k + 1                  # scalar edge space
        self.n_L = 4 * self.n_t
        self.n_u = 2 * self.n_s
        self.n_p = self.n_q
        self.n_uhat = 2 * self.n_e
        self.n_phat = self.n_e
        self.n_interior = self.n_L + self.n_u + self.n_p
        self.n_boundary = 3 * self.n_uhat + 3 * self.n_phat + 1

    def trace_dim(self, mesh: Mesh) -> int:
        """Global dof count of (trace velocity, trace pressure, multiplier)."""
        n_int_edges = int(np.count_nonzero(~mesh.boundary_flags))
        return n_int_edges * self.n_uhat + mesh.num_edges * self.n_phat + 1

    def monolithic_dim(self, mesh: Mesh) -> int:
        return mesh.num_cells * self.n_interior + self.trace_dim(mesh)


@dataclass
class FieldState:
    """Coefficient vectors of all fields of one discrete state.

    Trace-velocity rows of boundary edges are identically zero (the Dirichlet
    condition is enforced strongly by excluding those dofs).
    """

    layout: DofLayout
    L: np.ndarray        # (nc, 4*n_t)
    u: np.ndarray        # (nc, 2*n_s)
    p: np.ndarray        # (nc, n_q)
    uhat: np.ndarray     # (ne, 2*n_e)
    phat: np.ndarray     # (ne, n_e)
    lam: float = 0.0

    @classmethod
    def zeros(cls, layout: DofLayout, mesh: Mesh) -> "FieldState":
        return cls(
            layout,
            np.zeros((mesh.num_cells, layout.n_L)),
            np.zeros((mesh.num_cells, layout.n_u)),
            np.zeros((mesh.num_cells, layout.n_p)),
            np.zeros((mesh.num_edges, layout.n_uhat)),
            np.zeros((mesh.num_edges, layout.n_phat)),
        )

    def copy(self) -> "FieldState":
        return FieldState(self.layout, self.L.copy(), self.u.copy(), self.p.copy(),
                          self.uhat.copy(), self.phat.copy(), self.lam)


@dataclass
class LocalBlocks:
    """Element matrices of one cell (views into the batched assembly)."""

    cell: int
    A_diag: float              # a_h is (1/nu) * det * identity in this basis
    C_u: np.ndarray            # (4*n_t, 2*n_s)
    C_uhat: np.ndarray         # (4*n_t, 6*n_e)
    D_up: np.ndarray           # (2*n_s, n_q)
    D_uphat: np.ndarray        # (2*n_s, 3*n_e)
    S: np.ndarray              # (2*n_s + 6*n_e,) x same, stabilization
    B: np.ndarray              # (2*n_s + 6*n_e,) x same, frozen convection
    F: np.ndarray              # (2*n_s,) load vector
    edge_ids: np.ndarray       # (3,) global edge indices


class HDGContext:
    """Precomputed basis/quadrature/geometry data for one (mesh, layout).

    Everything that does not depend on the frozen convecting state or the
    body force is tabulated once here.
    """

    def __init__(self, mesh: Mesh, layout: DofLayout):
        self.mesh = mesh
        self.layout = layout
        k, m = layout.k, layout.m

        self.basis_v = CellBasis(k)
        self.basis_t = CellBasis(m)
        self.basis_q = CellBasis(k - 1)
        self.basis_e = EdgeBasis(k)

        self.cell_rule = make_quadrature("triangle", 3 * k + 2)
        self.edge_rule = make_quadrature("segment", 3 * k + 1)
        self.high_rule = make_quadrature("triangle", max(2 * k + 12, 14))

        self.B, self.b0, self.det, self.invT = femcore.cell_geometry(mesh)
        self.normals = mesh.outward_normals()                  # (nc,3,2)
        self.hE = mesh.h_E[mesh.cell_edges]                    # (nc,3)
        # stabilization weight tau = 1/h_T on each element boundary; ts is
        # tau times the edge length, the factor left after mapping edge
        # integrals to the unit parameter
        self.ts = self.hE / mesh.h_T[:, None]                  # (nc,3)
        # orientation: 0 if the cell walks the edge low->high vertex
        self.orient = (mesh.cell_edge_sign == -1).astype(np.int64)

        pts = self.cell_rule.points
        self.wq = self.cell_rule.weights
        self.P = self.basis_v.eval(pts)                        # (nq,n_s)
        self.dP = self.basis_v.grad(pts)
        self.Pt = self.basis_t.eval(pts)
        self.dPt = self.basis_t.grad(pts)
        self.Pq = self.basis_q.eval(pts)

        self.Gs = np.einsum("cde,qie->cqid", self.invT, self.dP)
        Gt = np.einsum("cde,qje->cqjd", self.invT, self.dPt)

        te = self.edge_rule.points
        self.we = self.edge_rule.weights
        self.Chi = self.basis_e.eval(te)                       # (nq_e,n_e)

        # reference trace points of each local edge, both walk directions
        R = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        Tv_tab = np.empty((3, 2, len(te), layout.n_s))
        Tt_tab = np.empty((3, 2, len(te), layout.n_t))
        Tq_tab = np.empty((3, 2, len(te), layout.n_q))
        for l in range(3):
            p0, p1 = R[l], R[(l + 1) % 3]
            for o in range(2):
                s = te if o == 0 else 1.0 - te
                xi = p0[None, :] + s[:, None] * (p1 - p0)[None, :]
                Tv_tab[l, o] = self.basis_v.eval(xi)
                Tt_tab[l, o] = self.basis_t.eval(xi)
                Tq_tab[l, o] = self.basis_q.eval(xi)
        ls = np.arange(3)[None, :]
        self.Tv = Tv_tab[ls, self.orient]                      # (nc,3,nq_e,n_s)
        self.Tt = Tt_tab[ls, self.orient]                      # (nc,3,nq_e,n_t)
        self.Tq = Tq_tab[ls, self.orient]                      # (nc,3,nq_e,n_q)

        # high-order rule data for loads and error norms
        self.w_hi = self.high_rule.weights
        self.P_hi = self.basis_v.eval(self.high_rule.points)
        self.Pt_hi = self.basis_t.eval(self.high_rule.points)
        self.Pq_hi = self.basis_q.eval(self.high_rule.points)
        dP_hi = self.basis_v.grad(self.high_rule.points)
        self.Gs_hi = np.einsum("cde,qie->cqid", self.invT, dP_hi)
        self.x_hi = np.einsum("cde,qe->cqd", self.B, self.high_rule.points) + self.b0[:, None, :]

        # --- frozen-state-independent form blocks ---------------------------
        d = self.det
        n_t, n_s, n_q, n_e = layout.n_t, layout.n_s, layout.n_q, layout.n_e

        cu = np.einsum("q,cqjb,qi->cjbi", self.wq, Gt, self.P) * d[:, None, None, None]
        nc = mesh.num_cells
        self.Cu = np.zeros((nc, layout.n_L, layout.n_u))
        for a in range(2):
            for b in range(2):
                g = 2 * a + b
                self.Cu[:, g * n_t:(g + 1) * n_t, a * n_s:(a + 1) * n_s] = cu[:, :, b, :]

        ea_t = np.einsum("q,qm,clqj->cljm", self.we, self.Chi, self.Tt)
        self.Cuh = np.zeros((nc, layout.n_L, 3 * layout.n_uhat))
        for l in range(3):
            for a in range(2):
                for b in range(2):
                    g = 2 * a + b
                    blk = -self.hE[:, l, None, None] * self.normals[:, l, b, None, None] * ea_t[:, l]
                    self.Cuh[:, g * n_t:(g + 1) * n_t,
                             l * layout.n_uhat + a * n_e:l * layout.n_uhat + (a + 1) * n_e] = blk

        dup = np.einsum("q,cqia,qm->ciam", self.wq, self.Gs, self.Pq) * d[:, None, None, None]
        self.Dup = np.zeros((nc, layout.n_u, n_q))
        for a in range(2):
            self.Dup[:, a * n_s:(a + 1) * n_s, :] = dup[:, :, a, :]

        # edge mass of cell-basis traces against the edge basis; also the
        # velocity-trace coupling of the stabilization
        self.Evx = np.einsum("q,clqi,qm->clim", self.we, self.Tv, self.Chi)  # (nc,3,n_s,n_e)
        self.Evv = np.einsum("q,clqi,clqj->clij", self.we, self.Tv, self.Tv)

        self.Duph = np.zeros((nc, layout.n_u, 3 * n_e))
        for l in range(3):
            for a in range(2):
                blk = self.hE[:, l, None, None] * self.normals[:, l, a, None, None] * self.Evx[:, l]
                self.Duph[:, a * n_s:(a + 1) * n_s, l * n_e:(l + 1) * n_e] = blk

        self.mq = np.einsum("q,qm->m", self.wq, self.Pq)[None, :] * d[:, None]

        # local offsets
        self.oL = 0
        self.ou = layout.n_L
        self.op = layout.n_L + layout.n_u
        self.ni = layout.n_interior
        self.ouh = self.ni
        self.oph = self.ni + 3 * layout.n_uhat
        self.olam = self.ni + layout.n_boundary - 1
        self.nloc = self.ni + layout.n_boundary

    # -- frozen-state dependent pieces ---------------------------------------

    def convection_blocks(self, frozen: FieldState):
        """Skew-symmetric convection blocks for a frozen convecting state.

        Returns (Bvol, Bue) with Bvol (nc, n_s, n_s) acting per velocity
        component and Bue (nc, 3, n_s, n_e) coupling interior test rows to
        trace columns; the trace-row/interior-column block is -Bue^T.
        """
        lay = self.layout
        nc = self.mesh.num_cells
        uw = frozen.u.reshape(nc, 2, lay.n_s)
        wv = np.einsum("qi,cbi->cqb", self.P, uw)
        wg = np.einsum("cqb,cqib->cqi", wv, self.Gs)
        X = np.einsum("q,qi,cqj->cij", self.wq, self.P, wg) * self.det[:, None, None]
        Bvol = 0.5 * (X - X.transpose(0, 2, 1))

        uhat_cell = frozen.uhat[self.mesh.cell_edges].reshape(nc, 3, 2, lay.n_e)
        wn = np.einsum("qm,clbm,clb->clq", self.Chi, uhat_cell, self.normals)
        Bue = 0.5 * self.hE[:, :, None, None] * np.einsum(
            "q,clq,clqi,qm->clim", self.we, wn, self.Tv, self.Chi)
        return Bvol, Bue

    def load_vector(self, source) -> np.ndarray:
        """(nc, 2*n_s) load vector of a body force, high-order quadrature."""
        lay = self.layout
        f = np.asarray(source(self.x_hi[:, :, 0], self.x_hi[:, :, 1]))
        F = np.einsum("q,acq,qi->cai", self.w_hi, f, self.P_hi) * self.det[:, None, None]
        return F.reshape(self.mesh.num_cells, lay.n_u)

    def local_system(self, frozen: FieldState, source, nu: float,
                     cells: slice = slice(None), precomputed=None):
        """Full local matrices M (nc, nloc, nloc) and loads (nc, nloc).

        Row/column order is [interior | boundary] as documented in the module
        docstring; rows are the equations tested with (tensor, velocity,
        pressure | trace velocity, trace pressure, mean). ``precomputed``
        optionally carries (Bvol, Bue, F) for all cells so chunked callers
        do not re-evaluate the convection blocks and loads.
        """
        lay = self.layout
        n_s, n_e, n_q = lay.n_s, lay.n_e, lay.n_q
        idx = np.arange(self.mesh.num_cells)[cells]
        nc = len(idx)

        if precomputed is None:
            Bvol_all, Bue_all = self.convection_blocks(frozen)
            F_all = self.load_vector(source)
        else:
            Bvol_all, Bue_all, F_all = precomputed
        Bvol, Bue = Bvol_all[idx], Bue_all[idx]

        M = np.zeros((nc, self.nloc, self.nloc))
        rhs = np.zeros((nc, self.nloc))

        oL, ou, op = self.oL, self.ou, self.op
        ouh, oph, olam = self.ouh, self.oph, self.olam
        sL = slice(oL, oL + lay.n_L)
        su = slice(ou, ou + lay.n_u)
        sp_ = slice(op, op + n_q)
        suh = slice(ouh, ouh + 3 * lay.n_uhat)
        sph = slice(oph, oph + 3 * n_e)

        # tensor rows: (1/nu) mass + c_h
        gi = np.arange(lay.n_L)
        M[:, sL, sL][:, gi, gi] = self.det[idx, None] / nu
        M[:, sL, su] = self.Cu[idx]
        M[:, sL, suh] = self.Cuh[idx]

        # momentum rows (interior velocity tests)
        M[:, su, sL] = -self.Cu[idx].transpose(0, 2, 1)
        M[:, su, sp_] = -self.Dup[idx]
        M[:, su, sph] = -self.Duph[idx]
        ts = self.ts[idx]
        for a in range(2):
            ra = slice(ou + a * n_s, ou + (a + 1) * n_s)
            M[:, ra, ra] += Bvol
            for l in range(3):
                ca = slice(ouh + l * lay.n_uhat + a * n_e, ouh + l * lay.n_uhat + (a + 1) * n_e)
                M[:, ra, ra] += nu * ts[:, l, None, None] * self.Evv[idx, l]
                M[:, ra, ca] += -nu * ts[:, l, None, None] * self.Evx[idx, l] + Bue[:, l]
        rhs[:, su] = F_all[idx]

        # momentum rows (trace velocity tests)
        M[:, suh, sL] = -self.Cuh[idx].transpose(0, 2, 1)
        for a in range(2):
            cu_ = slice(ou + a * n_s, ou + (a + 1) * n_s)
            for l in range(3):
                ra = slice(ouh + l * lay.n_uhat + a * n_e, ouh + l * lay.n_uhat + (a + 1) * n_e)
                M[:, ra, cu_] += (-nu * ts[:, l, None, None] * self.Evx[idx, l].transpose(0, 2, 1)
                                  - Bue[:, l].transpose(0, 2, 1))
                mi = np.arange(n_e)
                M[:, ra, ra][:, mi, mi] += nu * ts[:, l, None]

        # mass-conservation rows, mean-multiplier coupling
        M[:, sp_, su] = self.Dup[idx].transpose(0, 2, 1)
        M[:, sp_, olam] = self.mq[idx]
        M[:, sph, su] = self.Duph[idx].transpose(0, 2, 1)
        M[:, olam, sp_] = self.mq[idx]
        return M, rhs

    def boundary_dof_map(self, condensed: bool):
        """Global indices of each cell's boundary dofs, -1 for the removed
        trace-velocity dofs of boundary edges. Shape (nc, n_boundary)."""
        lay = self.layout
        mesh = self.mesh
        nc = mesh.num_cells
        ie = mesh.interior_edge_index()
        n_int = int(np.count_nonzero(~mesh.boundary_flags))
        base = 0 if condensed else nc * lay.n_interior
        phat_base = base + n_int * lay.n_uhat
        lam_index = phat_base + mesh.num_edges * lay.n_phat

        gmap = np.full((nc, lay.n_boundary), -1, dtype=np.int64)
        for l in range(3):
            e = mesh.cell_edges[:, l]
            ie_l = ie[e]
            cols = np.arange(lay.n_uhat)
            blk = np.where(ie_l[:, None] >= 0,
                           base + ie_l[:, None] * lay.n_uhat + cols[None, :], -1)
            gmap[:, l * lay.n_uhat:(l + 1) * lay.n_uhat] = blk
            cols_p = np.arange(lay.n_phat)
            gmap[:, 3 * lay.n_uhat + l * lay.n_phat:3 * lay.n_uhat + (l + 1) * lay.n_phat] = (
                phat_base + e[:, None] * lay.n_phat + cols_p[None, :])
        gmap[:, -1] = lam_index
        return gmap


def assemble_local(ctx: HDGContext, cell: int, frozen_w: FieldState, f, nu: float = 1.0) -> LocalBlocks:
    """Element matrices of one cell, for inspection and testing."""
    lay = ctx.layout
    Bvol, Bue = ctx.convection_blocks(frozen_w)
    F = ctx.load_vector(f)
    n_s, n_e = lay.n_s, lay.n_e
    nuv = lay.n_u + 3 * lay.n_uhat

    S = np.zeros((nuv, nuv))
    B = np.zeros((nuv, nuv))
    for a in range(2):
        ra = slice(a * n_s, (a + 1) * n_s)
        B[ra, ra] += Bvol[cell]
        for l in range(3):
            ca = slice(lay.n_u + l * lay.n_uhat + a * n_e, lay.n_u + l * lay.n_uhat + (a + 1) * n_e)
            t = ctx.ts[cell, l]
            S[ra, ra] += t * ctx.Evv[cell, l]
            S[ra, ca] -= t * ctx.Evx[cell, l]
            S[ca, ra] -= t * ctx.Evx[cell, l].T
            S[ca, ca] += t * np.eye(n_e)
            B[ra, ca] += Bue[cell, l]
            B[ca, ra] -= Bue[cell, l].T
    S *= nu

    return LocalBlocks(
        cell=cell,
        A_diag=float(ctx.det[cell] / nu),
        C_u=ctx.Cu[cell].copy(),
        C_uhat=ctx.Cuh[cell].copy(),
        D_up=ctx.Dup[cell].copy(),
        D_uphat=ctx.Duph[cell].copy(),
        S=S,
        B=B,
        F=F[cell].copy(),
        edge_ids=ctx.mesh.cell_edges[cell].copy(),
    )


def apply_Kh(ctx: HDGContext, u: np.ndarray, uhat: np.ndarray) -> np.ndarray:
    """Discrete lifting of a velocity/trace pair into the tensor space.

    Solves (K(v, vhat), G)_T = -c_h((v, vhat), G) per cell; with the
    orthonormal tensor basis the local mass matrix is det * identity.
    Returns coefficients of shape (nc, 4*n_t).
    """
    lay = ctx.layout
    mesh = ctx.mesh
    uhat_cell = uhat[mesh.cell_edges].reshape(mesh.num_cells, 3 * lay.n_uhat)
    rhs = np.einsum("cgu,cu->cg", ctx.Cu, u) + np.einsum("cgu,cu->cg", ctx.Cuh, uhat_cell)
    return -rhs / ctx.det[:, None]


def manufactured_source(example_id: int, point, nu: float = 1.0) -> np.ndarray:
    """Body force of a benchmark case at one point (or arrays of points)."""
    sol = example_solution(example_id, nu)
    point = np.asarray(point, dtype=float)
    return sol.source(point[..., 0], point[..., 1])
