"""Shared oracles and state constructors for the test suite.

Everything here recomputes quantities from first principles with its own
quadrature rules and per-cell Python loops, independently of the vectorized
tabulations inside the library, so the tests cross-check two code paths.
"""
import numpy as np

from hdgns.femcore import CellBasis, EdgeBasis, cell_geometry, make_quadrature
from hdgns.forms import FieldState
from hdgns.projections import project_l2_cell, project_l2_edge
from hdgns.solver import assemble_global, pack_monolithic


def zero_source(x, y):
    return np.zeros((2,) + np.shape(x))


def random_state(layout, mesh, rng, scale=1.0, boundary_zero=True):
    """Random coefficients in every field; boundary velocity traces zeroed."""
    st = FieldState.zeros(layout, mesh)
    st.L = rng.standard_normal(st.L.shape) * scale
    st.u = rng.standard_normal(st.u.shape) * scale
    st.p = rng.standard_normal(st.p.shape) * scale
    st.uhat = rng.standard_normal(st.uhat.shape) * scale
    st.phat = rng.standard_normal(st.phat.shape) * scale
    st.lam = float(rng.standard_normal()) * scale
    if boundary_zero:
        st.uhat[mesh.boundary_flags] = 0.0
    return st


def matched_velocity_state(mesh, layout, fx, fy):
    """State whose velocity traces equal the traces of a continuous field.

    fx, fy must be polynomials of degree <= k so the cell and edge L2
    projections reproduce the field (and its edge traces) exactly.
    """
    st = FieldState.zeros(layout, mesh)
    cu = np.stack([project_l2_cell(mesh, fx, layout.k).coeffs,
                   project_l2_cell(mesh, fy, layout.k).coeffs], axis=1)
    st.u = cu.reshape(mesh.num_cells, -1)
    eu = np.stack([project_l2_edge(mesh, fx, layout.k).coeffs,
                   project_l2_edge(mesh, fy, layout.k).coeffs], axis=1)
    st.uhat = eu.reshape(mesh.num_edges, -1)
    return st


def stokes_source(sol):
    """Forcing with the convective part removed from a manufactured solution."""
    def f(x, y):
        base = np.asarray(sol.source(x, y))
        u = np.asarray(sol.velocity(x, y))
        g = np.asarray(sol.velocity_gradient(x, y))
        conv = np.einsum("b...,ab...->a...", u, g)
        return base - conv
    return f


def convection_delta(ctx, frozen, nu=1.0):
    """Monolithic matrix of the convection form alone, by subtracting the
    assembly at the zero state; returns (delta_matrix, system_at_frozen)."""
    zero = FieldState.zeros(ctx.layout, ctx.mesh)
    Aw = assemble_global(ctx, frozen, zero_source, nu, "monolithic")
    A0 = assemble_global(ctx, zero, zero_source, nu, "monolithic")
    return (Aw.matrix - A0.matrix).tocsr(), Aw


def convection_value(ctx, system, delta, U, V):
    """Trilinear convection value b(W; U, V) through the assembled matrix."""
    xu = pack_monolithic(system, U)
    xv = pack_monolithic(system, V)
    return float(xv @ (delta @ xu)), float(np.abs(xv) @ (abs(delta) @ np.abs(xu)))


def convection_oracle(ctx, W, U, V, degree=14):
    """Direct quadrature of the skew-symmetrized convection trilinear form:
    one half of (v (w.grad) u - u (w.grad) v) over cells plus one half of
    (what.n)(uhat.v - u.vhat) over cell boundaries."""
    mesh, lay = ctx.mesh, ctx.layout
    crule = make_quadrature("triangle", degree)
    erule = make_quadrature("segment", degree)
    B, b0, det, _ = cell_geometry(mesh)
    bs = CellBasis(lay.k)
    be = EdgeBasis(lay.k)
    Pc = bs.eval(crule.points)
    dPc = bs.grad(crule.points)
    Chi = be.eval(erule.points)
    normals = mesh.outward_normals()
    nc = mesh.num_cells

    def cvals(st, c):
        return Pc @ st.u.reshape(nc, 2, lay.n_s)[c].T

    def cgrads(st, c, Binv):
        g = dPc @ Binv
        return np.einsum("qsd,as->qad", g, st.u.reshape(nc, 2, lay.n_s)[c])

    total = 0.0
    for c in range(nc):
        Binv = np.linalg.inv(B[c])
        wv, uv, vv = cvals(W, c), cvals(U, c), cvals(V, c)
        gu, gv = cgrads(U, c, Binv), cgrads(V, c, Binv)
        t1 = np.einsum("qa,qb,qab->q", vv, wv, gu)
        t2 = np.einsum("qa,qb,qab->q", uv, wv, gv)
        total += 0.5 * det[c] * np.sum(crule.weights * (t1 - t2))
        for l in range(3):
            e = mesh.cell_edges[c, l]
            n = normals[c, l]
            w0, w1 = mesh.vertices[mesh.edges[e]]
            pts = w0[None, :] + erule.points[:, None] * (w1 - w0)[None, :]
            ref = np.linalg.solve(B[c], (pts - b0[c]).T).T
            tr = bs.eval(ref)

            def evals(st):
                return Chi @ st.uhat.reshape(mesh.num_edges, 2, lay.n_e)[e].T

            def tvals(st):
                return tr @ st.u.reshape(nc, 2, lay.n_s)[c].T

            wn = evals(W) @ n
            w = mesh.h_E[e] * erule.weights
            total += 0.5 * np.sum(
                w * wn * ((evals(U) * tvals(V)).sum(1)
                          - (tvals(U) * evals(V)).sum(1)))
    return total


def lifted_gradient_oracle(ctx, u, uhat, degree=None):
    """Dense per-cell oracle for the gradient lifting: solves the defining
    moment equations (K, G)_T = (grad u, G)_T - <u - uhat, G n> for every
    tensor test function with independent quadrature."""
    mesh, lay = ctx.mesh, ctx.layout
    nc = mesh.num_cells
    if degree is None:
        degree = 2 * lay.k + 8
    crule = make_quadrature("triangle", degree)
    erule = make_quadrature("segment", degree)
    B, b0, det, _ = cell_geometry(mesh)
    bs = CellBasis(lay.k)
    bt = CellBasis(lay.m)
    be = EdgeBasis(lay.k)
    normals = mesh.outward_normals()
    Pt = bt.eval(crule.points)
    dPs = bs.grad(crule.points)
    Chi = be.eval(erule.points)
    u2 = u.reshape(nc, 2, lay.n_s)
    uhat_e = uhat.reshape(mesh.num_edges, 2, lay.n_e)

    K = np.zeros((nc, 2, 2, lay.n_t))
    for c in range(nc):
        gphys = dPs @ np.linalg.inv(B[c])
        for a in range(2):
            du = np.einsum("qsd,s->qd", gphys, u2[c, a])
            for b in range(2):
                K[c, a, b] = det[c] * np.einsum(
                    "q,q,qj->j", crule.weights, du[:, b], Pt)
        for l in range(3):
            e = mesh.cell_edges[c, l]
            n = normals[c, l]
            w0, w1 = mesh.vertices[mesh.edges[e]]
            pts = w0[None, :] + erule.points[:, None] * (w1 - w0)[None, :]
            ref = np.linalg.solve(B[c], (pts - b0[c]).T).T
            trt = bt.eval(ref)
            w = mesh.h_E[e] * erule.weights
            for a in range(2):
                diff = bs.eval(ref) @ u2[c, a] - Chi @ uhat_e[e, a]
                for b in range(2):
                    K[c, a, b] -= n[b] * np.einsum("q,q,qj->j", w, diff, trt)
        K[c] /= det[c]
    return K.reshape(nc, -1)


def trace_jump_oracle(ctx, u, uhat, degree=None):
    """Independent quadrature of sum_T sum_E (1/h_T) int_E |tr u - uhat|^2."""
    mesh, lay = ctx.mesh, ctx.layout
    nc = mesh.num_cells
    if degree is None:
        degree = 2 * lay.k + 8
    erule = make_quadrature("segment", degree)
    B, b0, _, _ = cell_geometry(mesh)
    bs = CellBasis(lay.k)
    be = EdgeBasis(lay.k)
    Chi = be.eval(erule.points)
    u2 = u.reshape(nc, 2, lay.n_s)
    uhat_e = uhat.reshape(mesh.num_edges, 2, lay.n_e)
    total = 0.0
    for c in range(nc):
        for l in range(3):
            e = mesh.cell_edges[c, l]
            w0, w1 = mesh.vertices[mesh.edges[e]]
            pts = w0[None, :] + erule.points[:, None] * (w1 - w0)[None, :]
            ref = np.linalg.solve(B[c], (pts - b0[c]).T).T
            diff = bs.eval(ref) @ u2[c].T - Chi @ uhat_e[e].T
            w = mesh.h_E[e] * erule.weights / mesh.h_T[c]
            total += np.sum(w * (diff ** 2).sum(axis=1))
    return total


def stabilization_value(ctx, state, nu=1.0):
    """Quadratic form of the velocity-jump stabilization through the
    assembled Stokes matrix: with only (u, uhat) set, every other coupling
    drops out of x^T A x."""
    zero = FieldState.zeros(ctx.layout, ctx.mesh)
    system = assemble_global(ctx, zero, zero_source, nu, "monolithic")
    probe = FieldState.zeros(ctx.layout, ctx.mesh)
    probe.u = state.u.copy()
    probe.uhat = state.uhat.copy()
    x = pack_monolithic(system, probe)
    return float(x @ (system.matrix @ x))


def vector_l2_error(pf, v, degree=24):
    """Brute-force quadrature of ||v - pf||_L2 for an RT/BDM field."""
    mesh = pf.mesh
    rule = make_quadrature("triangle", degree)
    B, b0, det, _ = cell_geometry(mesh)
    total = 0.0
    for c in range(mesh.num_cells):
        phys = rule.points @ B[c].T + b0[c]
        vals = pf.evaluate(c, rule.points)
        ex = np.asarray(v(phys[:, 0], phys[:, 1])).T
        total += det[c] * np.sum(rule.weights * ((vals - ex) ** 2).sum(axis=1))
    return np.sqrt(total)


# eighth-order central difference stencils: exact for polynomials of degree
# at most eight, so they serve as derivative oracles for polynomial data
_D1 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0,
                4 / 5, -1 / 5, 4 / 105, -1 / 280])
_D2 = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72,
                8 / 5, -1 / 5, 8 / 315, -1 / 560])
_OFF = np.arange(-4, 5)


def fd_dx(f, x, y, h=0.02):
    return sum(w * np.asarray(f(x + o * h, y))
               for o, w in zip(_OFF, _D1)) / h


def fd_dy(f, x, y, h=0.02):
    return sum(w * np.asarray(f(x, y + o * h))
               for o, w in zip(_OFF, _D1)) / h


def fd_laplace(f, x, y, h=0.02):
    d2x = sum(w * np.asarray(f(x + o * h, y)) for o, w in zip(_OFF, _D2))
    d2y = sum(w * np.asarray(f(x, y + o * h)) for o, w in zip(_OFF, _D2))
    return (d2x + d2y) / (h * h)
