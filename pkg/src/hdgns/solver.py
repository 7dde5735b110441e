"""Global assembly, sparse direct solve, and the Picard fixed-point loop.

Two assembly modes exist: ``monolithic`` stacks every unknown into one
saddle-point matrix; ``condensed`` eliminates the interior (tensor,
velocity, pressure) unknowns element by element via dense factorization and
solves only for the traces and the mean multiplier, with interior fields
recovered by back-substitution. Both modes share the same local matrices,
so they agree to solver precision.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forms import DofLayout, FieldState, HDGContext, apply_Kh
from .mesh import Mesh

_DEFAULT_CHUNK = 4096


class SolverError(RuntimeError):
    """Raised when a factorization fails; carries matrix statistics."""

    def __init__(self, message, dim=None, nnz=None):
        super().__init__(message)
        self.dim = dim
        self.nnz = nnz


@dataclass
class GlobalSystem:
    """Assembled linear system of one Oseen (or Stokes) step."""

    mode: str
    matrix: sp.csc_matrix
    rhs: np.ndarray
    ctx: HDGContext
    nu: float
    gmap_B: np.ndarray
    # condensed-mode recovery data: interior fields are recovered by
    # re-assembling the local systems chunk-wise, which needs the frozen
    # convecting state and the source (None in monolithic mode)
    frozen: FieldState | None = None
    source: object = None

    @property
    def dim(self):
        return self.matrix.shape[0]


@dataclass
class PicardReport:
    """Record of one nonlinear solve."""

    iterations: int = 0
    increments: list = field(default_factory=list)
    final_residual: float = float("nan")
    converged: bool = False


def _chunk_size(nloc: int = 0):
    # smaller chunks cap the memory of the stacked local matrices; scale
    # down with the local matrix size so a chunk stays around 200 MB
    env = os.environ.get("HDGNS_CHUNK")
    if env is not None:
        return int(env)
    if nloc > 0:
        return max(64, min(_DEFAULT_CHUNK, int(2e8 / (8 * nloc * nloc))))
    return _DEFAULT_CHUNK


def assemble_global(ctx: HDGContext, frozen: FieldState, source, nu: float,
                    mode: str = "condensed") -> GlobalSystem:
    """Assemble the global sparse system for one linearized step.

    ``frozen`` supplies the convecting state of the Oseen linearization;
    passing a zero state yields the Stokes system.
    """
    if mode not in ("monolithic", "condensed"):
        raise ValueError(f"unknown assembly mode {mode!r}")
    lay = ctx.layout
    mesh = ctx.mesh
    nc = mesh.num_cells
    ni = lay.n_interior
    nb = lay.n_boundary
    condensed = mode == "condensed"
    gmap_B = ctx.boundary_dof_map(condensed)
    dim = lay.trace_dim(mesh) if condensed else lay.monolithic_dim(mesh)

    pre = ctx.convection_blocks(frozen) + (ctx.load_vector(source),)
    chunk = _chunk_size(ni + nb)

    rows_all, cols_all, vals_all = [], [], []
    rhs = np.zeros(dim)

    for start in range(0, nc, chunk):
        cells = slice(start, min(start + chunk, nc))
        M, F_loc = ctx.local_system(frozen, source, nu, cells=cells, precomputed=pre)
        ncc = M.shape[0]
        gB = gmap_B[cells]

        if condensed:
            M_II = M[:, :ni, :ni]
            M_IB = M[:, :ni, ni:]
            M_BI = M[:, ni:, :ni]
            M_BB = M[:, ni:, ni:]
            F_I = F_loc[:, :ni]
            try:
                X = np.linalg.solve(M_II, np.concatenate([M_IB, F_I[:, :, None]], axis=2))
            except np.linalg.LinAlgError as exc:
                bad = start + _first_singular(M_II)
                raise SolverError(f"singular interior block in cell {bad} "
                                  "during static condensation") from exc
            S_loc = M_BB - M_BI @ X[:, :, :nb]
            r_loc = F_loc[:, ni:] - (M_BI @ X[:, :, nb:])[:, :, 0]

            rr = np.repeat(gB[:, :, None], nb, axis=2)
            cc = np.repeat(gB[:, None, :], nb, axis=1)
            mask = (rr >= 0) & (cc >= 0)
            rows_all.append(rr[mask])
            cols_all.append(cc[mask])
            vals_all.append(S_loc[mask])
            mrow = gB >= 0
            np.add.at(rhs, gB[mrow], r_loc[mrow])
        else:
            gI = (np.arange(start, start + ncc)[:, None] * ni + np.arange(ni)[None, :])
            gfull = np.concatenate([gI, gB], axis=1)
            rr = np.repeat(gfull[:, :, None], ni + nb, axis=2)
            cc = np.repeat(gfull[:, None, :], ni + nb, axis=1)
            mask = (rr >= 0) & (cc >= 0)
            rows_all.append(rr[mask])
            cols_all.append(cc[mask])
            vals_all.append(M[mask])
            mrow = gfull >= 0
            np.add.at(rhs, gfull[mrow], F_loc[mrow])

    rows = np.concatenate(rows_all)
    cols = np.concatenate(cols_all)
    vals = np.concatenate(vals_all)
    matrix = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsc()

    if condensed:
        return GlobalSystem(mode, matrix, rhs, ctx, nu, gmap_B,
                            frozen=frozen.copy(), source=source)
    return GlobalSystem(mode, matrix, rhs, ctx, nu, gmap_B)


def _first_singular(M):
    for i, Mi in enumerate(M):
        if not np.isfinite(np.linalg.cond(Mi)) or np.linalg.cond(Mi) > 1e15:
            return i
    return 0


def _pin_index(system: GlobalSystem) -> int:
    """Global index of the constant pressure-trace mode of edge 0."""
    ctx = system.ctx
    lay = ctx.layout
    mesh = ctx.mesh
    n_int = int(np.count_nonzero(~mesh.boundary_flags))
    base = 0 if system.mode == "condensed" else mesh.num_cells * lay.n_interior
    return base + n_int * lay.n_uhat


def _shift_pressure_mean(ctx: HDGContext, state: FieldState):
    """Shift (p, phat) along the pressure nullspace so that p has zero mean."""
    area = 0.5 * float(ctx.det.sum())
    t = -float(np.sum(ctx.mq * state.p)) / area
    q0 = float(ctx.basis_q.eval(np.array([[1.0 / 3.0, 1.0 / 3.0]]))[0, 0])
    state.p[:, 0] += t / q0
    state.phat[:, 0] -= t  # edge basis mode 0 is the constant 1


def _full_vector(system: GlobalSystem, state: FieldState) -> np.ndarray:
    if system.mode == "condensed":
        return pack_trace(system, state)
    return pack_monolithic(system, state)


def _residual(system: GlobalSystem, x: np.ndarray) -> float:
    bn = np.linalg.norm(system.rhs)
    return float(np.linalg.norm(system.matrix @ x - system.rhs) / (bn if bn > 0 else 1.0))


def solve_linear(system: GlobalSystem) -> tuple[FieldState, float]:
    """Direct solve; returns the unpacked state and the relative residual.

    The mean multiplier makes one dense row/column, which would destroy the
    fill-reducing ordering; since the multiplier vanishes for the consistent
    right-hand side, the system is solved with the multiplier and one pinned
    pressure-trace dof removed, and the pressure mean is restored by a
    nullspace shift. The residual of the full system (multiplier included)
    validates the shortcut; on failure the full matrix is factorized.

    In condensed mode the interior fields are recovered per element by
    re-assembling the local matrices in chunks.
    """
    A, b = system.matrix, system.rhs
    dim = A.shape[0]
    keep = np.ones(dim, dtype=bool)
    keep[[_pin_index(system), dim - 1]] = False
    try:
        A_red = A.tocsr()[keep][:, keep].tocsc()
        lu = spla.splu(A_red)
        x = np.zeros(dim)
        x[keep] = lu.solve(b[keep])
        state = unpack_state(system, x)
        _shift_pressure_mean(system.ctx, state)
        res = _residual(system, _full_vector(system, state))
        if np.isfinite(res) and res <= 1e-8:
            return state, res
    except RuntimeError:
        pass

    # fallback: factorize the full matrix, dense multiplier row included
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SolverError(f"sparse LU factorization failed: {exc}",
                          dim=dim, nnz=A.nnz) from exc
    x = lu.solve(b)
    return unpack_state(system, x), _residual(system, x)


def _gather_boundary(system: GlobalSystem, x_trace: np.ndarray) -> np.ndarray:
    gB = system.gmap_B
    xb = np.where(gB >= 0, x_trace[np.clip(gB, 0, None)], 0.0)
    return xb


def unpack_state(system: GlobalSystem, x: np.ndarray) -> FieldState:
    """Expand a solution vector of either mode into a FieldState."""
    ctx = system.ctx
    lay = ctx.layout
    mesh = ctx.mesh
    nc = mesh.num_cells
    ni = lay.n_interior

    state = FieldState.zeros(lay, mesh)
    if system.mode == "condensed":
        xb = _gather_boundary(system, x)
        pre = ctx.convection_blocks(system.frozen) + (ctx.load_vector(system.source),)
        xi = np.empty((nc, ni))
        chunk = _chunk_size(ni + lay.n_boundary)
        for start in range(0, nc, chunk):
            cells = slice(start, min(start + chunk, nc))
            M, F_loc = ctx.local_system(system.frozen, system.source, system.nu,
                                        cells=cells, precomputed=pre)
            rhs = F_loc[:, :ni] - np.einsum("cib,cb->ci", M[:, :ni, ni:], xb[cells])
            xi[cells] = np.linalg.solve(M[:, :ni, :ni], rhs[:, :, None])[:, :, 0]
        trace = x
    else:
        xi = x[:nc * ni].reshape(nc, ni)
        trace = x[nc * ni:]

    state.L = xi[:, :lay.n_L].copy()
    state.u = xi[:, lay.n_L:lay.n_L + lay.n_u].copy()
    state.p = xi[:, lay.n_L + lay.n_u:].copy()

    ie = mesh.interior_edge_index()
    n_int = int(np.count_nonzero(~mesh.boundary_flags))
    interior = ie >= 0
    state.uhat[interior] = trace[:n_int * lay.n_uhat].reshape(n_int, lay.n_uhat)
    off = n_int * lay.n_uhat
    state.phat = trace[off:off + mesh.num_edges * lay.n_phat].reshape(
        mesh.num_edges, lay.n_phat).copy()
    state.lam = float(trace[-1])
    return state


def pack_trace(system: GlobalSystem, state: FieldState) -> np.ndarray:
    """Trace/multiplier part of a state as a condensed solution vector."""
    mesh = system.ctx.mesh
    ie_mask = ~mesh.boundary_flags
    parts = [state.uhat[ie_mask].ravel(), state.phat.ravel(), [state.lam]]
    return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])


def pack_monolithic(system: GlobalSystem, state: FieldState) -> np.ndarray:
    xi = np.concatenate([state.L, state.u, state.p], axis=1).ravel()
    return np.concatenate([xi, pack_trace(system, state)])


def monolithic_residual(ctx: HDGContext, state: FieldState, source,
                        nu: float) -> float:
    """Relative residual ||A x - b|| / ||b|| of the monolithic system
    linearized at ``state``, without forming the global matrix.

    Each local matrix acts on its own interior and trace unknowns; the
    per-cell products are scattered into a global residual vector, so the
    memory stays at one chunk of local matrices regardless of mesh size.
    """
    lay = ctx.layout
    mesh = ctx.mesh
    nc = mesh.num_cells
    ni = lay.n_interior
    gmap_B = ctx.boundary_dof_map(False)
    dim = lay.monolithic_dim(mesh)

    xi = np.concatenate([state.L, state.u, state.p], axis=1)
    x = np.concatenate([xi.ravel(), state.uhat[~mesh.boundary_flags].ravel(),
                        state.phat.ravel(), [state.lam]])
    r = np.zeros(dim)
    b = np.zeros(dim)
    pre = ctx.convection_blocks(state) + (ctx.load_vector(source),)
    chunk = _chunk_size(ni + lay.n_boundary)
    for start in range(0, nc, chunk):
        cells = slice(start, min(start + chunk, nc))
        M, F_loc = ctx.local_system(state, source, nu, cells=cells, precomputed=pre)
        gB = gmap_B[cells]
        xb = np.where(gB >= 0, x[np.clip(gB, 0, None)], 0.0)
        xc = np.concatenate([xi[cells], xb], axis=1)
        y = np.einsum("cij,cj->ci", M, xc)
        lo = cells.start * ni
        r[lo:lo + y.shape[0] * ni] = y[:, :ni].ravel()
        b[lo:lo + y.shape[0] * ni] = F_loc[:, :ni].ravel()
        mrow = gB >= 0
        np.add.at(r, gB[mrow], y[:, ni:][mrow])
        np.add.at(b, gB[mrow], F_loc[:, ni:][mrow])
    bn = np.linalg.norm(b)
    return float(np.linalg.norm(r - b) / (bn if bn > 0 else 1.0))


# -- mesh-dependent semi-norms ----------------------------------------------

def norm_V(ctx: HDGContext, state: FieldState) -> float:
    """Velocity semi-norm: lifted-gradient L2 norm plus scaled trace jumps."""
    return norm_V_pair(ctx, state.u, state.uhat)


def norm_V_pair(ctx: HDGContext, u: np.ndarray, uhat: np.ndarray) -> float:
    lay = ctx.layout
    nc = ctx.mesh.num_cells
    K = apply_Kh(ctx, u, uhat)
    val = float(np.sum(ctx.det[:, None] * K**2))

    u2 = u.reshape(nc, 2, lay.n_s)
    uhat_cell = uhat[ctx.mesh.cell_edges].reshape(nc, 3, 2, lay.n_e)
    tr_u = np.einsum("clqi,cai->claq", ctx.Tv, u2)
    tr_uh = np.einsum("qm,clam->claq", ctx.Chi, uhat_cell)
    diff = tr_u - tr_uh
    # tau * ds = tau * h_E dt, with tau = 1/h_T of the owning cell
    val += float(np.einsum("cl,q,claq->", ctx.ts, ctx.we, diff**2))
    return np.sqrt(val)


def norm_Q(ctx: HDGContext, p: np.ndarray, phat: np.ndarray) -> float:
    """Pressure semi-norm: L2 norm plus inverse-tau-weighted trace jumps."""
    lay = ctx.layout
    nc = ctx.mesh.num_cells
    val = float(np.sum(ctx.det[:, None] * p**2))
    phat_cell = phat[ctx.mesh.cell_edges]
    tr_p = np.einsum("clqi,ci->clq", ctx.Tq, p)
    tr_ph = np.einsum("qm,clm->clq", ctx.Chi, phat_cell)
    diff = tr_p - tr_ph
    # (1/tau) * ds = h_T * h_E dt
    val += float(np.einsum("cl,q,clq->", ctx.hE**2 / ctx.ts, ctx.we, diff**2))
    return np.sqrt(val)


# -- nonlinear solve ---------------------------------------------------------

def picard_solve(mesh: Mesh, layout: DofLayout, source, nu: float,
                 tol: float = 1e-10, max_iter: int = 50,
                 mode: str = "condensed", ctx: HDGContext | None = None,
                 initial: FieldState | None = None):
    """Oseen fixed-point iteration for the nonlinear scheme.

    The convecting state is frozen at the previous iterate, so the first
    pass from a zero state is exactly the Stokes solve. Iteration stops when
    the V-norm of the increment drops below ``tol``.

    Returns (state, PicardReport); a non-converged run still returns the
    last state, flagged in the report.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if ctx is None:
        ctx = HDGContext(mesh, layout)

    state = initial if initial is not None else FieldState.zeros(layout, mesh)
    report = PicardReport()
    system = None
    for _ in range(max_iter):
        system = assemble_global(ctx, state, source, nu, mode)
        new_state, _ = solve_linear(system)
        inc = norm_V_pair(ctx, new_state.u - state.u, new_state.uhat - state.uhat)
        report.increments.append(inc)
        report.iterations += 1
        state = new_state
        if inc <= tol:
            report.converged = True
            break
        # no contraction left: the increment has hit its round-off floor
        # (or the iteration diverges); either way further sweeps cannot
        # improve, so stop and let the residual check below decide
        if len(report.increments) >= 3 and inc > 0.25 * report.increments[-2]:
            break

    # nonlinear residual against all test functions: re-linearize at the
    # solution and evaluate the full (monolithic) A x - b matrix-free
    report.final_residual = monolithic_residual(ctx, state, source, nu)
    if not report.converged and report.final_residual <= 1e-9:
        report.converged = True
    return state, report
