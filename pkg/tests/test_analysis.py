"""Error norms, divergence diagnostics, and convergence-rate tables."""
import numpy as np
import pytest

from hdgns.analysis import (
    ConvergenceRow,
    divergence_l1,
    divergence_max,
    energy_identity,
    error_norms,
    normal_jump_max,
    rate_table,
)
from hdgns.forms import DofLayout, HDGContext
from hdgns.manufactured import example_solution
from hdgns.mesh import build_uniform_mesh
from hdgns.solver import picard_solve


@pytest.fixture(scope="module")
def solved():
    mesh = build_uniform_mesh(4)
    lay = DofLayout(2)
    ctx = HDGContext(mesh, lay)
    sol = example_solution(1, 1.0)
    state, report = picard_solve(mesh, lay, sol.source, 1.0, ctx=ctx)
    assert report.converged
    return mesh, lay, ctx, sol, state


def _row(n, eu, eL, ep):
    return ConvergenceRow(n=n, h=np.sqrt(2.0) / n, err_u_rel=eu,
                          err_L_rel=eL, err_p_rel=ep, div_l1=0.0, iters=3)


def test_rate_table_computes_log2_ratios():
    rows = [_row(4, 0.1, 0.2, 0.4), _row(8, 0.025, 0.1, 0.2),
            _row(16, 0.00625, 0.05, 0.1)]
    out = rate_table(rows)
    assert out[0].rate_u is None and out[0].rate_L is None
    assert abs(out[1].rate_u - 2.0) < 1e-12
    assert abs(out[2].rate_u - 2.0) < 1e-12
    assert abs(out[1].rate_L - 1.0) < 1e-12
    assert abs(out[2].rate_p - 1.0) < 1e-12


def test_rate_table_known_error_pair():
    rows = [_row(8, 4.5065e-2, 1.0, 1.0), _row(16, 1.1561e-2, 1.0, 1.0)]
    out = rate_table(rows)
    assert abs(out[1].rate_u - np.log2(4.5065e-2 / 1.1561e-2)) < 1e-12
    assert abs(out[1].rate_u - 1.9628) < 1e-3


def test_rate_table_requires_doubling():
    rows = [_row(4, 0.1, 0.1, 0.1), _row(6, 0.05, 0.05, 0.05)]
    with pytest.raises(ValueError):
        rate_table(rows)


def test_rate_table_handles_vanishing_errors():
    rows = [_row(4, 0.0, 0.1, 0.1), _row(8, 0.0, 0.05, 0.05)]
    out = rate_table(rows)
    assert out[1].rate_u is None
    assert abs(out[1].rate_L - 1.0) < 1e-12


def test_divergence_diagnostics_after_solve(solved):
    mesh, lay, ctx, sol, state = solved
    uscale = max(1.0, np.abs(state.u).max())
    assert divergence_l1(state, mesh, lay, ctx) < 1e-12 * uscale
    assert divergence_max(state, ctx) < 1e-10 * uscale
    assert normal_jump_max(state, ctx) < 1e-10 * uscale


def test_energy_identity_values(solved):
    mesh, lay, ctx, sol, state = solved
    lhs, rhs = energy_identity(state, sol.source, 1.0, ctx)
    assert lhs > 0
    assert abs(lhs - rhs) < 1e-10 * abs(lhs)


def test_error_norms_match_table_values(solved):
    mesh, lay, ctx, sol, state = solved
    eu, eL, ep = error_norms(state, sol, mesh, lay, ctx)
    assert abs(eu / 2.8355e-02 - 1) < 0.02
    assert abs(eL / 2.9255e-02 - 1) < 0.02
    assert abs(ep / 1.0923e-01 - 1) < 0.02


def test_error_norms_absolute_when_reference_vanishes():
    # the no-flow example has zero exact velocity: the velocity entry is
    # then an absolute error and must sit at solver round-off
    mesh = build_uniform_mesh(5)
    lay = DofLayout(1)
    ctx = HDGContext(mesh, lay)
    sol = example_solution(2, 1.0)
    state, report = picard_solve(mesh, lay, sol.source, 1.0, ctx=ctx)
    assert report.converged
    eu, eL, ep = error_norms(state, sol, mesh, lay, ctx)
    assert eu < 1e-7
    assert 0 < ep < 1.0


def test_divergence_nonzero_for_non_solenoidal_state():
    from helpers import matched_velocity_state
    mesh = build_uniform_mesh(2)
    lay = DofLayout(1)
    ctx = HDGContext(mesh, lay)
    st = matched_velocity_state(mesh, lay, lambda x, y: x, lambda x, y: x + y)
    assert divergence_max(st, ctx) > 1.0  # div = 2 everywhere
    assert divergence_l1(st, mesh, lay, ctx) > 1.0
