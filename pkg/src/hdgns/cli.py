"""Command-line convergence-study harness.

Runs the nonlinear solver over a refinement sequence of uniform meshes (or
one imported triangulation), measures errors against the chosen benchmark
solution, and emits a CSV or Markdown table. Exit codes: 0 all levels
converged, 1 invalid configuration or I/O failure, 2 at least one level hit
the iteration cap (rows are still emitted, flagged by a trailing '*').
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import ConvergenceRow, divergence_l1, error_norms, rate_table
from .forms import DofLayout, HDGContext
from .manufactured import EXAMPLE_IDS, example_solution
from .mesh import MeshFormatError, build_uniform_mesh, import_triangle_mesh
from .solver import SolverError, picard_solve

CSV_HEADER = "n,h,err_u_rel,rate_u,err_L_rel,rate_L,err_p_rel,rate_p,div_l1,iters"


@dataclass
class StudyConfig:
    """Parameters of one convergence study."""

    example_id: int = 1
    k: int = 1
    m: int | None = None
    levels: list = field(default_factory=lambda: [4, 8, 16, 32, 64])
    nu: float = 1.0
    tol: float = 1e-10
    max_iter: int = 50
    mode: str = "condensed"
    fmt: str = "csv"
    out: str | None = None
    mesh_file: str | None = None

    def validate(self):
        if self.example_id not in EXAMPLE_IDS:
            raise ValueError(f"example must be one of {EXAMPLE_IDS}")
        if self.k not in (1, 2, 3):
            raise ValueError("k must be 1, 2, or 3")
        if self.m is not None and self.m not in (self.k - 1, self.k):
            raise ValueError("m must be k or k-1")
        if self.mesh_file is None:
            if not self.levels:
                raise ValueError("at least one refinement level is required")
            if any(n < 1 for n in self.levels):
                raise ValueError("levels must be positive integers")
            if sorted(self.levels) != list(self.levels) or len(set(self.levels)) != len(self.levels):
                raise ValueError("levels must be strictly increasing")
        if self.nu <= 0:
            raise ValueError("viscosity must be positive")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be > 0 and max-iter >= 1")
        if self.mode not in ("monolithic", "condensed"):
            raise ValueError("mode must be 'monolithic' or 'condensed'")
        if self.fmt not in ("csv", "markdown"):
            raise ValueError("format must be 'csv' or 'markdown'")


def _load_meshes(config):
    if config.mesh_file is not None:
        prefix = config.mesh_file
        if prefix.endswith(".node"):
            prefix = prefix[:-5]
        node_text = Path(prefix + ".node").read_text()
        ele_text = Path(prefix + ".ele").read_text()
        mesh = import_triangle_mesh(node_text, ele_text)
        n = max(1, round(math.sqrt(2.0) / mesh.h_max))
        return [(n, mesh)]
    return [(n, build_uniform_mesh(n)) for n in config.levels]


def run_study(config: StudyConfig):
    """Execute a study; returns (rows, all_converged)."""
    config.validate()
    exact = example_solution(config.example_id, config.nu)
    layout = DofLayout(config.k, config.m)
    rows = []
    all_converged = True
    for n, mesh in _load_meshes(config):
        ctx = HDGContext(mesh, layout)
        state, report = picard_solve(
            mesh, layout, exact.source, config.nu,
            tol=config.tol, max_iter=config.max_iter, mode=config.mode, ctx=ctx)
        all_converged = all_converged and report.converged
        eu, eL, ep = error_norms(state, exact, mesh, layout, ctx)
        rows.append(ConvergenceRow(
            n=n, h=mesh.h_max, err_u_rel=eu, err_L_rel=eL, err_p_rel=ep,
            div_l1=divergence_l1(state, mesh, layout, ctx),
            iters=report.iterations if report.converged else -report.iterations))
    ns = [r.n for r in rows]
    if all(b == 2 * a for a, b in zip(ns, ns[1:])) and len(rows) > 1:
        rate_table(rows)
    elif len(rows) > 1:
        print("warning: refinement levels do not double; rate columns omitted",
              file=sys.stderr)
    return rows, all_converged


def _fmt(x):
    return "" if x is None else f"{x:.4E}"


def _row_cells(row):
    iters = row.iters if row.iters >= 0 else f"{-row.iters}*"
    return [str(row.n), _fmt(row.h), _fmt(row.err_u_rel), _fmt(row.rate_u),
            _fmt(row.err_L_rel), _fmt(row.rate_L), _fmt(row.err_p_rel),
            _fmt(row.rate_p), _fmt(row.div_l1), str(iters)]


def format_rows(rows, fmt: str) -> str:
    if fmt not in ("csv", "markdown"):
        raise ValueError("format must be 'csv' or 'markdown'")
    header = CSV_HEADER.split(",")
    if fmt == "csv":
        lines = [CSV_HEADER] + [",".join(_row_cells(r)) for r in rows]
        return "\n".join(lines) + "\n"
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join(["---"] * len(header)) + "|"]
    lines += ["| " + " | ".join(c or " " for c in _row_cells(r)) + " |" for r in rows]
    return "\n".join(lines) + "\n"


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hdgns",
        description="Convergence studies for the divergence-free HDG "
                    "Navier-Stokes solver on the unit square.")
    parser.add_argument("--example", type=int, default=1, choices=EXAMPLE_IDS,
                        help="benchmark case: 1 polynomial vortex, 2 hydrostatic")
    parser.add_argument("--k", type=int, default=1, help="velocity degree (1-3)")
    parser.add_argument("--m", type=int, default=None, help="tensor degree (k or k-1)")
    parser.add_argument("--levels", type=str, default="4,8,16,32,64",
                        help="comma-separated mesh resolutions n")
    parser.add_argument("--re", type=float, default=1.0, help="Reynolds number (nu = 1/Re)")
    parser.add_argument("--tol", type=float, default=1e-10, help="fixed-point tolerance")
    parser.add_argument("--max-iter", type=int, default=50, help="fixed-point iteration cap")
    parser.add_argument("--mode", default="condensed", choices=("monolithic", "condensed"))
    parser.add_argument("--format", dest="fmt", default="csv", choices=("csv", "markdown"))
    parser.add_argument("--out", type=str, default=None, help="output path (default stdout)")
    parser.add_argument("--mesh-file", type=str, default=None,
                        help="Triangle .node/.ele prefix; runs a single level")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which this tool reserves
        # for non-convergence; fold usage errors into exit code 1
        return 0 if exc.code in (0, None) else 1
    try:
        levels = [int(s) for s in args.levels.split(",") if s.strip()]
    except ValueError:
        print(f"error: invalid --levels {args.levels!r}", file=sys.stderr)
        return 1
    config = StudyConfig(
        example_id=args.example, k=args.k, m=args.m, levels=levels,
        nu=1.0 / args.re if args.re > 0 else -1.0, tol=args.tol,
        max_iter=args.max_iter, mode=args.mode, fmt=args.fmt,
        out=args.out, mesh_file=args.mesh_file)
    try:
        rows, all_converged = run_study(config)
    except (ValueError, MeshFormatError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = format_rows(rows, config.fmt)
    if config.out is None:
        sys.stdout.write(text)
    else:
        try:
            Path(config.out).write_text(text)
        except OSError as exc:
            print(f"error: cannot write {config.out}: {exc}", file=sys.stderr)
            return 1
    if not all_converged:
        print("warning: at least one level did not converge", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
