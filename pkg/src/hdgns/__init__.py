"""Divergence-free, pressure-robust HDG solver for stationary
incompressible Navier-Stokes on triangular meshes."""
import os as _os

# map THREADS to the BLAS/OpenMP pool sizes before numpy loads
_threads = _os.environ.get("THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .analysis import (
    ConvergenceRow,
    divergence_l1,
    divergence_max,
    energy_identity,
    error_norms,
    normal_jump_max,
    rate_table,
)
from .cli import StudyConfig, run_study
from .femcore import CellBasis, EdgeBasis, make_quadrature
from .forms import DofLayout, FieldState, HDGContext, apply_Kh, assemble_local
from .manufactured import EXAMPLE_IDS, ExactSolution, example_solution
from .mesh import Mesh, MeshFormatError, build_uniform_mesh, import_triangle_mesh
from .projections import (
    ProjectedField,
    project_bdm,
    project_l2_cell,
    project_l2_edge,
    project_rt,
)
from .solver import (
    GlobalSystem,
    PicardReport,
    SolverError,
    assemble_global,
    norm_Q,
    norm_V,
    picard_solve,
    solve_linear,
)

__version__ = "0.1.0"
