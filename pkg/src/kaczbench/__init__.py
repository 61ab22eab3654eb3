"""Row-action solvers for dense linear systems, with benchmark tooling."""

from .linalg import (DenseMatrix, LinearSystem, matvec, matvec_transpose,
                     max_consecutive_angle, project_row, residual)
from .datasets import DatasetSpec, GeneratedSystem, crop, generate
from .solvers import (METHOD_IDS, SolverConfig, SolveRun, check_convergence,
                      rka_optimal_alpha, solve)
from .bench import BenchRecord, bench_cell, calibrate, run_campaign, timed_run

__version__ = "0.1.0"

__all__ = [
    "DenseMatrix", "LinearSystem", "matvec", "matvec_transpose",
    "max_consecutive_angle", "project_row", "residual",
    "DatasetSpec", "GeneratedSystem", "crop", "generate",
    "METHOD_IDS", "SolverConfig", "SolveRun", "check_convergence",
    "rka_optimal_alpha", "solve",
    "BenchRecord", "bench_cell", "calibrate", "run_campaign", "timed_run",
    "__version__",
]
