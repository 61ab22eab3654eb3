"""Solver engines sharing one run contract.

Every engine starts from x = 0, runs at most ``max_iterations``
iterations, and reports the final iterate, the iterations actually used,
an optional squared-error trace, and the wall-clock time of the
iteration loop (allocation and selector setup happen before the timer
starts).  When ``reference`` and ``epsilon`` are both given, the run
stops at the first iteration whose squared distance to the reference
falls below ``epsilon``; that is how iteration budgets are calibrated.

The row-projection engine covers the whole selector-driven family
(cyclic, norm-weighted, uniform, without-replacement, quasirandom,
greedy, selectable-set); the remaining methods have dedicated loops.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .linalg import DenseMatrix, LinearSystem, as_vector
from .rng import SplitMix64
from .sampling import ColumnWeightedSelector, RowSelector, cumulative_table, make_selector

METHOD_IDS = (
    "ck", "rk", "srk", "srkwor", "srk-halton", "srk-sobol",
    "grk", "nssrk", "gssrk", "rek", "rgs", "rka", "cimmino", "cg", "cgls",
)

# Methods whose iterate stream does not depend on the seed.
DETERMINISTIC_METHODS = frozenset(
    {"ck", "srk-halton", "srk-sobol", "cimmino", "cg", "cgls"})

# Methods that converge to the least-squares solution on inconsistent systems.
LEAST_SQUARES_METHODS = frozenset({"rek", "rgs", "cg", "cgls"})

_SELECTOR_FOR_METHOD = {
    "ck": "cyclic",
    "rk": "norm",
    "srk": "uniform",
    "srkwor": "wor:once",
    "srk-halton": "halton:2",
    "srk-sobol": "sobol",
    "grk": "grk",
    "nssrk": "nssrk",
    "gssrk": "gssrk",
}


class DivergenceError(RuntimeError):
    """A non-finite value appeared in the iterate."""


class BreakdownError(RuntimeError):
    """Conjugate-gradient recurrence hit a zero-curvature direction."""


@dataclass
class SolverConfig:
    """Parameters of one solver run."""

    method: str
    max_iterations: int
    alpha: float = 1.0          # relaxation; also the uniform averaging weight
    q: int = 1                  # simulated thread count (averaging method only)
    weights: Optional[np.ndarray] = None  # per-row averaging weights
    seed: int = 0
    trace_stride: int = 0       # 0 disables the error trace
    wor_materialize: bool = False

    def __post_init__(self):
        if self.method not in METHOD_IDS:
            raise ValueError(f"unknown method id {self.method!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")


@dataclass
class SolveRun:
    """Result of one solver execution."""

    x_final: np.ndarray
    iterations_used: int
    error_trace: Optional[list] = None
    wall_time_ns: int = 0


def check_convergence(x, reference, epsilon: float) -> bool:
    """True iff the squared Euclidean distance to the reference is < epsilon."""
    x = as_vector(x)
    reference = as_vector(reference, x.shape[0])
    d = x - reference
    return float(d @ d) < epsilon


def _sq_error(x: np.ndarray, reference: np.ndarray) -> float:
    d = x - reference
    return float(d @ d)


class _RunMonitor:
    """Shared stop/trace bookkeeping for all engines."""

    __slots__ = ("reference", "epsilon", "stride", "trace")

    def __init__(self, reference, epsilon, stride):
        self.reference = None if reference is None else as_vector(reference)
        self.epsilon = epsilon
        self.stride = stride if (stride and self.reference is not None) else 0
        self.trace = [] if self.stride else None

    def start(self, x):
        if self.stride:
            self.trace.append((0, _sq_error(x, self.reference)))

    def observe(self, k: int, x: np.ndarray) -> bool:
        """Record the trace point and return True when the run should stop."""
        if self.stride and k % self.stride == 0:
            self.trace.append((k, _sq_error(x, self.reference)))
        if self.epsilon is not None and self.reference is not None:
            return _sq_error(x, self.reference) < self.epsilon
        return False


def run_kaczmarz(system: LinearSystem, selector: RowSelector, config: SolverConfig,
                 reference=None, epsilon=None) -> SolveRun:
    """Single-row projection loop driven by an arbitrary selector."""
    x = np.zeros(system.A.n)
    data, b, rn2 = selector.data, selector.b, selector.row_norms_sq
    alpha = config.alpha
    monitor = _RunMonitor(reference, epsilon, config.trace_stride)
    monitor.start(x)
    used = config.max_iterations
    t0 = time.perf_counter_ns()
    for k in range(1, config.max_iterations + 1):
        i = selector.next(x)
        if i is None:  # residual exactly zero: nothing left to project
            used = k - 1
            break
        row = data[i]
        coef = alpha * (float(b[i]) - float(row @ x)) / float(rn2[i])
        if not math.isfinite(coef):
            raise DivergenceError(f"non-finite update at iteration {k} (row {i})")
        x += coef * row
        selector.after_step(i)
        if monitor.observe(k, x):
            used = k
            break
    wall = time.perf_counter_ns() - t0
    return SolveRun(x, used, monitor.trace, wall)


def run_rek(system: LinearSystem, config: SolverConfig,
            reference=None, epsilon=None) -> SolveRun:
    """Extended variant for least-squares problems.

    Per iteration: project the auxiliary vector z (initialized to b) off
    one norm-weighted column, then apply a row step against b - z.  The
    iterate converges to the least-squares solution.
    """
    A = system.A
    data, b = A.data, system.b
    rn2, cn2 = A.row_norms_sq, A.col_norms_sq
    rng = SplitMix64(config.seed)
    row_cum = cumulative_table(rn2)
    col_cum = cumulative_table(cn2)
    x = np.zeros(A.n)
    z = b.copy()
    monitor = _RunMonitor(reference, epsilon, config.trace_stride)
    monitor.start(x)
    used = config.max_iterations
    t0 = time.perf_counter_ns()
    for k in range(1, config.max_iterations + 1):
        j = int(np.searchsorted(col_cum, rng.uniform(), side="right"))
        col = data[:, j]
        z -= (float(col @ z) / cn2[j]) * col
        i = int(np.searchsorted(row_cum, rng.uniform(), side="right"))
        row = data[i]
        coef = (float(b[i]) - float(z[i]) - float(row @ x)) / float(rn2[i])
        if not math.isfinite(coef):
            raise DivergenceError(f"non-finite update at iteration {k}")
        x += coef * row
        if monitor.observe(k, x):
            used = k
            break
    wall = time.perf_counter_ns() - t0
    return SolveRun(x, used, monitor.trace, wall)


def run_rgs(system: LinearSystem, config: SolverConfig,
            reference=None, epsilon=None) -> SolveRun:
    """Randomized coordinate descent (one column per iteration)."""
    A = system.A
    data = A.data
    cn2 = A.col_norms_sq
    rng = SplitMix64(config.seed)
    col_cum = cumulative_table(cn2)
    x = np.zeros(A.n)
    r = system.b.copy()  # residual for x = 0
    monitor = _RunMonitor(reference, epsilon, config.trace_stride)
    monitor.start(x)
    used = config.max_iterations
    t0 = time.perf_counter_ns()
    for k in range(1, config.max_iterations + 1):
        j = int(np.searchsorted(col_cum, rng.uniform(), side="right"))
        col = data[:, j]
        step = float(col @ r) / float(cn2[j])
        if not math.isfinite(step):
            raise DivergenceError(f"non-finite update at iteration {k}")
        x[j] += step
        r -= step * col
        if monitor.observe(k, x):
            used = k
            break
    wall = time.perf_counter_ns() - t0
    return SolveRun(x, used, monitor.trace, wall)


def run_rka(system: LinearSystem, config: SolverConfig,
            reference=None, epsilon=None) -> SolveRun:
    """Averaged multi-row step (simulated parallelism, sequential execution).

    Per iteration, q rows are drawn norm-weighted with replacement; the
    q single-row update terms are computed from the same iterate and
    their mean is applied.  With q = 1 the iterate stream is identical
    to the norm-weighted single-row engine for the same seed.
    """
    A = system.A
    data, b, rn2 = A.data, system.b, A.row_norms_sq
    rng = SplitMix64(config.seed)
    cum = cumulative_table(rn2)
    q = config.q
    weights = config.weights
    if weights is not None:
        weights = as_vector(weights, A.m)
    x = np.zeros(A.n)
    monitor = _RunMonitor(reference, epsilon, config.trace_stride)
    monitor.start(x)
    used = config.max_iterations
    t0 = time.perf_counter_ns()
    for k in range(1, config.max_iterations + 1):
        idxs = np.searchsorted(cum, rng.uniforms(q), side="right")
        update = None
        for i in idxs:
            row = data[i]
            w = config.alpha if weights is None else float(weights[i])
            coef = w * (float(b[i]) - float(row @ x)) / float(rn2[i])
            if not math.isfinite(coef):
                raise DivergenceError(f"non-finite update at iteration {k} (row {i})")
            term = coef * row
            update = term if update is None else update + term
        x += update / q
        if monitor.observe(k, x):
            used = k
            break
    wall = time.perf_counter_ns() - t0
    return SolveRun(x, used, monitor.trace, wall)


def rka_optimal_alpha(q: int, s_min: float, s_max: float) -> float:
    """Convergence-optimal uniform weight for the averaged method.

    ``s_min`` and ``s_max`` are the extreme squared singular values
    divided by the squared Frobenius norm.
    """
    if q == 1:
        return 1.0
    if s_max - s_min <= 1.0 / (q - 1):
        return q / (1.0 + (q - 1) * s_min)
    return 2.0 * q / (1.0 + (q - 1) * (s_min + s_max))


def run_cimmino(system: LinearSystem, config: SolverConfig,
                reference=None, epsilon=None) -> SolveRun:
    """Simultaneous reflections in matrix form.

    x <- x + A^T D (b - A x) with D = diag(alpha / (m ||A[i]||^2)).
    """
    A = system.A
    data, b = A.data, system.b
    d = config.alpha / (A.m * A.row_norms_sq)
    x = np.zeros(A.n)
    monitor = _RunMonitor(reference, epsilon, config.trace_stride)
    monitor.start(x)
    used = config.max_iterations
    t0 = time.perf_counter_ns()
    for k in range(1, config.max_iterations + 1):
        update = (d * (b - data @ x)) @ data
        if not np.isfinite(update).all():
            raise DivergenceError(f"non-finite update at iteration {k}")
        x += update
        if monitor.observe(k, x):
            used = k
            break
    wall = time.perf_counter_ns() - t0
    return SolveRun(x, used, monitor.trace, wall)


def run_cg(system: LinearSystem, config: SolverConfig,
           reference=None, epsilon=None) -> SolveRun:
    """Diagonally preconditioned conjugate gradient on the squared system.

    The system is first squared to A^T A x = A^T b; forming those
    products happens inside the timed region, so reported times charge
    the transformation to this method.  Iterations are Krylov steps.
    """
    A = system.A
    data, b = A.data, system.b
    x = np.zeros(A.n)
    monitor = _RunMonitor(reference, epsilon, config.trace_stride)
    monitor.start(x)
    used = config.max_iterations
    t0 = time.perf_counter_ns()
    gram = data.T @ data
    rhs = b @ data
    precond = 1.0 / np.diag(gram)
    r = rhs.copy()
    z = precond * r
    p = z.copy()
    rz = float(r @ z)
    for k in range(1, config.max_iterations + 1):
        gp = gram @ p
        curvature = float(p @ gp)
        if curvature <= 0.0 or not math.isfinite(curvature):
            raise BreakdownError(f"zero-curvature direction at iteration {k}")
        step = rz / curvature
        x += step * p
        r -= step * gp
        if monitor.observe(k, x):
            used = k
            break
        z = precond * r
        rz_next = float(r @ z)
        p = z + (rz_next / rz) * p
        rz = rz_next
    wall = time.perf_counter_ns() - t0
    return SolveRun(x, used, monitor.trace, wall)


def run_cgls(system: LinearSystem, config: SolverConfig,
             reference=None, epsilon=None,
             normal_residual_tol: Optional[float] = None) -> SolveRun:
    """Conjugate gradient for least squares, operating on A directly.

    Uses the least-squares diagonal preconditioner (inverse squared
    column norms).  ``normal_residual_tol`` adds an extra stop rule on
    ||A^T (b - A x)||_inf, used when computing reference least-squares
    solutions.
    """
    A = system.A
    data, b = A.data, system.b
    precond = 1.0 / A.col_norms_sq
    x = np.zeros(A.n)
    monitor = _RunMonitor(reference, epsilon, config.trace_stride)
    monitor.start(x)
    used = config.max_iterations
    t0 = time.perf_counter_ns()
    r = b.copy()
    s = r @ data
    z = precond * s
    p = z.copy()
    sz = float(s @ z)
    for k in range(1, config.max_iterations + 1):
        ap = data @ p
        curvature = float(ap @ ap)
        if curvature <= 0.0 or not math.isfinite(curvature):
            raise BreakdownError(f"zero-curvature direction at iteration {k}")
        step = sz / curvature
        x += step * p
        r -= step * ap
        s = r @ data
        stop = monitor.observe(k, x)
        if normal_residual_tol is not None and float(np.abs(s).max()) <= normal_residual_tol:
            stop = True
        if stop:
            used = k
            break
        z = precond * s
        sz_next = float(s @ z)
        p = z + (sz_next / sz) * p
        sz = sz_next
    wall = time.perf_counter_ns() - t0
    return SolveRun(x, used, monitor.trace, wall)


def solve(system: LinearSystem, config: SolverConfig,
          reference=None, epsilon=None) -> SolveRun:
    """Dispatch a run to the engine for ``config.method``."""
    method = config.method
    if method in _SELECTOR_FOR_METHOD:
        selector = make_selector(_SELECTOR_FOR_METHOD[method], system, config.seed,
                                 materialize_wor=config.wor_materialize)
        return run_kaczmarz(system, selector, config, reference, epsilon)
    engine = {
        "rek": run_rek,
        "rgs": run_rgs,
        "rka": run_rka,
        "cimmino": run_cimmino,
        "cg": run_cg,
        "cgls": run_cgls,
    }[method]
    return engine(system, config, reference, epsilon)
