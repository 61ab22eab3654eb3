"""Deterministic generators for the three synthetic dataset families.

* ``ds1`` - consistent, contrasting row norms: each row is filled from
  N(mu, sigma) with mu ~ U(-5, 5) and sigma ~ U(1, 20) drawn per row.
* ``ds2`` - consistent, coherent rows: entries from N(2, 20), each row a
  copy of the previous one with exactly 5 random entries redrawn.
* ``ds3`` - inconsistent: a ds1 system whose right-hand side is
  perturbed by N(0, 1) noise; the least-squares solution is computed by
  the conjugate-gradient least-squares engine down to a tiny
  normal-equations residual.

Everything is reproducible from (family, m_max, n_max, seed): the
generator, the PRNG and the normal transform are fixed, and their names
are recorded in the dataset sidecar.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng as _rng
from .linalg import (DenseMatrix, LinearSystem, load_vector_kzm, load_matrix_kzm,
                     save_matrix_kzm, save_vector_kzm)
from .rng import SplitMix64
from .solvers import SolverConfig, run_cgls

FAMILIES = ("ds1", "ds2", "ds3")

# Default desk-scale dimension grid; the paper-scale grid (up to
# 160000 x 20000) stays available behind the ``paper`` flag.
DESK_ROWS = (200, 500, 1000, 2000, 4000)
DESK_COLS = (10, 20, 50, 100, 200)
PAPER_ROWS = (2000, 4000, 20000, 40000, 80000, 160000)
PAPER_COLS = (50, 100, 200, 500, 750, 1000, 2000, 4000, 10000, 20000)

# Fixed per-row sigma for the similar-row-norms ds1 variant.
EQUAL_NORM_SIGMA = 20.0

# XORed into the dataset seed to start the ds3 noise stream.
_NOISE_SEED_SALT = 0xD53F0A9E146B7C25

# Stop threshold on ||A^T (b - A x)||_inf for reference LS solutions.
_LS_NORMAL_RESIDUAL_TOL = 1e-9


class GenerationError(RuntimeError):
    """Dataset generation could not complete."""


def dimension_grid(paper: bool = False):
    """Overdetermined (m, n) pairs of the desk or paper-scale grid."""
    rows, cols = (PAPER_ROWS, PAPER_COLS) if paper else (DESK_ROWS, DESK_COLS)
    return [(m, n) for m in rows for n in cols if m >= n]


@dataclass(frozen=True)
class DatasetSpec:
    """Parameters sufficient to regenerate a dataset bit-exactly."""

    family: str
    m_max: int
    n_max: int
    seed: int
    noise_sigma: float = 1.0       # ds3 only
    equal_row_norms: bool = False  # ds1 variant with fixed per-row sigma

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not self.m_max >= self.n_max >= 1:
            raise ValueError(
                f"need m_max >= n_max >= 1, got {self.m_max} x {self.n_max}")
        if self.family == "ds2" and self.n_max < 5:
            raise ValueError(
                f"ds2: n < 5 (5 entries are redrawn per row, got n={self.n_max})")


@dataclass
class GeneratedSystem:
    """A generated system together with its provenance."""

    system: LinearSystem
    spec: DatasetSpec
    noise_seed: Optional[int] = None

    @property
    def reference(self) -> np.ndarray:
        """The solution the stopping criterion measures against."""
        if self.spec.family == "ds3":
            return self.system.x_ls
        return self.system.x_star


def _row_params(stream: SplitMix64):
    mu = -5.0 + 10.0 * stream.uniform()
    sigma = 1.0 + 19.0 * stream.uniform()
    return mu, sigma


def _nonzero_normal_row(stream: SplitMix64, n: int, mu: float, sigma: float):
    row = mu + sigma * stream.normals(n)
    while not row.any():  # all-zero rows break projections; essentially impossible
        row = mu + sigma * stream.normals(n)
    return row


def _draw_solution(stream: SplitMix64, n: int) -> np.ndarray:
    mu, sigma = _row_params(stream)
    return mu + sigma * stream.normals(n)


def gen_ds1(spec: DatasetSpec) -> GeneratedSystem:
    """Consistent system with contrasting row norms."""
    m, n = spec.m_max, spec.n_max
    stream = SplitMix64(spec.seed)
    data = np.empty((m, n))
    for i in range(m):
        if spec.equal_row_norms:
            mu = -5.0 + 10.0 * stream.uniform()
            sigma = EQUAL_NORM_SIGMA
        else:
            mu, sigma = _row_params(stream)
        data[i] = _nonzero_normal_row(stream, n, mu, sigma)
    x_star = _draw_solution(stream, n)
    A = DenseMatrix(data)
    b = A.data @ x_star
    return GeneratedSystem(LinearSystem(A, b, x_star=x_star), spec)


def gen_ds2(spec: DatasetSpec) -> GeneratedSystem:
    """Consistent system with coherent rows (adjacent rows differ in 5 entries)."""
    m, n = spec.m_max, spec.n_max
    stream = SplitMix64(spec.seed)
    data = np.empty((m, n))
    data[0] = _nonzero_normal_row(stream, n, 2.0, 20.0)
    for i in range(1, m):
        row = data[i - 1].copy()
        cols = []
        while len(cols) < 5:  # rejection keeps the 5 redrawn columns distinct
            c = int(stream.uniform() * n)
            if c not in cols:
                cols.append(c)
        row[cols] = 2.0 + 20.0 * stream.normals(5)
        while not row.any():
            row[cols] = 2.0 + 20.0 * stream.normals(5)
        data[i] = row
    x_star = _draw_solution(stream, n)
    A = DenseMatrix(data)
    b = A.data @ x_star
    return GeneratedSystem(LinearSystem(A, b, x_star=x_star), spec)


def least_squares_solution(A: DenseMatrix, b: np.ndarray,
                           normal_residual_tol: float = _LS_NORMAL_RESIDUAL_TOL) -> np.ndarray:
    """Least-squares solution via the CGLS engine.

    Iterates until ||A^T (b - A x)||_inf drops to ``normal_residual_tol``.
    """
    system = LinearSystem(A, b)
    config = SolverConfig(method="cgls", max_iterations=max(50 * A.n, 200))
    run = run_cgls(system, config, normal_residual_tol=normal_residual_tol)
    normal_res = np.abs((b - A.data @ run.x_final) @ A.data).max()
    if normal_res > 100 * normal_residual_tol:
        raise GenerationError(
            f"least-squares solve stalled: normal residual {normal_res:.3e}")
    return run.x_final


def gen_ds3(spec: DatasetSpec) -> GeneratedSystem:
    """Inconsistent system: ds1 plus N(0, noise_sigma) noise on b."""
    base = gen_ds1(spec)
    noise_seed = (spec.seed ^ _NOISE_SEED_SALT) & _rng.MASK64
    noise = spec.noise_sigma * SplitMix64(noise_seed).normals(spec.m_max)
    b_ls = base.system.b + noise
    x_ls = least_squares_solution(base.system.A, b_ls)
    system = LinearSystem(base.system.A, b_ls, x_star=base.system.x_star, x_ls=x_ls)
    return GeneratedSystem(system, spec, noise_seed=noise_seed)


_GENERATORS = {"ds1": gen_ds1, "ds2": gen_ds2, "ds3": gen_ds3}


def generate(spec: DatasetSpec) -> GeneratedSystem:
    return _GENERATORS[spec.family](spec)


def crop(gen: GeneratedSystem, m: int, n: int) -> GeneratedSystem:
    """Leading m-by-n subsystem with consistency re-established.

    Dropping columns invalidates b = A x*, so b is recomputed from the
    truncated solution; for ds3 the (truncated) noise stream is re-added
    and the least-squares solution recomputed at the new size.  The spec
    keeps the original generation dimensions so the parent system stays
    regenerable.
    """
    spec = gen.spec
    rows, cols = gen.system.A.shape
    if not (1 <= m <= rows and 1 <= n <= cols):
        raise ValueError(f"crop {m}x{n} out of range for {rows}x{cols}")
    if m < n:
        raise ValueError(f"crop must stay overdetermined, got {m}x{n}")
    if gen.system.x_star is None:
        raise ValueError("cropping needs the consistent solution; regenerate from spec")
    A = DenseMatrix(gen.system.A.data[:m, :n].copy())
    x_star = gen.system.x_star[:n].copy()
    b = A.data @ x_star
    if spec.family == "ds3":
        noise = spec.noise_sigma * SplitMix64(gen.noise_seed).normals(m)
        b_ls = b + noise
        x_ls = least_squares_solution(A, b_ls)
        return GeneratedSystem(LinearSystem(A, b_ls, x_star=x_star, x_ls=x_ls),
                               spec, noise_seed=gen.noise_seed)
    return GeneratedSystem(LinearSystem(A, b, x_star=x_star), spec)


# ---------------------------------------------------------------------------
# Dataset container: KZM1 blobs plus a JSON sidecar.
# ---------------------------------------------------------------------------

def _base_path(path: str) -> str:
    return path[:-4] if path.endswith(".kzm") else path


def save_dataset(gen: GeneratedSystem, path: str) -> None:
    """Write matrix, right-hand side, reference solution, and sidecar.

    ``path`` names the matrix blob (``.kzm`` appended if missing); the
    sidecar lands at ``<path>.json`` and records the companion files.
    """
    base = _base_path(path)
    matrix_path = base + ".kzm"
    rhs_name = os.path.basename(base) + ".rhs.kzm"
    ref_name = os.path.basename(base) + ".ref.kzm"
    directory = os.path.dirname(matrix_path)
    save_matrix_kzm(matrix_path, gen.system.A)
    save_vector_kzm(os.path.join(directory, rhs_name), gen.system.b)
    save_vector_kzm(os.path.join(directory, ref_name), gen.reference)
    sidecar = {
        "family": gen.spec.family.upper(),
        "m": gen.system.A.m,
        "n": gen.system.A.n,
        "seed": gen.spec.seed,
        "prng": _rng.PRNG_NAME,
        "normal_algorithm": _rng.NORMAL_ALGORITHM,
        "reference_solution_file": ref_name,
        "rhs_file": rhs_name,
        "reference_kind": "x_ls" if gen.spec.family == "ds3" else "x_star",
        "m_max": gen.spec.m_max,
        "n_max": gen.spec.n_max,
    }
    if gen.spec.family == "ds3":
        sidecar["noise_seed"] = gen.noise_seed
        sidecar["noise_sigma"] = gen.spec.noise_sigma
    if gen.spec.equal_row_norms:
        sidecar["equal_row_norms"] = True
    with open(matrix_path + ".json", "w", encoding="ascii") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path: str) -> GeneratedSystem:
    base = _base_path(path)
    matrix_path = base + ".kzm"
    with open(matrix_path + ".json", "r", encoding="ascii") as fh:
        sidecar = json.load(fh)
    directory = os.path.dirname(matrix_path)
    A = load_matrix_kzm(matrix_path)
    b = load_vector_kzm(os.path.join(directory, sidecar["rhs_file"]))
    ref = load_vector_kzm(os.path.join(directory, sidecar["reference_solution_file"]))
    spec = DatasetSpec(
        family=sidecar["family"].lower(),
        m_max=sidecar.get("m_max", sidecar["m"]),
        n_max=sidecar.get("n_max", sidecar["n"]),
        seed=sidecar["seed"],
        noise_sigma=sidecar.get("noise_sigma", 1.0),
        equal_row_norms=sidecar.get("equal_row_norms", False),
    )
    if sidecar.get("reference_kind", "x_star") == "x_ls":
        system = LinearSystem(A, b, x_ls=ref)
    else:
        system = LinearSystem(A, b, x_star=ref)
    return GeneratedSystem(system, spec, noise_seed=sidecar.get("noise_seed"))
