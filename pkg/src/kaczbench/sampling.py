"""Row and column selection strategies.

Each strategy is a small stateful object advanced once per solver
iteration.  A selector owns its PRNG stream, so two runs with the same
seed replay the same index sequence regardless of what else happens in
the process.

Selector kinds are addressable by the strings used on the command line:
``cyclic``, ``uniform``, ``norm``, ``wor:once``, ``wor:pass``,
``halton:<base>``, ``sobol``, ``grk``, ``nssrk``, ``gssrk``.
"""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from .linalg import DenseMatrix, LinearSystem
from .rng import SplitMix64

log = logging.getLogger(__name__)

SELECTOR_KINDS = (
    "cyclic", "uniform", "norm", "wor:once", "wor:pass",
    "halton", "sobol", "grk", "nssrk", "gssrk",
)

# Inner products at or below this relative level count as orthogonal
# when building the Gramian sparsity pattern.
GRAMIAN_ZERO_RTOL = 1e-12


def cumulative_table(weights: np.ndarray) -> np.ndarray:
    """Nondecreasing cumulative probabilities ending exactly at 1."""
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if not total > 0.0:
        raise ValueError("weights must have positive total mass")
    cum = np.cumsum(w / total)
    cum[-1] = 1.0
    return cum


def draw_from_table(cum: np.ndarray, u: float) -> int:
    """Index i with probability cum[i] - cum[i-1], by binary search."""
    return int(np.searchsorted(cum, u, side="right"))


def fisher_yates(m: int, rng: SplitMix64) -> np.ndarray:
    """Uniform random permutation of range(m); one uniform per swap."""
    perm = np.arange(m, dtype=np.int64)
    for i in range(m - 1, 0, -1):
        j = int(rng.uniform() * (i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


class RowSelector:
    """Base class: yields row indices into ``self.data`` / ``self.b``.

    ``data``, ``b`` and ``row_norms_sq`` default to the system's arrays;
    a selector that physically reorders storage overrides them.
    """

    def __init__(self, system: LinearSystem):
        self.data = system.A.data
        self.b = system.b
        self.row_norms_sq = system.A.row_norms_sq
        self.m = system.A.m

    def next(self, x: Optional[np.ndarray] = None) -> Optional[int]:
        raise NotImplementedError

    def after_step(self, i: int) -> None:
        """Hook called after the projection onto row ``i`` was applied."""


class CyclicSelector(RowSelector):
    """Rows in order 0, 1, ..., m-1, 0, 1, ...  (modular counter)."""

    def __init__(self, system: LinearSystem):
        super().__init__(system)
        self._k = 0

    def next(self, x=None) -> int:
        i = self._k
        self._k = (self._k + 1) % self.m
        return i


class UniformSelector(RowSelector):
    """Rows uniformly at random with replacement."""

    def __init__(self, system: LinearSystem, seed: int):
        super().__init__(system)
        self._rng = SplitMix64(seed)

    def next(self, x=None) -> int:
        return int(self._rng.uniform() * self.m)


class NormWeightedSelector(RowSelector):
    """Row i with probability ||A[i]||^2 / ||A||_F^2."""

    def __init__(self, system: LinearSystem, seed: int):
        super().__init__(system)
        self._rng = SplitMix64(seed)
        self.cum = cumulative_table(system.A.row_norms_sq)

    def next(self, x=None) -> int:
        return draw_from_table(self.cum, self._rng.uniform())


class ColumnWeightedSelector:
    """Column j with probability ||A_col[j]||^2 / ||A||_F^2."""

    def __init__(self, A: DenseMatrix, seed: int):
        self._rng = SplitMix64(seed)
        self.cum = cumulative_table(A.col_norms_sq)
        self.n = A.n

    def next(self) -> int:
        return draw_from_table(self.cum, self._rng.uniform())


class WithoutReplacementSelector(RowSelector):
    """Shuffled cyclic passes: every row exactly once per window of m.

    ``reshuffle_each_pass`` draws a fresh permutation after each full
    pass; otherwise the preprocessing shuffle is reused forever.  With
    ``materialize=True`` the rows (and right-hand side) are physically
    reordered instead of being addressed through the index array; both
    storage modes deliver identical row streams for the same seed.
    """

    def __init__(self, system: LinearSystem, seed: int,
                 reshuffle_each_pass: bool = False, materialize: bool = False):
        super().__init__(system)
        self._rng = SplitMix64(seed)
        self.reshuffle_each_pass = reshuffle_each_pass
        self.materialize = materialize
        self._cursor = 0
        self.perm = fisher_yates(self.m, self._rng)
        if materialize:
            self._source = (self.data, self.b, self.row_norms_sq)
            self._apply_permutation()

    def _apply_permutation(self) -> None:
        data, b, rn2 = self._source
        self.data = data[self.perm]
        self.b = b[self.perm]
        self.row_norms_sq = rn2[self.perm]

    def next(self, x=None) -> int:
        if self._cursor == self.m:
            self._cursor = 0
            if self.reshuffle_each_pass:
                self.perm = fisher_yates(self.m, self._rng)
                if self.materialize:
                    self._apply_permutation()
        i = self._cursor if self.materialize else int(self.perm[self._cursor])
        self._cursor += 1
        return i


class HaltonSequence:
    """Radical-inverse (van der Corput) sequence in an integer base >= 2."""

    def __init__(self, base: int = 2):
        if base < 2:
            raise ValueError(f"Halton base must be >= 2, got {base}")
        self.base = base
        self._index = 0

    def next(self) -> float:
        self._index += 1
        i = self._index
        f = 1.0
        r = 0.0
        while i:
            f /= self.base
            r += f * (i % self.base)
            i //= self.base
        return r


class SobolSequence:
    """One-dimensional Sobol points via Gray-code updates.

    Direction numbers are v_k = 2^-k; the stream starts at sequence
    index 1 (the initial 0.0 point is skipped), so the first outputs are
    0.5, 0.75, 0.25, ...
    """

    def __init__(self):
        self._index = 0
        self._bits = 0

    def next(self) -> float:
        self._index += 1
        lowest_zero = (self._index & -self._index).bit_length() - 1
        self._bits ^= 1 << (63 - lowest_zero)
        return self._bits * 2.0 ** -64


class QuasirandomSelector(RowSelector):
    """Maps a low-discrepancy stream u to rows via floor(u * m)."""

    def __init__(self, system: LinearSystem, sequence):
        super().__init__(system)
        self.sequence = sequence

    def next(self, x=None) -> int:
        return min(int(self.sequence.next() * self.m), self.m - 1)


class GreedyResidualSelector(RowSelector):
    """Residual-driven greedy random selection.

    Each call recomputes the full residual r = b - A x, the threshold

        eps = 1/2 * ( max_i(|r_i|^2 / ||A[i]||^2) / ||r||^2 + 1 / ||A||_F^2 ),

    keeps the rows with |r_i|^2 >= eps * ||r||^2 * ||A[i]||^2, and samples
    one of them with probability proportional to |r_i|^2.  The candidate
    set provably contains the argmax row whenever r != 0.  Returns None
    when the residual is exactly zero (system already solved).
    """

    def __init__(self, system: LinearSystem, seed: int):
        super().__init__(system)
        self._rng = SplitMix64(seed)
        self.frob_norm_sq = system.A.frob_norm_sq

    def next(self, x: np.ndarray) -> Optional[int]:
        r = self.b - self.data @ x
        r_sq = r * r
        r_norm_sq = float(r_sq.sum())
        if r_norm_sq == 0.0:
            return None
        per_row = r_sq / self.row_norms_sq
        eps = 0.5 * (float(per_row.max()) / r_norm_sq + 1.0 / self.frob_norm_sq)
        mask = r_sq >= eps * r_norm_sq * self.row_norms_sq
        assert mask.any(), "candidate set empty despite nonzero residual"
        candidates = np.flatnonzero(mask)
        cum = cumulative_table(r_sq[candidates])
        return int(candidates[draw_from_table(cum, self._rng.uniform())])


class SelectableSetSelector(RowSelector):
    """Norm-weighted sampling restricted to rows not known to be solved.

    Draws row i by rejection against the norm-weighted distribution until
    i is in the selectable set.  After a step on row i the set update is:

    * non-repetitive variant: all rows except i become selectable;
    * Gramian variant: rows whose inner product with row i is nonzero
      (above ``GRAMIAN_ZERO_RTOL`` relative to the norm product) are
      re-added, then i is removed.

    If the set ever empties (degenerate Gramian inputs, or m = 1), one
    draw falls back to the full row set and the anomaly is logged.
    """

    def __init__(self, system: LinearSystem, seed: int, use_gramian: bool):
        super().__init__(system)
        self._rng = SplitMix64(seed)
        self.cum = cumulative_table(system.A.row_norms_sq)
        self.use_gramian = use_gramian
        self.selectable = np.ones(self.m, dtype=bool)
        self._nonzero_pattern = None
        if use_gramian:
            self._nonzero_pattern = system.A.gram_nonzero_pattern(GRAMIAN_ZERO_RTOL)

    def next(self, x=None) -> int:
        if not self.selectable.any():
            log.warning("selectable set empty; falling back to the full row set once")
            return draw_from_table(self.cum, self._rng.uniform())
        while True:
            i = draw_from_table(self.cum, self._rng.uniform())
            if self.selectable[i]:
                return i

    def after_step(self, i: int) -> None:
        if self.use_gramian:
            self.selectable |= self._nonzero_pattern[i]
        else:
            self.selectable[:] = True
        self.selectable[i] = False


def make_selector(kind: str, system: LinearSystem, seed: int,
                  materialize_wor: bool = False) -> RowSelector:
    """Build a row selector from its command-line string form."""
    if kind == "cyclic":
        return CyclicSelector(system)
    if kind == "uniform":
        return UniformSelector(system, seed)
    if kind == "norm":
        return NormWeightedSelector(system, seed)
    if kind == "wor:once":
        return WithoutReplacementSelector(system, seed, reshuffle_each_pass=False,
                                          materialize=materialize_wor)
    if kind == "wor:pass":
        return WithoutReplacementSelector(system, seed, reshuffle_each_pass=True,
                                          materialize=materialize_wor)
    if kind == "sobol":
        return QuasirandomSelector(system, SobolSequence())
    if kind.startswith("halton"):
        _, _, base = kind.partition(":")
        return QuasirandomSelector(system, HaltonSequence(int(base) if base else 2))
    if kind == "grk":
        return GreedyResidualSelector(system, seed)
    if kind == "nssrk":
        return SelectableSetSelector(system, seed, use_gramian=False)
    if kind == "gssrk":
        return SelectableSetSelector(system, seed, use_gramian=True)
    raise ValueError(f"unknown selector kind {kind!r}")
