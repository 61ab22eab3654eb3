import logging
import math

import numpy as np
import pytest

from kaczbench.linalg import DenseMatrix, LinearSystem
from kaczbench.rng import SplitMix64
from kaczbench.sampling import (ColumnWeightedSelector, CyclicSelector,
                                GreedyResidualSelector, HaltonSequence,
                                NormWeightedSelector, QuasirandomSelector,
                                SelectableSetSelector, SobolSequence,
                                UniformSelector, WithoutReplacementSelector,
                                cumulative_table, draw_from_table, fisher_yates,
                                make_selector)

# Upper 0.001 quantile of chi-square with 7 degrees of freedom.
CHI2_CRIT_7_DOF = 24.322


def small_system(m=3, n=3, seed=0):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(m, n))
    A = DenseMatrix(data)
    x = rng.normal(size=n)
    return LinearSystem(A, A.data @ x, x_star=x)


def identity_system(diag):
    diag = np.asarray(diag, dtype=float)
    A = DenseMatrix(np.eye(len(diag)))
    return LinearSystem(A, diag)


# -- cyclic ------------------------------------------------------------------

def test_cyclic_sequence():
    sel = CyclicSelector(small_system(3))
    assert [sel.next() for _ in range(5)] == [0, 1, 2, 0, 1]


def test_cyclic_single_row():
    sel = CyclicSelector(small_system(1, 1))
    assert [sel.next() for _ in range(4)] == [0, 0, 0, 0]


def test_cyclic_counter_is_modular():
    sel = CyclicSelector(small_system(7, 2, seed=1))
    seq = [sel.next() for _ in range(10007)]
    assert seq == [k % 7 for k in range(10007)]
    assert 0 <= sel._k < 7  # counter never grows unboundedly


# -- weighted / uniform ------------------------------------------------------

def test_cumulative_table_values():
    cum = cumulative_table(np.array([1.0, 4.0, 4.0]))
    assert cum == pytest.approx([1 / 9, 5 / 9, 1.0], rel=1e-12)
    assert cum[-1] == 1.0
    assert np.all(np.diff(cum) >= 0)


def test_draw_from_table_boundaries():
    cum = np.array([0.25, 0.5, 1.0])
    assert draw_from_table(cum, 0.0) == 0
    assert draw_from_table(cum, 0.3) == 1
    assert draw_from_table(cum, 1.0 - 2.0**-53) == 2


def test_norm_weighted_single_row():
    sel = NormWeightedSelector(small_system(1, 2, seed=2), seed=3)
    assert all(sel.next() == 0 for _ in range(10))


def test_norm_weighted_equal_norms_is_uniform():
    system = identity_system([1.0, 1.0, 1.0, 1.0])
    sel = NormWeightedSelector(system, seed=4)
    draws = 100_000
    counts = np.bincount([sel.next() for _ in range(draws)], minlength=4)
    expected = draws / 4
    sigma = math.sqrt(draws * 0.25 * 0.75)
    assert np.all(np.abs(counts - expected) <= 4 * sigma)


def test_norm_weighted_chi_square_million_draws():
    rng = np.random.default_rng(6)
    data = rng.normal(size=(8, 5)) * (1.0 + np.arange(8.0))[:, None]
    A = DenseMatrix(data)
    system = LinearSystem(A, np.zeros(8))
    sel = NormWeightedSelector(system, seed=7)
    draws = 1_000_000
    counts = np.bincount([sel.next() for _ in range(draws)], minlength=8)
    probs = A.row_norms_sq / A.frob_norm_sq
    expected = draws * probs
    sigma = np.sqrt(draws * probs * (1 - probs))
    assert np.all(np.abs(counts - expected) <= 5 * sigma)
    chi2 = float((((counts - expected) ** 2) / expected).sum())
    assert chi2 < CHI2_CRIT_7_DOF


def test_uniform_selector_range_and_frequency():
    system = small_system(5, 2, seed=8)
    sel = UniformSelector(system, seed=9)
    draws = 100_000
    idx = np.array([sel.next() for _ in range(draws)])
    assert idx.min() >= 0 and idx.max() < 5
    counts = np.bincount(idx, minlength=5)
    sigma = math.sqrt(draws * 0.2 * 0.8)
    assert np.all(np.abs(counts - draws / 5) <= 4 * sigma)


def test_column_weighted_probabilities():
    A = DenseMatrix([[3.0, 0.0], [0.0, 4.0]])
    sel = ColumnWeightedSelector(A, seed=10)
    assert sel.cum == pytest.approx([9 / 25, 1.0], rel=1e-12)
    draws = 100_000
    counts = np.bincount([sel.next() for _ in range(draws)], minlength=2)
    p = 9 / 25
    sigma = math.sqrt(draws * p * (1 - p))
    assert abs(counts[0] - draws * p) <= 4 * sigma


def test_column_weighted_single_column():
    A = DenseMatrix([[2.0], [1.0]])
    sel = ColumnWeightedSelector(A, seed=11)
    assert all(sel.next() == 0 for _ in range(5))


# -- without replacement -----------------------------------------------------

def test_fisher_yates_is_permutation():
    perm = fisher_yates(10, SplitMix64(12))
    assert sorted(perm.tolist()) == list(range(10))


def test_wor_shuffle_once_repeats_permutation():
    system = small_system(3, 2, seed=13)
    sel = WithoutReplacementSelector(system, seed=14, reshuffle_each_pass=False)
    passes = [[sel.next() for _ in range(3)] for _ in range(3)]
    assert passes[0] == passes[1] == passes[2]
    assert sorted(passes[0]) == [0, 1, 2]


def test_wor_reshuffle_each_pass_covers_every_row():
    system = small_system(3, 2, seed=15)
    sel = WithoutReplacementSelector(system, seed=16, reshuffle_each_pass=True)
    for _ in range(5):
        one_pass = [sel.next() for _ in range(3)]
        assert sorted(one_pass) == [0, 1, 2]


def test_wor_window_coverage():
    # any window of m consecutive selections covers each row exactly once
    system = small_system(6, 2, seed=17)
    sel = WithoutReplacementSelector(system, seed=18, reshuffle_each_pass=False)
    stream = [sel.next() for _ in range(36)]
    for start in range(0, 36, 6):
        assert sorted(stream[start:start + 6]) == list(range(6))


def test_wor_single_row():
    for policy in (False, True):
        sel = WithoutReplacementSelector(small_system(1, 1, seed=19), seed=20,
                                         reshuffle_each_pass=policy)
        assert [sel.next() for _ in range(3)] == [0, 0, 0]


@pytest.mark.parametrize("reshuffle", [False, True])
def test_wor_materialized_delivers_same_rows(reshuffle):
    system = small_system(5, 3, seed=21)
    twofold = WithoutReplacementSelector(system, seed=22, reshuffle_each_pass=reshuffle)
    mater = WithoutReplacementSelector(system, seed=22, reshuffle_each_pass=reshuffle,
                                       materialize=True)
    for _ in range(17):
        i, j = twofold.next(), mater.next()
        assert np.array_equal(twofold.data[i], mater.data[j])
        assert twofold.b[i] == mater.b[j]
        assert twofold.row_norms_sq[i] == mater.row_norms_sq[j]


# -- quasirandom sequences ---------------------------------------------------

def test_halton_base2_values():
    h = HaltonSequence(2)
    assert [h.next() for _ in range(4)] == [0.5, 0.25, 0.75, 0.125]


def test_halton_base3_values():
    h = HaltonSequence(3)
    values = [h.next() for _ in range(3)]
    assert values == pytest.approx([1 / 3, 2 / 3, 1 / 9], rel=1e-15)


def test_halton_rejects_bad_base():
    with pytest.raises(ValueError):
        HaltonSequence(1)


@pytest.mark.parametrize("k", range(1, 11))
def test_halton_stratification(k):
    h = HaltonSequence(2)
    points = [h.next() for _ in range(2 ** k)]
    bins = np.bincount([int(u * 2 ** k) for u in points], minlength=2 ** k)
    assert np.all(bins == 1)


def test_sobol_first_values():
    s = SobolSequence()
    assert [s.next() for _ in range(3)] == [0.5, 0.75, 0.25]


def test_sobol_range():
    s = SobolSequence()
    points = [s.next() for _ in range(1000)]
    assert all(0.0 <= u < 1.0 for u in points)


def sobol_gray_code_oracle(index):
    """Independent construction: XOR direction numbers over Gray-code bits."""
    gray = index ^ (index >> 1)
    bits = 0
    j = 0
    while gray:
        if gray & 1:
            bits ^= 1 << (63 - j)
        gray >>= 1
        j += 1
    return bits * 2.0 ** -64


def test_sobol_matches_gray_code_oracle():
    s = SobolSequence()
    for index in range(1, 64):
        assert s.next() == sobol_gray_code_oracle(index)


@pytest.mark.parametrize("k", range(1, 11))
def test_sobol_stratification(k):
    # the canonical block starts at the zero point, which the row-selection
    # stream skips; include it here so every dyadic bin holds one point
    s = SobolSequence()
    points = [0.0] + [s.next() for _ in range(2 ** k - 1)]
    bins = np.bincount([int(u * 2 ** k) for u in points], minlength=2 ** k)
    assert np.all(bins == 1)


def test_quasirandom_row_mapping():
    system = small_system(4, 2, seed=23)
    sel = QuasirandomSelector(system, HaltonSequence(2))
    assert [sel.next() for _ in range(3)] == [2, 1, 3]


def test_quasirandom_single_row():
    sel = QuasirandomSelector(small_system(1, 1, seed=24), HaltonSequence(2))
    assert sel.next() == 0


class _ConstSequence:
    def __init__(self, value):
        self.value = value

    def next(self):
        return self.value


def test_quasirandom_clamps_to_last_row():
    one_minus_ulp = 1.0 - 2.0 ** -53
    for m in (1, 3, 4, 7):
        sel = QuasirandomSelector(small_system(m, 2, seed=25), _ConstSequence(one_minus_ulp))
        assert sel.next() == m - 1


# -- greedy ------------------------------------------------------------------

def test_grk_single_row():
    system = small_system(1, 2, seed=26)
    sel = GreedyResidualSelector(system, seed=27)
    assert sel.next(np.zeros(2)) == 0


def test_grk_zero_residual_signals_convergence():
    zero = LinearSystem(DenseMatrix(np.eye(2)), np.zeros(2), x_star=np.zeros(2))
    sel = GreedyResidualSelector(zero, seed=30)
    assert sel.next(np.zeros(2)) is None


def test_grk_identity_hand_case():
    # 2x2 identity, b = (1, 0), x = 0: threshold 0.75, candidate set {0}
    system = identity_system([1.0, 0.0])
    for seed in range(5):
        sel = GreedyResidualSelector(system, seed=seed)
        assert sel.next(np.zeros(2)) == 0


def test_grk_equal_norms_equal_residuals_uniform():
    system = identity_system([1.0, -1.0, 1.0, -1.0])
    sel = GreedyResidualSelector(system, seed=31)
    draws = 40_000
    x = np.zeros(4)
    counts = np.bincount([sel.next(x) for _ in range(draws)], minlength=4)
    sigma = math.sqrt(draws * 0.25 * 0.75)
    assert np.all(np.abs(counts - draws / 4) <= 4 * sigma)


def test_grk_selected_index_satisfies_membership():
    rng = np.random.default_rng(32)
    data = rng.normal(size=(12, 4))
    A = DenseMatrix(data)
    x_true = rng.normal(size=4)
    system = LinearSystem(A, A.data @ x_true, x_star=x_true)
    sel = GreedyResidualSelector(system, seed=33)
    x = np.zeros(4)
    for _ in range(200):
        i = sel.next(x)
        if i is None:
            break
        r = system.b - A.data @ x
        r_norm_sq = float(r @ r)
        eps = 0.5 * (float((r * r / A.row_norms_sq).max()) / r_norm_sq
                     + 1.0 / A.frob_norm_sq)
        assert r[i] ** 2 >= eps * r_norm_sq * A.row_norms_sq[i]
        x = x + ((system.b[i] - float(A.data[i] @ x)) / A.row_norms_sq[i]) * A.data[i]


# -- selectable set ----------------------------------------------------------

def test_nssrk_update_removes_only_last():
    system = small_system(3, 2, seed=34)
    sel = SelectableSetSelector(system, seed=35, use_gramian=False)
    sel.after_step(1)
    assert sel.selectable.tolist() == [True, False, True]
    sel.after_step(0)
    assert sel.selectable.tolist() == [False, True, True]


def test_nssrk_never_repeats_previous_index():
    system = small_system(5, 3, seed=36)
    sel = SelectableSetSelector(system, seed=37, use_gramian=False)
    prev = None
    for _ in range(500):
        i = sel.next()
        assert i != prev
        sel.after_step(i)
        prev = i


def test_gssrk_identity_rows_never_reenter(caplog):
    system = identity_system([1.0, 2.0, 3.0])
    sel = SelectableSetSelector(system, seed=38, use_gramian=True)
    sel.after_step(0)
    assert sel.selectable.tolist() == [False, True, True]
    sel.after_step(1)
    assert sel.selectable.tolist() == [False, False, True]
    sel.after_step(2)
    assert sel.selectable.tolist() == [False, False, False]
    with caplog.at_level(logging.WARNING, logger="kaczbench.sampling"):
        i = sel.next()
    assert 0 <= i < 3
    assert any("selectable set empty" in rec.message for rec in caplog.records)


def test_gssrk_matches_nssrk_on_dense_rows():
    # random dense rows: no orthogonal pairs, so the Gramian update is
    # equivalent to the non-repetitive rule
    system = small_system(20, 6, seed=39)
    a = SelectableSetSelector(system, seed=40, use_gramian=True)
    b = SelectableSetSelector(system, seed=40, use_gramian=False)
    assert a._nonzero_pattern.all()
    for _ in range(200):
        i, j = a.next(), b.next()
        assert i == j
        a.after_step(i)
        b.after_step(j)
        assert np.array_equal(a.selectable, b.selectable)


# -- shared contracts --------------------------------------------------------

ALL_KINDS = ("cyclic", "uniform", "norm", "wor:once", "wor:pass",
             "halton:2", "halton:3", "sobol", "grk", "nssrk", "gssrk")


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_selector_indices_in_range(kind):
    system = small_system(7, 3, seed=41)
    sel = make_selector(kind, system, seed=42)
    x = np.zeros(3)
    for _ in range(50):
        i = sel.next(x)
        assert i is not None and 0 <= i < 7
        sel.after_step(i)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_selector_streams_deterministic(kind):
    system = small_system(9, 4, seed=43)
    streams = []
    for _ in range(2):
        sel = make_selector(kind, system, seed=44)
        x = np.zeros(4)
        out = []
        for _ in range(60):
            i = sel.next(x)
            out.append(i)
            sel.after_step(i)
        streams.append(out)
    assert streams[0] == streams[1]


def test_make_selector_rejects_unknown():
    with pytest.raises(ValueError):
        make_selector("nope", small_system(2, 2, seed=45), seed=0)
