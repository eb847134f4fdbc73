import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hesssketch import _pycore
from hesssketch.errors import ContractError
from hesssketch.numkit import GramFactor, condition_number, sym_eigenvalues
from hesssketch.sketch import draw_uniform_selector, hollow_part, sketch_hessian, splitmix_selectors

MASK64 = (1 << 64) - 1


def splitmix_reference(state):
    """Textbook SplitMix64 on Python integers: returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def selector_reference(seed, t, n, m, replace):
    state = seed ^ ((t * 0x9E3779B97F4A7C15) & MASK64)

    def bounded(bound):
        nonlocal state
        threshold = ((1 << 64) - bound) % bound
        while True:
            state, x = splitmix_reference(state)
            prod = x * bound
            if prod & MASK64 >= threshold:
                return prod >> 64

    if replace:
        return [bounded(n) for _ in range(m)]
    perm = list(range(n))
    for i in range(m):
        j = i + bounded(n - i)
        perm[i], perm[j] = perm[j], perm[i]
    return perm[:m]


class TestDraw:
    def test_single_outcome(self):
        assert list(draw_uniform_selector(1, 3, np.random.default_rng(0))) == [0, 0, 0]

    def test_permutation(self):
        s = draw_uniform_selector(5, 5, np.random.default_rng(0), replace=False)
        assert sorted(s) == [0, 1, 2, 3, 4]

    def test_too_many_without_replacement(self):
        with pytest.raises(ContractError):
            draw_uniform_selector(3, 4, np.random.default_rng(0), replace=False)
        with pytest.raises(ContractError):
            splitmix_selectors(0, [0], 3, 4, replace=False)

    def test_ordered_pair_frequencies(self):
        # 36 equally likely ordered pairs; 10^6 draws, 3-sigma binomial band
        draws = 10**6
        sel = splitmix_selectors(11, np.arange(draws), 6, 2)
        counts = Counter(map(tuple, sel.tolist()))
        assert len(counts) == 36
        p = 1 / 36
        sigma = math.sqrt(draws * p * (1 - p))
        assert all(abs(c - draws * p) <= 3 * sigma for c in counts.values())


class TestSplitMixStream:
    @pytest.mark.parametrize(
        "n, m, replace",
        [(1, 1, True), (6, 2, True), (1000, 17, True), (2**31 + 11, 5, True), (1, 1, False), (6, 2, False), (1000, 17, False)],
    )
    def test_matches_reference(self, n, m, replace):
        seed = 0xDEADBEEF12345678
        ids = [0, 1, 2, 999, 2**40]
        got = splitmix_selectors(seed, ids, n, m, replace)
        for row, t in zip(got, ids):
            assert row.tolist() == selector_reference(seed, t, n, m, replace)

    def test_independent_of_batching(self):
        whole = splitmix_selectors(5, np.arange(600), 50, 4)
        parts = np.concatenate([splitmix_selectors(5, np.arange(a, b), 50, 4) for a, b in [(0, 7), (7, 300), (300, 600)]])
        assert np.array_equal(whole, parts)

    def test_known_first_output(self):
        # first SplitMix64 output for state 0 is 0xE220A8397B1DCDAF
        assert splitmix_reference(0)[1] == 0xE220A8397B1DCDAF
        assert _pycore.stream_states(0, np.array([0]))[0] == 0


class TestSketchHessian:
    def test_identity(self):
        np.testing.assert_array_equal(sketch_hessian(GramFactor(np.eye(3)), [0, 2]), np.eye(2))

    def test_inner_products(self):
        phi = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
        np.testing.assert_array_equal(sketch_hessian(GramFactor(phi), [0, 2]), [[1, 1], [1, 2]])

    def test_duplicate_is_singular(self):
        phi = np.random.default_rng(0).standard_normal((10, 4))
        h = sketch_hessian(GramFactor(phi), [3, 5, 3])
        assert condition_number(sym_eigenvalues(h)) == math.inf

    def test_bad_index(self):
        with pytest.raises(ContractError):
            sketch_hessian(GramFactor(np.eye(3)), [0, 3])

    def test_hollow(self):
        np.testing.assert_array_equal(hollow_part(np.eye(3)), np.zeros((3, 3)))
        np.testing.assert_array_equal(hollow_part(np.array([[1.0, 1.0], [1.0, 2.0]])), [[0, 1], [1, 0]])
        assert np.abs(sym_eigenvalues(hollow_part(np.array([[0.0, 3.0], [3.0, 0.0]])))).max() == pytest.approx(3)
        with pytest.raises(ContractError):
            hollow_part(np.ones((2, 3)))


@st.composite
def sketch_cases(draw):
    r = draw(st.integers(1, 6))
    n = draw(st.integers(r, 25))
    m = draw(st.integers(1, 8))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    phi = rng.standard_normal((n, r)) * rng.uniform(0.1, 10)
    sel = rng.integers(0, n, m)
    return phi, sel


@settings(max_examples=150, deadline=None)
@given(sketch_cases())
def test_sketch_invariants(case):
    phi, sel = case
    f = GramFactor(phi)
    hs = sketch_hessian(f, sel)
    h = f.materialize()
    np.testing.assert_array_equal(hs, h[np.ix_(sel, sel)])
    lam = sym_eigenvalues(hs)
    hollow = np.abs(sym_eigenvalues(hollow_part(hs))).max()
    diag = np.sort(np.diag(hs))[::-1]
    tol = 1e-9 * max(1.0, lam[0])
    assert np.all(np.abs(lam - diag) <= hollow + tol)
    assert hollow <= lam[0] + tol
    top = np.linalg.eigvalsh(h)[-1]
    if len(set(sel.tolist())) == len(sel):
        assert lam[0] <= top + tol
    else:
        # repeated rows are not a principal submatrix; multiplicity scales the bound
        assert lam[0] <= max(np.bincount(sel)) * top + tol
    assert lam[-1] >= -1e-10 * max(lam[0], 1e-300)
