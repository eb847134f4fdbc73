import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hesssketch.bounds import (
    admissible_sizes,
    condition_threshold,
    crude_bound,
    distortion,
    max_sample_size,
    nearest_rank_quantile,
    refined_quantile_params,
)
from hesssketch.errors import ContractError
from hesssketch.numkit import GramFactor
from hesssketch.spectral import SpectralSummary, summarize

E4 = math.exp(0.25)


def identity_summary(n):
    return SpectralSummary(n=n, r=n, trace=float(n), frob=math.sqrt(n), snorm=1.0, ell=1.0, big_l=1.0, mu=0.0)


def ratio_summary(snorm_ratio, frob_ratio, mu, r, ell=1.0, big_l=1.0):
    return SpectralSummary(
        n=10**9, r=r, trace=1.0, frob=frob_ratio, snorm=snorm_ratio, ell=ell, big_l=big_l, mu=mu
    )


@st.composite
def admissible_summaries(draw):
    """Consistent ratio summaries for which some m >= 1 is admissible."""
    ell = draw(st.floats(0.05, 1.0))
    big_l = draw(st.floats(1.0, 20.0))
    t2_min = 1.01 * (1 + 146 * E4 / ell)
    r = int(10 ** draw(st.floats(math.log10(2 * t2_min), 7.0)))
    t2 = draw(st.floats(t2_min, r))
    tf2 = draw(st.floats(t2, min(t2 * t2, r)))
    cap = 0.999 * ell * math.sqrt(tf2 / (149 * math.exp(0.5) * math.log(r)))
    mu = draw(st.one_of(st.just(0.0), st.floats(0.0, cap)))
    s = ratio_summary(1 / t2, 1 / math.sqrt(tf2), mu, r, ell, big_l)
    return s


class TestDistortion:
    def test_identity(self):
        s = identity_summary(100)
        assert distortion(s, 3) == pytest.approx(2 * E4 * 3 / 100)

    def test_plug_in(self):
        s = ratio_summary(0.1, 0.2, 1.0, math.e)
        assert distortion(s, 1, r=math.e) == pytest.approx(E4 * 2.6)

    def test_doubling_without_coherence(self):
        s = identity_summary(50)
        assert distortion(s, 8) == pytest.approx(2 * distortion(s, 4), rel=1e-15)

    def test_rank_one_rejected(self):
        with pytest.raises(ContractError):
            distortion(identity_summary(1), 1)
        with pytest.raises(ContractError):
            distortion(identity_summary(5), 0)


class TestMaxSampleSize:
    def test_identity(self):
        assert max_sample_size(identity_summary(1000)) == pytest.approx(999 / (146 * E4))

    def test_plug_in(self):
        s = ratio_summary(0.5, 1 / math.sqrt(2), 1.0, math.e**2)
        expected = min(1 / (146 * E4), 2 / (298 * math.exp(0.5)))
        assert max_sample_size(s, r=math.e**2) == pytest.approx(expected)

    def test_admissible_sizes(self):
        s = identity_summary(5000)
        sizes = admissible_sizes(s)
        assert sizes == list(range(1, math.floor(4999 / (146 * E4)) + 1))
        assert admissible_sizes(identity_summary(10)) == []

    @settings(max_examples=300, deadline=None)
    @given(admissible_summaries())
    def test_distortion_below_ell_at_max(self, s):
        m_max = max_sample_size(s)
        assert m_max >= 1
        m = math.floor(m_max)
        tau = distortion(s, m)
        assert tau < s.ell
        # the chain ell - tau(m) >= ell ||H||_2 / (73 Tr H)
        assert s.ell - tau >= s.ell * s.snorm / (73 * s.trace) - 1e-12


class TestConditionThreshold:
    def test_identity_small_m(self):
        n = 10**6
        rep = condition_threshold(identity_summary(n), 1)
        eps = 2 * E4 / n
        assert rep.threshold == pytest.approx((1 + eps) / (1 - eps))
        assert rep.success_prob == pytest.approx(1 - 1 / n)
        assert rep.admissible

    def test_huge_m(self):
        rep = condition_threshold(identity_summary(100), 10**4)
        assert rep.threshold == math.inf
        assert not rep.admissible

    def test_crude_bound(self):
        s = ratio_summary(0.01, 0.05, 0.0, 100, ell=0.5, big_l=2.0)
        assert crude_bound(s) == pytest.approx(73 * 100 * 2.5 / 0.5)

    @settings(max_examples=300, deadline=None)
    @given(admissible_summaries(), st.floats(0, 1))
    def test_threshold_below_crude_bound(self, s, frac):
        m = max(1, math.floor(frac * max_sample_size(s)))
        rep = condition_threshold(s, m)
        assert rep.admissible
        assert 0 < rep.threshold <= rep.crude_bound * (1 + 1e-9)

    @settings(max_examples=200, deadline=None)
    @given(admissible_summaries())
    def test_monotone(self, s):
        m_max = math.floor(max_sample_size(s))
        ms = sorted({1, max(1, m_max // 2), m_max})
        taus = [distortion(s, m) for m in ms]
        ths = [condition_threshold(s, m).threshold for m in ms]
        assert taus == sorted(taus) and ths == sorted(ths)
        bigger_mu = ratio_summary(s.snorm, s.frob, s.mu + 0.1, s.r, s.ell, s.big_l)
        assert distortion(bigger_mu, 2) > distortion(s, 2)
        if s.mu > 1e-6:
            assert distortion(s, 2, r=s.r * 2) > distortion(s, 2)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
    def test_scale_invariance(self, seed, c):
        phi = np.random.default_rng(seed).standard_normal((30, 4))
        a = condition_threshold(summarize(GramFactor(phi)), 2)
        b = condition_threshold(summarize(GramFactor(c * phi)), 2)
        for x, y in zip(a.to_dict().values(), b.to_dict().values()):
            assert y == pytest.approx(x, rel=1e-10)


class TestQuantiles:
    def test_nearest_rank(self):
        v = [5.0, 1.0, 3.0, 2.0, 4.0]
        assert nearest_rank_quantile(v, 0.2) == 1.0
        assert nearest_rank_quantile(v, 0.5) == 3.0
        assert nearest_rank_quantile(v, 0.8) == 4.0
        assert nearest_rank_quantile(v, 0.0) == 1.0
        assert nearest_rank_quantile(v, 1.0) == 5.0
        assert nearest_rank_quantile([1.0, math.inf], 0.9) == math.inf

    def test_identical_trials(self):
        ell0, big_l0 = refined_quantile_params([2.0] * 5, [2.0] * 5, 0.2, 4.0)
        assert ell0 == big_l0 == 0.5

    def test_two_trial_toy(self):
        # nearest-rank: eta/2 = 0.2 picks the first of two, 1 - eta/2 the second
        assert refined_quantile_params([1.0, 3.0], [5.0, 7.0], 0.4, 1.0) == (1.0, 7.0)

    def test_eta_contract(self):
        for eta in (0.0, 0.5, 0.7):
            with pytest.raises(ContractError):
                refined_quantile_params([1.0], [1.0], eta, 1.0)
        with pytest.raises(ContractError):
            refined_quantile_params([], [1.0], 0.2, 1.0)
