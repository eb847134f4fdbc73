"""Closed-form conditioning bounds for uniformly subsampled Hessians.

Given a :class:`~hesssketch.spectral.SpectralSummary` of ``H`` (rank ``r``)
and a sample size ``m``:

* distortion ``tau(m) = e^{1/4} (2m ||H||_2/Tr H + 12 mu sqrt(m log r) ||H||_F/Tr H)``
* admissible sizes ``m <= min{ ell/(146 e^{1/4}) (Tr H/||H||_2 - 1),
  ell^2/(149 e^{1/2} mu^2 log r) (Tr H/||H||_F)^2 }``
* with probability at least ``1 - 1/r``,
  ``cond(H_s) <= (L + tau)/(ell - tau) <= 73 r (L + ell)/ell``.

Constants are used exactly as stated; logarithms are natural.
"""
from dataclasses import asdict, dataclass
import math

import numpy as np

from hesssketch.errors import ContractError

E_QUARTER = math.exp(0.25)
E_HALF = math.exp(0.5)


@dataclass(frozen=True)
class TheoremReport:
    m: int
    tau: float
    threshold: float
    crude_bound: float
    success_prob: float
    m_max: float
    admissible: bool

    def to_dict(self):
        return asdict(self)


def _rank(summary, r):
    r = summary.r if r is None else r
    if r < 2:
        raise ContractError("log r must be positive: need r >= 2")
    return r


def distortion(summary, m, r=None):
    """``tau(m)``; strictly increasing in ``m``."""
    r = _rank(summary, r)
    if m < 1:
        raise ContractError("m must be >= 1")
    first = 2.0 * m * summary.snorm / summary.trace
    second = 12.0 * summary.mu * math.sqrt(m * math.log(r)) * summary.frob / summary.trace
    return E_QUARTER * (first + second)


def max_sample_size(summary, r=None):
    """Largest ``m`` (real-valued) allowed by the theorem."""
    r = _rank(summary, r)
    ell = summary.ell
    first = ell / (146.0 * E_QUARTER) * (summary.trace / summary.snorm - 1.0)
    denom = 149.0 * E_HALF * summary.mu**2 * math.log(r)
    if denom == 0.0:
        # mu = 0 (or mu^2 underflows): the coherence constraint is absent
        return first
    second = ell**2 / denom * (summary.trace / summary.frob) ** 2
    return min(first, second)


def crude_bound(summary, r=None):
    """``73 r (L + ell) / ell``."""
    r = _rank(summary, r)
    return 73.0 * r * (summary.big_l + summary.ell) / summary.ell


def condition_threshold(summary, m, r=None):
    """Evaluate the theorem at sample size ``m``."""
    r = _rank(summary, r)
    tau = distortion(summary, m, r)
    gap = summary.ell - tau
    threshold = (summary.big_l + tau) / gap if gap > 0.0 else math.inf
    m_max = max_sample_size(summary, r)
    return TheoremReport(
        m=int(m),
        tau=tau,
        threshold=threshold,
        crude_bound=crude_bound(summary, r),
        success_prob=1.0 - 1.0 / r,
        m_max=m_max,
        admissible=bool(m <= m_max),
    )


def admissible_sizes(summary, r=None):
    """All integer ``m >= 1`` the theorem admits (possibly empty)."""
    m_max = max_sample_size(summary, r)
    return list(range(1, int(math.floor(m_max)) + 1)) if m_max >= 1 else []


def nearest_rank_quantile(values, q):
    """Nearest-rank quantile: the ``ceil(q n)``-th smallest value (1-based)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ContractError("empty sample")
    if not 0.0 <= q <= 1.0:
        raise ContractError("quantile level must lie in [0, 1]")
    k = max(1, math.ceil(q * v.size - 1e-12))
    return float(v[k - 1])


def refined_quantile_params(min_diags, max_diags, eta, trace_over_n):
    """High-probability cut-offs ``(ell0, L0)`` for the diagonal variation.

    ``ell0`` is the ``eta/2`` quantile of per-trial minimum diagonals and
    ``L0`` the ``1 - eta/2`` quantile of per-trial maxima, both divided by
    the mean diagonal ``Tr H / N``.
    """
    if not 0.0 < eta < 0.5:
        raise ContractError("eta must lie in (0, 1/2)")
    if len(min_diags) == 0 or len(max_diags) == 0:
        raise ContractError("empty diagonal samples")
    ell0 = nearest_rank_quantile(min_diags, eta / 2.0) / trace_over_n
    big_l0 = nearest_rank_quantile(max_diags, 1.0 - eta / 2.0) / trace_over_n
    return ell0, big_l0
