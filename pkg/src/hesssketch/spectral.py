"""Relative spectral parameters of a Gauss-Newton Hessian.

For ``H = phi phi^T`` with ``N`` rows:

* diagonal variation ``ell = N min_i H_ii / Tr H`` and ``L = N max_i H_ii / Tr H``
* coherence ``mu = N max_{i != j} |H_ij| / ||H||_F``

All are invariant under ``H -> cH``.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from hesssketch import _backend
from hesssketch.errors import ContractError, DegenerateError
from hesssketch.numkit import spectral_norm, trace_and_frobenius

PANEL_ROWS = 512


@dataclass(frozen=True)
class SpectralSummary:
    n: int
    r: int
    trace: float
    frob: float
    snorm: float
    ell: float
    big_l: float
    mu: float
    mu_method: str = "exact"

    @property
    def snorm_ratio(self):
        """``||H||_2 / Tr H``."""
        return self.snorm / self.trace

    @property
    def frob_ratio(self):
        """``||H||_F / Tr H``."""
        return self.frob / self.trace

    @property
    def diag_ratio(self):
        """``L / ell``."""
        return self.big_l / self.ell

    def to_dict(self):
        return asdict(self)


def diag_variation(f):
    """``(ell, L)``: extreme diagonal entries of H over the mean diagonal."""
    d = f.row_sq_norms()
    if np.any(d <= 0.0):
        bad = int(np.count_nonzero(d <= 0.0))
        raise DegenerateError(f"degenerate diagonal: {bad} zero-norm row(s) in phi")
    mean = d.sum() / f.n
    return float(d.min() / mean), float(d.max() / mean)


def _panel_max(phi, start, stop):
    block = phi[start:stop] @ phi.T
    rows = np.arange(stop - start)
    block[rows, rows + start] = 0.0
    return float(np.abs(block).max())


def max_offdiag(f, panel_rows=PANEL_ROWS, threads=None):
    """Exact ``max_{i != j} |<phi_i, phi_j>|`` by a blocked scan over row panels."""
    if f.n == 1:
        return 0.0
    starts = range(0, f.n, panel_rows)
    threads = threads or _backend.thread_count()
    if threads > 1 and f.n > panel_rows:
        with ThreadPoolExecutor(threads) as pool:
            maxima = list(pool.map(lambda s: _panel_max(f.phi, s, min(s + panel_rows, f.n)), starts))
    else:
        maxima = [_panel_max(f.phi, s, min(s + panel_rows, f.n)) for s in starts]
    return max(maxima)


def coherence(f, frob=None):
    """Coherence ``mu`` from an exact scan of all off-diagonal inner products."""
    if frob is None:
        _, frob = trace_and_frobenius(f)
    if frob <= 0.0:
        raise DegenerateError("zero Frobenius norm")
    return f.n * max_offdiag(f) / frob


def coherence_sampled(f, n_pairs, seed=0, frob=None):
    """Monte Carlo under-estimate of ``mu`` from random row pairs.

    For profiling only; the result is a lower bound on the exact value.
    """
    if frob is None:
        _, frob = trace_and_frobenius(f)
    if frob <= 0.0:
        raise DegenerateError("zero Frobenius norm")
    if f.n == 1:
        return 0.0
    rng = np.random.default_rng(seed)
    i = rng.integers(0, f.n, n_pairs)
    j = rng.integers(0, f.n - 1, n_pairs)
    j = j + (j >= i)
    dots = np.einsum("ij,ij->i", f.phi[i], f.phi[j])
    return f.n * float(np.abs(dots).max()) / frob


def summarize(f, mu_method="exact", mu_pairs=100_000, seed=0):
    """All spectral parameters of ``H = phi phi^T``."""
    if mu_method not in ("exact", "sampled"):
        raise ContractError("mu_method must be 'exact' or 'sampled'")
    trace, frob = trace_and_frobenius(f)
    if frob <= 0.0:
        raise DegenerateError("zero Frobenius norm")
    ell, big_l = diag_variation(f)
    if mu_method == "exact":
        mu = coherence(f, frob=frob)
    else:
        mu = coherence_sampled(f, mu_pairs, seed=seed, frob=frob)
    return SpectralSummary(
        n=f.n,
        r=f.r,
        trace=trace,
        frob=frob,
        snorm=spectral_norm(f),
        ell=ell,
        big_l=big_l,
        mu=mu,
        mu_method=mu_method,
    )
