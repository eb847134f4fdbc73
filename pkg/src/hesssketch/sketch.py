"""Uniform row subsampling of a Gram factor.

A selector is an ordered array of ``m`` row indices (the rows of ``S``).
The sketched Hessian ``H_s = (S phi)(S phi)^T`` is an ``m x m`` principal
submatrix of ``H``; with i.i.d. sampling a repeated index yields two equal
rows and hence an infinite condition number.
"""
import numpy as np

from hesssketch import _backend
from hesssketch.errors import ContractError
from hesssketch.numkit import row_products


def draw_uniform_selector(n, m, rng, replace=True):
    """Draw ``m`` row indices from ``range(n)``.

    ``rng`` is a ``numpy.random.Generator``.  With ``replace=False`` the
    result is a uniformly random ``m``-subset in random order.
    """
    if m < 1:
        raise ContractError("m must be >= 1")
    if not replace and m > n:
        raise ContractError(f"cannot draw {m} distinct rows from {n}")
    if replace:
        return rng.integers(0, n, size=m)
    return rng.permutation(n)[:m]


def splitmix_selectors(seed, trial_ids, n, m, replace=True):
    """Selectors for many trials from the per-trial SplitMix64 streams.

    Trial ``t`` uses the stream started at ``seed ^ (t * 0x9E3779B97F4A7C15)``;
    the result does not depend on how trials are batched.
    """
    if m < 1:
        raise ContractError("m must be >= 1")
    if not replace and m > n:
        raise ContractError(f"cannot draw {m} distinct rows from {n}")
    if not 0 <= seed < 2**64:
        raise ContractError("seed must lie in [0, 2**64)")
    return _backend.kernels.splitmix_selectors(seed, np.asarray(trial_ids, dtype=np.int64), n, m, replace)


def _indices(f, s):
    s = np.asarray(s, dtype=np.int64)
    if s.ndim != 1 or s.size < 1:
        raise ContractError("selector must be a nonempty 1-D index list")
    if s.min() < 0 or s.max() >= f.n:
        raise ContractError("selector index out of range")
    return s


def sketch_hessian(f, s):
    """``H_s = (S phi)(S phi)^T`` by row gathering; never forms ``H``."""
    rows = f.phi[_indices(f, s)]
    return row_products(rows, rows)


def hollow_part(h_s):
    """Copy of ``h_s`` with its diagonal zeroed."""
    h_s = np.asarray(h_s, dtype=np.float64)
    if h_s.ndim != 2 or h_s.shape[0] != h_s.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {h_s.shape}")
    out = h_s.copy()
    np.fill_diagonal(out, 0.0)
    return out
