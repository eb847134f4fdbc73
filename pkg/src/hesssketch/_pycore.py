"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_core`` extension is unavailable or when
``HESSSKETCH_BACKEND=python`` is set.  The selector stream is bit-identical
to the compiled one; eigenvalues agree to rounding (the compiled path uses
Householder tridiagonalization + implicit QL, this one calls LAPACK through
``numpy.linalg.eigvalsh``).
"""
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)

_CHUNK = 256


def stream_states(seed, trial_ids):
    """Initial SplitMix64 state of each trial: ``seed ^ (t * GOLDEN mod 2**64)``."""
    t = np.asarray(trial_ids, dtype=np.uint64)
    return np.uint64(seed) ^ (t * GOLDEN)


def _next(state):
    state += GOLDEN
    z = state.copy()
    z ^= z >> np.uint64(30)
    z *= MIX1
    z ^= z >> np.uint64(27)
    z *= MIX2
    z ^= z >> np.uint64(31)
    return z


def _mul_n(x, n):
    # 64x32 -> 128-bit product split into (hi, lo); requires n < 2**32
    n = np.uint64(n)
    a = (x & _M32) * n
    b = (x >> _S32) * n
    c = (b & _M32) << _S32
    lo = c + a
    hi = (b >> _S32) + (lo < c).astype(np.uint64)
    return hi, lo


def _bounded(state, n):
    """Unbiased integers in [0, n) (Lemire's multiply-shift with rejection)."""
    x = _next(state)
    hi, lo = _mul_n(x, n)
    small = lo < np.uint64(n)
    if small.any():
        threshold = np.uint64((2**64 - n) % n)
        bad = np.flatnonzero(small & (lo < threshold))
        while bad.size:
            sub = state[bad]
            x = _next(sub)
            state[bad] = sub
            h2, l2 = _mul_n(x, n)
            hi[bad] = h2
            keep = l2 < threshold
            bad = bad[keep]
    return hi.astype(np.int64)


def splitmix_selectors(seed, trial_ids, n, m, replace):
    """Row indices for each trial, shape ``(len(trial_ids), m)``.

    With replacement: m i.i.d. bounded draws.  Without: the first m steps of
    a Fisher-Yates shuffle of ``range(n)`` driven by the same stream.
    """
    if not 1 <= n < 2**32:
        raise ValueError("n must lie in [1, 2**32)")
    trial_ids = np.asarray(trial_ids, dtype=np.int64)
    out = np.empty((trial_ids.size, m), dtype=np.int64)
    for start in range(0, trial_ids.size, _CHUNK):
        ids = trial_ids[start:start + _CHUNK]
        state = stream_states(seed, ids)
        block = out[start:start + ids.size]
        if replace:
            for i in range(m):
                block[:, i] = _bounded(state, n)
        else:
            perm = np.tile(np.arange(n, dtype=np.int64), (ids.size, 1))
            rows = np.arange(ids.size)
            for i in range(m):
                j = i + _bounded(state, n - i)
                pi = perm[:, i].copy()
                perm[:, i] = perm[rows, j]
                perm[rows, j] = pi
                block[:, i] = perm[:, i]
    return out


def sym_eigvalsh_batch(a):
    """Eigenvalues of a stack of symmetric matrices, each sorted descending."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ValueError("expected an array of shape (batch, k, k)")
    if a.shape[1] == 0:
        return np.empty((a.shape[0], 0))
    try:
        w = np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(str(exc)) from None
    return np.ascontiguousarray(w[:, ::-1])


def trial_batch(phi, sel):
    """Per-trial sketch statistics.

    Returns ``(eig_h, hollow, dmin, dmax)``: descending eigenvalues of each
    ``H_s = (S phi)(S phi)^T``, the spectral norm of its hollow part, and
    the min/max diagonal entry.
    """
    rows = phi[sel]
    hs = rows @ rows.transpose(0, 2, 1)
    m = hs.shape[1]
    diag = hs[:, np.arange(m), np.arange(m)].copy()
    eig_h = sym_eigvalsh_batch(hs)
    hs[:, np.arange(m), np.arange(m)] = 0.0
    eig_m = sym_eigvalsh_batch(hs)
    hollow = np.maximum(np.abs(eig_m[:, 0]), np.abs(eig_m[:, -1]))
    return eig_h, hollow, diag.min(axis=1), diag.max(axis=1)
