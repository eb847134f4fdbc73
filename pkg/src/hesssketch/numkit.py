"""Dense symmetric linear algebra for Gram-structured matrices.

The Hessian ``H = phi @ phi.T`` is held implicitly through its ``N x r``
factor; every quantity below is computed from ``phi`` or from the small
``r x r`` Gram ``phi.T @ phi``.  Spectra are numpy arrays sorted descending.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from hesssketch import _backend
from hesssketch.errors import ContractError

MATERIALIZE_LIMIT = 2000
DEFAULT_RANK_TOL = 1e-12
SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class GramFactor:
    """The ``N x r`` factor ``phi`` of a Gauss-Newton Hessian ``H = phi phi^T``.

    ``meta`` carries provenance (generator, seed, redraw counts) and is not
    part of the numerical value.
    """

    phi: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        phi = np.array(self.phi, dtype=np.float64, order="C", copy=True)
        if phi.ndim != 2:
            raise ContractError(f"phi must be 2-D, got shape {phi.shape}")
        n, r = phi.shape
        if not n >= r >= 1:
            raise ContractError(f"need N >= r >= 1, got N={n}, r={r}")
        if not np.isfinite(phi).all():
            raise ContractError("phi has non-finite entries")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def n(self):
        return self.phi.shape[0]

    @property
    def r(self):
        return self.phi.shape[1]

    def gram(self):
        """The ``r x r`` matrix ``phi^T phi``."""
        return self.phi.T @ self.phi

    def row_sq_norms(self):
        """Diagonal of ``H``: squared row norms of ``phi``."""
        return np.einsum("ij,ij->i", self.phi, self.phi)

    def materialize(self, limit=MATERIALIZE_LIMIT):
        """Dense ``H``; refuses when ``N`` exceeds ``limit``."""
        if self.n > limit:
            raise ContractError(f"refusing to materialize a {self.n}x{self.n} Hessian (limit {limit})")
        return row_products(self.phi, self.phi)

    def scaled(self, c):
        return GramFactor(c * self.phi, dict(self.meta))


def row_products(a, b):
    """``a b^T`` with every entry an identically ordered dot product.

    Unlike BLAS, the summation order does not depend on where a row pair
    sits in the output, so gathered submatrices match extraction exactly.
    """
    return np.einsum("ik,jk->ij", a, b)


def _check_symmetric(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ContractError("matrix has non-finite entries")
    scale = np.abs(a).max() if a.size else 0.0
    if a.size and np.abs(a - a.T).max() > SYMMETRY_TOL * max(scale, np.finfo(float).tiny):
        raise ContractError("matrix is not symmetric")
    return a


def sym_eigenvalues(a):
    """Eigenvalues of a symmetric matrix, sorted descending.

    Householder tridiagonalization + implicit QL in the compiled backend,
    LAPACK (via numpy) in the fallback; both backward stable.
    """
    a = _check_symmetric(a)
    if a.shape[0] == 0:
        return np.empty(0)
    sym = 0.5 * (a + a.T)
    return _backend.kernels.sym_eigvalsh_batch(sym[None])[0]


def gram_spectrum(f):
    """The r eigenvalues of ``phi^T phi``, which are the nonzero spectrum of ``H``."""
    return sym_eigenvalues(f.gram())


def spectral_norm(f):
    return float(gram_spectrum(f)[0])


def trace_and_frobenius(f):
    """``(Tr H, ||H||_F)`` via ``||phi||_F^2`` and the ``r x r`` Gram."""
    trace = float(np.einsum("ij,ij->", f.phi, f.phi))
    frob = float(np.linalg.norm(f.gram(), "fro"))
    return trace, frob


def condition_number(s, rank_tol=DEFAULT_RANK_TOL):
    """``lambda_1 / lambda_last``, or ``inf`` when numerically singular."""
    s = np.asarray(s, dtype=np.float64)
    if s.size == 0:
        raise ContractError("empty spectrum")
    if not 0.0 < rank_tol < 1.0:
        raise ContractError("rank_tol must lie in (0, 1)")
    top, last = s[0], s[-1]
    if top <= 0.0 or last <= rank_tol * top:
        return math.inf
    return float(top / last)


def numerical_rank(s, threshold):
    """Number of eigenvalues at or above ``threshold * lambda_1``."""
    s = np.asarray(s, dtype=np.float64)
    if not 0.0 < threshold < 1.0:
        raise ContractError("threshold must lie in (0, 1)")
    if s.size == 0 or s[0] <= 0.0:
        return 0
    return int(np.count_nonzero(s >= threshold * s[0]))


def batch_condition_numbers(eig, rank_tol=DEFAULT_RANK_TOL):
    # vectorized condition_number over rows of descending spectra
    top, last = eig[:, 0], eig[:, -1]
    ok = (top > 0.0) & (last > rank_tol * top)
    out = np.full(eig.shape[0], np.inf)
    out[ok] = top[ok] / last[ok]
    return out


def batch_ranks(eig, threshold):
    top = eig[:, :1]
    counts = np.count_nonzero(eig >= threshold * top, axis=1)
    counts[eig[:, 0] <= 0.0] = 0
    return counts


def is_psd(s, tol=PSD_TOL):
    s = np.asarray(s)
    return s.size == 0 or bool(s.min() >= -tol * np.abs(s).max())
