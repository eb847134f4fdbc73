# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: SplitMix64 selectors, symmetric eigenvalues, trial batches.

Eigenvalues come from LAPACK ``dsyev`` (tridiagonal reduction + root-free
QL/QR) through scipy's Cython bindings.  Every routine releases the GIL, so
callers may fan trials out over threads.  Selectors match
``hesssketch._pycore`` bit for bit.
"""
import numpy as np

from libc.math cimport fabs
from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport free, malloc
from scipy.linalg.cython_blas cimport dsyrk
from scipy.linalg.cython_lapack cimport dsyev

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t MIX2 = 0x94D049BB133111EBULL
cdef uint64_t M32 = 0xFFFFFFFFULL


cdef inline uint64_t sm_next(uint64_t* s) noexcept nogil:
    s[0] += GOLDEN
    cdef uint64_t z = s[0]
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline uint64_t bounded(uint64_t* s, uint64_t n) noexcept nogil:
    cdef uint64_t x, a, b, c, lo, hi, threshold
    x = sm_next(s)
    a = (x & M32) * n
    b = (x >> 32) * n
    c = (b & M32) << 32
    lo = c + a
    hi = (b >> 32) + (1 if lo < c else 0)
    if lo < n:
        threshold = (0 - n) % n
        while lo < threshold:
            x = sm_next(s)
            a = (x & M32) * n
            b = (x >> 32) * n
            c = (b & M32) << 32
            lo = c + a
            hi = (b >> 32) + (1 if lo < c else 0)
    return hi


def splitmix_selectors(uint64_t seed, trial_ids, int64_t n, int64_t m, bint replace):
    if not (1 <= n < 4294967296):
        raise ValueError("n must lie in [1, 2**32)")
    cdef int64_t[::1] ids = np.ascontiguousarray(trial_ids, dtype=np.int64)
    out_arr = np.empty((ids.shape[0], m), dtype=np.int64)
    cdef int64_t[:, ::1] out = out_arr
    cdef Py_ssize_t t, i, ntrial = ids.shape[0]
    cdef uint64_t state
    cdef int64_t j, tmp
    cdef int64_t* perm = NULL
    if not replace:
        perm = <int64_t*> malloc(n * sizeof(int64_t))
        if perm == NULL:
            raise MemoryError()
    try:
        with nogil:
            for t in range(ntrial):
                state = seed ^ (<uint64_t> ids[t] * GOLDEN)
                if replace:
                    for i in range(m):
                        out[t, i] = <int64_t> bounded(&state, <uint64_t> n)
                else:
                    for i in range(n):
                        perm[i] = i
                    for i in range(m):
                        j = i + <int64_t> bounded(&state, <uint64_t> (n - i))
                        tmp = perm[i]
                        perm[i] = perm[j]
                        perm[j] = tmp
                        out[t, i] = perm[i]
    finally:
        free(perm)
    return out_arr


cdef inline Py_ssize_t work_size(Py_ssize_t n) noexcept nogil:
    # blocked-dsytrd optimum is (nb + 2) n; 66 n covers nb = 64
    return 66 * n if n > 0 else 1


cdef int eigvals_inplace(double* a, Py_ssize_t n, double* w, double* work) noexcept nogil:
    # symmetric input, so row-major vs column-major storage is immaterial;
    # dsyev returns ascending eigenvalues, reversed here
    cdef char jobz = b'N'
    cdef char uplo = b'L'
    cdef int nn = <int> n, lwork = <int> work_size(n), info = 0
    cdef Py_ssize_t i
    cdef double tmp
    if n == 1:
        w[0] = a[0]
        return 0
    dsyev(&jobz, &uplo, &nn, a, &nn, w, work, &lwork, &info)
    if info != 0:
        return -1
    for i in range(n // 2):
        tmp = w[i]
        w[i] = w[n - 1 - i]
        w[n - 1 - i] = tmp
    return 0


def sym_eigvalsh_batch(a):
    """Eigenvalues of a stack of symmetric matrices, each sorted descending."""
    arr = np.array(a, dtype=np.float64, order="C", copy=True)
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ValueError("expected an array of shape (batch, k, k)")
    cdef double[:, :, ::1] work = arr
    cdef Py_ssize_t batch = arr.shape[0], k = arr.shape[1], t
    out_arr = np.empty((batch, k), dtype=np.float64)
    if k == 0:
        return out_arr
    cdef double[:, ::1] out = out_arr
    cdef double* e = <double*> malloc(work_size(k) * sizeof(double))
    cdef int status = 0
    if e == NULL:
        raise MemoryError()
    try:
        with nogil:
            for t in range(batch):
                if eigvals_inplace(&work[t, 0, 0], k, &out[t, 0], e) != 0:
                    status = -1
                    break
    finally:
        free(e)
    if status != 0:
        raise ArithmeticError("LAPACK dsyev did not converge")
    return out_arr


def trial_batch(phi, sel):
    """Per-trial sketch statistics: ``(eig_h, hollow, dmin, dmax)``."""
    cdef const double[:, ::1] f = np.ascontiguousarray(phi, dtype=np.float64)
    cdef const int64_t[:, ::1] s = np.ascontiguousarray(sel, dtype=np.int64)
    cdef Py_ssize_t ntrial = s.shape[0], m = s.shape[1], r = f.shape[1]
    cdef Py_ssize_t t, i, k, nrow = f.shape[0]
    for t in range(ntrial):
        for i in range(m):
            if s[t, i] < 0 or s[t, i] >= nrow:
                raise IndexError("selector index out of range")
    eig_arr = np.empty((ntrial, m), dtype=np.float64)
    hollow_arr = np.empty(ntrial, dtype=np.float64)
    dmin_arr = np.empty(ntrial, dtype=np.float64)
    dmax_arr = np.empty(ntrial, dtype=np.float64)
    cdef double[:, ::1] eig = eig_arr
    cdef double[::1] hollow = hollow_arr, dmin = dmin_arr, dmax = dmax_arr
    cdef double* rows = <double*> malloc(m * r * sizeof(double))
    cdef double* hs = <double*> malloc(m * m * sizeof(double))
    cdef double* hm = <double*> malloc(m * m * sizeof(double))
    cdef double* wm = <double*> malloc(m * sizeof(double))
    cdef double* work = <double*> malloc(work_size(m) * sizeof(double))
    cdef char uplo = b'L'
    cdef char trans = b'T'
    cdef int mm = <int> m, rr = <int> r
    cdef double one = 1.0, zero = 0.0
    cdef double acc, lo, hi
    cdef int status = 0
    if rows == NULL or hs == NULL or hm == NULL or wm == NULL or work == NULL:
        free(rows); free(hs); free(hm); free(wm); free(work)
        raise MemoryError()
    try:
        with nogil:
            for t in range(ntrial):
                # gathered rows, read column-major as the r x m matrix X; H_s = X^T X
                for i in range(m):
                    for k in range(r):
                        rows[i * r + k] = f[s[t, i], k]
                dsyrk(&uplo, &trans, &mm, &rr, &one, rows, &rr, &zero, hs, &mm)
                lo = hs[0]
                hi = hs[0]
                for i in range(m * m):
                    hm[i] = hs[i]
                for i in range(m):
                    acc = hs[i * m + i]
                    if acc < lo:
                        lo = acc
                    if acc > hi:
                        hi = acc
                    hm[i * m + i] = 0.0
                dmin[t] = lo
                dmax[t] = hi
                if eigvals_inplace(hs, m, &eig[t, 0], work) != 0:
                    status = -1
                    break
                if eigvals_inplace(hm, m, wm, work) != 0:
                    status = -1
                    break
                hollow[t] = fabs(wm[0]) if fabs(wm[0]) >= fabs(wm[m - 1]) else fabs(wm[m - 1])
    finally:
        free(rows); free(hs); free(hm); free(wm); free(work)
    if status != 0:
        raise ArithmeticError("LAPACK dsyev did not converge")
    return eig_arr, hollow_arr, dmin_arr, dmax_arr
