"""Seeded Monte Carlo harness for subsampled Hessians.

Trial ``t`` draws its selector from the SplitMix64 stream started at
``seed ^ (t * 0x9E3779B97F4A7C15 mod 2**64)``.  Trials are processed in
fixed chunks of :data:`CHUNK` ids, so every per-trial value, and every
aggregate, is independent of the number of worker threads.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math

import numpy as np

from hesssketch import _backend
from hesssketch.bounds import condition_threshold, nearest_rank_quantile, refined_quantile_params
from hesssketch.errors import ContractError
from hesssketch.numkit import DEFAULT_RANK_TOL, batch_condition_numbers, batch_ranks
from hesssketch.sketch import splitmix_selectors
from hesssketch.spectral import summarize

CHUNK = 256
RANK_THRESHOLDS = (1e-6, 1e-2)
COND_QUANTILES = (0.2, 0.5, 0.8)
MODES = ("replace", "noreplace")


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    selector: tuple
    cond: float
    rank_at: dict
    min_diag: float
    max_diag: float
    hollow_norm: float


@dataclass
class TrialRecords:
    """Columnar per-trial results; ``eig`` holds each ``H_s`` spectrum, descending."""

    trial_id: np.ndarray
    selectors: np.ndarray
    eig: np.ndarray
    cond: np.ndarray
    min_diag: np.ndarray
    max_diag: np.ndarray
    hollow_norm: np.ndarray
    rank_tol: float = DEFAULT_RANK_TOL

    def __len__(self):
        return self.trial_id.size

    def ranks(self, threshold):
        return batch_ranks(self.eig, threshold)

    def record(self, i, thresholds=RANK_THRESHOLDS):
        return TrialRecord(
            trial_id=int(self.trial_id[i]),
            selector=tuple(int(k) for k in self.selectors[i]),
            cond=float(self.cond[i]),
            rank_at={t: int(batch_ranks(self.eig[i:i + 1], t)[0]) for t in thresholds},
            min_diag=float(self.min_diag[i]),
            max_diag=float(self.max_diag[i]),
            hollow_norm=float(self.hollow_norm[i]),
        )


def _mode_flag(mode):
    if mode not in MODES:
        raise ContractError(f"mode must be one of {MODES}, got {mode!r}")
    return mode == "replace"


def run_trials(f, m, trials, seed, mode="replace", rank_tol=DEFAULT_RANK_TOL, threads=None):
    """Draw ``trials`` selectors and record the statistics of each ``H_s``."""
    if trials < 1:
        raise ContractError("trials must be >= 1")
    replace = _mode_flag(mode)
    if m < 1 or (not replace and m > f.n):
        raise ContractError(f"invalid sample size m={m} for N={f.n} ({mode})")
    kernels = _backend.kernels
    phi = f.phi

    def work(start):
        ids = np.arange(start, min(start + CHUNK, trials), dtype=np.int64)
        sel = splitmix_selectors(seed, ids, f.n, m, replace)
        return (ids, sel) + tuple(kernels.trial_batch(phi, sel))

    starts = range(0, trials, CHUNK)
    threads = threads or _backend.thread_count()
    if threads > 1 and trials > CHUNK:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    ids, sel, eig, hollow, dmin, dmax = (np.concatenate(col) for col in zip(*parts))
    return TrialRecords(
        trial_id=ids,
        selectors=sel,
        eig=eig,
        cond=batch_condition_numbers(eig, rank_tol),
        min_diag=dmin,
        max_diag=dmax,
        hollow_norm=hollow,
        rank_tol=rank_tol,
    )


def failure_probability(records, threshold):
    """Fraction of trials with ``cond > threshold``; infinite counts as failure."""
    return float(np.count_nonzero(records.cond > threshold)) / len(records)


def rank_histogram(records, threshold):
    """``{rank: count}`` of numerical ranks at ``threshold``; counts sum to the trial count."""
    ranks, counts = np.unique(records.ranks(threshold), return_counts=True)
    return {int(k): int(c) for k, c in zip(ranks, counts)}


def moment_bound(summary, m, p):
    """``(2m/N)||H||_2 + 12 sqrt(max(log m, p/2)) mu (sqrt(m)/N) ||H||_F``."""
    n = summary.n
    return (2.0 * m / n) * summary.snorm + 12.0 * math.sqrt(max(math.log(m), p / 2.0)) * summary.mu * (
        math.sqrt(m) / n
    ) * summary.frob


def empirical_moment(hollow_norms, p):
    """``(mean ||M_s||_2^p)^(1/p)``, scaled to avoid overflow."""
    h = np.asarray(hollow_norms, dtype=np.float64)
    top = h.max()
    if top == 0.0:
        return 0.0
    return float(top * np.mean((h / top) ** p) ** (1.0 / p))


@dataclass(frozen=True)
class MomentEstimate:
    p: float
    estimate: float
    bound: float


def moment_estimate(f, m, p, trials, seed, mode="replace", summary=None, records=None):
    """Empirical p-th moment of ``||M_s||_2`` alongside its closed-form bound."""
    if p < 2:
        raise ContractError("p must be >= 2")
    summary = summary or summarize(f)
    if records is None:
        records = run_trials(f, m, trials, seed, mode)
    return MomentEstimate(p=p, estimate=empirical_moment(records.hollow_norm, p), bound=moment_bound(summary, m, p))


@dataclass(frozen=True)
class TailCheck:
    prob: float
    target: float
    level: float
    trials: int

    @property
    def sigma(self):
        """Binomial standard error at the target probability."""
        return math.sqrt(self.target * (1.0 - self.target) / self.trials)


def tail_check(f, m, r=None, trials=10_000, seed=0, mode="replace", summary=None, records=None):
    """Fraction of trials with ``||M_s||_2 <= (Tr H / N) tau(m)``, against ``1 - 1/r``."""
    summary = summary or summarize(f)
    r = summary.r if r is None else r
    report = condition_threshold(summary, m, r)
    if records is None:
        records = run_trials(f, m, trials, seed, mode)
    level = summary.trace / summary.n * report.tau
    prob = float(np.count_nonzero(records.hollow_norm <= level)) / len(records)
    return TailCheck(prob=prob, target=report.success_prob, level=level, trials=len(records))


@dataclass
class EnsembleReport:
    config: dict
    summary: dict
    cond_quantiles: dict
    failure_threshold: float
    failure_prob: float
    rank_histograms: dict
    theorem: dict
    moments: list
    refined: dict
    duplicate_fraction: float
    records: TrialRecords = field(repr=False, default=None)

    def to_dict(self):
        out = {k: v for k, v in self.__dict__.items() if k != "records"}
        return out


def _duplicate_fraction(selectors):
    s = np.sort(selectors, axis=1)
    return float(np.count_nonzero((s[:, 1:] == s[:, :-1]).any(axis=1))) / s.shape[0]


def run_condition_ensemble(
    f,
    m,
    trials,
    seed,
    mode="replace",
    summary=None,
    rank_thresholds=RANK_THRESHOLDS,
    rank_tol=DEFAULT_RANK_TOL,
    eta=0.2,
    moment_orders=(2, 4, 8),
    threads=None,
):
    """Run one ensemble at sample size ``m`` and aggregate it."""
    summary = summary or summarize(f)
    records = run_trials(f, m, trials, seed, mode, rank_tol=rank_tol, threads=threads)
    cond_q = {str(q): nearest_rank_quantile(records.cond, q) for q in COND_QUANTILES}
    ratio = summary.diag_ratio
    theorem = {"m": m, "r": summary.r}
    if summary.r >= 2:
        rep = condition_threshold(summary, m)
        level = summary.trace / summary.n * rep.tau
        theorem.update(
            tau=rep.tau,
            threshold=rep.threshold,
            crude_bound=rep.crude_bound,
            m_max=rep.m_max,
            admissible=rep.admissible,
            target=rep.success_prob,
            event_prob=float(np.count_nonzero(records.cond <= rep.threshold)) / len(records),
            tail_prob=float(np.count_nonzero(records.hollow_norm <= level)) / len(records),
        )
    moments = [
        {"p": p, "estimate": empirical_moment(records.hollow_norm, p), "bound": moment_bound(summary, m, p)}
        for p in moment_orders
    ]
    ell0, big_l0 = refined_quantile_params(records.min_diag, records.max_diag, eta, summary.trace / summary.n)
    return EnsembleReport(
        config={
            "n": f.n,
            "r": f.r,
            "m": m,
            "trials": trials,
            "seed": seed,
            "mode": mode,
            "rank_tol": rank_tol,
            "rank_thresholds": list(rank_thresholds),
            "eta": eta,
            "backend": _backend.name,
        },
        summary=summary.to_dict(),
        cond_quantiles=cond_q,
        failure_threshold=ratio,
        failure_prob=failure_probability(records, ratio),
        rank_histograms={repr(t): rank_histogram(records, t) for t in rank_thresholds},
        theorem=theorem,
        moments=moments,
        refined={"eta": eta, "ell0": ell0, "big_l0": big_l0, "ratio": big_l0 / ell0},
        duplicate_fraction=_duplicate_fraction(records.selectors),
        records=records,
    )
