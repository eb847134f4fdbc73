"""Synthetic Gram factors with i.i.d. entries."""
from dataclasses import dataclass

import numpy as np

from hesssketch.errors import ContractError
from hesssketch.numkit import GramFactor

DISTRIBUTIONS = ("gaussian", "uniform01", "bernoulli01")


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    r: int
    distribution: str = "gaussian"
    seed: int = 0
    bernoulli_p: float = 0.5

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise ContractError(f"distribution must be one of {DISTRIBUTIONS}")
        if not self.n >= self.r >= 1:
            raise ContractError(f"need n >= r >= 1, got n={self.n}, r={self.r}")
        if not 0.0 < self.bernoulli_p <= 1.0:
            raise ContractError("bernoulli_p must lie in (0, 1]")


def gen_factor(spec):
    """Draw ``phi`` with i.i.d. entries from ``spec.distribution``.

    Gaussian variates come from numpy's ziggurat sampler on a PCG64 stream
    seeded with ``spec.seed``.  Bernoulli rows that come out all-zero are
    redrawn (the diagonal of ``H`` must be strictly positive); the number of
    redrawn rows is stored in ``meta["redraws"]``.
    """
    rng = np.random.default_rng(spec.seed)
    shape = (spec.n, spec.r)
    redraws = 0
    if spec.distribution == "gaussian":
        phi = rng.standard_normal(shape)
    elif spec.distribution == "uniform01":
        phi = rng.random(shape)
    else:
        phi = (rng.random(shape) < spec.bernoulli_p).astype(np.float64)
        zero = np.flatnonzero(~phi.any(axis=1))
        while zero.size:
            redraws += zero.size
            phi[zero] = rng.random((zero.size, spec.r)) < spec.bernoulli_p
            zero = zero[~phi[zero].any(axis=1)]
    meta = {
        "distribution": spec.distribution,
        "seed": spec.seed,
        "redraws": redraws,
    }
    if spec.distribution == "bernoulli01":
        meta["bernoulli_p"] = spec.bernoulli_p
    return GramFactor(phi, meta)
