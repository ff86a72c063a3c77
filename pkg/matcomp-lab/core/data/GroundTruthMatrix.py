import logging
from dataclasses import dataclass

import numpy as np

from config import DISTRIBUTIONS
from core.data.Tokenizer import TOKENIZER
from core.errors import DataError

logger = logging.getLogger(__name__)


def sample_factors(rng, shape, dist):  # iid factor entries from a named distribution
    if dist not in DISTRIBUTIONS:
        raise DataError(f"unknown distribution '{dist}'")
    family, param = DISTRIBUTIONS[dist]
    if family == "uniform":
        return rng.uniform(-param, param, size=shape)
    if family == "normal":
        return rng.normal(0.0, param, size=shape)
    return rng.laplace(0.0, param, size=shape)


def fit_to_grid(X, overflow="clamp", tokenizer=TOKENIZER):  # keep entries inside the tokenizer range, then round
    outside = (X < tokenizer.low) | (X > tokenizer.high)
    if outside.any():
        worst = float(X[outside].ravel()[np.argmax(np.abs(X[outside]).ravel())])
        if overflow == "raise":
            raise DataError(f"sampled entry {worst} outside tokenizer range [{tokenizer.low}, {tokenizer.high}]")
        logger.warning("clamping %d sampled entries to the tokenizer range (worst %.4f)", int(outside.sum()), worst)
        X = np.clip(X, tokenizer.low, tokenizer.high)
    return tokenizer.round(X)


@dataclass
class GroundTruthMatrix:  # X = U V^T of rank at most r; X holds the rounded entries used for losses
    n: int
    r: int
    X: np.ndarray
    X_raw: np.ndarray
    U: np.ndarray
    V: np.ndarray
    dist: str = "uniform"

    @classmethod
    def sample(cls, n, r, dist="uniform", seed=None, rng=None, overflow="clamp"):
        if not 1 <= r <= n:
            raise DataError(f"rank r must satisfy 1 <= r <= n, got r={r}, n={n}")
        rng = rng if rng is not None else np.random.default_rng(seed)
        U = sample_factors(rng, (n, r), dist)
        V = sample_factors(rng, (n, r), dist)
        X_raw = U @ V.T
        return cls(n=n, r=r, X=fit_to_grid(X_raw, overflow), X_raw=X_raw, U=U, V=V, dist=dist)
