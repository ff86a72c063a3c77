import logging
from dataclasses import dataclass

import numpy as np

from core.data.GroundTruthMatrix import fit_to_grid, sample_factors
from core.data.Tokenizer import TOKENIZER
from core.data.seeding import rng_for
from core.errors import DataError

logger = logging.getLogger(__name__)


@dataclass
class Batch:  # B instances stacked: X (B,n,n) rounded ground truth, M (B,n,n), tokens (B,n^2)
    X: np.ndarray
    M: np.ndarray
    tokens: np.ndarray

    @property
    def size(self):
        return self.X.shape[0]

    @property
    def n(self):
        return self.X.shape[1]

    def subset(self, index):
        return Batch(self.X[index], self.M[index], self.tokens[index])

    def with_tokens(self, tokens):
        return Batch(self.X, self.M, tokens)


def make_batch(X, M, tokenizer=TOKENIZER):
    return Batch(X=X, M=M.astype(np.int8), tokens=tokenizer.tokenize(X, M))


class BatchSampler:  # online data source: batch at step t is a pure function of (seed, t)
    def __init__(self, data_config, seed, batch_size):
        self.config = data_config
        self.seed = seed
        self.batch_size = batch_size

    def batch(self, step, size=None):
        return self.sample(rng_for(self.seed, "data", step), size or self.batch_size)

    def sample(self, rng, size, family="low-rank", rank=None, dist=None, mask=None, p_mask=None):
        cfg = self.config
        n = cfg.n
        rank = rank or cfg.r
        dist = dist or cfg.dist
        p_mask = cfg.p_mask if p_mask is None else p_mask
        if family == "low-rank":
            U = sample_factors(rng, (size, n, rank), dist)
            V = sample_factors(rng, (size, n, rank), dist)
            X_raw = U @ np.swapaxes(V, -1, -2)
        elif family == "random":  # unconstrained iid Unif[-1, 1] entries
            X_raw = rng.uniform(-1.0, 1.0, size=(size, n, n))
        else:
            raise DataError(f"unknown input family '{family}', expected 'low-rank' or 'random'")
        X = fit_to_grid(X_raw, cfg.overflow)
        if mask is None:
            M = (rng.random((size, n, n)) >= p_mask).astype(np.int8)
        else:
            M = np.broadcast_to(mask.M, (size, n, n)).astype(np.int8)
        return make_batch(X, M)

    def evaluation(self, seed, size, **kwargs):  # held-out samples drawn from the eval stream
        return self.sample(rng_for(seed, "eval"), size, **kwargs)
