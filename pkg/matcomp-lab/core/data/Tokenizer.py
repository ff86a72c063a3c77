import numpy as np

from config import FIRST_VALUE_ID, MASK_ID, TOKEN_DECIMALS, TOKEN_HIGH, TOKEN_LOW
from core.errors import TokenizerError


class Tokenizer:  # fixed grid over [low, high] in steps of 10^-decimals; lowest value -> first value id
    def __init__(self, low=TOKEN_LOW, high=TOKEN_HIGH, decimals=TOKEN_DECIMALS, mask_id=MASK_ID,
                 first_value_id=FIRST_VALUE_ID):
        self.low = low
        self.high = high
        self.decimals = decimals
        self.scale = 10 ** decimals
        self.mask_id = mask_id
        self.first_value_id = first_value_id
        self.offset = int(round(-low * self.scale))  # grid index of 0.0
        self.value_count = int(round((high - low) * self.scale)) + 1
        self.vocab_size = self.value_count + 1

    def describe(self):  # convention frozen into checkpoint manifests
        return {"low": self.low, "high": self.high, "decimals": self.decimals, "mask_id": self.mask_id,
                "first_value_id": self.first_value_id, "orientation": "ascending", "vocab_size": self.vocab_size}

    def round(self, values):
        return np.round(values, self.decimals)

    def token_ids(self, values):  # id of each value on the grid
        values = np.asarray(values, dtype=np.float64)
        half_step = 0.5 / self.scale
        if values.size and (values.min() < self.low - half_step or values.max() > self.high + half_step):
            bad = values[(values < self.low - half_step) | (values > self.high + half_step)].ravel()[0]
            raise TokenizerError(f"value {bad} outside tokenizer range [{self.low}, {self.high}]")
        return (np.rint(values * self.scale).astype(np.int64) + self.offset + self.first_value_id)

    def tokenize(self, X, M):  # row-major token sequence(s) of X ⊙ M, MASK at M == 0
        X = np.asarray(X)
        M = np.asarray(M)
        if X.shape != M.shape:
            raise TokenizerError(f"matrix shape {X.shape} does not match mask shape {M.shape}")
        ids = np.where(M.astype(bool), self.token_ids(X), self.mask_id)
        return ids.reshape(*X.shape[:-2], -1)

    def detokenize(self, ids):  # exact inverse of token_ids on the grid
        ids = np.asarray(ids)
        if ids.size and (ids.min() < self.first_value_id or ids.max() >= self.first_value_id + self.value_count):
            raise TokenizerError(f"unknown value token id in {ids.min()}..{ids.max()}")
        values = (ids - self.first_value_id - self.offset) / self.scale
        return float(values) if values.ndim == 0 else values

    def grid(self, low=None, high=None):  # (values, ids) of the grid points inside [low, high]
        low = self.low if low is None else low
        high = self.high if high is None else high
        k = np.arange(int(round(low * self.scale)), int(round(high * self.scale)) + 1)
        return k / self.scale, k + self.offset + self.first_value_id


TOKENIZER = Tokenizer()
