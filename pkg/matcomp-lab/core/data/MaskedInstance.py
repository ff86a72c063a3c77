import json
from dataclasses import dataclass

import numpy as np

from core.data.GroundTruthMatrix import GroundTruthMatrix
from core.data.Mask import Mask
from core.data.Tokenizer import TOKENIZER


@dataclass
class MaskedInstance:  # one sample: ground truth, mask and the tokenized masked matrix
    matrix: GroundTruthMatrix
    mask: Mask
    tokens: np.ndarray
    seed: int = None

    @classmethod
    def build(cls, matrix, mask, seed=None, tokenizer=TOKENIZER):
        return cls(matrix=matrix, mask=mask, tokens=tokenizer.tokenize(matrix.X, mask.M), seed=seed)

    @classmethod
    def sample(cls, n, r, p_mask, seed, dist="uniform"):
        rng = np.random.default_rng(seed)
        matrix = GroundTruthMatrix.sample(n, r, dist, rng=rng)
        return cls.build(matrix, Mask.sample(n, p_mask, rng=rng), seed=seed)

    def to_dict(self):
        return {
            "n": self.matrix.n,
            "r": self.matrix.r,
            "seed": self.seed,
            "X": self.matrix.X.ravel().tolist(),
            "M": self.mask.M.ravel().tolist(),
            "tokens": self.tokens.tolist(),
        }

    def to_json(self):
        return json.dumps(self.to_dict())
