from dataclasses import dataclass

import numpy as np

from core.errors import DataError


@dataclass
class Mask:  # M[i, j] = 1 on observed entries (Omega), 0 on masked entries
    M: np.ndarray

    @property
    def n(self):
        return self.M.shape[0]

    @property
    def observed(self):  # Omega as (rows, cols)
        return np.nonzero(self.M)

    @property
    def masked(self):  # Omega^c as (rows, cols)
        return np.nonzero(self.M == 0)

    @classmethod
    def sample(cls, n, p_mask, seed=None, rng=None):  # iid entries, masked with probability p_mask
        if not 0.0 <= p_mask <= 1.0:
            raise DataError(f"p_mask must lie in [0, 1], got {p_mask}")
        rng = rng if rng is not None else np.random.default_rng(seed)
        return cls((rng.random((n, n)) >= p_mask).astype(np.int8))

    @classmethod
    def structured(cls, n, masked_rows=()):  # rows masked except one column each; all other rows observed
        M = np.ones((n, n), dtype=np.int8)
        seen = set()
        for row, col in masked_rows:
            if not 0 <= row < n or not 0 <= col < n:
                raise DataError(f"structured mask entry (row {row}, col {col}) outside a {n}x{n} matrix")
            if row in seen:
                raise DataError(f"row {row} listed more than once in structured mask")
            seen.add(row)
            M[row, :] = 0
            M[row, col] = 1
        return cls(M)

    @classmethod
    def preset(cls, name, n):  # named structured masks used for attention inspection
        a, b = n // 3, (2 * n) // 3
        presets = {
            "full": (),
            "two-rows": ((a, n - 1), (b, 1 % n)),
            "two-rows-swapped": ((a, 1 % n), (b, n - 1)),
        }
        if name not in presets:
            raise DataError(f"unknown structured mask preset '{name}', expected one of {sorted(presets)}")
        return cls.structured(n, presets[name])
