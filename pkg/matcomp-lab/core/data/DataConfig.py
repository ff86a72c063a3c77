from dataclasses import asdict, dataclass

from config import DISTRIBUTIONS, P_MASK
from core.errors import ConfigError


@dataclass
class DataConfig:  # distribution of training/evaluation instances
    n: int = 7
    r: int = 2
    dist: str = "uniform"
    p_mask: float = P_MASK
    overflow: str = "clamp"  # "clamp" (clip and warn) or "raise"

    def validate(self):
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if not 1 <= self.r <= self.n:
            raise ConfigError(f"rank r must satisfy 1 <= r <= n, got r={self.r}, n={self.n}")
        if self.dist not in DISTRIBUTIONS:
            raise ConfigError(f"unknown distribution '{self.dist}', expected one of {sorted(DISTRIBUTIONS)}")
        if not 0.0 <= self.p_mask <= 1.0:
            raise ConfigError(f"p_mask must lie in [0, 1], got {self.p_mask}")
        if self.overflow not in ("clamp", "raise"):
            raise ConfigError(f"overflow must be 'clamp' or 'raise', got '{self.overflow}'")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d}).validate()
