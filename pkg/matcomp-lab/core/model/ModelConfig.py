from dataclasses import asdict, dataclass, fields

from config import HEADS, HIDDEN, INIT_STD, LAYER_NORM_EPS, LAYERS, MLP_RATIO, VOCAB_SIZE
from core.errors import ConfigError


@dataclass
class ModelConfig:  # BERT-style encoder: absolute positions, no token types, no dropout
    n: int = 7
    layers: int = LAYERS
    heads: int = HEADS
    hidden: int = HIDDEN
    mlp_ratio: int = MLP_RATIO
    vocab_size: int = VOCAB_SIZE
    layer_norm_eps: float = LAYER_NORM_EPS
    init_std: float = INIT_STD

    @property
    def seq_len(self):
        return self.n * self.n

    @property
    def head_dim(self):
        return self.hidden // self.heads

    @property
    def mlp_hidden(self):
        return self.mlp_ratio * self.hidden

    def validate(self):
        for name in ("n", "layers", "heads", "hidden", "mlp_ratio", "vocab_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"model {name} must be >= 1, got {getattr(self, name)}")
        if self.hidden % self.heads:
            raise ConfigError(f"hidden size {self.hidden} is not divisible by {self.heads} heads")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d).validate()
