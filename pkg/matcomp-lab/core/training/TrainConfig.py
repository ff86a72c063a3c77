from dataclasses import dataclass, field, fields

from config import (BATCH_SIZE, CHECKPOINT_EVERY, CHECKPOINT_STEPS, LEARNING_RATE, LOG_EVERY, PREFETCH,
                    RETRAIN_COMPONENTS, STEPS, COMPONENTS)
from core.autograd.Tensor import PRECISIONS
from core.data.DataConfig import DataConfig
from core.errors import ConfigError
from core.model.ModelConfig import ModelConfig


@dataclass
class TrainConfig:  # everything that determines a training run; flat keys in JSON form
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    batch_size: int = BATCH_SIZE
    steps: int = STEPS
    lr: float = LEARNING_RATE
    seed: int = 0
    checkpoint_every: int = CHECKPOINT_EVERY
    checkpoint_steps: tuple = CHECKPOINT_STEPS
    components: tuple = RETRAIN_COMPONENTS  # trainable components; the rest stay frozen
    precision: str = "float32"
    prefetch: int = PREFETCH
    log_every: int = LOG_EVERY
    resume: str = None
    quiet: bool = False

    def validate(self):
        self.model.validate()
        self.data.validate()
        if self.model.n != self.data.n:
            raise ConfigError(f"model n={self.model.n} does not match data n={self.data.n}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not self.components:
            raise ConfigError("at least one component must be trainable")
        unknown = [c for c in self.components if c not in COMPONENTS]
        if unknown:
            raise ConfigError(f"unknown components {unknown}, expected a subset of {list(COMPONENTS)}")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"unknown precision '{self.precision}', expected one of {sorted(PRECISIONS)}")
        if self.prefetch < 0 or self.checkpoint_every < 0 or self.log_every < 0:
            raise ConfigError("prefetch, checkpoint_every and log_every must be >= 0")
        return self

    def checkpoint_due(self, step):
        if step in self.checkpoint_steps:
            return True
        return bool(self.checkpoint_every) and step % self.checkpoint_every == 0

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("model", "data")}
        d["checkpoint_steps"] = list(self.checkpoint_steps)
        d["components"] = list(self.components)
        return {**self.model.to_dict(), **self.data.to_dict(), **d}

    @classmethod
    def from_dict(cls, d):  # flat dict; model and data keys are picked out by name
        d = dict(d)
        model = ModelConfig(**{k: d.pop(k) for k in list(d) if k in ModelConfig.__dataclass_fields__ and k != "n"},
                            n=d.get("n", ModelConfig.n))
        data = DataConfig(**{k: d.pop(k) for k in list(d) if k in DataConfig.__dataclass_fields__})
        own = {f.name for f in fields(cls)} - {"model", "data"}
        unknown = set(d) - own
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        for key in ("checkpoint_steps", "components"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(model=model, data=data, **d).validate()
