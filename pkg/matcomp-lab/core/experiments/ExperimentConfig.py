import json
import logging
import os
from dataclasses import dataclass, field, fields

from config import PRESETS, SUITE_ALIASES, SUITE_NAMES
from core.data.DataConfig import DataConfig
from core.errors import ConfigError
from core.model.ModelConfig import ModelConfig
from core.training.TrainConfig import TrainConfig

logger = logging.getLogger(__name__)

COMMANDS = ("train", "retrain-component", "eval", "nucnorm", "compare", "ablate", "switch", "patch",
            "permute-positions", "token-intervene", "probe", "embed-report", "attn-export", "detect-drop",
            "reproduce")

TRAIN_KEYS = ({f.name for f in fields(TrainConfig)} - {"model", "data"}) | set(ModelConfig.__dataclass_fields__) \
    | set(DataConfig.__dataclass_fields__)

EXPERIMENT_KEYS = {
    "preset", "checkpoint", "checkpoints", "checkpoint_pre", "source", "samples", "p_masks", "ranks", "lam",
    "lambdas", "heads", "groups", "values", "families", "targets", "layers", "ridge", "train_fraction", "mask",
    "metrics", "window", "threshold", "dists", "permutation", "canary", "suite", "run_dir", "retrain_runs",
    "rank_runs", "tolerances", "batch_size_eval",
}

PATH_KEYS = ("checkpoint", "checkpoint_pre", "source", "metrics", "resume")


def parse_override(item):  # "key=value" with the value JSON-decoded when possible
    if "=" not in item:
        raise ConfigError(f"override '{item}' is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


@dataclass
class ExperimentConfig:  # one CLI invocation: command, output directory, seed and flat parameters
    command: str
    out: str = "runs/latest"
    seed: int = 0
    params: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.params.get(key, default)

    def require(self, key):
        if key not in self.params:
            raise ConfigError(f"command '{self.command}' needs '{key}'")
        return self.params[key]

    def train_config(self, defaults=None):
        d = {**(defaults or {}), **{k: v for k, v in self.params.items() if k in TRAIN_KEYS}}
        d.setdefault("seed", self.seed)
        return TrainConfig.from_dict(d)

    def data_config(self, n=None):
        d = {k: v for k, v in self.params.items() if k in DataConfig.__dataclass_fields__}
        if n is not None:
            d["n"] = n
        return DataConfig.from_dict(d)

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command '{self.command}', expected one of {list(COMMANDS)}")
        unknown = set(self.params) - TRAIN_KEYS - EXPERIMENT_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in PATH_KEYS:
            if key in self.params and not os.path.exists(self.params[key]):
                raise ConfigError(f"{key} '{self.params[key]}' does not exist")
        for path in self.params.get("checkpoints", []):
            if not os.path.exists(path):
                raise ConfigError(f"checkpoint '{path}' does not exist")
        if self.command == "reproduce":
            suite = self.require("suite")
            if suite not in SUITE_NAMES and suite not in SUITE_ALIASES:
                raise ConfigError(f"unknown suite '{suite}', expected one of {list(SUITE_NAMES)} "
                                  f"or {sorted(SUITE_ALIASES)}")
        if self.command in ("train", "retrain-component"):
            self.train_config()
        return self

    def to_dict(self):
        return {"command": self.command, "out": self.out, "seed": self.seed, **self.params}

    @classmethod
    def from_sources(cls, command, config_path=None, overrides=(), out=None, seed=None):
        """Resolve a config: preset values, then the JSON file, then key=value overrides and flags."""
        params = {}
        if config_path:
            try:
                with open(config_path) as f:
                    params = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigError(f"cannot read config {config_path}: {e}") from None
            if not isinstance(params, dict):
                raise ConfigError(f"config {config_path} must hold a JSON object")
        params.update(parse_override(item) for item in overrides)
        params.pop("command", None)
        out = out or params.pop("out", "runs/latest")
        seed = seed if seed is not None else params.pop("seed", 0)
        params.pop("out", None)
        params.pop("seed", None)
        preset = params.get("preset")
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset '{preset}', expected one of {sorted(PRESETS)}")
            params = {**PRESETS[preset], **params}
        return cls(command=command, out=out, seed=int(seed), params=params).validate()
