import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from config import MANIFEST_FILE, VERSION, WEIGHTS_FILE
from core.autograd.Adam import AdamState
from core.data.Tokenizer import TOKENIZER
from core.errors import CheckpointError
from core.model.Encoder import Encoder, parameter_shapes
from core.model.ModelConfig import ModelConfig

logger = logging.getLogger(__name__)

FORMAT = 1


@dataclass
class Checkpoint:  # weights, optimizer state and step restored from a checkpoint directory
    encoder: Encoder
    adam: AdamState = None
    step: int = 0
    train_config: dict = None
    path: str = None

    @property
    def config(self):
        return self.encoder.config


def _entries(encoder, adam):  # ordered (name, array) of everything stored in the blob
    for name in parameter_shapes(encoder.config):
        yield name, encoder.weights[name]
    if adam is not None:
        for name in parameter_shapes(encoder.config):
            if name in adam.m:
                yield f"adam.m.{name}", adam.m[name]
                yield f"adam.v.{name}", adam.v[name]


def save_checkpoint(path, encoder, adam=None, step=0, train_config=None):  # write manifest.json + weights.bin
    os.makedirs(path, exist_ok=True)
    tensors, offset = [], 0
    with open(os.path.join(path, WEIGHTS_FILE), "wb") as f:
        for name, array in _entries(encoder, adam):
            if not np.isfinite(array).all():
                raise CheckpointError(f"refusing to save non-finite tensor '{name}'")
            dtype = np.dtype(array.dtype).newbyteorder("<")
            raw = np.ascontiguousarray(array, dtype=dtype).tobytes()
            f.write(raw)
            tensors.append({"name": name, "shape": list(array.shape), "dtype": dtype.name,
                            "offset": offset, "nbytes": len(raw)})
            offset += len(raw)
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "step": int(step),
        "config": encoder.config.to_dict(),
        "tokenizer": TOKENIZER.describe(),
        "adam": None if adam is None else {k: v for k, v in adam.hyperparameters().items()},
        "train_config": train_config,
        "tensors": tensors,
    }
    with open(os.path.join(path, MANIFEST_FILE), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    logger.debug("saved checkpoint at step %d to %s", step, path)
    return path


def read_manifest(path):
    file = os.path.join(path, MANIFEST_FILE)
    if not os.path.isfile(file):
        raise CheckpointError(f"no checkpoint manifest at {file}")
    try:
        with open(file) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt checkpoint manifest {file}: {e}") from None


def load_checkpoint(path, expected_config=None):  # inverse of save_checkpoint; validates shapes against the config
    manifest = read_manifest(path)
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"unsupported checkpoint format {manifest.get('format')} in {path}")
    if manifest["tokenizer"] != TOKENIZER.describe():
        raise CheckpointError(f"checkpoint {path} was written with a different tokenizer convention")
    config = ModelConfig.from_dict(manifest["config"])
    if expected_config is not None and expected_config != config:
        raise CheckpointError(f"checkpoint config {config} does not match expected {expected_config}")

    blob_file = os.path.join(path, WEIGHTS_FILE)
    if not os.path.isfile(blob_file):
        raise CheckpointError(f"missing tensor blob {blob_file}")
    with open(blob_file, "rb") as f:
        blob = f.read()
    stored = {}
    for entry in manifest["tensors"]:
        start, end = entry["offset"], entry["offset"] + entry["nbytes"]
        if end > len(blob):
            raise CheckpointError(f"tensor '{entry['name']}' runs past the end of {blob_file}")
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        array = np.frombuffer(blob[start:end], dtype=dtype)
        if array.size != int(np.prod(entry["shape"])):
            raise CheckpointError(f"tensor '{entry['name']}' has {array.size} values, expected shape {entry['shape']}")
        stored[entry["name"]] = array.reshape(entry["shape"]).astype(dtype.newbyteorder("="))

    weights = {}
    for name, shape in parameter_shapes(config).items():
        if name not in stored:
            raise CheckpointError(f"checkpoint {path} is missing tensor '{name}'")
        if stored[name].shape != shape:
            raise CheckpointError(f"tensor '{name}' has shape {stored[name].shape}, config expects {shape}")
        if not np.isfinite(stored[name]).all():
            raise CheckpointError(f"tensor '{name}' in {path} holds non-finite values")
        weights[name] = stored[name]

    adam = None
    if manifest.get("adam") is not None:
        adam = AdamState(**manifest["adam"])
        for name in weights:
            if f"adam.m.{name}" in stored:
                adam.m[name] = stored[f"adam.m.{name}"]
                adam.v[name] = stored[f"adam.v.{name}"]
    return Checkpoint(encoder=Encoder(config, weights), adam=adam, step=manifest["step"],
                      train_config=manifest.get("train_config"), path=path)
