import csv
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from config import HEAD_OTHER_FACTOR
from core.data.Batch import BatchSampler
from core.data.DataConfig import DataConfig
from core.data.Mask import Mask
from core.errors import DataError

logger = logging.getLogger(__name__)

HEAD_STATS_HEADER = ("layer", "head", "row", "column", "diagonal", "masked_keys", "label")


def position_relations(n):  # (S,S) boolean maps: same row off-diagonal, same column off-diagonal, diagonal
    rows, cols = np.divmod(np.arange(n * n), n)
    diag = np.eye(n * n, dtype=bool)
    same_row = (rows[:, None] == rows[None, :]) & ~diag
    same_col = (cols[:, None] == cols[None, :]) & ~diag
    return same_row, same_col, diag


def uniform_baselines(n):  # masses of a head attending uniformly over the sequence
    S = n * n
    return {"row": (n - 1) / S, "column": (n - 1) / S, "identity": 1.0 / S}


@dataclass
class HeadLabel:
    layer: int
    head: int
    label: str  # row, column, identity or other
    masses: dict = field(default_factory=dict)
    margins: dict = field(default_factory=dict)  # mass / uniform baseline


@dataclass
class AttentionSummary:  # attention maps averaged over samples with per-head mass statistics
    maps: np.ndarray  # (L,H,S,S)
    samples: int
    n: int
    mask: dict
    masked_mass: np.ndarray  # (L,H) mean mass placed on masked keys
    step: int = None

    def _mass(self, relation):
        return (self.maps * relation).sum(axis=-1).mean(axis=-1)

    @property
    def row_mass(self):
        return self._mass(position_relations(self.n)[0])

    @property
    def column_mass(self):
        return self._mass(position_relations(self.n)[1])

    @property
    def diagonal_mass(self):
        return self._mass(position_relations(self.n)[2])

    def to_manifest(self):
        L, H, S, _ = self.maps.shape
        return {"layers": L, "heads": H, "S": S, "n": self.n, "samples": self.samples, "mask": self.mask,
                "step": self.step, "dtype": "<f4", "order": "layer,head,query,key"}


def record_attention(encoder, data_config, samples, seed=0, mask=None, batch_size=64, quiet=True):
    """Average attention maps of `encoder` over `samples` fresh instances.

    With `mask` (a Mask) every instance shares that structured mask, otherwise masks are drawn with
    the data config's p_mask.
    """
    if samples < 1:
        raise DataError(f"sample count must be >= 1, got {samples}")
    data_config = DataConfig(**{**data_config.to_dict(), "n": encoder.config.n}).validate()
    sampler = BatchSampler(data_config, seed, batch_size)
    batch = sampler.evaluation(seed, samples, mask=mask)
    cfg = encoder.config
    total = np.zeros((cfg.layers, cfg.heads, cfg.seq_len, cfg.seq_len))
    masked = np.zeros((cfg.layers, cfg.heads))
    for start in tqdm(range(0, samples, batch_size), desc="attention", disable=quiet, leave=False):
        chunk = batch.subset(slice(start, start + batch_size))
        _, record = encoder.predict(chunk.tokens, record=True)
        total += record.attention.sum(axis=1)
        keys_masked = (chunk.M.reshape(chunk.size, -1) == 0).astype(np.float64)  # (B,S)
        masked += np.einsum("lbhqk,bk->lh", record.attention, keys_masked) / cfg.seq_len
    mask_spec = {"mode": "random", "p_mask": data_config.p_mask} if mask is None else \
        {"mode": "structured", "M": mask.M.ravel().tolist()}
    return AttentionSummary(maps=total / samples, samples=samples, n=cfg.n, mask=mask_spec,
                            masked_mass=masked / samples)


def classify_heads(summary, other_factor=HEAD_OTHER_FACTOR):  # label every head from its mass statistics
    baselines = uniform_baselines(summary.n)
    stats = {"row": summary.row_mass, "column": summary.column_mass, "identity": summary.diagonal_mass}
    labels = []
    L, H = summary.maps.shape[:2]
    for layer in range(L):
        for head in range(H):
            masses = {k: float(v[layer, head]) for k, v in stats.items()}
            margins = {k: masses[k] / baselines[k] for k in masses}
            top = max(masses, key=masses.get)
            label = top if masses[top] >= other_factor * baselines[top] else "other"
            labels.append(HeadLabel(layer, head, label, masses, margins))
    return labels


def heads_with_label(labels, label):
    return [(h.layer, h.head) for h in labels if h.label == label]


def export_attention(summary, directory, labels=None):  # blob + JSON manifest + per-head CSV
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "attention.bin"), "wb") as f:
        f.write(np.ascontiguousarray(summary.maps, dtype="<f4").tobytes())
    with open(os.path.join(directory, "attention.json"), "w") as f:
        json.dump(summary.to_manifest(), f, indent=2, sort_keys=True)
    labels = labels if labels is not None else classify_heads(summary)
    with open(os.path.join(directory, "head_stats.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(HEAD_STATS_HEADER)
        for h in labels:
            writer.writerow([h.layer + 1, h.head + 1, h.masses["row"], h.masses["column"], h.masses["identity"],
                             float(summary.masked_mass[h.layer, h.head]), h.label])
    logger.info("exported attention of %d samples to %s", summary.samples, directory)
    return directory


def load_attention(directory):
    with open(os.path.join(directory, "attention.json")) as f:
        manifest = json.load(f)
    shape = (manifest["layers"], manifest["heads"], manifest["S"], manifest["S"])
    maps = np.fromfile(os.path.join(directory, "attention.bin"), dtype="<f4").reshape(shape)
    return manifest, maps


def structured_mask(n, spec):  # a preset name or a list of (row, column) pairs
    if isinstance(spec, str):
        return Mask.preset(spec, n)
    return Mask.structured(n, [tuple(p) for p in spec])
