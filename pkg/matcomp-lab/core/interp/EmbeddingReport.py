import logging
from dataclasses import dataclass

import numpy as np

from config import EMBED_GRID
from core.data.Tokenizer import TOKENIZER
from core.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class EmbeddingReport:
    step: int
    values: np.ndarray  # token value grid
    norms: np.ndarray
    norm_asymmetry: float  # mean |‖e(v)‖ - ‖e(-v)‖| / ‖e(v)‖ over v > 0
    components: np.ndarray  # (2,D) top principal directions
    explained: np.ndarray  # variance fraction of each component
    projections: np.ndarray  # (K,2)
    sign_separability: float
    column_clustering: float

    def to_dict(self):
        return {"step": self.step, "values": self.values.tolist(), "norms": self.norms.tolist(),
                "norm_asymmetry": self.norm_asymmetry, "explained": self.explained.tolist(),
                "projections": self.projections.tolist(), "sign_separability": self.sign_separability,
                "column_clustering": self.column_clustering}


def principal_components(E, k=2):  # (components (k,D), explained variance fraction (k,))
    centered = E - E.mean(axis=0)
    _, s, Vt = np.linalg.svd(centered, full_matrices=False)
    var = s ** 2
    return Vt[:k], var[:k] / var.sum() if var.sum() > 0 else np.zeros(k)


def sign_separability(points, values):  # accuracy of a least-squares linear classifier for sign(value)
    keep = values != 0
    X = np.column_stack([points[keep], np.ones(keep.sum())])
    y = np.sign(values[keep])
    w = np.linalg.lstsq(X, y, rcond=None)[0]
    return float((np.sign(X @ w) == y).mean())


def norm_asymmetry(values, norms):
    lookup = dict(zip(np.round(values, TOKENIZER.decimals), norms))
    ratios = [abs(lookup[v] - lookup[-v]) / lookup[v] for v in lookup if v > 0 and -v in lookup and lookup[v] > 0]
    return float(np.mean(ratios)) if ratios else 0.0


def column_clustering(positions, n):  # mean intra-column cosine minus mean inter-column cosine
    P = positions / np.maximum(np.linalg.norm(positions, axis=1, keepdims=True), 1e-12)
    cos = P @ P.T
    cols = np.arange(n * n) % n
    same = cols[:, None] == cols[None, :]
    off = ~np.eye(n * n, dtype=bool)
    intra, inter = same & off, ~same
    if not intra.any() or not inter.any():
        return 0.0
    return float(cos[intra].mean() - cos[inter].mean())


def embedding_report(encoder, step=None, reference=None, grid=EMBED_GRID):
    """Token norms, PCA and positional clustering; `reference` components replace this model's own PCs."""
    values, ids = TOKENIZER.grid(*grid)
    E = encoder.weights["embeddings.token"][ids].astype(np.float64)
    norms = np.linalg.norm(E, axis=1)
    components, explained = principal_components(E)
    if reference is not None:
        components = reference
        centered = E - E.mean(axis=0)
        total = (centered ** 2).sum()
        explained = ((centered @ components.T) ** 2).sum(axis=0) / total if total > 0 else np.zeros(2)
    projections = (E - E.mean(axis=0)) @ components.T
    return EmbeddingReport(
        step=step,
        values=values,
        norms=norms,
        norm_asymmetry=norm_asymmetry(values, norms),
        components=components,
        explained=explained,
        projections=projections,
        sign_separability=sign_separability(projections, values),
        column_clustering=column_clustering(encoder.weights["embeddings.position"].astype(np.float64),
                                            encoder.config.n),
    )


def embedding_evolution(checkpoints):  # reports along a checkpoint series, projected on the last one's PCs
    if not checkpoints:
        raise ConfigError("embedding evolution needs at least one checkpoint")
    checkpoints = sorted(checkpoints, key=lambda c: c.step)
    if any(c.config != checkpoints[0].config for c in checkpoints):
        raise ConfigError("embedding evolution needs checkpoints that share one config")
    final = embedding_report(checkpoints[-1].encoder, step=checkpoints[-1].step)
    reports = [embedding_report(c.encoder, step=c.step, reference=final.components) for c in checkpoints[:-1]]
    for report in reports:
        logger.info("step %s: sign separability on final PCs %.3f, column clustering %.3f", report.step,
                    report.sign_separability, report.column_clustering)
    return reports + [final]
