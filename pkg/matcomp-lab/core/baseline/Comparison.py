import csv
import logging

import numpy as np
from tqdm import tqdm

from config import LAMBDA_GRID, P_MASK_GRID
from core.baseline.NucNorm import NucNormProblem, nuclear_norm, solve
from core.data.Batch import BatchSampler
from core.data.DataConfig import DataConfig
from core.data.seeding import rng_for
from core.errors import ConfigError
from core.model.Losses import compute_losses

logger = logging.getLogger(__name__)

COMPARISON_HEADER = ("p_mask", "method", "L", "L_obs", "L_mask", "nuclear_norm")
SWEEP_HEADER = ("lambda", "L_obs", "L_mask", "L")


def _mean(values):  # mean over instances, ignoring absent losses
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def summarize(X, X_hat, M):  # per-instance losses and nuclear norms averaged over the batch
    per = [compute_losses(X[b], X_hat[b], M[b]) for b in range(X.shape[0])]
    return {
        "L": _mean([l.L for l in per]),
        "L_obs": _mean([l.L_obs for l in per]),
        "L_mask": _mean([l.L_mask for l in per]),
        "nuclear_norm": float(np.mean([nuclear_norm(x) for x in X_hat])),
    }


def solve_batch(batch, mode="constrained", lam=None, quiet=True):
    out = np.empty_like(batch.X, dtype=np.float64)
    for b in tqdm(range(batch.size), desc=f"nucnorm ({mode})", disable=quiet, leave=False):
        out[b] = solve(NucNormProblem(batch.X[b], batch.M[b], mode=mode, lam=lam)).U
    return out


def instances(n, r, p_mask, samples, seed, dist="uniform", key=0):  # shared instances for every method
    sampler = BatchSampler(DataConfig(n=n, r=r, dist=dist, p_mask=p_mask).validate(), seed, samples)
    return sampler.sample(rng_for(seed, "baseline", key, int(round(p_mask * 1000)), r), samples)


def compare_bert_vs_nucnorm(checkpoint, p_masks=P_MASK_GRID, samples=256, seed=0, r=None, ranks=None,
                            dist="uniform", lam=None, quiet=True):  # rows of the comparison report
    encoder = checkpoint.encoder
    n = encoder.config.n
    if r is None:
        r = (checkpoint.train_config or {}).get("r", 2)
    rows = []
    for rank in (ranks or [r]):
        if not 1 <= rank <= n:
            raise ConfigError(f"rank {rank} outside [1, {n}]")
        for p_mask in p_masks:
            batch = instances(n, rank, p_mask, samples, seed, dist)
            bert = summarize(batch.X, encoder.predict(batch.tokens)[0], batch.M)
            mode = "constrained" if lam is None else "regularized"
            base = summarize(batch.X, solve_batch(batch, mode, lam, quiet), batch.M)
            for method, stats in (("bert", bert), ("nucnorm", base)):
                rows.append({"rank": rank, "p_mask": p_mask, "method": method, **stats})
            logger.info("rank %d p_mask %.2f: bert L=%.4g |X|*=%.3f, nucnorm L=%.4g |X|*=%.3f", rank, p_mask,
                        bert["L"], bert["nuclear_norm"], base["L"], base["nuclear_norm"])
    return rows


def lambda_sweep(n=7, r=2, p_mask=0.3, lambdas=LAMBDA_GRID, samples=256, seed=0, quiet=True):
    batch = instances(n, r, p_mask, samples, seed)
    rows = []
    for lam in lambdas:
        stats = summarize(batch.X, solve_batch(batch, "regularized", lam, quiet), batch.M)
        rows.append({"lambda": lam, "L_obs": stats["L_obs"], "L_mask": stats["L_mask"], "L": stats["L"],
                     "nuclear_norm": stats["nuclear_norm"]})
        logger.info("lambda %g: L_obs=%.4g L_mask=%.4g L=%.4g", lam, stats["L_obs"], stats["L_mask"], stats["L"])
    return rows


def write_rows(path, rows, header):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if row[k] is None else row[k] for k in header])
    return path
