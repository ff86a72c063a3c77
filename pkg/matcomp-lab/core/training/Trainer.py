import csv
import logging
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np
from tqdm import tqdm

from config import CHECKPOINT_DIR, METRICS_FILE, METRICS_HEADER
from core.autograd.Adam import Adam, AdamState
from core.autograd.Tensor import Tensor, get_dtype, precision
from core.data.Batch import BatchSampler
from core.errors import ConfigError, NonFiniteError, TrainingHalted
from core.manifest import write_manifest
from core.model.Checkpoint import load_checkpoint, save_checkpoint
from core.model.Encoder import Encoder
from core.model.Losses import compute_losses
from core.training.MetricSeries import MetricSeries
from core.threads.BatchThread import batch_source

logger = logging.getLogger(__name__)


@dataclass
class TrainResult:
    final_checkpoint: str
    series: MetricSeries
    checkpoints: dict = field(default_factory=dict)  # step -> checkpoint directory


def trainable_names(encoder, components):
    names = []
    for component in components:
        names += [n for n in encoder.component_params(component) if n not in names]
    return names


class Trainer:  # online training: a fresh batch every step, one Adam update on the trainable components
    def __init__(self, config, out_dir, encoder=None, adam=None, start_step=0):
        self.config = config.validate()
        self.out_dir = out_dir
        self.encoder = encoder
        self.adam = adam
        self.start_step = start_step
        self.checkpoints = {}
        self.series = MetricSeries(seed=config.seed)

    def checkpoint_path(self, step):
        name = step if isinstance(step, str) else f"step_{step:06d}"
        return os.path.join(self.out_dir, CHECKPOINT_DIR, name)

    def _prepare(self):
        cfg = self.config
        if cfg.resume:
            ckpt = load_checkpoint(cfg.resume, expected_config=cfg.model)
            self.encoder, self.adam, self.start_step = ckpt.encoder, ckpt.adam, ckpt.step
            logger.info("resuming from %s at step %d", cfg.resume, self.start_step)
        if self.encoder is None:
            self.encoder = Encoder.init(cfg.model, cfg.seed)
        dtype = get_dtype()
        self.encoder.weights = {k: np.asarray(v, dtype=dtype).copy() for k, v in self.encoder.weights.items()}
        if self.adam is None:
            self.adam = AdamState(lr=cfg.lr)
        self.adam.m = {k: np.asarray(v, dtype=dtype) for k, v in self.adam.m.items()}
        self.adam.v = {k: np.asarray(v, dtype=dtype) for k, v in self.adam.v.items()}
        self.trainable = trainable_names(self.encoder, cfg.components)

    def _open_metrics(self):  # keep rows up to the start step when resuming
        path = os.path.join(self.out_dir, METRICS_FILE)
        if self.start_step and os.path.isfile(path):
            self.series.rows = MetricSeries.read_csv(path).until(self.start_step).rows
        f = open(path, "w", newline="")
        writer = csv.writer(f)
        writer.writerow(METRICS_HEADER)
        for row in self.series.rows:
            writer.writerow(MetricSeries.format_row(row))
        return f, writer

    def save(self, step, name=None):
        path = self.checkpoint_path(name or step)
        save_checkpoint(path, self.encoder, self.adam, step, self.config.to_dict())
        self.checkpoints[name or step] = path
        return path

    def step(self, batch):  # one optimization step; returns the pooled losses of the batch
        params = self.encoder.tensors(self.trainable)
        X_hat, _ = self.encoder.forward(batch.tokens, params=params)
        diff = X_hat - Tensor(batch.X)
        loss = (diff * diff).mean()
        loss.backward()
        grads = {name: params[name].grad for name in self.trainable if params[name].grad is not None}
        Adam(self.adam).step(self.encoder.weights, grads)
        return compute_losses(batch.X, X_hat.data, batch.M)

    def run(self):
        cfg = self.config
        os.makedirs(self.out_dir, exist_ok=True)
        with precision(cfg.precision):
            self._prepare()
            sampler = BatchSampler(cfg.data, cfg.seed, cfg.batch_size)
            source = batch_source(sampler, self.start_step + 1, cfg.steps, cfg.prefetch)
            metrics_file, writer = self._open_metrics()
            started = time.time()
            last_good = None
            source.start()
            try:
                progress = tqdm(range(self.start_step + 1, cfg.steps + 1), desc="train", disable=cfg.quiet)
                for _ in progress:
                    step, batch = source.next()
                    try:
                        losses = self.step(batch)
                    except NonFiniteError as e:
                        metrics_file.flush()
                        last_good = self.save(step - 1, "last_good")
                        raise TrainingHalted(f"non-finite values ({e})", step, last_good) from e
                    row = self.series.append(step, losses)
                    writer.writerow(MetricSeries.format_row(row))
                    if cfg.log_every and step % cfg.log_every == 0:
                        logger.info("step %d: L=%.4g L_obs=%s L_mask=%s", step, losses.L, row["L_obs"], row["L_mask"])
                        progress.set_postfix(L=f"{losses.L:.3g}")
                    if cfg.checkpoint_due(step):
                        metrics_file.flush()
                        self.save(step)
            finally:
                source.stop()
                metrics_file.close()
            self.series.wall_clock = time.time() - started
            final = self.save(cfg.steps, "final")
        write_manifest(self.out_dir, command="train", config=cfg.to_dict(), seed=cfg.seed,
                       checkpoints={str(k): v for k, v in self.checkpoints.items()},
                       wall_clock=self.series.wall_clock)
        logger.info("training finished after %d steps in %.1fs", cfg.steps, self.series.wall_clock)
        return TrainResult(final, self.series, dict(self.checkpoints))


def train(config, out_dir):
    return Trainer(config, out_dir).run()


def component_retrain(checkpoint, components, config, out_dir):  # re-initialize components, freeze the rest
    components = tuple(components)
    if not components:
        raise ConfigError("component_retrain needs at least one component to train")
    config = replace(config, model=checkpoint.config, components=components, resume=None)
    config.validate()
    with precision(config.precision):
        fresh = Encoder.init(checkpoint.config, config.seed)
    hybrid = checkpoint.encoder.copy()
    for name in trainable_names(hybrid, components):
        hybrid.weights[name] = fresh.weights[name].copy()
    logger.info("retraining %s from %s", ", ".join(components), checkpoint.path)
    return Trainer(config, out_dir, encoder=hybrid).run()
