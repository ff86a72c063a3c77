import csv
import json
import os
from dataclasses import replace

import numpy as np
import pytest

from config import METRICS_HEADER, RETRAIN_COMPONENTS
from core.errors import ConfigError, DataError, NonFiniteError, TrainingHalted
from core.model.Checkpoint import load_checkpoint
from core.model.Encoder import Encoder
from core.model.Losses import Losses
from core.training.MetricSeries import MetricSeries
from core.training.TrainConfig import TrainConfig
from core.training.Trainer import Trainer, component_retrain, train


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def assert_same_weights(a, b):
    assert set(a.weights) == set(b.weights)
    for name in a.weights:
        np.testing.assert_array_equal(a.weights[name], b.weights[name], err_msg=name)


class TestTrainConfig:
    def test_flat_round_trip(self, train_config):
        assert TrainConfig.from_dict(train_config.to_dict()) == train_config

    def test_unknown_key(self, train_config):
        with pytest.raises(ConfigError, match="warmup"):
            TrainConfig.from_dict({**train_config.to_dict(), "warmup": 10})

    def test_mismatched_n(self, train_config):
        with pytest.raises(ConfigError):
            replace(train_config, data=replace(train_config.data, n=4)).validate()

    def test_checkpoint_due(self, train_config):
        cfg = replace(train_config, checkpoint_every=0, checkpoint_steps=(3,))
        assert cfg.checkpoint_due(3)
        assert not cfg.checkpoint_due(2)
        assert replace(train_config, checkpoint_every=2).checkpoint_due(4)


class TestTrain:
    def test_single_step(self, tmp_path, train_config):
        train(replace(train_config, steps=1), str(tmp_path))
        rows = read_rows(tmp_path / "metrics.csv")
        assert tuple(rows[0]) == METRICS_HEADER
        assert len(rows) == 2
        assert rows[1][0] == "1"
        assert all(float(cell) >= 0 for cell in rows[1][1:])

    def test_outputs(self, tmp_path, train_config):
        result = train(train_config, str(tmp_path))
        assert [r["step"] for r in result.series.rows] == [1, 2, 3, 4]
        assert os.path.isdir(tmp_path / "checkpoints" / "step_000002")
        assert os.path.isdir(tmp_path / "checkpoints" / "step_000004")
        assert load_checkpoint(result.final_checkpoint).step == 4
        with open(tmp_path / "manifest.json") as f:
            manifest = json.load(f)
        assert manifest["command"] == "train"
        assert manifest["config"]["batch_size"] == 4
        assert "numpy" in manifest["environment"]

    def test_reproducible(self, tmp_path, train_config):
        a = train(train_config, str(tmp_path / "a"))
        b = train(train_config, str(tmp_path / "b"))
        assert a.series.rows == b.series.rows
        assert_same_weights(load_checkpoint(a.final_checkpoint).encoder, load_checkpoint(b.final_checkpoint).encoder)

    def test_inline_batches_match_prefetch(self, tmp_path, train_config):
        a = train(train_config, str(tmp_path / "a"))
        b = train(replace(train_config, prefetch=0), str(tmp_path / "b"))
        assert a.series.rows == b.series.rows

    def test_resume_matches_uninterrupted(self, tmp_path, train_config):
        straight = train(train_config, str(tmp_path / "straight"))
        out = str(tmp_path / "split")
        first = train(replace(train_config, steps=2), out)
        resumed = train(replace(train_config, resume=first.checkpoints[2]), out)
        assert resumed.series.rows == straight.series.rows
        assert len(read_rows(os.path.join(out, "metrics.csv"))) == 5
        assert_same_weights(load_checkpoint(resumed.final_checkpoint).encoder,
                            load_checkpoint(straight.final_checkpoint).encoder)

    def test_halts_on_non_finite(self, tmp_path, train_config, monkeypatch):
        original = Trainer.step

        def flaky(self, batch):
            if len(self.series) == 2:
                raise NonFiniteError("loss")
            return original(self, batch)

        monkeypatch.setattr(Trainer, "step", flaky)
        with pytest.raises(TrainingHalted) as info:
            train(train_config, str(tmp_path))
        assert info.value.step == 3
        assert load_checkpoint(info.value.checkpoint).step == 2
        assert len(read_rows(tmp_path / "metrics.csv")) == 3


class TestComponentRetrain:
    def test_frozen_weights_unchanged(self, tmp_path, checkpoint, train_config):
        result = component_retrain(checkpoint, ["head"], train_config, str(tmp_path))
        retrained = load_checkpoint(result.final_checkpoint).encoder
        for name, w in checkpoint.encoder.weights.items():
            if name.startswith("head."):
                assert not np.array_equal(retrained.weights[name], w)
            else:
                np.testing.assert_array_equal(retrained.weights[name], w, err_msg=name)

    def test_every_component_equals_fresh_training(self, tmp_path, checkpoint, train_config):
        retrained = component_retrain(checkpoint, RETRAIN_COMPONENTS, train_config, str(tmp_path / "r"))
        fresh = train(replace(train_config, model=checkpoint.config), str(tmp_path / "f"))
        assert retrained.series.rows == fresh.series.rows

    def test_reinitialized_from_seed(self, tmp_path, double, checkpoint, train_config):
        cfg = replace(train_config, steps=1, checkpoint_every=0, seed=5)
        trainer_init = Encoder.init(checkpoint.config, cfg.seed)
        result = component_retrain(checkpoint, ["positional_embeddings"], cfg, str(tmp_path))
        moved = load_checkpoint(result.final_checkpoint).encoder.weights["embeddings.position"]
        assert np.abs(moved - trainer_init.weights["embeddings.position"]).max() <= 2 * cfg.lr

    def test_empty_components(self, tmp_path, checkpoint, train_config):
        with pytest.raises(ConfigError):
            component_retrain(checkpoint, [], train_config, str(tmp_path))

    def test_unknown_component(self, tmp_path, checkpoint, train_config):
        with pytest.raises(ConfigError):
            component_retrain(checkpoint, ["decoder"], train_config, str(tmp_path))


class TestMetricSeries:
    def test_csv_keeps_missing_losses(self, tmp_path):
        series = MetricSeries()
        series.append(1, Losses(L=0.5, L_obs=0.5, L_mask=None))
        series.append(2, Losses(L=0.25, L_obs=0.125, L_mask=0.375))
        series.write_csv(str(tmp_path / "m.csv"))
        again = MetricSeries.read_csv(str(tmp_path / "m.csv"))
        assert again.rows == series.rows
        assert np.isnan(again.column("L_mask")[0])

    def test_steps_must_increase(self):
        series = MetricSeries()
        series.append(3, Losses(L=1.0))
        with pytest.raises(DataError):
            series.append(3, Losses(L=1.0))

    def test_wrong_header(self, tmp_path):
        (tmp_path / "m.csv").write_text("step,loss\n1,0.5\n")
        with pytest.raises(DataError):
            MetricSeries.read_csv(str(tmp_path / "m.csv"))
