import csv

import numpy as np
import pytest

from config import RETRAIN_COMPONENTS
from core.data.Batch import BatchSampler
from core.data.Mask import Mask
from core.errors import ConfigError, InterventionError, TokenizerError
from core.interp.AttentionSummary import (AttentionSummary, classify_heads, export_attention, heads_with_label,
                                          load_attention, position_relations, record_attention)
from core.interp.Interventions import (InterventionSpec, ablation_effect, all_heads, apply_intervention,
                                       check_permutation, head_group, negation_patch, permute_positions,
                                       random_permutation, switch_weights, token_intervention)
from core.model.Encoder import Encoder


@pytest.fixture
def batch(tiny_data):
    return BatchSampler(tiny_data, seed=3, batch_size=6).batch(1)


def synthetic_summary(n=3):  # four heads: row, column, identity and uniform
    same_row, same_col, diag = position_relations(n)
    S = n * n
    maps = np.stack([
        same_row / same_row.sum(axis=1, keepdims=True),
        same_col / same_col.sum(axis=1, keepdims=True),
        diag.astype(float),
        np.full((S, S), 1.0 / S),
    ])[None]
    return AttentionSummary(maps=maps, samples=1, n=n, mask={"mode": "random"}, masked_mass=np.zeros((1, 4)))


class TestAttentionSummary:
    def test_classify_synthetic_heads(self):
        labels = classify_heads(synthetic_summary())
        assert [h.label for h in labels] == ["row", "column", "identity", "other"]
        assert labels[0].masses["row"] == pytest.approx(1.0)
        assert labels[3].margins["identity"] == pytest.approx(1.0)
        assert heads_with_label(labels, "column") == [(0, 1)]

    def test_single_sample_matches_forward(self, encoder, tiny_data):
        summary = record_attention(encoder, tiny_data, samples=1, seed=0)
        batch = BatchSampler(tiny_data, 0, 64).evaluation(0, 1)
        _, record = encoder.predict(batch.tokens, record=True)
        np.testing.assert_allclose(summary.maps, record.attention[:, 0], atol=1e-12)

    def test_maps_are_row_stochastic(self, encoder, tiny_data):
        summary = record_attention(encoder, tiny_data, samples=10, seed=1, batch_size=4)
        np.testing.assert_allclose(summary.maps.sum(axis=-1), 1.0, atol=1e-10)
        assert ((summary.masked_mass >= 0) & (summary.masked_mass <= 1)).all()

    def test_structured_mask(self, encoder, tiny_data):
        mask = Mask.preset("two-rows", 3)
        summary = record_attention(encoder, tiny_data, samples=4, mask=mask)
        assert summary.mask["mode"] == "structured"
        assert summary.mask["M"] == mask.M.ravel().tolist()

    def test_export_and_load(self, tmp_path, encoder, tiny_data):
        summary = record_attention(encoder, tiny_data, samples=3)
        export_attention(summary, str(tmp_path))
        manifest, maps = load_attention(str(tmp_path))
        assert manifest["samples"] == 3
        np.testing.assert_allclose(maps, summary.maps, rtol=1e-6, atol=1e-7)
        with open(tmp_path / "head_stats.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 4
        assert (rows[0]["layer"], rows[0]["head"]) == ("1", "1")
        assert (rows[-1]["layer"], rows[-1]["head"]) == ("2", "2")


class TestInterventions:
    def test_no_intervention(self, encoder, batch):
        result = apply_intervention(encoder, batch, InterventionSpec())
        np.testing.assert_array_equal(result.X_hat, encoder.predict(batch.tokens)[0])

    def test_empty_ablation_is_identity(self, encoder, batch):
        effect = ablation_effect(encoder, batch, ())
        assert effect["with"].L == effect["without"].L
        assert effect["ratio_L"] == 1.0

    def test_ablation_changes_output(self, encoder, batch):
        spec = InterventionSpec("uniform_ablation", heads=all_heads(encoder.config))
        plain = encoder.predict(batch.tokens)[0]
        assert not np.array_equal(apply_intervention(encoder, batch, spec).X_hat, plain)

    def test_self_patch_is_identity(self, encoder, batch):
        X_hat, donor = encoder.predict(batch.tokens, record=True)
        spec = InterventionSpec("activation_patch", heads=all_heads(encoder.config), donor=donor)
        np.testing.assert_array_equal(apply_intervention(encoder, batch, spec).X_hat, X_hat)

    def test_patch_needs_matching_donor(self, encoder, batch):
        _, donor = encoder.predict(batch.tokens[:2], record=True)
        spec = InterventionSpec("activation_patch", heads=((0, 0),), donor=donor)
        with pytest.raises(InterventionError):
            apply_intervention(encoder, batch, spec)

    def test_patch_needs_donor(self, encoder, batch):
        with pytest.raises(InterventionError):
            apply_intervention(encoder, batch, InterventionSpec("activation_patch", heads=((0, 0),)))

    def test_unknown_kind(self, encoder, batch):
        with pytest.raises(InterventionError):
            apply_intervention(encoder, batch, InterventionSpec("dropout"))

    def test_negation_patch(self, encoder, batch):
        result = negation_patch(encoder, batch)
        assert set(result) == {"mse_to_donor", "mse_to_input"}
        assert all(v >= 0 for v in result.values())

    def test_switch_is_an_involution(self, tiny_config, double):
        a, b = Encoder.init(tiny_config, 1), Encoder.init(tiny_config, 2)
        back = switch_weights(switch_weights(a, b, ["attention"]), a, ["attention"])
        for name in a.weights:
            np.testing.assert_array_equal(back.weights[name], a.weights[name])

    def test_switch_everything(self, tiny_config, double):
        a, b = Encoder.init(tiny_config, 1), Encoder.init(tiny_config, 2)
        hybrid = switch_weights(a, b, RETRAIN_COMPONENTS)
        for name in b.weights:
            np.testing.assert_array_equal(hybrid.weights[name], b.weights[name])

    def test_switch_config_mismatch(self, encoder, train_config):
        other = Encoder.init(train_config.model, 0)
        with pytest.raises(ConfigError):
            switch_weights(encoder, other, ["mlp"])

    def test_permutation_checks(self):
        assert check_permutation([2, 0, 1], 3).tolist() == [2, 0, 1]
        with pytest.raises(InterventionError):
            check_permutation([0, 0, 1], 3)
        with pytest.raises(InterventionError):
            check_permutation([0, 1], 3)

    def test_permute_positions(self, encoder):
        perm = random_permutation(9, seed=4)
        permuted = permute_positions(encoder, perm)
        table = encoder.weights["embeddings.position"]
        np.testing.assert_array_equal(permuted.weights["embeddings.position"][perm], table)
        restored = permute_positions(permuted, np.argsort(perm))
        np.testing.assert_array_equal(restored.weights["embeddings.position"], table)
        np.testing.assert_array_equal(random_permutation(9, seed=4), perm)

    def test_position_permutation_intervention(self, encoder, batch):
        spec = InterventionSpec("position_permutation", permutation=np.arange(9))
        np.testing.assert_array_equal(apply_intervention(encoder, batch, spec).X_hat, encoder.predict(batch.tokens)[0])

    def test_head_group(self):
        assert head_group("row") == ((1, 0), (2, 3), (3, 7))
        assert head_group([(0, 1)]) == ((0, 1),)
        with pytest.raises(ConfigError):
            head_group("query")


class TestTokenIntervention:
    def test_mask_value_scores_against_zero(self, encoder, tiny_data):
        result = token_intervention(encoder, None, "low-rank", tiny_data, samples=8)
        assert result.L_mask_prime >= 0
        assert result.mean_abs_masked <= np.sqrt(result.L_mask_prime) + 1e-12

    def test_injected_value(self, encoder, tiny_data):
        masked = token_intervention(encoder, None, "random", tiny_data, samples=8)
        injected = token_intervention(encoder, 0.44, "random", tiny_data, samples=8)
        assert injected.L_obs != masked.L_obs

    def test_value_off_the_grid(self, encoder, tiny_data):
        with pytest.raises(TokenizerError):
            token_intervention(encoder, 25.0, "low-rank", tiny_data, samples=4)

    def test_unknown_family(self, encoder, tiny_data):
        with pytest.raises(ConfigError):
            token_intervention(encoder, None, "sparse", tiny_data, samples=4)
