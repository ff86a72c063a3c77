import logging
from dataclasses import dataclass

import numpy as np

from config import HEAD_GROUPS
from core.data.Batch import BatchSampler, make_batch
from core.data.DataConfig import DataConfig
from core.data.Tokenizer import TOKENIZER
from core.data.seeding import rng_for
from core.errors import ConfigError, InterventionError
from core.model.Hooks import Hooks
from core.model.Losses import compute_losses, masked_mse

logger = logging.getLogger(__name__)

KINDS = ("none", "uniform_ablation", "activation_patch", "position_permutation", "token_replacement")


@dataclass
class InterventionSpec:
    kind: str = "none"
    heads: tuple = ()  # (layer, head) pairs, 0-indexed
    donor: object = None  # ForwardRecord of the donor input for activation_patch
    permutation: np.ndarray = None  # position_permutation: new[pi[i]] = old[i]
    value: float = None  # token_replacement: None means MASK

    def validate(self, config):
        if self.kind not in KINDS:
            raise InterventionError(f"unknown intervention '{self.kind}', expected one of {list(KINDS)}")
        for layer, head in self.heads:
            if not (0 <= layer < config.layers and 0 <= head < config.heads):
                raise InterventionError(f"head (layer {layer}, head {head}) outside a {config.layers}x{config.heads} model")
        if self.kind == "activation_patch" and self.donor is None:
            raise InterventionError("activation_patch needs a donor record")
        if self.kind == "position_permutation":
            check_permutation(self.permutation, config.seq_len)
        if self.kind == "token_replacement" and self.value is not None:
            TOKENIZER.token_ids(self.value)
        return self


@dataclass
class InterventionResult:
    X_hat: np.ndarray
    losses: object
    donor_losses: object = None  # losses against the donor ground truth (activation_patch)


def all_heads(config):
    return tuple((l, h) for l in range(config.layers) for h in range(config.heads))


def head_group(name_or_heads):  # named group (1-indexed entries) or explicit 0-indexed pairs
    if isinstance(name_or_heads, str):
        if name_or_heads not in HEAD_GROUPS:
            raise ConfigError(f"unknown head group '{name_or_heads}', expected one of {sorted(HEAD_GROUPS)}")
        return tuple((l - 1, h - 1) for l, h in HEAD_GROUPS[name_or_heads])
    return tuple((int(l), int(h)) for l, h in name_or_heads)


def check_permutation(permutation, size):
    perm = np.asarray(permutation)
    if perm.shape != (size,) or not np.array_equal(np.sort(perm), np.arange(size)):
        raise InterventionError(f"position permutation must be a bijection on 0..{size - 1}")
    return perm.astype(np.int64)


def permute_positions(encoder, permutation):  # new copy whose positional row pi[i] holds old row i
    perm = check_permutation(permutation, encoder.config.seq_len)
    out = encoder.copy()
    table = encoder.weights["embeddings.position"]
    permuted = np.empty_like(table)
    permuted[perm] = table
    out.weights["embeddings.position"] = permuted
    return out


def switch_weights(destination, source, components):  # copy of destination with components taken from source
    if destination.config != source.config:
        raise ConfigError(f"cannot switch weights between configs {destination.config} and {source.config}")
    hybrid = destination.copy()
    for component in components:
        for name in destination.component_params(component):
            hybrid.weights[name] = source.weights[name].copy()
    return hybrid


def replace_masked_tokens(tokens, M, value):  # masked positions carry token(value) instead of MASK
    if value is None:
        return tokens
    flat = np.asarray(M).reshape(tokens.shape) == 0
    return np.where(flat, TOKENIZER.token_ids(value), tokens)


def apply_intervention(encoder, batch, spec, donor_X=None):
    cfg = encoder.config
    spec.validate(cfg)
    hooks = Hooks()
    model = encoder
    tokens = batch.tokens
    if spec.kind == "uniform_ablation":
        hooks.attention = {key: 1.0 / cfg.seq_len for key in spec.heads}
    elif spec.kind == "activation_patch":
        context = spec.donor.context
        if context.shape[1] != batch.size or context.shape[0] != cfg.layers or context.shape[2] != cfg.heads:
            raise InterventionError(f"donor record shape {context.shape} does not match a batch of {batch.size} "
                                    f"for a {cfg.layers}x{cfg.heads} model")
        hooks.context = {(l, h): context[l][:, h] for l, h in spec.heads}
    elif spec.kind == "position_permutation":
        model = permute_positions(encoder, spec.permutation)
    elif spec.kind == "token_replacement":
        tokens = replace_masked_tokens(tokens, batch.M, spec.value)
    X_hat, _ = model.predict(tokens, hooks=hooks)
    donor_losses = compute_losses(donor_X, X_hat, batch.M) if donor_X is not None else None
    return InterventionResult(X_hat, compute_losses(batch.X, X_hat, batch.M), donor_losses)


def ablation_effect(encoder, batch, heads):  # losses with and without uniform ablation of a head set
    base = apply_intervention(encoder, batch, InterventionSpec()).losses
    ablated = apply_intervention(encoder, batch, InterventionSpec("uniform_ablation", heads=tuple(heads))).losses
    return {"without": base, "with": ablated, "ratio_L": ablated.L / base.L if base.L else float("inf")}


def negation_patch(encoder, batch):  # feed -X while patching every head's context from X
    _, donor = encoder.predict(batch.tokens, record=True)
    spec = InterventionSpec("activation_patch", heads=all_heads(encoder.config), donor=donor)
    target = make_batch(-batch.X, batch.M)
    result = apply_intervention(encoder, target, spec, donor_X=batch.X)
    return {"mse_to_donor": masked_mse(result.X_hat, batch.X, batch.M),
            "mse_to_input": masked_mse(result.X_hat, -batch.X, batch.M)}


def random_permutation(size, seed):
    return rng_for(seed, "permutation").permutation(size)


@dataclass
class TokenInterventionResult:
    L_obs: float
    L_mask_prime: float  # masked-position MSE against the injected value (0 for MASK)
    mean_abs_masked: float


def token_intervention(encoder, value, family, data_config, samples, seed=0):
    """Evaluate with masked positions carrying token(value), or MASK when value is None."""
    if family not in ("low-rank", "random"):
        raise ConfigError(f"unknown input family '{family}', expected 'low-rank' or 'random'")
    data_config = DataConfig(**{**data_config.to_dict(), "n": encoder.config.n}).validate()
    batch = BatchSampler(data_config, seed, samples).evaluation(seed, samples, family=family)
    result = apply_intervention(encoder, batch, InterventionSpec("token_replacement", value=value))
    reference = 0.0 if value is None else TOKENIZER.round(value)
    masked = np.asarray(batch.M) == 0
    return TokenInterventionResult(
        L_obs=result.losses.L_obs,
        L_mask_prime=masked_mse(result.X_hat, np.full_like(result.X_hat, reference), batch.M),
        mean_abs_masked=float(np.abs(result.X_hat[masked]).mean()) if masked.any() else None,
    )
