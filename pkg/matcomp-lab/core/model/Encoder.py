import logging

import numpy as np

from config import COMPONENTS
from core.autograd.Tensor import Tensor, gather, get_dtype, layer_norm
from core.data.seeding import rng_for
from core.errors import ConfigError, ShapeError, TokenizerError
from core.model.ForwardRecord import ForwardRecord
from core.model.Hooks import Hooks

logger = logging.getLogger(__name__)


def parameter_shapes(config):  # ordered name -> shape of every weight tensor
    D, F = config.hidden, config.mlp_hidden
    shapes = {
        "embeddings.token": (config.vocab_size, D),
        "embeddings.position": (config.seq_len, D),
        "embeddings.ln.gamma": (D,),
        "embeddings.ln.beta": (D,),
    }
    for i in range(config.layers):
        p = f"layers.{i}"
        for proj in ("q", "k", "v", "o"):
            shapes[f"{p}.attn.{proj}.weight"] = (D, D)
            shapes[f"{p}.attn.{proj}.bias"] = (D,)
        shapes[f"{p}.attn.ln.gamma"] = (D,)
        shapes[f"{p}.attn.ln.beta"] = (D,)
        shapes[f"{p}.mlp.fc1.weight"] = (D, F)
        shapes[f"{p}.mlp.fc1.bias"] = (F,)
        shapes[f"{p}.mlp.fc2.weight"] = (F, D)
        shapes[f"{p}.mlp.fc2.bias"] = (D,)
        shapes[f"{p}.mlp.ln.gamma"] = (D,)
        shapes[f"{p}.mlp.ln.beta"] = (D,)
    shapes["head.weight"] = (D, 1)
    shapes["head.bias"] = (1,)
    return shapes


def component_params(config, component):  # names of the weights making up one switchable component
    if component not in COMPONENTS:
        raise ConfigError(f"unknown component '{component}', expected one of {list(COMPONENTS)}")
    names = parameter_shapes(config)
    if component == "token_embeddings":
        return [k for k in names if k.startswith("embeddings.") and k != "embeddings.position"]
    if component == "positional_embeddings":
        return ["embeddings.position"]
    if component == "head":
        return ["head.weight", "head.bias"]
    if component == "mlp":
        return [k for k in names if ".mlp." in k]
    if component == "attention_qkv":
        return [k for k in names if any(f".attn.{p}." in k for p in "qkv")]
    return [k for k in names if ".attn." in k]


class Encoder:  # post-layernorm BERT encoder with a per-position scalar regression head
    def __init__(self, config, weights):
        self.config = config
        self.weights = weights

    @classmethod
    def init(cls, config, seed):
        config.validate()
        rng = rng_for(seed, "init")
        dtype = get_dtype()
        weights = {}
        for name, shape in parameter_shapes(config).items():
            if name.endswith(".gamma"):
                weights[name] = np.ones(shape, dtype=dtype)
            elif name.endswith(".bias") or name.endswith(".beta"):
                weights[name] = np.zeros(shape, dtype=dtype)
            else:
                weights[name] = rng.normal(0.0, config.init_std, size=shape).astype(dtype)
        return cls(config, weights)

    def copy(self):
        return Encoder(self.config, {k: v.copy() for k, v in self.weights.items()})

    def component_params(self, component):
        return component_params(self.config, component)

    def check_weights(self):
        expected = parameter_shapes(self.config)
        if set(expected) != set(self.weights):
            missing = sorted(set(expected) - set(self.weights))
            extra = sorted(set(self.weights) - set(expected))
            raise ShapeError(f"weights (missing {missing}, unexpected {extra})", ())
        for name, shape in expected.items():
            if self.weights[name].shape != shape:
                raise ShapeError(f"weights[{name}]", self.weights[name].shape, shape)

    def check_tokens(self, tokens):
        tokens = np.asarray(tokens)
        if tokens.ndim == 1:
            tokens = tokens[None]
        if tokens.ndim != 2 or tokens.shape[1] != self.config.seq_len:
            raise ShapeError("forward tokens", tokens.shape, (None, self.config.seq_len))
        if not np.issubdtype(tokens.dtype, np.integer):
            raise TokenizerError(f"token ids must be integers, got dtype {tokens.dtype}")
        bad = (tokens < 0) | (tokens >= self.config.vocab_size)
        if bad.any():
            raise TokenizerError(f"unknown token id {int(tokens[bad][0])} (vocabulary size {self.config.vocab_size})")
        return tokens

    def tensors(self, trainable=()):  # wrap weights as leaves; trainable ones record gradients
        trainable = set(trainable)
        return {name: Tensor(w, requires_grad=name in trainable) for name, w in self.weights.items()}

    def forward(self, tokens, hooks=None, record=False, params=None):  # (X_hat Tensor (B,n,n), ForwardRecord or None)
        cfg = self.config
        tokens = self.check_tokens(tokens)
        hooks = hooks or Hooks()
        hooks.check(cfg)
        params = params if params is not None else self.tensors()
        B, S, H, dh = tokens.shape[0], cfg.seq_len, cfg.heads, cfg.head_dim
        scale = 1.0 / np.sqrt(dh)
        rec = {"attention": [], "context": [], "after_attention": [], "after_mlp": []}

        x = gather(params["embeddings.token"], tokens) + params["embeddings.position"]
        x = layer_norm(x, params["embeddings.ln.gamma"], params["embeddings.ln.beta"], cfg.layer_norm_eps)
        embeddings = x.data.copy() if record else None

        for i in range(cfg.layers):
            p = f"layers.{i}"

            def split(t):  # (B,S,D) -> (B,H,S,dh)
                return t.reshape(B, S, H, dh).transpose(0, 2, 1, 3)

            q = split(x @ params[f"{p}.attn.q.weight"] + params[f"{p}.attn.q.bias"])
            k = split(x @ params[f"{p}.attn.k.weight"] + params[f"{p}.attn.k.bias"])
            v = split(x @ params[f"{p}.attn.v.weight"] + params[f"{p}.attn.v.bias"])
            probs = ((q @ k.transpose(0, 1, 3, 2)) * scale).softmax(axis=-1)
            probs = self._replace_heads(probs, hooks.attention, i, (B, H, S, S))
            context = self._replace_heads(probs @ v, hooks.context, i, (B, H, S, dh))
            merged = context.transpose(0, 2, 1, 3).reshape(B, S, cfg.hidden)
            attn_out = merged @ params[f"{p}.attn.o.weight"] + params[f"{p}.attn.o.bias"]
            x = layer_norm(x + attn_out, params[f"{p}.attn.ln.gamma"], params[f"{p}.attn.ln.beta"], cfg.layer_norm_eps)
            if record:
                rec["attention"].append(probs.data.copy())
                rec["context"].append(context.data.copy())
                rec["after_attention"].append(x.data.copy())

            h = (x @ params[f"{p}.mlp.fc1.weight"] + params[f"{p}.mlp.fc1.bias"]).gelu()
            h = h @ params[f"{p}.mlp.fc2.weight"] + params[f"{p}.mlp.fc2.bias"]
            x = layer_norm(x + h, params[f"{p}.mlp.ln.gamma"], params[f"{p}.mlp.ln.beta"], cfg.layer_norm_eps)
            if record:
                rec["after_mlp"].append(x.data.copy())

        out = (x @ params["head.weight"] + params["head.bias"]).reshape(B, cfg.n, cfg.n)
        if not record:
            return out, None
        return out, ForwardRecord(embeddings=embeddings, **{k: np.stack(v) for k, v in rec.items()})

    @staticmethod
    def _replace_heads(t, replacements, layer, shape):  # t * (1 - sel) + replacement * sel, per head
        keys = [key for key in replacements if key[0] == layer]
        if not keys:
            return t
        B, H = shape[0], shape[1]
        sel = Hooks.selection(keys, layer, H).reshape(1, H, 1, 1)
        fill = np.zeros(shape)
        for _, head in keys:
            value = np.asarray(replacements[(layer, head)], dtype=np.float64)
            try:
                fill[:, head] = np.broadcast_to(value, (B,) + shape[2:])
            except ValueError:
                raise ShapeError(f"hook (layer {layer}, head {head})", value.shape, (B,) + shape[2:]) from None
        return t * Tensor(1.0 - sel) + Tensor(fill * sel)

    def predict(self, tokens, hooks=None, record=False):  # numpy X_hat, no gradient recording
        out, rec = self.forward(tokens, hooks=hooks, record=record)
        return out.data.astype(np.float64), rec
