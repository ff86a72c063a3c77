import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from config import PROBE_RIDGE, PROBE_TRAIN_FRACTION
from core.data.Batch import BatchSampler
from core.data.DataConfig import DataConfig
from core.data.seeding import rng_for
from core.errors import ConfigError, ProbeError

logger = logging.getLogger(__name__)

TARGETS = ("masked_row", "element", "singular_vector")


@dataclass
class ProbeResult:
    target: str
    layers: list
    train_mse: list = field(default_factory=list)
    test_mse: list = field(default_factory=list)
    cosine: list = field(default_factory=list)  # absolute cosine for the singular-vector target
    ridge: float = PROBE_RIDGE
    n_train: int = 0
    n_test: int = 0

    def best_layer(self):
        return self.layers[int(np.argmin(self.test_mse))]

    def to_dict(self):
        return asdict(self)


def ridge_fit(H, Y, lam):  # closed-form ridge with centering; returns (W, b)
    H = np.asarray(H, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    h_mean, y_mean = H.mean(axis=0), Y.mean(axis=0)
    Hc, Yc = H - h_mean, Y - y_mean
    A = Hc.T @ Hc + lam * np.eye(H.shape[1])
    if lam == 0 and np.linalg.matrix_rank(A) < A.shape[0]:
        raise ProbeError("normal equations are singular at ridge 0; use a ridge > 0")
    try:
        W = np.linalg.solve(A, Hc.T @ Yc)
    except np.linalg.LinAlgError:
        raise ProbeError("normal equations are singular; use a larger ridge") from None
    return W, y_mean - h_mean @ W


def cosine_rows(P, Y, absolute=False):  # mean cosine similarity between matching rows
    num = (P * Y).sum(axis=-1)
    den = np.linalg.norm(P, axis=-1) * np.linalg.norm(Y, axis=-1)
    cos = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return float(np.mean(np.abs(cos) if absolute else cos))


def probe_targets(batch, target):  # (B,S,k) targets and (B,S) selection of positions that are probed
    B, n = batch.size, batch.n
    S = n * n
    if target == "masked_row":
        Xt = np.where(batch.M != 0, batch.X, 0.0)
        Y = np.repeat(Xt, n, axis=1)  # position (i, j) -> row i
        return Y, np.ones((B, S), dtype=bool)
    if target == "element":
        return batch.X.reshape(B, S, 1), batch.M.reshape(B, S) == 0
    if target == "singular_vector":
        u = np.linalg.svd(batch.X)[0][:, :, 0]  # (B,n)
        return np.repeat(u[:, None, :], S, axis=1), np.ones((B, S), dtype=bool)
    raise ConfigError(f"unknown probe target '{target}', expected one of {list(TARGETS)}")


def fit_probe(encoder, data_config, target="masked_row", layers=None, ridge=PROBE_RIDGE, samples=512,
              train_fraction=PROBE_TRAIN_FRACTION, seed=0, shuffle_targets=False):
    """Ridge probes from each layer's hidden states to a property of the input, split by matrix."""
    if target not in TARGETS:
        raise ConfigError(f"unknown probe target '{target}', expected one of {list(TARGETS)}")
    n_train = int(round(samples * train_fraction))
    if n_train < 1 or n_train >= samples:
        raise ProbeError(f"{samples} samples cannot be split with train fraction {train_fraction}")
    data_config = DataConfig(**{**data_config.to_dict(), "n": encoder.config.n}).validate()
    batch = BatchSampler(data_config, seed, samples).sample(rng_for(seed, "probe"), samples)
    _, record = encoder.predict(batch.tokens, record=True)
    hidden = record.hidden_states()  # (L+1,B,S,D), layer 0 is the embedding output
    Y, sel = probe_targets(batch, target)
    train, test = slice(0, n_train), slice(n_train, samples)
    Y_train, Y_test = Y[train][sel[train]], Y[test][sel[test]]
    if not len(Y_train) or not len(Y_test):
        raise ProbeError(f"no probed positions in one of the splits ({len(Y_train)} train, {len(Y_test)} test)")
    if shuffle_targets:  # leakage canary: fitted on targets unrelated to the features
        Y_train = Y_train[rng_for(seed, "probe", 1).permutation(len(Y_train))]
    layers = list(range(hidden.shape[0])) if layers is None else list(layers)
    if any(not 0 <= l < hidden.shape[0] for l in layers):
        raise ProbeError(f"probe layers {layers} outside 0..{hidden.shape[0] - 1}")
    result = ProbeResult(target=target, layers=layers, ridge=ridge, n_train=len(Y_train), n_test=len(Y_test))
    for layer in layers:
        H = hidden[layer]
        W, b = ridge_fit(H[train][sel[train]], Y_train, ridge)
        P_train = H[train][sel[train]] @ W + b
        P_test = H[test][sel[test]] @ W + b
        result.train_mse.append(float(((P_train - Y_train) ** 2).mean()))
        result.test_mse.append(float(((P_test - Y_test) ** 2).mean()))
        if Y.shape[-1] == 1:
            result.cosine.append(cosine_rows(P_test.ravel()[None], Y_test.ravel()[None]))
        else:
            result.cosine.append(cosine_rows(P_test, Y_test, absolute=target == "singular_vector"))
        logger.debug("probe %s layer %d: test MSE %.4g", target, layer, result.test_mse[-1])
    return result
