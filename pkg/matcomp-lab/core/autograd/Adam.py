import logging
from dataclasses import dataclass, field

import numpy as np

from config import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, LEARNING_RATE
from core.errors import NonFiniteError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:  # moments and step counter of one optimizer
    lr: float = LEARNING_RATE
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def hyperparameters(self):
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps, "t": self.t}


class Adam:  # constant step size, bias-corrected Adam without weight decay
    def __init__(self, state=None, **hyperparameters):
        self.state = state if state is not None else AdamState(**hyperparameters)

    def step(self, params, grads):  # update params (name -> ndarray) in place from grads (name -> ndarray)
        s = self.state
        for name, g in grads.items():
            if name not in params:
                raise KeyError(f"gradient for unknown parameter '{name}'")
            if g.shape != params[name].shape:
                raise ShapeError(f"adam_step[{name}]", params[name].shape, g.shape)
            if not np.isfinite(g).all():
                raise NonFiniteError(f"gradient of '{name}'")

        s.t += 1
        bias1 = 1.0 - s.beta1 ** s.t
        bias2 = 1.0 - s.beta2 ** s.t
        for name, g in grads.items():
            p = params[name]
            if name not in s.m:
                s.m[name] = np.zeros_like(p)
                s.v[name] = np.zeros_like(p)
            m, v = s.m[name], s.v[name]
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * (g * g)
            p -= s.lr * (m / bias1) / (np.sqrt(v / bias2) + s.eps)
        return params, s
