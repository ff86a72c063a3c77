from dataclasses import dataclass, field

import numpy as np

from core.errors import InterventionError


@dataclass
class Hooks:  # modifications applied during one forward pass
    attention: dict = field(default_factory=dict)  # (layer, head) -> replacement probabilities (S,S) or (B,S,S)
    context: dict = field(default_factory=dict)  # (layer, head) -> replacement softmax(QK)V output (B,S,dh)

    def is_empty(self):
        return not self.attention and not self.context

    def check(self, config):
        for layer, head in list(self.attention) + list(self.context):
            if not (0 <= layer < config.layers and 0 <= head < config.heads):
                raise InterventionError(
                    f"head (layer {layer}, head {head}) outside a {config.layers}x{config.heads} model")

    @staticmethod
    def selection(keys, layer, heads):  # (H,) 0/1 vector of heads hooked in this layer
        sel = np.zeros(heads)
        for l, h in keys:
            if l == layer:
                sel[h] = 1.0
        return sel
