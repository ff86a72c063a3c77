from dataclasses import dataclass

import numpy as np


@dataclass
class ForwardRecord:  # internal states of one forward pass, stacked over layers
    embeddings: np.ndarray  # (B,S,D) output of the embedding block
    attention: np.ndarray  # (L,B,H,S,S) post-softmax probabilities
    context: np.ndarray  # (L,B,H,S,dh) probabilities @ V, before the output projection
    after_attention: np.ndarray  # (L,B,S,D)
    after_mlp: np.ndarray  # (L,B,S,D)

    def hidden_states(self):  # (L+1,B,S,D): embeddings then every layer output
        return np.concatenate([self.embeddings[None], self.after_mlp], axis=0)
