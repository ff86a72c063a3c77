from dataclasses import dataclass

import numpy as np

from core.errors import ShapeError


@dataclass
class Losses:  # MSE over all entries, observed entries and masked entries; None when a set is empty
    L: float
    L_obs: float = None
    L_mask: float = None
    observed: int = 0
    masked: int = 0

    def as_row(self):
        return {"L": self.L, "L_obs": self.L_obs, "L_mask": self.L_mask}


def compute_losses(X, X_hat, M):  # pooled over every entry of the (possibly batched) input
    X, X_hat, M = np.asarray(X, dtype=np.float64), np.asarray(X_hat, dtype=np.float64), np.asarray(M)
    if X.shape != X_hat.shape or X.shape != M.shape:
        raise ShapeError("compute_losses", X.shape, X_hat.shape, M.shape)
    sq = (X_hat - X) ** 2
    obs = M != 0
    n_obs = int(obs.sum())
    n_mask = int(sq.size - n_obs)
    return Losses(
        L=float(sq.mean()),
        L_obs=float(sq[obs].mean()) if n_obs else None,
        L_mask=float(sq[~obs].mean()) if n_mask else None,
        observed=n_obs,
        masked=n_mask,
    )


def masked_mse(X_hat, target, M):  # MSE on masked positions only against an arbitrary target
    sel = np.asarray(M) == 0
    if not sel.any():
        return None
    return float(((np.asarray(X_hat) - np.asarray(target)) ** 2)[sel].mean())
