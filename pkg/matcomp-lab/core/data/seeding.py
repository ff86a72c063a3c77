import numpy as np

STREAMS = {"data": 0, "init": 1, "eval": 2, "probe": 3, "permutation": 4, "baseline": 5}


def rng_for(seed, stream, *keys):  # independent generator for (seed, stream, keys...)
    return np.random.default_rng(np.random.SeedSequence([int(seed), STREAMS[stream], *[int(k) for k in keys]]))
