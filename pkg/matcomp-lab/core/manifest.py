import json
import os
import platform

import numpy as np
import scipy

from config import MANIFEST_FILE, VERSION


def environment():  # versions recorded next to every artifact
    return {"matcomp_lab": VERSION, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def write_manifest(directory, **sections):  # manifest.json describing the artifacts of one run
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, MANIFEST_FILE)
    with open(path, "w") as f:
        json.dump({"environment": environment(), **sections}, f, indent=2, sort_keys=True, default=_jsonable)
    return path


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (set, tuple)):
        return list(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")
