import numpy as np

from core.autograd.Tensor import Tensor, precision


def numerical_gradient(fn, arrays, eps=1e-5):  # central finite differences of a scalar fn(*Tensors)
    grads = []
    for k, base in enumerate(arrays):
        g = np.zeros_like(base, dtype=np.float64)
        it = np.nditer(base, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            values = [a.copy() for a in arrays]
            values[k][idx] = base[idx] + eps
            plus = fn(*[Tensor(v) for v in values]).item()
            values[k][idx] = base[idx] - eps
            minus = fn(*[Tensor(v) for v in values]).item()
            g[idx] = (plus - minus) / (2.0 * eps)
        grads.append(g)
    return grads


def relative_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def gradient_check(fn, arrays, eps=1e-5):  # max relative error between tape and finite-difference gradients
    with precision("float64"):
        arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
        leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
        fn(*leaves).backward()
        numeric = numerical_gradient(fn, arrays, eps)
        return max(relative_error(leaf.grad if leaf.grad is not None else np.zeros_like(n), n)
                   for leaf, n in zip(leaves, numeric))
