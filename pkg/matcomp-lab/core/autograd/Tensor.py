import contextlib
import logging

import numpy as np
from scipy.special import erf

from core.errors import AutogradError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

PRECISIONS = {"float32": np.float32, "float64": np.float64}

_state = {"dtype": np.float32}

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def set_precision(name):  # switch the float type used by every new Tensor
    if name not in PRECISIONS:
        raise ValueError(f"unknown precision '{name}', expected one of {sorted(PRECISIONS)}")
    _state["dtype"] = PRECISIONS[name]


def get_dtype():
    return _state["dtype"]


def get_precision():
    return np.dtype(_state["dtype"]).name


@contextlib.contextmanager
def precision(name):  # temporarily run tensor math in another precision
    previous = get_precision()
    set_precision(name)
    try:
        yield
    finally:
        set_precision(previous)


def _unbroadcast(grad, shape):  # sum a broadcast gradient back to the operand shape
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _coerce(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


def _result(data, parents, op, backward):  # wrap an op output, recording it on the tape when needed
    if not np.isfinite(data).all():
        raise NonFiniteError(f"output of '{op}'")
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        out._op = op
    return out


class Tensor:  # dense float array with optional participation in reverse-mode differentiation
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False):
        dtype = _state["dtype"]
        if isinstance(data, Tensor):
            data = data.data
        self.data = data if isinstance(data, np.ndarray) and data.dtype == dtype else np.asarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None
        self._op = "leaf"

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.item())

    def detach(self):
        return Tensor(self.data)

    # ---- elementwise arithmetic ----

    def __add__(self, other):
        a, b = self, _coerce(other)
        _check_broadcast("add", a, b)

        def backward(g):
            return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                    _unbroadcast(g, b.shape) if b.requires_grad else None)
        return _result(a.data + b.data, (a, b), "add", backward)

    __radd__ = __add__

    def __neg__(self):
        a = self
        return _result(-a.data, (a,), "neg", lambda g: (-g,))

    def __sub__(self, other):
        a, b = self, _coerce(other)
        _check_broadcast("sub", a, b)

        def backward(g):
            return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                    _unbroadcast(-g, b.shape) if b.requires_grad else None)
        return _result(a.data - b.data, (a, b), "sub", backward)

    def __rsub__(self, other):
        return _coerce(other) - self

    def __mul__(self, other):
        a, b = self, _coerce(other)
        _check_broadcast("mul", a, b)

        def backward(g):
            return (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                    _unbroadcast(g * a.data, b.shape) if b.requires_grad else None)
        return _result(a.data * b.data, (a, b), "mul", backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        a, b = self, _coerce(other)
        _check_broadcast("div", a, b)

        def backward(g):
            return (_unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
                    _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None)
        return _result(a.data / b.data, (a, b), "div", backward)

    def __rtruediv__(self, other):
        return _coerce(other) / self

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("only scalar exponents are supported")
        a = self
        return _result(a.data ** p, (a,), "pow", lambda g: (g * p * a.data ** (p - 1),))

    def exp(self):
        a = self
        y = np.exp(a.data)
        return _result(y, (a,), "exp", lambda g: (g * y,))

    def log(self):
        a = self
        return _result(np.log(a.data), (a,), "log", lambda g: (g / a.data,))

    def relu(self):
        a = self
        return _result(np.maximum(a.data, 0), (a,), "relu", lambda g: (g * (a.data > 0),))

    def gelu(self):  # exact (erf) GELU as used by BERT
        a = self
        cdf = 0.5 * (1.0 + erf(a.data / _SQRT2))

        def backward(g):
            return (g * (cdf + a.data * np.exp(-0.5 * a.data * a.data) * _INV_SQRT_2PI),)
        return _result(a.data * cdf, (a,), "gelu", backward)

    # ---- linear algebra / reductions ----

    def __matmul__(self, other):
        a, b = self, _coerce(other)
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeError("matmul", a.shape, b.shape)
        try:
            np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
        except ValueError:
            raise ShapeError("matmul", a.shape, b.shape) from None

        def backward(g):
            ga = gb = None
            if a.requires_grad:
                ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
            if b.requires_grad:
                if b.ndim == 2:
                    gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
                else:
                    gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
            return ga, gb
        return _result(a.data @ b.data, (a, b), "matmul", backward)

    matmul = __matmul__

    def sum(self, axis=None, keepdims=False):
        a = self
        axes = None if axis is None else tuple(ax % a.ndim for ax in np.atleast_1d(axis))

        def backward(g):
            if axes is not None and not keepdims:
                g = np.expand_dims(g, axes)
            return (np.broadcast_to(g, a.shape).copy(),)
        return _result(a.data.sum(axis=axes, keepdims=keepdims), (a,), "sum", backward)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            count = self.size
        else:
            count = int(np.prod([self.shape[ax] for ax in np.atleast_1d(axis)]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        a = self
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        try:
            data = a.data.reshape(shape)
        except ValueError:
            raise ShapeError("reshape", a.shape, shape) from None
        return _result(data, (a,), "reshape", lambda g: (g.reshape(a.shape),))

    def transpose(self, *axes):
        a = self
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(a.ndim)))
        if sorted(axes) != list(range(a.ndim)):
            raise ShapeError("transpose", a.shape, axes)
        inverse = tuple(np.argsort(axes))
        return _result(np.transpose(a.data, axes), (a,), "transpose", lambda g: (np.transpose(g, inverse),))

    def softmax(self, axis=-1):  # max-subtracted softmax
        a = self
        e = np.exp(a.data - a.data.max(axis=axis, keepdims=True))
        s = e / e.sum(axis=axis, keepdims=True)

        def backward(g):
            return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)
        return _result(s, (a,), "softmax", backward)

    # ---- reverse pass ----

    def tape(self):  # nodes of the recorded graph, every node after its parents
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        return order

    def backward(self, grad=None):  # accumulate d(self)/d(leaf) into every leaf's .grad
        if not self.requires_grad:
            raise AutogradError("backward called on a tensor with no recorded tape")
        if grad is None:
            if self.size != 1:
                raise AutogradError(f"backward needs a scalar output, got shape {self.shape}")
            grad = np.ones_like(self.data)
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(self.tape()):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, parent_grad in zip(node._parents, node._backward(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad


def layer_norm(x, gamma, beta, eps):  # normalize over the last axis, then apply the affine map
    dim = x.shape[-1]
    if gamma.shape != (dim,) or beta.shape != (dim,):
        raise ShapeError("layer_norm", x.shape, gamma.shape, beta.shape)
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std

    def backward(g):
        gx = gg = gb = None
        if x.requires_grad:
            dxhat = g * gamma.data
            gx = inv_std * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        if gamma.requires_grad:
            gg = (g * xhat).reshape(-1, dim).sum(axis=0)
        if beta.requires_grad:
            gb = g.reshape(-1, dim).sum(axis=0)
        return gx, gg, gb
    return _result(xhat * gamma.data + beta.data, (x, gamma, beta), "layer_norm", backward)


def gather(table, ids):  # rows of a 2-D table selected by an integer array
    ids = np.asarray(ids)
    if table.ndim != 2 or not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError("gather", table.shape, ids.shape)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError("gather", table.shape, (int(ids.min()), int(ids.max())))

    def backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (grad,)
    return _result(table.data[ids], (table,), "gather", backward)


def grad(output, inputs):  # gradients of a scalar output with respect to the given leaves
    for leaf in inputs:
        leaf.grad = None
    output.backward()
    return [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in inputs]
