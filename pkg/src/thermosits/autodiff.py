"""Dense float64 tensors with reverse-mode differentiation.

A `Tensor` wraps a C-contiguous float64 ndarray. Operations build a tape
(parent links plus a backward closure); `Tensor.backward()` walks the tape
in reverse topological order and accumulates exact analytic gradients into
every node created with `requires_grad=True`.

Reductions over axes that downstream code may permute (pixel sets, time
steps, batch-norm rows) go through `osum`, which sorts the summands before
reducing. Summing a sorted multiset is independent of the original element
order, so permutation invariance of the forward pass holds bitwise, not
just approximately.
"""

import math

import numpy as np

__all__ = [
    "Tensor",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "exp",
    "log",
    "sqrt",
    "sin",
    "cos",
    "relu",
    "gelu",
    "tanh",
    "sigmoid",
    "activate",
    "reshape",
    "concat",
    "slice_axis",
    "take_rows",
    "gather_rows",
    "sum_axis",
    "mean_axis",
    "sum_all",
    "mean_all",
    "linear",
    "softmax",
    "masked_softmax",
    "cross_entropy",
    "BatchNormState",
    "batch_norm",
    "osum",
]

ACTIVATION_KINDS = ("relu", "gelu", "tanh", "sigmoid")

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def osum(a: np.ndarray, axis: int, keepdims: bool = False) -> np.ndarray:
    """Order-independent sum along `axis`: sort first, then reduce.

    The sorted sequence is a function of the multiset of summands only, so
    any permutation of the input along `axis` yields bitwise-identical
    output.
    """
    return np.sort(a, axis=axis).sum(axis=axis, keepdims=keepdims)


class Tensor:
    """Node of the differentiation tape holding float64 values."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into every tape node's `.grad`."""
        if grad is None:
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.data.shape:
                raise ValueError(
                    f"backward seed shape {grad.shape} != value shape {self.data.shape}"
                )
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and (p.requires_grad or p._parents):
                    stack.append((p, False))
        self.grad = grad if self.grad is None else self.grad + grad
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; all graph building happens in the module functions
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad or t._parents:
        t.grad = g if t.grad is None else t.grad + g


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce `grad` back to `shape` by summing broadcast axes."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data - b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data / b.data

    def backward(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(data, (a, b), backward)


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        _accum(a, -g)

    return _make(-a.data, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"matmul: incompatible shapes {a.data.shape} @ {b.data.shape}"
        )
    data = a.data @ b.data

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(data, (a, b), backward)


# ---------------------------------------------------------------------------
# elementwise nonlinearities
# ---------------------------------------------------------------------------


def exp(a) -> Tensor:
    a = _as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        _accum(a, g * data)

    return _make(data, (a,), backward)


def log(a) -> Tensor:
    a = _as_tensor(a)
    data = np.log(a.data)

    def backward(g):
        _accum(a, g / a.data)

    return _make(data, (a,), backward)


def sqrt(a) -> Tensor:
    """Square root with zero subgradient at 0 (keeps pooled-std gradients finite)."""
    a = _as_tensor(a)
    data = np.sqrt(a.data)

    def backward(g):
        d = np.zeros_like(data)
        nz = data > 0.0
        d[nz] = 0.5 / data[nz]
        _accum(a, g * d)

    return _make(data, (a,), backward)


def sin(a) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        _accum(a, g * np.cos(a.data))

    return _make(np.sin(a.data), (a,), backward)


def cos(a) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        _accum(a, -g * np.sin(a.data))

    return _make(np.cos(a.data), (a,), backward)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    data = np.maximum(a.data, 0.0)

    def backward(g):
        _accum(a, g * (a.data > 0.0))

    return _make(data, (a,), backward)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    data = np.tanh(a.data)

    def backward(g):
        _accum(a, g * (1.0 - data * data))

    return _make(data, (a,), backward)


def _sigmoid_stable(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    data = _sigmoid_stable(a.data)

    def backward(g):
        _accum(a, g * data * (1.0 - data))

    return _make(data, (a,), backward)


def gelu(a) -> Tensor:
    """GeLU via the tanh approximation: 0.5 x (1 + tanh(c (x + 0.044715 x^3)))."""
    a = _as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + _GELU_A * x**3)
    t = np.tanh(inner)
    data = 0.5 * x * (1.0 + t)

    def backward(g):
        d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
        _accum(a, g * d)

    return _make(data, (a,), backward)


_ACTIVATIONS = {"relu": relu, "gelu": gelu, "tanh": tanh, "sigmoid": sigmoid}


def activate(a, kind: str) -> Tensor:
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATION_KINDS}")
    return fn(a)


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    data = a.data.reshape(shape)

    def backward(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(data, (a,), backward)


def concat(tensors, axis: int) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _make(data, tuple(tensors), backward)


def slice_axis(a, axis: int, start: int, stop: int) -> Tensor:
    a = _as_tensor(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    data = a.data[idx].copy()

    def backward(g):
        gp = np.zeros_like(a.data)
        gp[idx] = g
        _accum(a, gp)

    return _make(data, (a,), backward)


def take_rows(a, indices) -> Tensor:
    """Select rows (axis 0) by integer index; backward scatter-adds."""
    a = _as_tensor(a)
    indices = np.asarray(indices, dtype=np.intp)
    data = a.data[indices].copy()

    def backward(g):
        gp = np.zeros_like(a.data)
        np.add.at(gp, indices, g)
        _accum(a, gp)

    return _make(data, (a,), backward)


def gather_rows(a, col_indices) -> Tensor:
    """out[i] = a[i, col_indices[i]] for a 2-D tensor."""
    a = _as_tensor(a)
    col = np.asarray(col_indices, dtype=np.intp)
    rows = np.arange(a.data.shape[0])
    data = a.data[rows, col].copy()

    def backward(g):
        gp = np.zeros_like(a.data)
        np.add.at(gp, (rows, col), g)
        _accum(a, gp)

    return _make(data, (a,), backward)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def sum_axis(a, axis: int, keepdims: bool = False) -> Tensor:
    """Sum along one axis, order-independently (see `osum`)."""
    a = _as_tensor(a)
    data = osum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    return _make(data, (a,), backward)


def mean_axis(a, axis: int, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    n = a.data.shape[axis]
    return mul(sum_axis(a, axis, keepdims), 1.0 / n)


def sum_all(a) -> Tensor:
    a = _as_tensor(a)
    data = np.array(a.data.sum())

    def backward(g):
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    return _make(data, (a,), backward)


def mean_all(a) -> Tensor:
    a = _as_tensor(a)
    return mul(sum_all(a), 1.0 / a.data.size)


# ---------------------------------------------------------------------------
# composite neural-network operations
# ---------------------------------------------------------------------------


def linear(x, weight, bias) -> Tensor:
    """x[B, Din] @ weight[Din, Dout] + bias[Dout]."""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if (
        x.data.ndim != 2
        or weight.data.ndim != 2
        or x.data.shape[1] != weight.data.shape[0]
        or bias.data.shape != (weight.data.shape[1],)
    ):
        raise ValueError(
            f"linear: input {x.data.shape} incompatible with weight "
            f"{weight.data.shape} and bias {bias.data.shape}"
        )
    return add(matmul(x, weight), bias)


def softmax(a, axis: int = -1) -> Tensor:
    """Stable softmax along `axis` (max is subtracted as a constant)."""
    a = _as_tensor(a)
    if axis < 0:
        axis += a.data.ndim
    m = a.data.max(axis=axis, keepdims=True)
    e = exp(sub(a, Tensor(m)))
    return div(e, sum_axis(e, axis, keepdims=True))


def masked_softmax(a, mask: np.ndarray, axis: int = -1) -> Tensor:
    """Softmax over entries where `mask` is True; excluded entries get exactly 0.

    Masked entries contribute nothing to the max, the normalizer, or the
    gradient, so appending a masked entry leaves the output bitwise unchanged.
    """
    a = _as_tensor(a)
    if axis < 0:
        axis += a.data.ndim
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.data.shape)
    if not mask.any(axis=axis).all():
        raise ValueError("masked_softmax: at least one valid entry required per row")
    maskf = mask.astype(np.float64)
    m = np.where(mask, a.data, -np.inf).max(axis=axis, keepdims=True)
    z = mul(sub(a, Tensor(m)), maskf)  # masked entries pinned to 0 before exp
    e = mul(exp(z), maskf)
    return div(e, sum_axis(e, axis, keepdims=True))


def cross_entropy(logits, labels) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    logits = _as_tensor(logits)
    if logits.data.ndim != 2:
        raise ValueError(f"cross_entropy: logits must be 2-D, got {logits.data.shape}")
    n, k = logits.data.shape
    labels = np.asarray(labels)
    if labels.shape != (n,) or not np.issubdtype(labels.dtype, np.integer):
        raise ValueError(f"cross_entropy: labels must be {n} integers")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"cross_entropy: label out of range [0, {k})")
    m = logits.data.max(axis=1, keepdims=True)
    z = sub(logits, Tensor(m))
    lse = log(sum_axis(exp(z), axis=1, keepdims=True))
    logp = sub(z, lse)
    return mul(sum_all(gather_rows(logp, labels)), -1.0 / n)


class BatchNormState:
    """Learned scale/shift plus running statistics for one feature axis."""

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-8):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.momentum = momentum
        self.eps = eps


def batch_norm(x, state: BatchNormState, training: bool, stat_rows=None) -> Tensor:
    """Normalize x[B, D] per feature; batch statistics in training mode.

    `stat_rows` optionally restricts which rows enter the batch statistics
    (padded time steps must not shift them); all rows are still normalized.
    Population variance is used both for the batch and the running estimate.
    """
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ValueError(f"batch_norm: input must be 2-D, got {x.data.shape}")
    if training:
        sel = take_rows(x, stat_rows) if stat_rows is not None else x
        if sel.data.shape[0] < 2:
            raise ValueError(
                f"batch_norm: training needs >= 2 rows of statistics, got {sel.data.shape[0]}"
            )
        mean = mean_axis(sel, axis=0, keepdims=True)
        centered = sub(sel, mean)
        var = mean_axis(mul(centered, centered), axis=0, keepdims=True)
        xhat = div(sub(x, mean), sqrt(add(var, state.eps)))
        mom = state.momentum
        state.running_mean = (1.0 - mom) * state.running_mean + mom * mean.data[0]
        state.running_var = (1.0 - mom) * state.running_var + mom * var.data[0]
    else:
        xhat = mul(sub(x, Tensor(state.running_mean)),
                   Tensor(1.0 / np.sqrt(state.running_var + state.eps)))
    return add(mul(xhat, state.gamma), state.beta)
