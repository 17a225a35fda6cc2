"""Minimal float64 neural-network kernel with reverse-mode differentiation.

Everything is built on plain numpy arrays wrapped in a small tape: each
`Tensor` produced by an op remembers its parents and how to push gradients
back to them. Calling ``backward(loss)`` on a scalar loss walks the recorded
graph once in reverse topological order and accumulates gradients into the
leaf tensors (the parameters).

Scope is deliberately narrow: the ops here are exactly the ones needed for
two-conv-block encoders with dense heads (1D valid convolution, max pooling,
dense layers, ReLU, inverted dropout, fused softmax cross-entropy) plus the
Adam optimizer. All math is float64 and every op output is checked for
NaN/Inf, which is treated as a hard error.
"""

from __future__ import annotations

import numpy as np

from parrot.errors import GraphError, NumericsError, ShapeError


def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite values produced by {op}")
    return arr


class Tensor:
    """A float64 array plus the bookkeeping needed for reverse-mode autodiff.

    Leaf tensors created with ``requires_grad=True`` act as trainable
    parameters: their ``grad`` buffer is allocated eagerly and gradient
    contributions accumulate into it. Tensors returned by ops carry a
    closure that routes the output gradient to their parents.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        _check_finite(self.data, "tensor construction")
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple = ()
        self._backward = None
        self._consumed = False

    # rows/cols are only meaningful for matrix-shaped tensors
    @property
    def rows(self) -> int:
        if self.data.ndim != 2:
            raise ShapeError(f"rows/cols undefined for ndim={self.data.ndim}")
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        if self.data.ndim != 2:
            raise ShapeError(f"rows/cols undefined for ndim={self.data.ndim}")
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _make_node(data: np.ndarray, parents, backward_fn, op: str) -> Tensor:
    """Wrap an op result, recording the graph edge only when a parent needs it."""
    out = Tensor(_check_finite(data, op))
    if any(p.requires_grad or p._parents for p in parents):
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accum(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def backward(loss: Tensor):
    """Run reverse-mode accumulation from a scalar loss through its graph.

    Raises GraphError if the loss is not a scalar, has no recorded forward
    graph, or its graph was already consumed by a previous backward call.
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise GraphError("backward requires a scalar loss")
    if not loss._parents:
        raise GraphError("backward called before any forward pass was recorded")
    if loss._consumed:
        raise GraphError("backward already ran on this graph")
    loss._consumed = True

    # iterative topological order; graphs are small but may be deep
    order = []
    seen = set()
    stack = [(loss, False)]
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
            if id(parent) not in seen:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
            # free intermediate grads; leaves keep theirs
            if not node.requires_grad and node is not loss:
                node.grad = None


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes {a.data.shape} x {b.data.shape}")
    out_data = a.data @ b.data

    def bwd(g):
        if a.requires_grad or a._parents:
            _accum(a, g @ b.data.T)
        if b.requires_grad or b._parents:
            _accum(b, a.data.T @ g)

    return _make_node(out_data, (a, b), bwd, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; also supports adding a length-k vector to each row."""
    broadcast_row = (
        b.data.ndim == 1 and a.data.ndim >= 1 and a.data.shape[-1] == b.data.shape[0]
    )
    if not broadcast_row and a.data.shape != b.data.shape:
        raise ShapeError(f"add shapes {a.data.shape} + {b.data.shape}")
    out_data = a.data + b.data

    def bwd(g):
        if a.requires_grad or a._parents:
            _accum(a, g)
        if b.requires_grad or b._parents:
            if broadcast_row and g.ndim > 1:
                _accum(b, g.sum(axis=tuple(range(g.ndim - 1))))
            else:
                _accum(b, g)

    return _make_node(out_data, (a, b), bwd, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product of two same-shape tensors."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul shapes {a.data.shape} * {b.data.shape}")
    out_data = a.data * b.data

    def bwd(g):
        if a.requires_grad or a._parents:
            _accum(a, g * b.data)
        if b.requires_grad or b._parents:
            _accum(b, g * a.data)

    return _make_node(out_data, (a, b), bwd, "mul")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0
    out_data = np.where(mask, x.data, 0.0)

    def bwd(g):
        _accum(x, g * mask)

    return _make_node(out_data, (x,), bwd, "relu")


def reshape(x: Tensor, shape) -> Tensor:
    out_data = x.data.reshape(shape)

    def bwd(g):
        _accum(x, g.reshape(x.data.shape))

    return _make_node(out_data, (x,), bwd, "reshape")


def concat_cols(tensors) -> Tensor:
    """Concatenate 2-D tensors along columns."""
    tensors = list(tensors)
    rows = tensors[0].data.shape[0]
    for t in tensors:
        if t.data.ndim != 2 or t.data.shape[0] != rows:
            raise ShapeError("concat_cols needs 2-D tensors with equal row counts")
    widths = [t.data.shape[1] for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=1)
    offsets = np.cumsum([0] + widths)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad or t._parents:
                _accum(t, g[:, lo:hi])

    return _make_node(out_data, tuple(tensors), bwd, "concat_cols")


def sum_all(x: Tensor) -> Tensor:
    out_data = np.asarray(x.data.sum())

    def bwd(g):
        _accum(x, np.broadcast_to(g, x.data.shape).copy())

    return _make_node(out_data, (x,), bwd, "sum_all")


def conv1d(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Valid 1D convolution over a batch: (B, C_in, L) -> (B, C_out, L-k+1).

    Implemented as k shifted GEMMs so the whole batch goes through BLAS.
    """
    if x.data.ndim != 3:
        raise ShapeError(f"conv1d expects (batch, channels, length), got {x.data.shape}")
    batch, c_in, length = x.data.shape
    c_out, c_in_w, k = weights.data.shape
    if c_in != c_in_w:
        raise ShapeError(f"conv1d channel mismatch: input {c_in}, weights {c_in_w}")
    if length < k:
        raise ShapeError(f"conv1d input length {length} < kernel size {k}")
    l_out = length - k + 1

    out_data = np.empty((batch, c_out, l_out))
    out_data[:] = bias.data[None, :, None]
    for j in range(k):
        # (B, C_in, l_out) contracted with (C_out, C_in) over C_in
        contrib = np.tensordot(x.data[:, :, j:j + l_out], weights.data[:, :, j],
                               axes=([1], [1]))
        out_data += contrib.transpose(0, 2, 1)

    def bwd(g):
        if bias.requires_grad:
            _accum(bias, g.sum(axis=(0, 2)))
        if weights.requires_grad:
            dw = np.empty_like(weights.data)
            for j in range(k):
                dw[:, :, j] = np.tensordot(g, x.data[:, :, j:j + l_out],
                                           axes=([0, 2], [0, 2]))
            _accum(weights, dw)
        if x.requires_grad or x._parents:
            dx = np.zeros_like(x.data)
            for j in range(k):
                back = np.tensordot(g, weights.data[:, :, j], axes=([1], [0]))
                dx[:, :, j:j + l_out] += back.transpose(0, 2, 1)
            _accum(x, dx)

    return _make_node(out_data, (x, weights, bias), bwd, "conv1d")


def maxpool1d(x: Tensor, window: int = 2, stride: int = 2):
    """Max pooling along the last axis with recorded argmax positions.

    Accepts (channels, length) or (batch, channels, length). Trailing
    elements that do not fill a window are dropped. Ties resolve to the
    first index in the window. Returns (pooled tensor, argmax positions);
    the positions index into the original length axis and are exactly where
    the backward pass routes gradients.
    """
    squeeze = x.data.ndim == 2
    data = x.data[None] if squeeze else x.data
    if data.ndim != 3:
        raise ShapeError(f"maxpool1d expects 2-D or 3-D input, got {x.data.shape}")
    batch, channels, length = data.shape
    if length < window:
        raise ShapeError(f"maxpool1d input length {length} < window {window}")
    l_out = (length - window) // stride + 1

    starts = np.arange(l_out) * stride
    windows = data[:, :, starts[:, None] + np.arange(window)[None, :]]
    inner = np.argmax(windows, axis=3)
    positions = starts[None, None, :] + inner
    out_data = np.take_along_axis(
        data, positions.reshape(batch, channels, l_out), axis=2
    )

    def bwd(g):
        g3 = g[None] if squeeze else g
        dx = np.zeros_like(data)
        bidx = np.arange(batch)[:, None, None]
        cidx = np.arange(channels)[None, :, None]
        np.add.at(dx, (bidx, cidx, positions), g3)
        _accum(x, dx[0] if squeeze else dx)

    pooled = _make_node(out_data[0] if squeeze else out_data, (x,), bwd, "maxpool1d")
    return pooled, (positions[0] if squeeze else positions)


def dense_forward(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map: (B, d_in) @ (d_in, d_out) + bias broadcast per row."""
    return add(matmul(x, weights), bias)


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: zero with probability `rate`, scale survivors by 1/(1-rate).

    Identity outside training. The rng is only consumed in training mode.
    """
    if not 0.0 <= rate < 1.0:
        raise NumericsError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate)
    scale = 1.0 / (1.0 - rate)
    factor = keep * scale
    out_data = x.data * factor

    def bwd(g):
        _accum(x, g * factor)

    return _make_node(out_data, (x,), bwd, "dropout")


def softmax_xent(logits: Tensor, labels: np.ndarray):
    """Fused row-wise softmax and mean cross-entropy.

    Rows are stabilized by subtracting their max before exponentiation, so
    arbitrarily large logits cannot overflow. Returns (scalar loss tensor,
    probability matrix as a plain array).
    """
    if logits.data.ndim != 2:
        raise ShapeError(f"softmax_xent expects (batch, classes), got {logits.data.shape}")
    labels = np.asarray(labels)
    batch, num_classes = logits.data.shape
    if labels.shape != (batch,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {batch}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ShapeError(f"labels must lie in [0, {num_classes})")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(exp.sum(axis=1, keepdims=True))
    loss_value = -log_probs[np.arange(batch), labels].mean()

    def bwd(g):
        dlogits = probs.copy()
        dlogits[np.arange(batch), labels] -= 1.0
        _accum(logits, dlogits * (float(g) / batch))

    loss = _make_node(np.asarray(loss_value), (logits,), bwd, "softmax_xent")
    return loss, probs


# ---------------------------------------------------------------------------
# layers and parameters
# ---------------------------------------------------------------------------

def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Conv1DLayer:
    """Valid-padding 1D convolution layer. Weights (out, in, k), bias (out,)."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3,
                 rng: np.random.Generator | None = None):
        if kernel_size < 1:
            raise ShapeError("kernel_size must be >= 1")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        fan_in = in_channels * kernel_size
        fan_out = out_channels * kernel_size
        self.weights = Tensor(
            glorot_uniform(rng, (out_channels, in_channels, kernel_size), fan_in, fan_out),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True)

    def output_length(self, length: int) -> int:
        if length < self.kernel_size:
            raise ShapeError(f"input length {length} < kernel size {self.kernel_size}")
        return length - self.kernel_size + 1


def conv1d_forward(x: Tensor, layer: Conv1DLayer) -> Tensor:
    """Convolve one sample laid out as (channels, length); activation not included."""
    if x.data.ndim == 2:
        out = conv1d(reshape(x, (1,) + x.data.shape), layer.weights, layer.bias)
        return reshape(out, out.data.shape[1:])
    return conv1d(x, layer.weights, layer.bias)


class DenseLayer:
    """Affine layer with Glorot-uniform weights (d_in, d_out) and zero bias."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weights = Tensor(
            glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim), requires_grad=True
        )
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return dense_forward(x, self.weights, self.bias)


class ParamSet:
    """Named parameter tensors with Adam moment buffers and a step counter.

    Registration order is preserved and defines the serialization order used
    by checkpoints.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step = 0

    def register(self, name: str, tensor: Tensor):
        if name in self._params:
            raise GraphError(f"parameter {name!r} registered twice")
        if not tensor.requires_grad:
            raise GraphError(f"parameter {name!r} must require gradients")
        self._params[name] = tensor
        self._m[name] = np.zeros_like(tensor.data)
        self._v[name] = np.zeros_like(tensor.data)

    def names(self):
        return list(self._params)

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __iter__(self):
        return iter(self._params.items())

    def __len__(self):
        return len(self._params)

    def count(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def moments(self, name: str):
        return self._m[name], self._v[name]

    def zero_grads(self):
        for t in self._params.values():
            t.zero_grad()

    def max_abs_grad(self) -> float:
        mx = 0.0
        for t in self._params.values():
            if t.grad is not None and t.grad.size:
                mx = max(mx, float(np.abs(t.grad).max()))
        return mx

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def restore(self, snapshot: dict[str, np.ndarray]):
        for name, t in self._params.items():
            t.data[...] = snapshot[name]


def adam_step(params: ParamSet, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """One Adam update with bias correction; gradients are zeroed afterward."""
    params.step += 1
    t = params.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params:
        g = p.grad
        m, v = params._m[name], params._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        _check_finite(p.data, "adam_step")
    params.zero_grads()
