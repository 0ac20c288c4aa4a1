"""Dense tensors with reverse-mode automatic differentiation.

Every learnable value in this package lives in a `Tensor`: a numpy array
plus its place on an implicit tape. Operations execute eagerly, record a
backward closure, and `backward()` replays the tape in reverse creation
order. The engine is CPU-only and single-threaded per graph; parallelism
happens across independent samples, never inside one tape.

Precision is a build-wide switch (`set_default_dtype`): float32 for
training, float64 for gradient checking.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import ContractError, DimensionError, NumericError

_DTYPES = {"float32": np.float32, "float64": np.float64}

_default_dtype = np.dtype(np.float32)
_node_ids = itertools.count()


def set_default_dtype(dtype) -> None:
    """Select the build precision: "float32" or "float64"."""
    global _default_dtype
    name = str(np.dtype(dtype))
    if name not in _DTYPES:
        raise ContractError(f"unsupported dtype {dtype!r}; use float32 or float64")
    _default_dtype = np.dtype(_DTYPES[name])


def default_dtype() -> np.dtype:
    return _default_dtype


class using_dtype:
    """Context manager that temporarily switches the build precision."""

    def __init__(self, dtype):
        self._dtype = dtype
        self._saved = None

    def __enter__(self):
        self._saved = default_dtype()
        set_default_dtype(self._dtype)
        return self

    def __exit__(self, *exc):
        set_default_dtype(self._saved)
        return False


class Tensor:
    """An n-dimensional float array participating in a differentiation tape.

    `data` is the forward value, `grad` the same-shaped gradient buffer
    (populated by `backward`, None until then). `node_id` is the creation
    index, which doubles as a topological order of the tape.
    """

    __slots__ = ("data", "grad", "requires_grad", "node_id",
                 "_parents", "_backward", "_op", "_consumed")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is None:
            dtype = _default_dtype
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_node_ids)
        self._parents = ()
        self._backward = None
        self._op = "leaf"
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def backward(self, params=None):
        backward(self, params=params)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # Operators route through the primitive registry.
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

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    """Wrap arrays/scalars as constant tensors, casting to `like`'s dtype."""
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else _default_dtype
    return Tensor(x, requires_grad=False, dtype=dtype)


def _coerce_pair(a, b):
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        if a.dtype != b.dtype:
            raise ContractError(
                f"mixed dtypes {a.dtype} and {b.dtype}; cast explicitly")
        return a, b
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    if isinstance(b, Tensor):
        return as_tensor(a, like=b), b
    return as_tensor(a), as_tensor(b)


def _accumulate(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = g.astype(t.dtype, copy=True) if g.dtype != t.dtype else g.copy()
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the original input shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _result(op: str, out_data: np.ndarray, parents, backward_fn) -> Tensor:
    if not np.isfinite(out_data).all():
        raise NumericError(f"{op}: non-finite values in output")
    requires = any(p.requires_grad for p in parents)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.requires_grad = requires
    out.node_id = next(_node_ids)
    out._parents = tuple(parents)
    out._backward = backward_fn if requires else None
    out._op = op
    out._consumed = False
    return out


# ---------------------------------------------------------------------------
# elementwise / broadcasting primitives


def add(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    try:
        out = a.data + b.data
    except ValueError:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} do not broadcast")

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.shape))

    return _result("add", out, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    try:
        out = a.data - b.data
    except ValueError:
        raise DimensionError(f"sub: shapes {a.shape} and {b.shape} do not broadcast")

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g, b.shape))

    return _result("sub", out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    try:
        out = a.data * b.data
    except ValueError:
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape} do not broadcast")

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _result("mul", out, (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    try:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = a.data / b.data
    except ValueError:
        raise DimensionError(f"div: shapes {a.shape} and {b.shape} do not broadcast")

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _result("div", out, (a, b), bwd)


def matmul(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul: inputs must be at least 2-D, got {a.shape} x {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    try:
        out = a.data @ b.data
    except ValueError:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} x {b.shape}")

    def bwd(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            _accumulate(a, _unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            _accumulate(b, _unbroadcast(gb, b.shape))

    return _result("matmul", out, (a, b), bwd)


# ---------------------------------------------------------------------------
# activations


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form is overflow-free at both tails
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = _sigmoid(x.data)

    def bwd(g):
        if x.requires_grad:
            _accumulate(x, g * out * (1.0 - out))

    return _result("sigmoid", out, (x,), bwd)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)

    def bwd(g):
        if x.requires_grad:
            _accumulate(x, g * (1.0 - out * out))

    return _result("tanh", out, (x,), bwd)


def relu(x) -> Tensor:
    x = as_tensor(x)
    out = np.maximum(x.data, 0.0)

    def bwd(g):
        if x.requires_grad:
            _accumulate(x, g * (x.data > 0))

    return _result("relu", out, (x,), bwd)


def softplus(x) -> Tensor:
    x = as_tensor(x)
    out = np.logaddexp(0.0, x.data).astype(x.dtype, copy=False)

    def bwd(g):
        if x.requires_grad:
            _accumulate(x, g * _sigmoid(x.data))

    return _result("softplus", out, (x,), bwd)


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    if (x.data < 0).any():
        raise NumericError("sqrt: negative input")
    out = np.sqrt(x.data)

    def bwd(g):
        if x.requires_grad:
            # clamp keeps a zero-distance joint from emitting inf gradients
            _accumulate(x, g * 0.5 / np.sqrt(np.maximum(x.data, 1e-12)))

    return _result("sqrt", out, (x,), bwd)


# ---------------------------------------------------------------------------
# shape / structure primitives


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}")
    in_shape = x.shape

    def bwd(g):
        if x.requires_grad:
            _accumulate(x, g.reshape(in_shape))

    return _result("reshape", out, (x,), bwd)


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(f"transpose: axes {axes} invalid for shape {x.shape}")
    out = np.ascontiguousarray(np.transpose(x.data, axes))
    inverse = np.argsort(axes)

    def bwd(g):
        if x.requires_grad:
            _accumulate(x, np.transpose(g, inverse))

    return _result("transpose", out, (x,), bwd)


def narrow(x, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of `length` entries along one axis."""
    x = as_tensor(x)
    if not (0 <= axis < x.ndim):
        raise DimensionError(f"slice: axis {axis} out of range for shape {x.shape}")
    if start < 0 or length < 1 or start + length > x.shape[axis]:
        raise DimensionError(
            f"slice: [{start}:{start + length}] out of range on axis {axis} of {x.shape}")
    key = tuple(slice(None) if i != axis else slice(start, start + length)
                for i in range(x.ndim))
    out = np.ascontiguousarray(x.data[key])

    def bwd(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[key] = g
            _accumulate(x, full)

    return _result("slice", out, (x,), bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat: empty input list")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat: shapes {shapes} incompatible along axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                key = tuple(slice(None) if i != axis % g.ndim else slice(lo, hi)
                            for i in range(g.ndim))
                _accumulate(t, g[key])

    return _result("concat", out, tuple(tensors), bwd)


# ---------------------------------------------------------------------------
# reductions


def _norm_axis(axis, ndim):
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axis = _norm_axis(axis, x.ndim)
    out = x.data.sum(axis=axis, keepdims=keepdims)
    out = np.asarray(out, dtype=x.dtype)

    def bwd(g):
        if x.requires_grad:
            gg = g
            if not keepdims and axis is not None:
                gg = np.expand_dims(g, axis)
            _accumulate(x, np.broadcast_to(gg, x.shape).astype(x.dtype, copy=False))

    return _result("sum", out, (x,), bwd)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axis = _norm_axis(axis, x.ndim)
    out = np.asarray(x.data.mean(axis=axis, keepdims=keepdims), dtype=x.dtype)
    if axis is None:
        count = x.size
    else:
        count = int(np.prod([x.shape[a] for a in axis]))

    def bwd(g):
        if x.requires_grad:
            gg = g
            if not keepdims and axis is not None:
                gg = np.expand_dims(g, axis)
            _accumulate(x, (np.broadcast_to(gg, x.shape) / count).astype(x.dtype, copy=False))

    return _result("mean", out, (x,), bwd)


# ---------------------------------------------------------------------------
# convolution / pooling / dropout


def conv2d(x, kernel, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D convolution on (B, H, W, Cin) with kernel (kh, kw, Cin, Cout)."""
    x, kernel = _coerce_pair(x, kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(
            f"conv2d: need input (B,H,W,C) and kernel (kh,kw,Cin,Cout), got {x.shape} and {kernel.shape}")
    batch, height, width, cin = x.shape
    kh, kw, kcin, cout = kernel.shape
    if kcin != cin:
        raise DimensionError(f"conv2d: input channels {cin} != kernel channels {kcin}")
    if stride < 1:
        raise ContractError(f"conv2d: stride must be >= 1, got {stride}")
    out_h = (height + 2 * padding - kh) // stride + 1
    out_w = (width + 2 * padding - kw) // stride + 1
    if out_h < 1 or out_w < 1:
        raise DimensionError(
            f"conv2d: kernel {kh}x{kw} too large for input {height}x{width} with padding {padding}")

    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    cols = np.empty((batch, out_h, out_w, kh, kw, cin), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xp[:, i:i + out_h * stride:stride,
                                        j:j + out_w * stride:stride, :]
    cols2 = cols.reshape(batch * out_h * out_w, kh * kw * cin)
    out = (cols2 @ kernel.data.reshape(kh * kw * cin, cout)).reshape(batch, out_h, out_w, cout)

    def bwd(g):
        g2 = g.reshape(batch * out_h * out_w, cout)
        if kernel.requires_grad:
            gk = cols2.T @ g2
            _accumulate(kernel, gk.reshape(kernel.shape))
        if x.requires_grad:
            gcols = (g2 @ kernel.data.reshape(kh * kw * cin, cout).T).reshape(cols.shape)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i:i + out_h * stride:stride,
                        j:j + out_w * stride:stride, :] += gcols[:, :, :, i, j, :]
            if padding:
                gxp = gxp[:, padding:padding + height, padding:padding + width, :]
            _accumulate(x, gxp)

    return _result("conv2d", out, (x, kernel), bwd)


def avgpool2d(x, kernel) -> Tensor:
    """Non-overlapping average pooling on (B, H, W, C); stride == kernel."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"avgpool2d: need (B,H,W,C), got {x.shape}")
    if isinstance(kernel, int):
        kernel = (kernel, kernel)
    kh, kw = kernel
    batch, height, width, chans = x.shape
    if height % kh or width % kw:
        raise DimensionError(
            f"avgpool2d: kernel {kh}x{kw} does not tile input {height}x{width}")
    out_h, out_w = height // kh, width // kw
    out = x.data.reshape(batch, out_h, kh, out_w, kw, chans).mean(axis=(2, 4))

    def bwd(g):
        if x.requires_grad:
            gx = np.broadcast_to(g[:, :, None, :, None, :],
                                 (batch, out_h, kh, out_w, kw, chans)) / (kh * kw)
            _accumulate(x, gx.reshape(x.shape).astype(x.dtype, copy=False))

    return _result("avgpool2d", out, (x,), bwd)


def dropout(x, keep_prob: float, seed: int, training: bool = True) -> Tensor:
    """Inverted dropout with a counter-based deterministic mask.

    Training scales kept units by 1/keep_prob; inference is the identity,
    so expected activations match between the two modes.
    """
    x = as_tensor(x)
    if not (0.0 < keep_prob <= 1.0):
        raise ContractError(f"dropout: keep_prob must be in (0, 1], got {keep_prob}")
    if not training or keep_prob == 1.0:
        out = x.data.copy()

        def bwd_id(g):
            if x.requires_grad:
                _accumulate(x, g)

        return _result("dropout", out, (x,), bwd_id)

    gen = np.random.Generator(np.random.Philox(key=np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))
    mask = (gen.random(x.shape) < keep_prob).astype(x.dtype) / np.asarray(keep_prob, dtype=x.dtype)
    out = x.data * mask

    def bwd(g):
        if x.requires_grad:
            _accumulate(x, g * mask)

    return _result("dropout", out, (x,), bwd)


# ---------------------------------------------------------------------------
# tape replay


def backward(loss: Tensor, params=None) -> None:
    """Populate gradients of everything reachable from a scalar loss.

    `params` (iterable of Tensors, or anything with trainable_tensors())
    additionally get zero gradients when the loss does not depend on them.
    The traversed tape is consumed; rebuilding the graph is required for a
    second backward pass.
    """
    if not isinstance(loss, Tensor):
        raise ContractError(f"backward: loss must be a Tensor, got {type(loss).__name__}")
    if loss.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")

    visited = {}
    stack = [loss]
    while stack:
        node = stack.pop()
        if id(node) in visited:
            continue
        visited[id(node)] = node
        if node._consumed:
            raise ContractError("backward: tape already consumed; rebuild the graph")
        stack.extend(node._parents)
    nodes = sorted(visited.values(), key=lambda t: t.node_id, reverse=True)

    if loss.requires_grad:
        loss.grad = np.ones_like(loss.data)
        for node in nodes:
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    for node in nodes:
        if node._parents:
            node._parents = ()
            node._backward = None
            node._consumed = True

    if params is not None:
        if hasattr(params, "trainable_tensors"):
            params = params.trainable_tensors()
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


# ---------------------------------------------------------------------------
# registry

PRIMITIVES = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "matmul": matmul,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "relu": relu,
    "softplus": softplus,
    "sqrt": sqrt,
    "concat": concat,
    "conv2d": conv2d,
    "avgpool2d": avgpool2d,
    "dropout": dropout,
    "mean": mean,
    "sum": tsum,
    "reshape": reshape,
    "transpose": transpose,
    "slice": narrow,
}


def apply_primitive(kind: str, inputs, attributes: dict | None = None) -> Tensor:
    """Dispatch one primitive by name; `inputs` are positional arguments."""
    try:
        fn = PRIMITIVES[kind]
    except KeyError:
        raise ContractError(f"unknown primitive {kind!r}")
    if kind == "concat":
        return fn(inputs, **(attributes or {}))
    return fn(*inputs, **(attributes or {}))
