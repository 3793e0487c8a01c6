"""Reverse-mode automatic differentiation over dense float64 arrays.

Every value is a :class:`Tensor`. Operations on tensors that require gradients
record their inputs and a local backward rule; :func:`backward` orders the
recorded nodes topologically (a :class:`Tape`) and runs the rules in reverse.

The primitive set is deliberately small. Everything the tracker, the attack
losses and the sensor simulators compute is a composition of these.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "NonFiniteError",
    "GradientError",
    "tensor",
    "as_tensor",
    "stop_gradient",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "exp",
    "log",
    "sqrt",
    "square",
    "sin_",
    "abs_",
    "sigmoid",
    "softmax",
    "sum_",
    "mean",
    "max_",
    "maximum",
    "minimum",
    "l2norm",
    "cosine",
    "clamp",
    "bilinear_sample",
    "affine_translate",
    "concat",
    "stack",
    "reshape",
    "transpose",
    "backward",
    "grad",
    "check_gradient",
    "GradCheckReport",
]


class ShapeError(ValueError):
    """Operand shapes do not conform for an operation."""

    def __init__(self, op: str, *shapes: tuple[int, ...]):
        self.op = op
        self.shapes = shapes
        joined = " and ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


class NonFiniteError(FloatingPointError):
    """A primitive produced NaN/inf from finite inputs."""


class GradientError(RuntimeError):
    pass


class Tensor:
    """Dense float64 array with an optional gradient record."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = "leaf"
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", self.shape)
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operator sugar ---------------------------------------------------
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return slice_(self, index)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(op: str, value: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    value = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(value)) and all(np.all(np.isfinite(p.data)) for p in parents):
        raise NonFiniteError(f"{op}: non-finite output from finite inputs")
    out = Tensor.__new__(Tensor)
    out.data = value
    out.grad = None
    out.name = None
    out.op = op
    needs = any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# -- elementwise binary ---------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _make("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _make("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return _make("mul", a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    if np.any(b.data == 0):
        raise NonFiniteError("div: division by zero")
    out = a.data / b.data
    return _make("div", out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def maximum(a, b) -> Tensor:
    """Elementwise max; ties send the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("maximum", a, b)
    pick_a = a.data >= b.data
    return _make("maximum", np.where(pick_a, a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)))


def minimum(a, b) -> Tensor:
    """Elementwise min; ties send the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("minimum", a, b)
    pick_a = a.data <= b.data
    return _make("minimum", np.where(pick_a, a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        out = a.data @ b.data
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def bw(g):
        A, B = a.data, b.data
        if A.ndim == 1 and B.ndim == 1:
            return g * B, g * A
        if A.ndim == 1:
            return B @ g, np.outer(A, g)
        if B.ndim == 1:
            return np.outer(g, B), A.T @ g
        ga = g @ np.swapaxes(B, -1, -2)
        gb = np.swapaxes(A, -1, -2) @ g
        return _unbroadcast(ga, A.shape), _unbroadcast(gb, B.shape)

    return _make("matmul", out, (a, b), bw)


# -- elementwise unary ----------------------------------------------------
def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return _make("exp", out, (x,), lambda g: (g * out,))


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise NonFiniteError("log: non-positive argument")
    return _make("log", np.log(x.data), (x,), lambda g: (g / x.data,))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data < 0):
        raise NonFiniteError("sqrt: negative argument")
    out = np.sqrt(x.data)

    def bw(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(out > 0, 0.5 / np.where(out > 0, out, 1.0), 0.0)
        return (g * d,)

    return _make("sqrt", out, (x,), bw)


def sin_(x) -> Tensor:
    x = as_tensor(x)
    return _make("sin", np.sin(x.data), (x,), lambda g: (g * np.cos(x.data),))


def square(x) -> Tensor:
    x = as_tensor(x)
    return _make("square", x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def abs_(x) -> Tensor:
    x = as_tensor(x)
    return _make("abs", np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def _sigmoid_np(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = _sigmoid_np(x.data)
    return _make("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 0:
        raise ShapeError("softmax", x.shape)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make("softmax", out, (x,), bw)


def clamp(x, lo: float | None = None, hi: float | None = None) -> Tensor:
    """Clamp to ``[lo, hi]``. Gradient passes where ``lo <= x <= hi``."""
    x = as_tensor(x)
    lo_v = -np.inf if lo is None else lo
    hi_v = np.inf if hi is None else hi
    if lo_v > hi_v:
        raise ValueError(f"clamp: lo {lo_v} > hi {hi_v}")
    active = (x.data >= lo_v) & (x.data <= hi_v)
    return _make("clamp", np.clip(x.data, lo_v, hi_v), (x,), lambda g: (g * active,))


def stop_gradient(x) -> Tensor:
    x = as_tensor(x)
    return Tensor(x.data.copy())


# -- reductions -----------------------------------------------------------
def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make("sum", out, (x,), bw)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    n = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    if n == 0:
        raise ShapeError("mean", x.shape)
    out = x.data.mean(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(g / n, x.shape).copy(),)

    return _make("mean", out, (x,), bw)


def max_(x, axis: int | None = -1) -> tuple[Tensor, np.ndarray]:
    """Max along ``axis`` plus the argmax (ties go to the lowest index)."""
    x = as_tensor(x)
    if x.size == 0:
        raise ShapeError("max", x.shape)
    if axis is None:
        flat = int(np.argmax(x.data))
        idx = np.unravel_index(flat, x.shape)

        def bw_all(g):
            out = np.zeros(x.shape)
            out[idx] = g
            return (out,)

        return _make("max", x.data[idx], (x,), bw_all), np.array(flat)
    ax = axis % x.ndim
    arg = np.argmax(x.data, axis=ax)
    out = np.take_along_axis(x.data, np.expand_dims(arg, ax), axis=ax).squeeze(ax)

    def bw(g):
        full = np.zeros(x.shape)
        np.put_along_axis(full, np.expand_dims(arg, ax), np.expand_dims(g, ax), axis=ax)
        return (full,)

    return _make("max", out, (x,), bw), arg


def l2norm(x, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Euclidean norm; the subgradient at the origin is taken as zero."""
    x = as_tensor(x)
    if x.ndim == 0:
        raise ShapeError("l2norm", x.shape)
    n = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))

    def bw(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        safe = np.where(n > 0, n, 1.0)
        return (np.where(n > 0, gk * x.data / safe, 0.0),)

    out = n if keepdims else n.squeeze(axis)
    return _make("l2norm", out, (x,), bw)


def cosine(a, b, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Cosine similarity along ``axis`` (broadcasting); 0 where a norm is 0."""
    a, b = as_tensor(a), as_tensor(b)
    shape = _broadcast_shape("cosine", a, b)
    if len(shape) == 0:
        raise ShapeError("cosine", a.shape, b.shape)
    A = np.broadcast_to(a.data, shape)
    B = np.broadcast_to(b.data, shape)
    na = np.sqrt((A * A).sum(axis=axis, keepdims=True))
    nb = np.sqrt((B * B).sum(axis=axis, keepdims=True))
    dot = (A * B).sum(axis=axis, keepdims=True)
    ok = (na > eps) & (nb > eps)
    na_s = np.where(ok, na, 1.0)
    nb_s = np.where(ok, nb, 1.0)
    cos = np.where(ok, dot / (na_s * nb_s), 0.0)

    def bw(g):
        gk = np.expand_dims(g, axis)
        ga = np.where(ok, gk * (B / (na_s * nb_s) - cos * A / (na_s * na_s)), 0.0)
        gb = np.where(ok, gk * (A / (na_s * nb_s) - cos * B / (nb_s * nb_s)), 0.0)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make("cosine", cos.squeeze(axis), (a, b), bw)


# -- structural -----------------------------------------------------------
def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, tuple(shape)) from None
    return _make("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    out = np.transpose(x.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return _make("transpose", out, (x,), lambda g: (np.transpose(g, inv),))


def slice_(x, index) -> Tensor:
    x = as_tensor(x)
    if isinstance(index, Tensor):
        raise TypeError("slice: index must be integer/array-like, not a Tensor")
    try:
        out = x.data[index]
    except IndexError as e:
        raise ShapeError("slice", x.shape) from e

    def bw(g):
        full = np.zeros(x.shape)
        np.add.at(full, index, g)
        return (full,)

    return _make("slice", np.array(out, dtype=np.float64), (x,), bw)


def concat(items: Sequence, axis: int = 0) -> Tensor:
    items = [as_tensor(t) for t in items]
    if not items:
        raise ShapeError("concat")
    try:
        out = np.concatenate([t.data for t in items], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(t.shape for t in items)) from None
    ax = axis % out.ndim
    bounds = np.cumsum([t.shape[ax] for t in items])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _make("concat", out, items, bw)


def stack(items: Sequence, axis: int = 0) -> Tensor:
    items = [as_tensor(t) for t in items]
    if not items:
        raise ShapeError("stack")
    shapes = {t.shape for t in items}
    if len(shapes) != 1:
        raise ShapeError("stack", *(t.shape for t in items))
    nd = items[0].ndim + 1
    ax = axis % nd
    return concat([reshape(t, t.shape[:ax] + (1,) + t.shape[ax:]) for t in items], axis=ax)


# -- image sampling -------------------------------------------------------
def bilinear_sample(image, coords) -> Tensor:
    """Sample an ``(H, W, C)`` image at fractional ``(N, 2)`` ``(y, x)`` pixel coordinates.

    Pixel centres sit at integer coordinates; samples outside the frame read
    zeros. Differentiable with respect to both the image and the coordinates.
    """
    image, coords = as_tensor(image), as_tensor(coords)
    if image.ndim != 3 or coords.ndim != 2 or coords.shape[1] != 2:
        raise ShapeError("bilinear_sample", image.shape, coords.shape)
    H, W, C = image.shape
    img = image.data
    y, x = coords.data[:, 0], coords.data[:, 1]
    y0 = np.floor(y).astype(np.int64)
    x0 = np.floor(x).astype(np.int64)
    fy = (y - y0)[:, None]
    fx = (x - x0)[:, None]

    def fetch(yy, xx):
        ok = (yy >= 0) & (yy < H) & (xx >= 0) & (xx < W)
        vals = np.zeros((len(yy), C))
        vals[ok] = img[yy[ok], xx[ok]]
        return vals, ok

    v00, k00 = fetch(y0, x0)
    v01, k01 = fetch(y0, x0 + 1)
    v10, k10 = fetch(y0 + 1, x0)
    v11, k11 = fetch(y0 + 1, x0 + 1)
    out = (1 - fy) * (1 - fx) * v00 + (1 - fy) * fx * v01 + fy * (1 - fx) * v10 + fy * fx * v11

    def bw(g):
        gi = np.zeros_like(img)
        for (dy, dx, w, ok) in (
            (0, 0, (1 - fy) * (1 - fx), k00),
            (0, 1, (1 - fy) * fx, k01),
            (1, 0, fy * (1 - fx), k10),
            (1, 1, fy * fx, k11),
        ):
            np.add.at(gi, (y0[ok] + dy, x0[ok] + dx), (g * w)[ok])
        d_fy = (1 - fx) * (v10 - v00) + fx * (v11 - v01)
        d_fx = (1 - fy) * (v01 - v00) + fy * (v11 - v10)
        gc = np.stack([(g * d_fy).sum(axis=1), (g * d_fx).sum(axis=1)], axis=1)
        return gi, gc

    return _make("bilinear_sample", out, (image, coords), bw)


def _shift_int(img: np.ndarray, a: int, b: int) -> np.ndarray:
    """``out[y, x] = img[y + a, x + b]`` with zero padding."""
    H, W = img.shape[:2]
    out = np.zeros_like(img)
    ys, ye = max(0, -a), min(H, H - a)
    xs, xe = max(0, -b), min(W, W - b)
    if ys < ye and xs < xe:
        out[ys:ye, xs:xe] = img[ys + a:ye + a, xs + b:xe + b]
    return out


def affine_translate(image, shift) -> Tensor:
    """Shift an ``(H, W, C)`` image by ``(dy, dx)`` pixels with zero padding.

    ``out[y, x] = image[y - dy, x - dx]`` with bilinear interpolation for the
    fractional part, so the result is differentiable in ``shift`` as well.
    """
    image, shift = as_tensor(image), as_tensor(shift)
    if image.ndim != 3 or shift.shape != (2,):
        raise ShapeError("affine_translate", image.shape, shift.shape)
    img = image.data
    sy, sx = -shift.data[0], -shift.data[1]
    iy, ix = int(np.floor(sy)), int(np.floor(sx))
    fy, fx = sy - iy, sx - ix
    s00 = _shift_int(img, iy, ix)
    s01 = _shift_int(img, iy, ix + 1)
    s10 = _shift_int(img, iy + 1, ix)
    s11 = _shift_int(img, iy + 1, ix + 1)
    out = (1 - fy) * (1 - fx) * s00 + (1 - fy) * fx * s01 + fy * (1 - fx) * s10 + fy * fx * s11

    def bw(g):
        gi = (
            (1 - fy) * (1 - fx) * _shift_int(g, -iy, -ix)
            + (1 - fy) * fx * _shift_int(g, -iy, -ix - 1)
            + fy * (1 - fx) * _shift_int(g, -iy - 1, -ix)
            + fy * fx * _shift_int(g, -iy - 1, -ix - 1)
        )
        d_fy = (1 - fx) * (s10 - s00) + fx * (s11 - s01)
        d_fx = (1 - fy) * (s01 - s00) + fy * (s11 - s10)
        # sy = -dy, so d/d(dy) = -d/d(fy)
        gs = np.array([-(g * d_fy).sum(), -(g * d_fx).sum()])
        return gi, gs

    return _make("affine_translate", out, (image, shift), bw)


# -- backward -------------------------------------------------------------
class Tape:
    """Topologically ordered record of the nodes that produced ``loss``."""

    def __init__(self, loss: Tensor):
        self.loss = loss
        self.nodes: list[Tensor] = []
        seen: set[int] = set()
        stack_: list[tuple[Tensor, bool]] = [(loss, False)]
        while stack_:
            node, done = stack_.pop()
            if done:
                self.nodes.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack_.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack_.append((p, False))
        self._ids = seen

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._ids

    @property
    def leaves(self) -> list[Tensor]:
        return [n for n in self.nodes if n.is_leaf]

    def backward(self) -> dict[Tensor, Tensor]:
        grads: dict[int, np.ndarray] = {id(self.loss): np.ones_like(self.loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None) if not node.is_leaf else grads.get(id(node))
            if g is None or node.is_leaf:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pg = np.asarray(pg, dtype=np.float64).reshape(parent.shape)
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg
        result = {}
        for leaf in self.leaves:
            g = grads.get(id(leaf), np.zeros(leaf.shape))
            leaf.grad = g
            result[leaf] = Tensor(g)
        return result


def backward(loss: Tensor) -> dict[Tensor, Tensor]:
    """Gradients of a scalar ``loss`` for every leaf that requires grad.

    Leaf ``.grad`` fields are overwritten, never accumulated.
    """
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise GradientError(f"backward: loss must be a scalar tensor, got shape {getattr(loss, 'shape', None)}")
    return Tape(loss).backward()


def grad(loss: Tensor, wrt: Iterable[Tensor]) -> list[np.ndarray]:
    """Gradients of ``loss`` with respect to the given leaves, as arrays."""
    wrt = list(wrt)
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise GradientError("grad: loss must be a scalar tensor")
    tape = Tape(loss)
    for w in wrt:
        if w not in tape:
            raise GradientError(f"grad: leaf {w!r} is not on the tape of this loss")
    tape.backward()
    return [w.grad.copy() for w in wrt]


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_index: tuple[int, ...]
    passed: bool
    analytic: np.ndarray
    numeric: np.ndarray


def check_gradient(f: Callable[[Tensor], Tensor], p, h: float = 1e-3, tol: float = 1e-5,
                   indices: Iterable[tuple[int, ...]] | None = None) -> GradCheckReport:
    """Compare reverse-mode gradients of ``f`` at ``p`` with central differences.

    ``indices`` restricts the probes to a subset of coordinates; by default all
    of them are probed.
    """
    if h <= 0:
        raise ValueError("check_gradient: step must be positive")
    base = np.array(p.data if isinstance(p, Tensor) else p, dtype=np.float64)
    leaf = Tensor(base.copy(), requires_grad=True)
    out = f(leaf)
    if out.size != 1:
        raise GradientError("check_gradient: f must return a scalar")
    if out.requires_grad:
        (analytic,) = grad(out, [leaf])
    else:
        analytic = np.zeros(base.shape)
    probes = list(np.ndindex(base.shape)) if indices is None else [tuple(np.atleast_1d(i)) for i in indices]
    numeric = np.zeros(base.shape)
    for idx in probes:
        vals = []
        for sign in (1.0, -1.0):
            probe = base.copy()
            probe[idx] += sign * h
            v = f(Tensor(probe)).item()
            if not np.isfinite(v):
                raise NonFiniteError(f"check_gradient: f non-finite at index {idx}, offset {sign * h:+g}")
            vals.append(v)
        numeric[idx] = (vals[0] - vals[1]) / (2 * h)
    worst, worst_idx = 0.0, probes[0] if probes else ()
    for idx in probes:
        a, n = analytic[idx], numeric[idx]
        rel = abs(a - n) / max(abs(a), abs(n), 1e-8)
        if rel > worst:
            worst, worst_idx = rel, idx
    return GradCheckReport(worst, tuple(int(i) for i in worst_idx), worst <= tol, analytic, numeric)
