"""Dense float64 tensors with a reverse-mode gradient tape.

Everything in this repo that needs a derivative runs through the Tensor
class below. The design is deliberately small: row-major float64 buffers,
a per-forward-pass tape (freed after backward), and exactly the operations
the models in this package use. Non-finite values are treated as an error
state and rejected at every op boundary.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "DimensionError",
    "NumericError",
    "ContractError",
    "forward_op",
    "matmul",
    "add",
    "mul",
    "layer_norm",
    "softmax",
    "gelu",
    "concat",
    "reduce_mean",
    "reduce_sum",
    "gaussian_logpdf",
    "OptimizerState",
    "adamw_step",
    "SeededRng",
]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


class DimensionError(ValueError):
    """Input shapes incompatible with the requested operation."""


class NumericError(ArithmeticError):
    """A value became NaN/Inf where only finite values are allowed."""


class ContractError(RuntimeError):
    """An operation was called outside its documented contract."""


ArrayLike = Union[np.ndarray, float, int, Sequence]


def _as_array(data: ArrayLike) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return arr


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")


class Tensor:
    """A float64 array plus an optional slot on the gradient tape.

    Tensors are immutable after creation except for the ``grad`` buffer.
    Ops record a backward closure only when some input requires grad, so
    frozen-parameter forward passes run the identical numpy arithmetic
    with zero tape overhead.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        arr = _as_array(data)
        _check_finite(arr, "tensor data")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: Tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __sub__(self, other):
        return add(self, mul(_lift(other), Tensor(-1.0)))

    def __rsub__(self, other):
        return add(_lift(other), mul(self, Tensor(-1.0)))

    def __truediv__(self, other):
        other = _lift(other)
        return mul(self, power(other, -1.0))

    def __rtruediv__(self, other):
        return mul(_lift(other), power(self, -1.0))

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def __pow__(self, p):
        return power(self, float(p))

    def __getitem__(self, idx):
        return tensor_slice(self, idx)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Tuple[Tensor, ...], backward) -> Tensor:
    _check_finite(data, "op result")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum gradient g down to the given (broadcast-source) shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- arithmetic primitives ---------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise DimensionError(str(exc)) from None

    def backward(g):
        if a.requires_grad or a._backward:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad or b._backward:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise DimensionError(str(exc)) from None

    def backward(g):
        if a.requires_grad or a._backward:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad or b._backward:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; 2-D or batched N-D with matching leading dims."""
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul operands must have ndim >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad or a._backward:
            ga = g @ b.data.swapaxes(-1, -2)
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad or b._backward:
            gb = a.data.swapaxes(-1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.shape))

    return _make(data, (a, b), backward)


def power(a: Tensor, p: float) -> Tensor:
    a = _lift(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = a.data**p

    def backward(g):
        a._accumulate(g * p * a.data ** (p - 1.0))

    return _make(data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    a = _lift(a)
    data = np.exp(a.data)

    def backward(g):
        a._accumulate(g * data)

    return _make(data, (a,), backward)


def log(a: Tensor) -> Tensor:
    a = _lift(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)

    def backward(g):
        a._accumulate(g / a.data)

    return _make(data, (a,), backward)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    a = _lift(a)
    cdf = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    data = a.data * cdf

    def backward(g):
        pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT2PI
        a._accumulate(g * (cdf + a.data * pdf))

    return _make(data, (a,), backward)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; ties route the gradient to the first argument."""
    a, b = _lift(a), _lift(b)
    take_a = a.data >= b.data
    data = np.where(take_a, a.data, b.data)

    def backward(g):
        if a.requires_grad or a._backward:
            a._accumulate(_unbroadcast(np.where(take_a, g, 0.0), a.shape))
        if b.requires_grad or b._backward:
            b._accumulate(_unbroadcast(np.where(take_a, 0.0, g), b.shape))

    return _make(data, (a, b), backward)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; ties route the gradient to the first argument."""
    a, b = _lift(a), _lift(b)
    take_a = a.data <= b.data
    data = np.where(take_a, a.data, b.data)

    def backward(g):
        if a.requires_grad or a._backward:
            a._accumulate(_unbroadcast(np.where(take_a, g, 0.0), a.shape))
        if b.requires_grad or b._backward:
            b._accumulate(_unbroadcast(np.where(take_a, 0.0, g), b.shape))

    return _make(data, (a, b), backward)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    return minimum(maximum(a, Tensor(lo)), Tensor(hi))


# -- shape primitives --------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    a = _lift(a)
    data = a.data.reshape(shape)
    old = a.shape

    def backward(g):
        a._accumulate(g.reshape(old))

    return _make(data, (a,), backward)


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    a = _lift(a)
    data = a.data.swapaxes(ax1, ax2)

    def backward(g):
        a._accumulate(g.swapaxes(ax1, ax2))

    return _make(data, (a,), backward)


def tensor_slice(a: Tensor, idx) -> Tensor:
    a = _lift(a)
    data = a.data[idx]
    if np.shares_memory(data, a.data):
        data = data.copy()

    basic = isinstance(idx, (int, slice)) or (
        isinstance(idx, tuple) and all(isinstance(i, (int, slice)) for i in idx)
    )

    def backward(g):
        buf = np.zeros_like(a.data)
        if basic:
            buf[idx] += g
        else:
            np.add.at(buf, idx, g)
        a._accumulate(buf)

    return _make(data, (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad or t._backward:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _make(data, tuple(tensors), backward)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape).copy() if np.ndim(g) else np.full(a.shape, g))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gg, a.shape).copy())

    return _make(np.asarray(data), (a,), backward)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    if axis is None:
        n = a.size
    else:
        n = a.shape[axis] if isinstance(axis, int) else int(np.prod([a.shape[ax] for ax in axis]))
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), Tensor(1.0 / n))


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather; backward scatter-adds into the table."""
    table = _lift(table)
    ids = np.asarray(ids, dtype=np.int64)
    data = table.data[ids]

    def backward(g):
        buf = np.zeros_like(table.data)
        np.add.at(buf, ids, g)
        table._accumulate(buf)

    return _make(data, (table,), backward)


# -- fused neural-net primitives ---------------------------------------------


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    x, gain, bias = _lift(x), _lift(gain), _lift(bias)
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise DimensionError("layer_norm gain/bias must match the last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = gain.data * xhat + bias.data

    def backward(g):
        if gain.requires_grad or gain._backward:
            gain._accumulate((g * xhat).reshape(-1, x.shape[-1]).sum(axis=0))
        if bias.requires_grad or bias._backward:
            bias._accumulate(g.reshape(-1, x.shape[-1]).sum(axis=0))
        if x.requires_grad or x._backward:
            gy = g * gain.data
            d = x.shape[-1]
            gx = inv * (gy - gy.mean(axis=-1, keepdims=True) - xhat * (gy * xhat).mean(axis=-1, keepdims=True))
            del d
            x._accumulate(gx)

    return _make(data, (x, gain, bias), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = _lift(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        x._accumulate(data * (g - dot))

    return _make(data, (x,), backward)


def gaussian_logpdf(x: Tensor, mu: Tensor, sigma: Tensor) -> Tensor:
    """Elementwise log N(x; mu, sigma^2)."""
    x, mu, sigma = _lift(x), _lift(mu), _lift(sigma)
    if np.any(sigma.data <= 0):
        raise NumericError("gaussian_logpdf requires sigma > 0")
    z = (x.data - mu.data) / sigma.data
    data = -_HALF_LOG_2PI - np.log(sigma.data) - 0.5 * z * z

    def backward(g):
        if x.requires_grad or x._backward:
            x._accumulate(_unbroadcast(-g * z / sigma.data, x.shape))
        if mu.requires_grad or mu._backward:
            mu._accumulate(_unbroadcast(g * z / sigma.data, mu.shape))
        if sigma.requires_grad or sigma._backward:
            sigma._accumulate(_unbroadcast(g * (z * z - 1.0) / sigma.data, sigma.shape))

    return _make(data, (x, mu, sigma), backward)


_OPS: Dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "layer_norm": layer_norm,
    "softmax": softmax,
    "gelu": gelu,
    "concat": lambda *ts, axis=0: concat(ts, axis=axis),
    "slice": tensor_slice,
    "reduce_mean": reduce_mean,
    "reduce_sum": reduce_sum,
    "gaussian_logpdf": gaussian_logpdf,
}


def forward_op(op_kind: str, *inputs, **kwargs) -> Tensor:
    """Dispatch one named op. The named functions are the primary API;
    this exists so callers can drive ops from data."""
    if op_kind not in _OPS:
        raise ContractError(f"unknown op_kind {op_kind!r}")
    return _OPS[op_kind](*inputs, **kwargs)


# -- backward pass -----------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Reverse sweep from a scalar loss. Leaf grads accumulate across
    calls until zeroed. The tape is freed afterwards."""
    if loss.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.shape}")
    topo: List[Tensor] = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss._accumulate(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    # free the tape; keep leaf grads
    for node in reversed(topo):
        if node._backward is not None:
            node.grad = None
            node._parents = ()
            node._backward = None


# -- optimizer ---------------------------------------------------------------


@dataclass
class OptimizerState:
    """Adam moments plus hyperparameters (decoupled weight decay)."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    def buffers(self) -> Dict[str, np.ndarray]:
        out = {}
        for k, v in self.first_moment.items():
            out[f"m1.{k}"] = v
        for k, v in self.second_moment.items():
            out[f"m2.{k}"] = v
        return out


def adamw_step(params: Dict[str, Tensor], grads: Dict[str, np.ndarray], state: OptimizerState) -> OptimizerState:
    """One Adam update with decoupled weight decay, applied in place."""
    if state.lr <= 0:
        raise ContractError("adamw_step requires lr > 0")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name in sorted(params):
        p = params[name]
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ContractError(f"grad shape {g.shape} != param shape {p.shape} for {name}")
        m1 = state.first_moment.setdefault(name, np.zeros_like(p.data))
        m2 = state.second_moment.setdefault(name, np.zeros_like(p.data))
        m1 *= state.beta1
        m1 += (1.0 - state.beta1) * g
        m2 *= state.beta2
        m2 += (1.0 - state.beta2) * (g * g)
        update = (m1 / bc1) / (np.sqrt(m2 / bc2) + state.eps)
        if state.weight_decay:
            update = update + state.weight_decay * p.data
        p.data = p.data - state.lr * update
        _check_finite(p.data, f"updated parameter {name}")
    return state


# -- deterministic RNG -------------------------------------------------------


class SeededRng:
    """Counter-based (Philox) random stream with indexed substreams.

    Substreams are derived by hashing the parent key with the child index,
    so a fixed (seed, index path) names the same stream on any platform
    and under any worker partitioning.
    """

    def __init__(self, seed: int, _key: Optional[int] = None):
        self.seed = int(seed)
        self.key = int(_key) if _key is not None else int(seed)
        self._gen = np.random.Generator(np.random.Philox(key=self.key))

    def substream(self, index: int) -> "SeededRng":
        h = hashlib.sha256(f"{self.key:x}/{int(index)}".encode()).digest()
        child_key = int.from_bytes(h[:16], "little")
        return SeededRng(self.seed, _key=child_key)

    def normal(self, shape=None) -> np.ndarray:
        out = self._gen.standard_normal(size=shape, dtype=np.float64)
        return out

    def uniform(self, low: float = 0.0, high: float = 1.0, shape=None) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=None):
        return self._gen.integers(low, high, size=shape)

    def choice(self, seq):
        return seq[int(self._gen.integers(0, len(seq)))]

    def shuffle(self, seq: list) -> None:
        self._gen.shuffle(seq)

    def get_state(self) -> dict:
        st = self._gen.bit_generator.state
        return {
            "seed": self.seed,
            "key": f"{self.key:x}",
            "counter": [int(v) for v in st["state"]["counter"]],
            "buffer": [int(v) for v in st["buffer"]],
            "buffer_pos": int(st["buffer_pos"]),
            "has_uint32": int(st["has_uint32"]),
            "uinteger": int(st["uinteger"]),
        }

    def set_state(self, state: dict) -> None:
        self.seed = int(state["seed"])
        self.key = int(state["key"], 16)
        self._gen = np.random.Generator(np.random.Philox(key=self.key))
        st = self._gen.bit_generator.state
        st["state"]["counter"] = np.array(state["counter"], dtype=np.uint64)
        st["buffer"] = np.array(state["buffer"], dtype=np.uint64)
        st["buffer_pos"] = state["buffer_pos"]
        st["has_uint32"] = state["has_uint32"]
        st["uinteger"] = state["uinteger"]
        self._gen.bit_generator.state = st

    @staticmethod
    def from_state(state: dict) -> "SeededRng":
        rng = SeededRng(int(state["seed"]), _key=int(state["key"], 16))
        rng.set_state(state)
        return rng
