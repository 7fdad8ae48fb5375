"""A small reverse-mode autodiff engine on numpy arrays.

Every op records its parents and a backward closure on the output tensor;
``Tensor.backward`` walks the recorded graph in reverse topological order.
Gradients accumulate on leaf tensors (``requires_grad=True`` with no parents)
until ``zero_grad`` is called.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

DTYPE = np.float64
_node_ids = itertools.count()


class ShapeError(ValueError):
    pass


def _as_array(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=DTYPE)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "node_id", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, _parents=(), _backward=None):
        self.data = np.array(data, dtype=DTYPE) if not isinstance(data, np.ndarray) or data.dtype != DTYPE else data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self.node_id = next(_node_ids)
        self._parents: tuple[Tensor, ...] = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self, grad=None):
        """Propagate d(self)/d(leaf) into every reachable leaf's ``.grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = np.broadcast_to(_as_array(grad), self.shape).astype(DTYPE)

        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if node.node_id in seen:
                continue
            seen.add(node.node_id)
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and p.node_id not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {self.node_id: grad}
        for node in reversed(order):
            g = grads.pop(node.node_id, None)
            if g is None:
                continue
            if not node._parents:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if pg.shape != parent.shape:
                    raise ShapeError(f"internal: gradient shape {pg.shape} != {parent.shape}")
                if parent.node_id in grads:
                    grads[parent.node_id] = grads[parent.node_id] + pg
                else:
                    grads[parent.node_id] = pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    @property
    def T(self):
        return transpose(self)


def tensor(x, requires_grad=False, name=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, requires_grad, name)


def _make(data, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, None, tuple(parents), backward)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _check_broadcast("add", a, b)
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _check_broadcast("sub", a, b)
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _check_broadcast("mul", a, b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _make(out, (x,), lambda g: (g * (1.0 - out * out),))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


# -- shape / reduction ------------------------------------------------------

def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out, (x,), back)


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis, keepdims), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got {x.shape}")
    return _make(x.data.T.copy(), (x,), lambda g: (g.T.copy(),))


def index(x: Tensor, key) -> Tensor:
    """Basic or integer-array indexing; repeated indices accumulate gradient."""
    out = x.data[key]
    parts = key if isinstance(key, tuple) else (key,)
    fancy = any(isinstance(k, (list, np.ndarray)) for k in parts)

    def back(g):
        full = np.zeros_like(x.data)
        if fancy:
            np.add.at(full, key, g)
        else:
            full[key] += g
        return (full,)

    return _make(np.array(out, dtype=DTYPE), (x,), back)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {[t.shape for t in tensors]}: {exc}") from None
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def back(g):
        return tuple(np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:]))

    return _make(out, tensors, back)


def matmul(a, b) -> Tensor:
    """(..., k) @ (k, m). The right operand must be a matrix."""
    a, b = tensor(a), tensor(b)
    if b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    out = a.data @ b.data

    def back(g):
        ga = g @ b.data.T
        a2 = a.data.reshape(-1, a.shape[-1])
        gb = a2.T @ g.reshape(-1, b.shape[1])
        return ga, gb

    return _make(out, (a, b), back)


def aggregate(adj, x: Tensor) -> Tensor:
    """Sparse neighbor sum ``adj @ x`` for a scipy sparse (n, n) matrix."""
    if adj.shape[1] != x.shape[0]:
        raise ShapeError(f"aggregate: adjacency {adj.shape} vs features {x.shape}")
    out = np.asarray(adj @ x.data)
    adj_t = adj.T.tocsr()
    return _make(out, (x,), lambda g: (np.asarray(adj_t @ g),))


# -- layers as functions ------------------------------------------------------

def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {w.shape}")
    y = matmul(x, w)
    return y if b is None else add(y, b)


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Valid 1-D convolution. x: (B, L, C_in), w: (K, C_in, C_out) -> (B, L-K+1, C_out).

    The kernel is applied flipped (true convolution): out[t] = sum_k w[k] x[t+K-1-k].
    """
    if x.ndim != 3 or w.ndim != 3 or x.shape[2] != w.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with kernel {w.shape}")
    k = w.shape[0]
    bsz, length, c_in = x.shape
    l_out = length - k + 1
    if l_out < 1:
        raise ShapeError(f"conv1d: input length {length} shorter than kernel {k}")
    # cols[b, t, j, c] = x[b, t + j, c]; flipped kernel row j = w[K-1-j]
    cols = np.stack([x.data[:, j : j + l_out, :] for j in range(k)], axis=2)
    wf = w.data[::-1].reshape(k * c_in, -1)
    out = cols.reshape(bsz, l_out, k * c_in) @ wf

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        gw = (cols.reshape(-1, k * c_in).T @ g2).reshape(k, c_in, -1)[::-1].copy()
        gcols = (g @ wf.T).reshape(bsz, l_out, k, c_in)
        gx = np.zeros_like(x.data)
        for j in range(k):
            gx[:, j : j + l_out, :] += gcols[:, :, j, :]
        return gx, gw

    y = _make(out, (x, w), back)
    return y if b is None else add(y, b)


def max_pool1d(x: Tensor, width: int) -> Tensor:
    """Non-overlapping max pooling along axis 1 of (B, L, C); tail shorter than width dropped."""
    if x.ndim != 3:
        raise ShapeError(f"max_pool1d expects (B, L, C), got {x.shape}")
    bsz, length, ch = x.shape
    l_out = length // width
    if l_out < 1:
        raise ShapeError(f"max_pool1d: length {length} shorter than width {width}")
    win = x.data[:, : l_out * width, :].reshape(bsz, l_out, width, ch)
    arg = win.argmax(axis=2)
    out = np.take_along_axis(win, arg[:, :, None, :], axis=2)[:, :, 0, :]

    def back(g):
        gw = np.zeros_like(win)
        np.put_along_axis(gw, arg[:, :, None, :], g[:, :, None, :], axis=2)
        gx = np.zeros_like(x.data)
        gx[:, : l_out * width, :] = gw.reshape(bsz, l_out * width, ch)
        return (gx,)

    return _make(out, (x,), back)


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over axis 1 of (B, T, D) counting only positions where mask (B, T) is 1."""
    mask = np.asarray(mask, dtype=DTYPE)
    denom = np.maximum(mask.sum(axis=1, keepdims=True), 1.0)
    weights = (mask / denom)[:, :, None]
    out = (x.data * weights).sum(axis=1)
    return _make(out, (x,), lambda g: (g[:, None, :] * weights,))


def bce_loss(pred: Tensor, target, clamp: float = 1e-7) -> Tensor:
    """Summed binary cross-entropy over every (sample, label) cell.

    Probabilities are clamped to [clamp, 1-clamp]; the backward pass treats
    the clamp as identity so saturated outputs still receive a gradient.
    """
    y = np.asarray(_as_array(target), dtype=DTYPE)
    if y.shape != pred.shape:
        raise ShapeError(f"bce_loss: predictions {pred.shape} vs labels {y.shape}")
    p = np.clip(pred.data, clamp, 1.0 - clamp)
    loss = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).sum()
    return _make(np.array(loss), (pred,), lambda g: (g * (p - y) / (p * (1.0 - p)),))


# -- parametrized layers ------------------------------------------------------

def init_uniform(rng: np.random.Generator, shape, fan_in: int, name: str) -> Tensor:
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


class Module:
    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for key, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                out[key] = val
            elif isinstance(val, Module):
                out.update({f"{key}.{k}": v for k, v in val.parameters().items()})
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update({f"{key}.{i}.{k}": v for k, v in item.parameters().items()})
        return out

    def load_arrays(self, arrays: Mapping[str, np.ndarray]):
        params = self.parameters()
        missing = set(params) - set(arrays)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for name, p in params.items():
            if arrays[name].shape != p.shape:
                raise ShapeError(f"parameter {name}: stored {arrays[name].shape} vs model {p.shape}")
            p.data[...] = arrays[name]


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = init_uniform(rng, (d_in, d_out), d_in, "weight")
        self.bias = init_uniform(rng, (d_out,), d_in, "bias") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)


class Conv1d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator):
        self.weight = init_uniform(rng, (kernel, c_in, c_out), kernel * c_in, "weight")
        self.bias = init_uniform(rng, (c_out,), kernel * c_in, "bias")

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d(x, self.weight, self.bias)


class GRUCell(Module):
    """z = s(x Wz + h Uz + bz); r = s(x Wr + h Ur + br);
    n = tanh(x Wn + (r*h) Un + bn); h' = (1-z)*n + z*h. Gates packed as [z, r, n]."""

    def __init__(self, d_in: int, hidden: int, rng: np.random.Generator):
        self.hidden = hidden
        self.w_x = init_uniform(rng, (d_in, 3 * hidden), hidden, "w_x")
        self.w_h = init_uniform(rng, (hidden, 3 * hidden), hidden, "w_h")
        self.bias = init_uniform(rng, (3 * hidden,), hidden, "bias")

    def project(self, x: Tensor) -> Tensor:
        """Input projection for every step at once: (..., d_in) -> (..., 3H)."""
        return linear(x, self.w_x, self.bias)

    def step(self, xp: Tensor, h: Tensor) -> Tensor:
        hd = self.hidden
        hz = matmul(h, self.w_h[:, : 2 * hd])
        zr = sigmoid(add(xp[:, : 2 * hd], hz))
        z, r = zr[:, :hd], zr[:, hd:]
        n = tanh(add(xp[:, 2 * hd :], matmul(mul(r, h), self.w_h[:, 2 * hd :])))
        return add(n, mul(z, sub(h, n)))

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        return self.step(self.project(x), h)


def run_gru(cell: GRUCell, x: Tensor, mask: np.ndarray, reverse: bool = False) -> Tensor:
    """Run ``cell`` over (B, T, D); masked steps carry the previous state unchanged.

    Returns the hidden states (B, T, H) in original time order.
    """
    bsz, steps, _ = x.shape
    mask = np.asarray(mask, dtype=DTYPE)
    xp = cell.project(x)
    h = Tensor(np.zeros((bsz, cell.hidden)))
    outs: list[Tensor | None] = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        h_new = cell.step(xp[:, t, :], h)
        m = mask[:, t : t + 1]
        if m.all():
            h = h_new
        else:
            h = add(mul(h_new, m), mul(h, 1.0 - m))
        outs[t] = reshape(h, (bsz, 1, cell.hidden))
    return concat(outs, axis=1)


class BiGRU(Module):
    """Forward and time-reversed GRU passes, concatenated along features."""

    def __init__(self, d_in: int, hidden: int, rng: np.random.Generator):
        self.fwd = GRUCell(d_in, hidden, rng)
        self.bwd = GRUCell(d_in, hidden, rng)

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        return concat([run_gru(self.fwd, x, mask), run_gru(self.bwd, x, mask, reverse=True)], axis=2)


# -- optimization -------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-4
    decoupled: bool = False
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class NonFiniteGradient(FloatingPointError):
    pass


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState) -> Mapping[str, np.ndarray]:
    """One bias-corrected Adam update, in place on ``params``.

    L2 decay is added to the gradient unless ``state.decoupled`` is set, in
    which case it is applied directly to the weights (AdamW style).
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if state.weight_decay and not state.decoupled:
            g = g + state.weight_decay * p
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.weight_decay and state.decoupled:
            p -= state.lr * state.weight_decay * p
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


class ReduceOnPlateau:
    """Multiply the lr by ``rate`` once ``patience`` epochs pass without a new best loss."""

    def __init__(self, state: AdamState, rate: float = 0.5, patience: int = 20):
        if not 0.0 < rate < 1.0:
            raise ValueError("reduce rate must lie in (0, 1)")
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.state = state
        self.rate = rate
        self.patience = patience
        self.best = math.inf
        self.bad_epochs = 0

    def step(self, loss: float) -> float:
        if loss < self.best:
            self.best = loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs > self.patience:
                self.state.lr *= self.rate
                self.bad_epochs = 0
        return self.state.lr


# -- gradient checking ---------------------------------------------------------

def grad_check(fn: Callable[[], Tensor], inputs: Iterable[Tensor], eps: float = 1e-4) -> float:
    """Max relative error between backprop and central finite differences.

    ``fn`` must rebuild the scalar output from the current ``.data`` of
    ``inputs`` each time it is called.
    """
    inputs = list(inputs)
    for t in inputs:
        t.zero_grad()
    fn().backward()
    worst = 0.0
    for t in inputs:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = fn().item()
            flat[i] = orig - eps
            down = fn().item()
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    for t in inputs:
        t.zero_grad()
    return worst


# -- checkpoints ---------------------------------------------------------------

def save_arrays(prefix, arrays: Mapping[str, np.ndarray], meta: Mapping | None = None) -> tuple[Path, Path]:
    """Write ``<prefix>.json`` (names, shapes, offsets, meta) and ``<prefix>.bin`` (little-endian float32)."""
    prefix = Path(prefix)
    entries = []
    offset = 0
    chunks = []
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
        chunks.append(arr.tobytes())
    manifest = {"format": "gnnppi-tensors-v1", "dtype": "float32-le", "tensors": entries, "meta": dict(meta or {})}
    json_path = prefix.with_suffix(".json")
    bin_path = prefix.with_suffix(".bin")
    json_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    bin_path.write_bytes(b"".join(chunks))
    return json_path, bin_path


def load_arrays(prefix) -> tuple[dict[str, np.ndarray], dict]:
    prefix = Path(prefix)
    manifest = json.loads(prefix.with_suffix(".json").read_text())
    blob = np.frombuffer(prefix.with_suffix(".bin").read_bytes(), dtype="<f4")
    arrays = {}
    for entry in manifest["tensors"]:
        size = int(np.prod(entry["shape"]))
        chunk = blob[entry["offset"] : entry["offset"] + size]
        if chunk.size != size:
            raise ValueError(f"checkpoint blob truncated at tensor {entry['name']!r}")
        arrays[entry["name"]] = chunk.reshape(entry["shape"]).astype(DTYPE)
    return arrays, manifest.get("meta", {})
