"""Minimal deterministic reverse-mode autodiff over dense float64 arrays.

Every operation records an adjoint closure on its output tensor; the
reverse sweep walks reachable nodes once, in reverse construction order
(a valid topological order since outputs are created after their inputs),
accumulating gradients additively.  All values are 64-bit; reductions
delegate to numpy's fixed pairwise order, so forward values and gradients
are bit-identical across runs in single-threaded mode.
"""

from __future__ import annotations

import itertools
import struct

import numpy as np

_uid = itertools.count()
_debug_checks = False


def set_debug_checks(flag: bool) -> None:
    """Enable NaN/Inf checking after every forward op (slow)."""
    global _debug_checks
    _debug_checks = bool(flag)


class TapeError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_uid")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self._uid = next(_uid)
        if _debug_checks and not np.all(np.isfinite(self.data)):
            raise FloatingPointError("non-finite values in forward result")

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def const(data) -> Tensor:
    return Tensor(data)


def _node(data, parents, backward) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward=backward)
    return Tensor(data)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def backward(loss: Tensor) -> None:
    """Reverse sweep from a scalar loss; the visited tape is cleared."""
    if loss.data.size != 1:
        raise TapeError("backward requires a scalar loss")
    if not loss.requires_grad:
        raise TapeError("backward on a detached tensor (no recorded tape)")
    seen = {id(loss): loss}
    stack = [loss]
    order = []
    while stack:
        node = stack.pop()
        order.append(node)
        for p in node._parents:
            if id(p) not in seen and p._backward is not None:
                seen[id(p)] = p
                stack.append(p)
    order.sort(key=lambda t: t._uid, reverse=True)
    loss.grad = np.ones_like(loss.data)
    for node in order:
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
            node._backward = None
            node._parents = ()


# ---------------------------------------------------------------------------
# primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _node(out_data, (a, b), bw)


def add_const(a: Tensor, c) -> Tensor:
    c = np.asarray(c, dtype=np.float64)
    return _node(a.data + c, (a,), lambda g: _accum(a, _unbroadcast(g, a.data.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(out_data, (a, b), bw)


def mul_const(a: Tensor, c) -> Tensor:
    c = np.asarray(c, dtype=np.float64)
    return _node(a.data * c, (a,), lambda g: _accum(a, _unbroadcast(g * c, a.data.shape)))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _node(a.data * s, (a,), lambda g: _accum(a, g * s))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.data.shape} x {b.data.shape}")
    out_data = a.data @ b.data

    def bw(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _node(out_data, (a, b), bw)


def transpose(a: Tensor) -> Tensor:
    return _node(a.data.T, (a,), lambda g: _accum(a, g.T))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bw(g):
        _accum(a, g * mask)

    return _node(a.data * mask, (a,), bw)


def concat(parts: list[Tensor], axis: int = 1) -> Tensor:
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            _accum(p, piece)

    return _node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), bw)


def sum_all(a: Tensor) -> Tensor:
    return _node(a.data.sum(), (a,), lambda g: _accum(a, np.full(a.data.shape, float(g))))


def sum_axis0(a: Tensor) -> Tensor:
    def bw(g):
        _accum(a, np.broadcast_to(g, a.data.shape))

    return _node(a.data.sum(axis=0), (a,), bw)


def sum_axis1(a: Tensor) -> Tensor:
    def bw(g):
        _accum(a, np.broadcast_to(g[:, None], a.data.shape))

    return _node(a.data.sum(axis=1), (a,), bw)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size

    def bw(g):
        _accum(a, np.full(a.data.shape, float(g) / n))

    return _node(a.data.mean(), (a,), bw)


def mean_axis0(a: Tensor) -> Tensor:
    n = a.data.shape[0]

    def bw(g):
        _accum(a, np.broadcast_to(g / n, a.data.shape))

    return _node(a.data.mean(axis=0), (a,), bw)


def log(a: Tensor, floor: float | None = None) -> Tensor:
    x = a.data if floor is None else np.maximum(a.data, floor)
    alive = np.ones_like(a.data) if floor is None else (a.data >= floor).astype(np.float64)

    def bw(g):
        _accum(a, g * alive / x)

    return _node(np.log(x), (a,), bw)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def bw(g):
        _accum(a, g * out_data)

    return _node(out_data, (a,), bw)


def softmax_rows(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = (g * out_data).sum(axis=-1, keepdims=True)
        _accum(a, out_data * (g - dot))

    return _node(out_data, (a,), bw)


def column(a: Tensor, j: int) -> Tensor:
    def bw(g):
        full = np.zeros(a.data.shape)
        full[:, j] = g
        _accum(a, full)

    return _node(a.data[:, j], (a,), bw)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    return _node(a.data.reshape(shape), (a,), lambda g: _accum(a, g.reshape(a.data.shape)))


def segment_sum(a: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of ``a`` into ``num_segments`` buckets."""
    out_data = np.zeros((num_segments,) + a.data.shape[1:])
    np.add.at(out_data, segments, a.data)

    def bw(g):
        _accum(a, g[segments])

    return _node(out_data, (a,), bw)


class AdjacencyOp:
    """Fixed sparse aggregation matrix with its transpose, used as a constant."""

    def __init__(self, csr):
        self.mat = csr.tocsr()
        self.mat_t = csr.T.tocsr()

    @property
    def shape(self):
        return self.mat.shape


def neighbor_sum(adj: AdjacencyOp, a: Tensor) -> Tensor:
    """Rows of the output sum the input rows of each target's neighbor set."""
    if adj.shape[1] != a.data.shape[0]:
        raise ValueError(f"neighbor_sum shape mismatch {adj.shape} x {a.data.shape}")
    out_data = adj.mat @ a.data

    def bw(g):
        _accum(a, adj.mat_t @ g)

    return _node(out_data, (a,), bw)


def l2_normalize_rows(a: Tensor, min_norm: float = 1e-12) -> Tensor:
    norms = np.sqrt((a.data * a.data).sum(axis=-1, keepdims=True))
    if np.any(norms < min_norm):
        raise ValueError("cannot normalize a row with near-zero norm")
    out_data = a.data / norms

    def bw(g):
        dot = (g * out_data).sum(axis=-1, keepdims=True)
        _accum(a, (g - out_data * dot) / norms)

    return _node(out_data, (a,), bw)


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity of two vectors, or rowwise for matching 2-D shapes."""
    na = np.sqrt((a.data * a.data).sum(axis=-1, keepdims=True))
    nb = np.sqrt((b.data * b.data).sum(axis=-1, keepdims=True))
    if np.any(na < 1e-12) or np.any(nb < 1e-12):
        raise ValueError("cosine similarity of a near-zero vector")
    ua, ub = a.data / na, b.data / nb
    out_data = (ua * ub).sum(axis=-1)

    def bw(g):
        g = np.asarray(g)[..., None]
        _accum(a, g * (ub - ua * (ua * ub).sum(axis=-1, keepdims=True)) / na)
        _accum(b, g * (ua - ub * (ua * ub).sum(axis=-1, keepdims=True)) / nb)

    return _node(out_data, (a, b), bw)


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running: tuple[np.ndarray, np.ndarray],
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
    update_running: bool = True,
) -> Tensor:
    """Column-wise batch normalization.

    Training mode uses batch statistics (population variance) and needs at
    least two rows; eval mode applies the running statistics.  ``running``
    is a (mean, var) pair mutated in place when ``update_running`` is set.
    """
    n = x.data.shape[0]
    if training:
        if n < 2:
            raise ValueError("batchnorm in training mode requires batch >= 2")
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        if update_running:
            running[0][:] = (1 - momentum) * running[0] + momentum * mu
            running[1][:] = (1 - momentum) * running[1] + momentum * var
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu) * inv
        out_data = xhat * gamma.data + beta.data

        def bw(g):
            _accum(gamma, (g * xhat).sum(axis=0))
            _accum(beta, g.sum(axis=0))
            if x.requires_grad:
                gx = g * gamma.data
                dxhat_sum = gx.sum(axis=0)
                dxhat_dot = (gx * xhat).sum(axis=0)
                _accum(x, inv * (gx - dxhat_sum / n - xhat * dxhat_dot / n))

        return _node(out_data, (x, gamma, beta), bw)

    inv = 1.0 / np.sqrt(running[1] + eps)
    xhat = (x.data - running[0]) * inv
    out_data = xhat * gamma.data + beta.data

    def bw_eval(g):
        _accum(gamma, (g * xhat).sum(axis=0))
        _accum(beta, g.sum(axis=0))
        _accum(x, g * gamma.data * inv)

    return _node(out_data, (x, gamma, beta), bw_eval)


# ---------------------------------------------------------------------------
# parameters, optimizers, checkpoints

_CKPT_MAGIC = b"CLSSL001"


class ParameterStore:
    """Named float64 parameter tensors with gradient slots, plus buffers.

    Buffers hold non-trainable state (batchnorm running statistics) and are
    saved alongside parameters.
    """

    def __init__(self, name: str = ""):
        self.name = name
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}

    def add(self, name: str, array, trainable: bool = True) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(array, dtype=np.float64), requires_grad=trainable)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        for name in self.names():
            yield name, self._params[name]

    def num_values(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for name, t in self.items():
            if t.grad is None:
                raise TapeError(f"missing gradient for parameter {name!r}")
            out[name] = t.grad
        return out

    def std(self, name: str) -> float:
        return float(self._params[name].data.std())

    def buffer(self, name: str, init=None) -> np.ndarray:
        if name not in self._buffers:
            if init is None:
                raise KeyError(f"missing buffer {name!r}")
            self._buffers[name] = np.array(init, dtype=np.float64)
        return self._buffers[name]

    def buffers(self) -> dict[str, np.ndarray]:
        return self._buffers

    def clone(self, name: str | None = None) -> "ParameterStore":
        out = ParameterStore(name if name is not None else self.name)
        for pname, t in self._params.items():
            out.add(pname, t.data.copy())
        for bname, b in self._buffers.items():
            out._buffers[bname] = b.copy()
        return out

    def assign_from(self, other: "ParameterStore") -> None:
        if set(self._params) != set(other._params):
            raise KeyError("parameter name mismatch in assign_from")
        for name, t in self._params.items():
            t.data[...] = other._params[name].data
        for name, b in other._buffers.items():
            self._buffers.setdefault(name, np.zeros_like(b))[...] = b

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for name in self.names():
            h.update(name.encode())
            h.update(self._params[name].data.tobytes())
        for name in sorted(self._buffers):
            h.update(name.encode())
            h.update(self._buffers[name].tobytes())
        return h.hexdigest()

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(_CKPT_MAGIC)
            entries = [(0, n, self._params[n].data) for n in self.names()]
            entries += [(1, n, self._buffers[n]) for n in sorted(self._buffers)]
            fh.write(struct.pack("<I", len(entries)))
            for kind, name, arr in entries:
                raw = name.encode("utf-8")
                fh.write(struct.pack("<BH", kind, len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<B", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}q", *arr.shape))
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str, name: str = "") -> "ParameterStore":
        out = cls(name)
        with open(path, "rb") as fh:
            magic = fh.read(len(_CKPT_MAGIC))
            if magic != _CKPT_MAGIC:
                raise ValueError(f"{path}: not a checkpoint file (bad header)")
            (count,) = struct.unpack("<I", fh.read(4))
            for _ in range(count):
                kind, nlen = struct.unpack("<BH", fh.read(3))
                pname = fh.read(nlen).decode("utf-8")
                (ndim,) = struct.unpack("<B", fh.read(1))
                shape = struct.unpack(f"<{ndim}q", fh.read(8 * ndim))
                size = int(np.prod(shape)) if ndim else 1
                arr = np.frombuffer(fh.read(8 * size), dtype="<f8").reshape(shape).copy()
                if kind == 0:
                    out.add(pname, arr)
                else:
                    out._buffers[pname] = arr
        return out


class Adam:
    """Adaptive-moment optimizer with bias correction, epsilon 1e-8."""

    def __init__(self, lr: float = 1e-3, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, store: ParameterStore) -> None:
        grads = store.grads()
        self.t += 1
        b1, b2 = self.betas
        for name, t in store.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(t.data))
            v = self.v.setdefault(name, np.zeros_like(t.data))
            m[...] = b1 * m + (1 - b1) * g
            v[...] = b2 * v + (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            t.data[...] = t.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def sgd_lookahead(store: ParameterStore, lr: float, name: str | None = None) -> ParameterStore:
    """New store one plain gradient step from ``store``; original untouched."""
    grads = store.grads()
    out = ParameterStore(name if name is not None else store.name)
    for pname, t in store.items():
        out.add(pname, t.data - lr * grads[pname])
    for bname, b in store.buffers().items():
        out._buffers[bname] = b.copy()
    return out
