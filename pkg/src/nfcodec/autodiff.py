"""Small reverse-mode autodiff engine over dense float64 numpy arrays.

Only the operators the cube generator and the training losses need are
provided. Every op records its parents and a backward closure on the output
tensor; :func:`backward` walks that graph in reverse topological order.

Convolutions use the (batch, channel, depth, height, width) layout and are
computed with im2col + ``tensordot``; transposed convolutions use the
matching col2im scatter, so the two are exact adjoints of each other.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .prng import SplitMix64

DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.ascontiguousarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple = ()
        self._backward = None
        self.name = name

    @classmethod
    def from_op(cls, data, parents, backward) -> "Tensor":
        """Build an op output. ``backward(g)`` returns one gradient (or None) per parent."""
        out = cls(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return Tensor.from_op(a.data + b.data, (a, b),
                          lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return Tensor.from_op(a.data - b.data, (a, b),
                          lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return Tensor.from_op(ad * bd, (a, b), bw)


def square(x: Tensor) -> Tensor:
    xd = x.data
    return Tensor.from_op(xd * xd, (x,), lambda g: (2.0 * g * xd,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g * out,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor.from_op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    # split by sign so neither branch overflows
    e = np.exp(-np.abs(xd))
    out = np.where(xd >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return Tensor.from_op(out, (x,), lambda g: (g * out * (1.0 - out),))


def softplus(x: Tensor) -> Tensor:
    xd = x.data
    out = np.logaddexp(0.0, xd)
    return Tensor.from_op(out, (x,), lambda g: (g * _sigmoid_np(xd),))


def _sigmoid_np(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = x.shape
    return Tensor.from_op(np.asarray(x.data.sum()), (x,),
                          lambda g: (np.broadcast_to(g, shape).copy(),))


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return Tensor.from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def gather(x: Tensor, index) -> Tensor:
    """Rows ``x[index]`` along the first axis; repeated indices accumulate on backward."""
    index = np.asarray(index, dtype=np.int64)
    shape = x.shape

    def bw(g):
        gx = np.zeros(shape, dtype=DTYPE)
        np.add.at(gx, index, g)
        return (gx,)

    return Tensor.from_op(x.data[index], (x,), bw)


def add_uniform_noise(x: Tensor, delta: float, rng: SplitMix64) -> Tensor:
    """x + U(-delta/2, delta/2); the noise is a constant for backward."""
    if delta == 0:
        return Tensor.from_op(x.data.copy(), (x,), lambda g: (g,))
    noise = (rng.uniform(x.shape) - 0.5) * delta
    return Tensor.from_op(x.data + noise, (x,), lambda g: (g,))


# ---------------------------------------------------------------- convolution

def _check5(x, what):
    if x.ndim != 5:
        raise ValueError(f"{what} must be rank-5 (N, C, D, H, W), got shape {x.shape}")


def _windows(xp: np.ndarray, k: int, stride: int) -> np.ndarray:
    """(N, C, Do, Ho, Wo, k, k, k) strided view of a padded input."""
    v = sliding_window_view(xp, (k, k, k), axis=(2, 3, 4))
    return v[:, :, ::stride, ::stride, ::stride]


def _scatter(col: np.ndarray, full, k: int, stride: int) -> np.ndarray:
    """col2im. col is (C, k, k, k, N, S, S, S), tap-major so every tap slice is contiguous.

    Returns (N, C) + full, each tap added at its strided output positions.
    """
    c, n, d, h, w = col.shape[0], col.shape[4], col.shape[5], col.shape[6], col.shape[7]
    out = np.zeros((c, n) + tuple(full), dtype=DTYPE)
    for a in range(k):
        for b in range(k):
            for e in range(k):
                out[:, :, a:a + stride * d:stride, b:b + stride * h:stride,
                    e:e + stride * w:stride] += col[:, a, b, e]
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3, 4))


def _pad(x, p):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p), (p, p)))


def _crop(x, p):
    if p == 0:
        return x
    return x[:, :, p:-p, p:-p, p:-p]


def conv3d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """Cross-correlation. w is (C_out, C_in, K, K, K)."""
    _check5(x.data, "input")
    _check5(w.data, "weight")
    cout, cin, k = w.shape[0], w.shape[1], w.shape[2]
    if x.shape[1] != cin or w.shape[2:] != (k, k, k):
        raise ValueError(f"conv3d shape mismatch: input {x.shape}, weight {w.shape}")
    if b is not None and b.shape != (cout,):
        raise ValueError(f"conv3d bias shape {b.shape}, expected ({cout},)")
    xp = _pad(x.data, padding)
    if any(s < k for s in xp.shape[2:]):
        raise ValueError(f"kernel {k} larger than padded input {xp.shape[2:]}")
    win = _windows(xp, k, stride)
    out = np.tensordot(win, w.data, axes=([1, 5, 6, 7], [1, 2, 3, 4]))
    out = out.transpose(0, 4, 1, 2, 3)
    if b is not None:
        out = out + b.data[None, :, None, None, None]
    out = np.ascontiguousarray(out)
    wd = w.data
    padded_shape = xp.shape[2:]

    def bw(g):
        gw = np.tensordot(g, win, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
        col = np.tensordot(wd, g, axes=([0], [1]))  # Cin, k, k, k, N, Do, Ho, Wo
        gx = _crop(_scatter(col, padded_shape, k, stride), padding)
        gb = g.sum(axis=(0, 2, 3, 4)) if b is not None else None
        return gx, gw, gb

    parents = (x, w, b) if b is not None else (x, w)
    return Tensor.from_op(out, parents, (lambda g: bw(g)) if b is not None
                          else (lambda g: bw(g)[:2]))


# kernel-4 / stride-2 / padding-1 transposed conv as 8 output phases of a 2^3 conv.
# Along one axis, output 2m + ph takes input taps j = m + ph - 1 + t (t = 0, 1 in the
# padded input) with kernel index 3 - 2t - ph.
_PHASE_TAP = np.array([[3, 2], [1, 0]])  # [t, ph]
_PX = _PHASE_TAP.reshape(2, 1, 1, 2, 1, 1)
_PY = _PHASE_TAP.reshape(1, 2, 1, 1, 2, 1)
_PZ = _PHASE_TAP.reshape(1, 1, 2, 1, 1, 2)


def _phase_weight(w):
    # (Ci, Co, 4, 4, 4) -> (Ci, tx, ty, tz, Co, px, py, pz)
    return np.ascontiguousarray(w[:, :, _PX, _PY, _PZ].transpose(0, 2, 3, 4, 1, 5, 6, 7))


def _phase_weight_grad(gw8, shape):
    gw = np.empty(shape, dtype=DTYPE)
    gw[:, :, _PX, _PY, _PZ] = gw8.transpose(0, 4, 1, 2, 3, 5, 6, 7)
    return gw


def _convT_k4s2p1(x, w, b):
    xd, wd = x.data, w.data
    n, S = xd.shape[0], xd.shape[2]
    if xd.shape[2:] != (S, S, S):
        return None
    cout = wd.shape[1]
    w8 = _phase_weight(wd)
    win = _windows(_pad(xd, 1), 2, 1)  # N, Ci, S+1, S+1, S+1, 2, 2, 2
    R = np.tensordot(win, w8, axes=([1, 5, 6, 7], [0, 1, 2, 3]))  # N, S+1 x3, Co, 2, 2, 2
    out = np.empty((n, cout, S, 2, S, 2, S, 2), dtype=DTYPE)
    for px in (0, 1):
        for py in (0, 1):
            for pz in (0, 1):
                out[:, :, :, px, :, py, :, pz] = R[:, px:px + S, py:py + S, pz:pz + S, :,
                                                   px, py, pz].transpose(0, 4, 1, 2, 3)
    out = out.reshape(n, cout, 2 * S, 2 * S, 2 * S)
    if b is not None:
        out += b.data[None, :, None, None, None]

    def bw(g):
        g8 = g.reshape(n, cout, S, 2, S, 2, S, 2)
        gR = np.zeros(R.shape, dtype=DTYPE)
        for px in (0, 1):
            for py in (0, 1):
                for pz in (0, 1):
                    gR[:, px:px + S, py:py + S, pz:pz + S, :, px, py, pz] = \
                        g8[:, :, :, px, :, py, :, pz].transpose(0, 2, 3, 4, 1)
        gw8 = np.tensordot(win, gR, axes=([0, 2, 3, 4], [0, 1, 2, 3]))
        col = np.tensordot(w8, gR, axes=([4, 5, 6, 7], [4, 5, 6, 7]))  # Ci, 2, 2, 2, N, S+1 x3
        gx = _crop(_scatter(col, (S + 2,) * 3, 2, 1), 1)
        gb = g.sum(axis=(0, 2, 3, 4)) if b is not None else None
        return np.ascontiguousarray(gx), _phase_weight_grad(gw8, wd.shape), gb

    parents = (x, w, b) if b is not None else (x, w)
    return Tensor.from_op(out, parents, (lambda g: bw(g)) if b is not None
                          else (lambda g: bw(g)[:2]))


def conv_transpose3d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
                     padding: int = 0) -> Tensor:
    """Transposed convolution. w is (C_in, C_out, K, K, K).

    Output side is (S - 1) * stride - 2 * padding + K.
    """
    _check5(x.data, "input")
    _check5(w.data, "weight")
    cin, cout, k = w.shape[0], w.shape[1], w.shape[2]
    if x.shape[1] != cin or w.shape[2:] != (k, k, k):
        raise ValueError(f"conv_transpose3d shape mismatch: input {x.shape}, weight {w.shape}")
    if b is not None and b.shape != (cout,):
        raise ValueError(f"conv_transpose3d bias shape {b.shape}, expected ({cout},)")
    if (k, stride, padding) == (4, 2, 1):
        fast = _convT_k4s2p1(x, w, b)
        if fast is not None:
            return fast
    full = tuple((s - 1) * stride + k for s in x.shape[2:])
    if any(f - 2 * padding <= 0 for f in full):
        raise ValueError("padding too large for transposed convolution")
    col = np.tensordot(w.data, x.data, axes=([0], [1]))  # Cout, k, k, k, N, D, H, W
    out = _crop(_scatter(col, full, k, stride), padding)
    if b is not None:
        out = out + b.data[None, :, None, None, None]
    out = np.ascontiguousarray(out)
    xd, wd = x.data, w.data

    def bw(g):
        win = _windows(_pad(g, padding), k, stride)  # N, Cout, D, H, W, k, k, k
        gx = np.tensordot(win, wd, axes=([1, 5, 6, 7], [1, 2, 3, 4])).transpose(0, 4, 1, 2, 3)
        gw = np.tensordot(xd, win, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
        gb = g.sum(axis=(0, 2, 3, 4)) if b is not None else None
        return np.ascontiguousarray(gx), gw, gb

    parents = (x, w, b) if b is not None else (x, w)
    return Tensor.from_op(out, parents, (lambda g: bw(g)) if b is not None
                          else (lambda g: bw(g)[:2]))


def gdn3d(x: Tensor, beta: Tensor, gamma: Tensor) -> Tensor:
    """Generalized divisive normalization across channels.

    y_c = x_c / sqrt(beta_c + sum_j gamma[c, j] * x_j**2), per voxel.
    beta and gamma are used as given; keeping them positive is the caller's job.
    """
    _check5(x.data, "input")
    c = x.shape[1]
    if beta.shape != (c,) or gamma.shape != (c, c):
        raise ValueError(f"gdn3d parameter shapes {beta.shape}, {gamma.shape} for {c} channels")
    xd, bd, gd = x.data, beta.data, gamma.data
    x2 = xd * xd
    norm = bd[None, :, None, None, None] + np.einsum("cj,njdhw->ncdhw", gd, x2)
    r = 1.0 / np.sqrt(norm)
    out = xd * r

    def bw(g):
        t = g * xd * r ** 3
        gx = g * r - xd * np.einsum("ck,ncdhw->nkdhw", gd, t)
        gbeta = -0.5 * t.sum(axis=(0, 2, 3, 4))
        ggamma = -0.5 * np.einsum("ncdhw,njdhw->cj", t, x2)
        return gx, gbeta, ggamma

    return Tensor.from_op(out, (x, beta, gamma), bw)


# ---------------------------------------------------------------- graph

def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf reachable from ``loss``."""
    if loss.data.size != 1:
        raise ValueError("backward() needs a scalar loss")
    if not loss.requires_grad:
        return
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
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad += g
            continue
        node.grad = g
        for p, gp in zip(node._parents, node._backward(g)):
            if gp is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + gp
            else:
                grads[key] = gp


def zero_grad(params) -> None:
    for p in params:
        p.grad[...] = 0.0


class Adam:
    """Adam with bias correction. ``lr`` may be overridden per step for schedules."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        zero_grad(self.params)


def adam_step(opt: Adam, lr: float | None = None) -> None:
    opt.step(lr)


def cosine_lr(step: int, total: int, lr0: float, lr_min: float = 0.0) -> float:
    if total <= 1:
        return lr0
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * step / (total - 1)))
