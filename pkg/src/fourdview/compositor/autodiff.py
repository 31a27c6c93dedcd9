"""Reverse-mode automatic differentiation over a fixed operator set.

A dynamic tape of `Tensor` nodes; every operation records its parents and
a vector-Jacobian product. Image tensors are channels-first (C, H, W),
float64, batch size 1 throughout. The operator set is versioned so model
checkpoints can refuse to load against incompatible gradient semantics.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch, UnsupportedOp

OPSET_VERSION = "fixed-ops-1"

# conv / bias / leaky / pool / upsample / concat / pad / crop / sigmoid /
# softplus / dft2 / elementwise arithmetic / reductions
_ALLOWED_OPS = frozenset({
    "leaf", "conv2d", "bias_add", "leaky_relu", "avg_pool2", "upsample2",
    "concat", "zero_pad", "crop", "sigmoid", "softplus", "dft2",
    "add", "sub", "mul", "scale", "neg", "abs", "sum", "mean", "matmul",
})


class Tensor:
    """A node in the tape: value plus how to push gradients to parents."""

    __slots__ = ("data", "grad", "op", "_parents", "_vjp")

    def __init__(self, data, op: str = "leaf", parents=(), vjp=None):
        if op not in _ALLOWED_OPS:
            raise UnsupportedOp(f"operator {op!r} is not in the fixed set")
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.op = op
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    def detach(self) -> "Tensor":
        return Tensor(self.data)


def backward(root: Tensor, seed=None) -> None:
    """Accumulate gradients of `root` into every reachable tensor's .grad."""
    topo: list[Tensor] = []
    state: dict[int, int] = {}
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if state.get(id(node)):
            continue
        state[id(node)] = 1
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))

    root.grad = np.ones_like(root.data) if seed is None else np.asarray(seed, dtype=np.float64)
    for node in reversed(topo):
        if node._vjp is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._vjp(node.grad)):
            if g is None:
                continue
            if parent.grad is None:
                parent.grad = g
            else:
                parent.grad = parent.grad + g


def _same_shape(a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"{a.data.shape} vs {b.data.shape}")


# --- arithmetic --------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b)
    return Tensor(a.data + b.data, "add", (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b)
    return Tensor(a.data - b.data, "sub", (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b)
    return Tensor(a.data * b.data, "mul", (a, b),
                  lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    return Tensor(a.data * c, "scale", (a,), lambda g: (g * c,))


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.data, "neg", (a,), lambda g: (-g,))


def abs_(a: Tensor) -> Tensor:
    s = np.sign(a.data)
    return Tensor(np.abs(a.data), "abs", (a,), lambda g: (g * s,))


def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape
    return Tensor(a.data.sum(), "sum", (a,),
                  lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    shape = a.data.shape
    return Tensor(a.data.mean(), "mean", (a,),
                  lambda g: (np.broadcast_to(g / n, shape).copy(),))


# --- nonlinearities ----------------------------------------------------------

def leaky_relu(a: Tensor, alpha: float = 0.1) -> Tensor:
    pos = a.data > 0
    out = np.where(pos, a.data, alpha * a.data)
    return Tensor(out, "leaky_relu", (a,),
                  lambda g: (g * np.where(pos, 1.0, alpha),))


def sigmoid(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-np.clip(a.data, -500, 500)))
    return Tensor(s, "sigmoid", (a,), lambda g: (g * s * (1.0 - s),))


def softplus(a: Tensor) -> Tensor:
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    sig = 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))
    return Tensor(out, "softplus", (a,), lambda g: (g * sig,))


# --- structure ---------------------------------------------------------------

def concat(tensors: list[Tensor]) -> Tensor:
    sizes = [t.data.shape[0] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=0))

    return Tensor(np.concatenate([t.data for t in tensors], axis=0),
                  "concat", tuple(tensors), vjp)


def zero_pad(a: Tensor, pad_h: int, pad_w: int) -> Tensor:
    """Pad bottom/right with zeros to (H + pad_h, W + pad_w)."""
    c, h, w = a.data.shape
    out = np.zeros((c, h + pad_h, w + pad_w))
    out[:, :h, :w] = a.data
    return Tensor(out, "zero_pad", (a,), lambda g: (g[:, :h, :w],))


def crop(a: Tensor, height: int, width: int) -> Tensor:
    """Top-left crop; inverse of zero_pad."""
    c, h, w = a.data.shape
    if height > h or width > w:
        raise ShapeMismatch(f"cannot crop {(h, w)} to {(height, width)}")

    def vjp(g):
        full = np.zeros((c, h, w))
        full[:, :height, :width] = g
        return (full,)

    return Tensor(a.data[:, :height, :width].copy(), "crop", (a,), vjp)


def avg_pool2(a: Tensor) -> Tensor:
    c, h, w = a.data.shape
    if h % 2 or w % 2:
        raise ShapeMismatch(f"avg_pool2 needs even dims, got {(h, w)}")
    out = a.data.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))

    def vjp(g):
        up = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2)
        return (up * 0.25,)

    return Tensor(out, "avg_pool2", (a,), vjp)


def upsample2(a: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling."""
    out = np.repeat(np.repeat(a.data, 2, axis=1), 2, axis=2)

    def vjp(g):
        c, h, w = g.shape
        return (g.reshape(c, h // 2, 2, w // 2, 2).sum(axis=(2, 4)),)

    return Tensor(out, "upsample2", (a,), vjp)


# --- convolution -------------------------------------------------------------

def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(C, H, W) -> (C*k*k, H*W) patch matrix under 'same' zero padding."""
    c, h, w = x.shape
    p = k // 2
    xp = np.zeros((c, h + 2 * p, w + 2 * p))
    xp[:, p:p + h, p:p + w] = x
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    # (C, H, W, k, k) -> (C, k, k, H, W) -> (C*k*k, H*W)
    return win.transpose(0, 3, 4, 1, 2).reshape(c * k * k, h * w)


def conv2d(x: Tensor, weight: Tensor) -> Tensor:
    """3x3 (or any odd k) stride-1 'same' convolution, channels-first.

    weight shape: (C_out, C_in, k, k).
    """
    co, ci, k, k2 = weight.data.shape
    if k != k2:
        raise ShapeMismatch("kernels must be square")
    c, h, w = x.data.shape
    if c != ci:
        raise ShapeMismatch(f"conv2d input channels {c} != weight {ci}")
    cols = _im2col(x.data, k)
    out = (weight.data.reshape(co, ci * k * k) @ cols).reshape(co, h, w)

    def vjp(g):
        g_mat = g.reshape(co, h * w)
        # recompute the patch matrix; caching it across a deep net costs
        # far more memory than the extra im2col
        cols_b = _im2col(x.data, k)
        grad_w = (g_mat @ cols_b.T).reshape(co, ci, k, k)
        # grad wrt input: convolve g with the flipped, transposed kernel
        w_t = weight.data.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
        gcols = _im2col(g, k)
        grad_x = (w_t.reshape(ci, co * k * k) @ gcols).reshape(ci, h, w)
        return grad_x, grad_w

    return Tensor(out, "conv2d", (x, weight), vjp)


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    if b.data.shape != (x.data.shape[0],):
        raise ShapeMismatch(f"bias {b.data.shape} vs channels {x.data.shape[0]}")
    return Tensor(x.data + b.data[:, None, None], "bias_add", (x, b),
                  lambda g: (g, g.sum(axis=(1, 2))))


# --- spectra -----------------------------------------------------------------

def dft2(x: Tensor) -> Tensor:
    """Unnormalized forward 2-D DFT per channel, stacked as [Re; Im].

    (C, H, W) -> (2C, H, W). The transform is linear, so the VJP is the
    adjoint: an inverse FFT of the complex cotangent scaled by H*W.
    """
    c, h, w = x.data.shape
    spec = np.fft.fft2(x.data, axes=(-2, -1))
    out = np.concatenate([spec.real, spec.imag], axis=0)

    def vjp(g):
        gc = g[:c] + 1j * g[c:]
        return (np.fft.ifft2(gc, axes=(-2, -1)).real * (h * w),)

    return Tensor(out, "dft2", (x,), vjp)
