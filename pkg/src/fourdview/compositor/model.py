"""Composition network: six stream encoders, a U-Net backbone, an output head.

Three foreground and three background streams (4 channels each: RGB plus
validity) pass through per-stream 3-layer encoders; their concatenation
feeds an encoder-decoder with skip connections; three final convolutions
plus a smooth clamp produce RGB in (0, 1). Channels-first, batch size 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch
from . import autodiff as ad
from .autodiff import Tensor

LEAKY_ALPHA = 0.1


def _im2col_np(x: np.ndarray, k: int) -> np.ndarray:
    from .autodiff import _im2col
    return _im2col(x, k)


def pad_to_multiple(size: tuple[int, int], multiple: int) -> tuple[int, int]:
    w, h = size
    return (int(np.ceil(w / multiple)) * multiple,
            int(np.ceil(h / multiple)) * multiple)


@dataclass
class ModelConfig:
    stage: str                       # low | mid | hi
    n_f: int
    native_size: tuple[int, int]     # (width, height)
    depth: int = 4                   # down/up levels in the backbone
    width_cap: int = 8               # max width = width_cap * n_f
    kernel: int = 3
    padded_size: tuple[int, int] = None

    def __post_init__(self):
        if self.padded_size is None:
            self.padded_size = pad_to_multiple(self.native_size, 2 ** self.depth)

    def widths(self) -> list[int]:
        """Backbone widths per level, bottleneck last."""
        w0 = 2 * self.n_f
        cap = self.width_cap * self.n_f
        return [min(w0 * 2 ** k, cap) for k in range(self.depth + 1)]


def _he_init(rng: np.random.Generator, co: int, ci: int, k: int) -> np.ndarray:
    std = np.sqrt(2.0 / (ci * k * k))
    return rng.standard_normal((co, ci, k, k)) * std


class _ParamStore:
    """Ordered parameter dict with per-forward leaf tensors."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}

    def add_conv(self, rng, name: str, ci: int, co: int, k: int):
        self.params[f"{name}.w"] = _he_init(rng, co, ci, k)
        self.params[f"{name}.b"] = np.zeros(co)

    def leaves(self) -> dict[str, Tensor]:
        return {name: Tensor(arr) for name, arr in self.params.items()}


def _conv_block(x: Tensor, leaves, name: str, activate: bool = True) -> Tensor:
    out = ad.bias_add(ad.conv2d(x, leaves[f"{name}.w"]), leaves[f"{name}.b"])
    return ad.leaky_relu(out, LEAKY_ALPHA) if activate else out


class CompositorModel:
    """One stage of the composition cascade."""

    NUM_FG_STREAMS = 3
    NUM_BG_STREAMS = 3

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.store = _ParamStore()
        rng = np.random.default_rng(seed)
        nf = config.n_f
        k = config.kernel

        for s in range(self.NUM_FG_STREAMS):
            for j, (ci, co) in enumerate([(4, nf), (nf, nf), (nf, nf)]):
                self.store.add_conv(rng, f"fg{s}.conv{j}", ci, co, k)
        for s in range(self.NUM_BG_STREAMS):
            for j, (ci, co) in enumerate([(4, nf), (nf, nf), (nf, nf)]):
                self.store.add_conv(rng, f"bg{s}.conv{j}", ci, co, k)

        widths = config.widths()
        c_in = (self.NUM_FG_STREAMS + self.NUM_BG_STREAMS) * nf
        for lvl in range(config.depth):
            self.store.add_conv(rng, f"enc{lvl}.conv0", c_in if lvl == 0 else widths[lvl - 1],
                                widths[lvl], k)
            self.store.add_conv(rng, f"enc{lvl}.conv1", widths[lvl], widths[lvl], k)
        self.store.add_conv(rng, "bott.conv0", widths[config.depth - 1], widths[config.depth], k)
        self.store.add_conv(rng, "bott.conv1", widths[config.depth], widths[config.depth], k)
        for lvl in reversed(range(config.depth)):
            up_ch = widths[lvl + 1]
            self.store.add_conv(rng, f"dec{lvl}.conv0", up_ch + widths[lvl], widths[lvl], k)
            self.store.add_conv(rng, f"dec{lvl}.conv1", widths[lvl], widths[lvl], k)
        self.store.add_conv(rng, "head.conv0", widths[0], nf, k)
        self.store.add_conv(rng, "head.conv1", nf, nf, k)
        self.store.add_conv(rng, "head.conv2", nf, 3, k)

    @property
    def params(self) -> dict[str, np.ndarray]:
        return self.store.params

    def num_params(self) -> int:
        return sum(a.size for a in self.params.values())

    def _expect(self, arr: np.ndarray) -> None:
        wp, hp = self.config.padded_size
        if arr.shape[0] != 4:
            raise ShapeMismatch("each stream input needs 4 channels (RGB + validity)")
        if arr.shape[1] % (2 ** self.config.depth) or arr.shape[2] % (2 ** self.config.depth):
            raise ShapeMismatch(
                f"stream dims {arr.shape[1:]} not divisible by {2 ** self.config.depth}")

    def forward(self, streams: list, leaves: dict[str, Tensor] | None = None) -> Tensor:
        """streams: 6 arrays/Tensors (4, H, W) — fg0..2 then bg0..2.

        Returns the (3, H, W) output tensor on the tape defined by `leaves`
        (fresh leaves when omitted, e.g. for inference).
        """
        if len(streams) != self.NUM_FG_STREAMS + self.NUM_BG_STREAMS:
            raise ShapeMismatch(f"expected 6 streams, got {len(streams)}")
        if leaves is None:
            leaves = self.store.leaves()
        ins = []
        for s in streams:
            t = s if isinstance(s, Tensor) else Tensor(s)
            self._expect(t.data)
            ins.append(t)

        encoded = []
        for i in range(self.NUM_FG_STREAMS):
            x = ins[i]
            for j in range(3):
                x = _conv_block(x, leaves, f"fg{i}.conv{j}")
            encoded.append(x)
        for i in range(self.NUM_BG_STREAMS):
            x = ins[self.NUM_FG_STREAMS + i]
            for j in range(3):
                x = _conv_block(x, leaves, f"bg{i}.conv{j}")
            encoded.append(x)
        x = ad.concat(encoded)

        skips = []
        for lvl in range(self.config.depth):
            x = _conv_block(x, leaves, f"enc{lvl}.conv0")
            x = _conv_block(x, leaves, f"enc{lvl}.conv1")
            skips.append(x)
            x = ad.avg_pool2(x)
        x = _conv_block(x, leaves, "bott.conv0")
        x = _conv_block(x, leaves, "bott.conv1")
        for lvl in reversed(range(self.config.depth)):
            x = ad.concat([ad.upsample2(x), skips[lvl]])
            x = _conv_block(x, leaves, f"dec{lvl}.conv0")
            x = _conv_block(x, leaves, f"dec{lvl}.conv1")

        x = _conv_block(x, leaves, "head.conv0")
        x = _conv_block(x, leaves, "head.conv1")
        x = _conv_block(x, leaves, "head.conv2", activate=False)
        return ad.sigmoid(x)

    def infer(self, streams: list) -> np.ndarray:
        """Tape-free forward with identical arithmetic; returns (3, H, W).

        Kept in lockstep with forward(); the test suite asserts both paths
        agree to machine precision.
        """
        p = self.params
        k = self.config.kernel

        def conv(x, name, activate=True):
            w = p[f"{name}.w"]
            co = w.shape[0]
            c, h, ww = x.shape
            out = (w.reshape(co, -1) @ _im2col_np(x, k)).reshape(co, h, ww)
            out += p[f"{name}.b"][:, None, None]
            if activate:
                out = np.maximum(out, LEAKY_ALPHA * out)
            return out

        ins = []
        for s in streams:
            arr = s.data if isinstance(s, Tensor) else np.asarray(s, dtype=np.float64)
            self._expect(arr)
            ins.append(arr)
        encoded = []
        for i in range(self.NUM_FG_STREAMS):
            x = ins[i]
            for j in range(3):
                x = conv(x, f"fg{i}.conv{j}")
            encoded.append(x)
        for i in range(self.NUM_BG_STREAMS):
            x = ins[self.NUM_FG_STREAMS + i]
            for j in range(3):
                x = conv(x, f"bg{i}.conv{j}")
            encoded.append(x)
        x = np.concatenate(encoded, axis=0)
        skips = []
        for lvl in range(self.config.depth):
            x = conv(x, f"enc{lvl}.conv0")
            x = conv(x, f"enc{lvl}.conv1")
            skips.append(x)
            c, h, w = x.shape
            x = x.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))
        x = conv(x, "bott.conv0")
        x = conv(x, "bott.conv1")
        for lvl in reversed(range(self.config.depth)):
            up = np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)
            x = np.concatenate([up, skips[lvl]], axis=0)
            x = conv(x, f"dec{lvl}.conv0")
            x = conv(x, f"dec{lvl}.conv1")
        x = conv(x, "head.conv0")
        x = conv(x, "head.conv1")
        x = conv(x, "head.conv2", activate=False)
        return 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))


class Discriminator:
    """Small conv stack with global pooling to a single logit."""

    def __init__(self, n_f: int = 8, seed: int = 1):
        self.n_f = n_f
        self.store = _ParamStore()
        rng = np.random.default_rng(seed)
        self.store.add_conv(rng, "d.conv0", 3, n_f, 3)
        self.store.add_conv(rng, "d.conv1", n_f, 2 * n_f, 3)
        self.store.add_conv(rng, "d.conv2", 2 * n_f, 2 * n_f, 3)
        self.store.add_conv(rng, "d.conv3", 2 * n_f, 1, 3)

    @property
    def params(self) -> dict[str, np.ndarray]:
        return self.store.params

    def forward(self, image, leaves: dict[str, Tensor] | None = None) -> Tensor:
        """image: (3, H, W) array or Tensor with dims divisible by 8 -> scalar logit."""
        if leaves is None:
            leaves = self.store.leaves()
        x = image if isinstance(image, Tensor) else Tensor(image)
        if x.data.shape[0] != 3:
            raise ShapeMismatch("discriminator expects a (3, H, W) image")
        for i in range(3):
            x = _conv_block(x, leaves, f"d.conv{i}")
            x = ad.avg_pool2(x)
        x = _conv_block(x, leaves, "d.conv3", activate=False)
        return ad.mean_all(x)
