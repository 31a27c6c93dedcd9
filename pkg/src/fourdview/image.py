"""Image and depth-map containers plus resampling helpers.

Conventions used everywhere in the engine:
    * image data is float64, shape (H, W, 3), values in [0, 1]
    * validity masks are bool, shape (H, W); False marks blank/hole pixels
    * depth maps are float64, shape (H, W), with a parallel validity mask
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch


@dataclass
class Image:
    """RGB image with an optional per-pixel validity mask."""

    data: np.ndarray                  # (H, W, 3) float64 in [0, 1]
    mask: np.ndarray = field(default=None)  # (H, W) bool; None means all valid

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ShapeMismatch(f"image data must be (H, W, 3), got {self.data.shape}")
        if self.mask is None:
            self.mask = np.ones(self.data.shape[:2], dtype=bool)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.data.shape[:2]:
                raise ShapeMismatch(
                    f"mask shape {self.mask.shape} != image {self.data.shape[:2]}"
                )

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def copy(self) -> "Image":
        return Image(self.data.copy(), self.mask.copy())


@dataclass
class DepthMap:
    """Per-pixel depth in some camera frame, with validity."""

    depth: np.ndarray                 # (H, W) float64, > 0 where valid
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if self.depth.ndim != 2:
            raise ShapeMismatch(f"depth must be (H, W), got {self.depth.shape}")
        if self.valid is None:
            self.valid = np.isfinite(self.depth) & (self.depth > 0)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != self.depth.shape:
                raise ShapeMismatch(
                    f"valid shape {self.valid.shape} != depth {self.depth.shape}"
                )

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    def copy(self) -> "DepthMap":
        return DepthMap(self.depth.copy(), self.valid.copy())


def _sample_coords(src_len: int, dst_len: int) -> np.ndarray:
    """Source coordinates for resizing, pixel centers aligned."""
    if dst_len == 1:
        return np.array([0.5 * (src_len - 1)])
    scale = src_len / dst_len
    return (np.arange(dst_len) + 0.5) * scale - 0.5


def resize_nearest(img: Image, height: int, width: int) -> Image:
    """Nearest-neighbour resize; preserves hole semantics exactly."""
    ys = np.clip(np.rint(_sample_coords(img.height, height)).astype(int), 0, img.height - 1)
    xs = np.clip(np.rint(_sample_coords(img.width, width)).astype(int), 0, img.width - 1)
    return Image(img.data[ys[:, None], xs[None, :]], img.mask[ys[:, None], xs[None, :]])


def resize_bilinear(data: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of a dense (H, W) or (H, W, C) array."""
    data = np.asarray(data, dtype=np.float64)
    src_h, src_w = data.shape[:2]
    ys = np.clip(_sample_coords(src_h, height), 0, src_h - 1)
    xs = np.clip(_sample_coords(src_w, width), 0, src_w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    fy = (ys - y0).reshape(-1, 1)
    fx = (xs - x0).reshape(1, -1)
    if data.ndim == 3:
        fy = fy[..., None]
        fx = fx[..., None]
    top = data[y0][:, x0] * (1 - fx) + data[y0][:, x1] * fx
    bot = data[y1][:, x0] * (1 - fx) + data[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def downsample_valid(img: Image, height: int, width: int) -> Image:
    """Validity-aware area downsample: a pixel is valid if any contributor is.

    Colors average only over valid contributors, so holes shrink instead of
    bleeding zeros into their surroundings.
    """
    src = img.data * img.mask[..., None]
    # integer bin edges per destination pixel
    y_edges = np.linspace(0, img.height, height + 1)
    x_edges = np.linspace(0, img.width, width + 1)
    out = np.zeros((height, width, 3))
    cnt = np.zeros((height, width))
    y_bin = np.clip(np.searchsorted(y_edges, np.arange(img.height), side="right") - 1, 0, height - 1)
    x_bin = np.clip(np.searchsorted(x_edges, np.arange(img.width), side="right") - 1, 0, width - 1)
    flat_bin = (y_bin[:, None] * width + x_bin[None, :]).ravel()
    for c in range(3):
        out[..., c] = np.bincount(flat_bin, weights=src[..., c].ravel(),
                                  minlength=height * width).reshape(height, width)
    cnt = np.bincount(flat_bin, weights=img.mask.ravel().astype(float),
                      minlength=height * width).reshape(height, width)
    mask = cnt > 0
    out[mask] /= cnt[mask][:, None]
    return Image(out, mask)


def shape_check(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape mismatch: {a.shape} vs {b.shape}")
