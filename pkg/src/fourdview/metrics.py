"""Image quality metrics and nearest-neighbour baselines.

All metrics operate on [0, 1] images. PSNR uses MAX = 1 and is capped at
99 dB for identical images. SSIM follows the canonical constants: 11x11
Gaussian window with sigma 1.5, C1 = (0.01)^2, C2 = (0.03)^2, averaged
over windows of the channel-averaged image.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve

from .errors import EmptyCandidateSet, ShapeMismatch
from .image import Image, resize_bilinear

PSNR_CAP = 99.0


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, Image) else np.asarray(x, dtype=np.float64)


def mse(a, b) -> float:
    da, db = _data(a), _data(b)
    if da.shape != db.shape:
        raise ShapeMismatch(f"{da.shape} vs {db.shape}")
    return float(np.mean((da - db) ** 2))


def psnr(a, b) -> float:
    m = mse(a, b)
    if m <= 0.0:
        return PSNR_CAP
    return min(float(10.0 * np.log10(1.0 / m)), PSNR_CAP)


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(a, b, window: int = 11, sigma: float = 1.5) -> float:
    """Windowed SSIM over the channel-averaged image, valid windows only."""
    da, db = _data(a), _data(b)
    if da.shape != db.shape:
        raise ShapeMismatch(f"{da.shape} vs {db.shape}")
    if da.ndim == 3:
        da = da.mean(axis=2)
        db = db.mean(axis=2)
    if min(da.shape) < window:
        raise ShapeMismatch(f"image {da.shape} smaller than SSIM window {window}")
    k = _gaussian_kernel(window, sigma)
    c1 = 0.01 ** 2
    c2 = 0.03 ** 2

    def filt(x):
        return convolve(x, k, mode="constant")

    mu_a = filt(da)
    mu_b = filt(db)
    var_a = filt(da * da) - mu_a ** 2
    var_b = filt(db * db) - mu_b ** 2
    cov = filt(da * db) - mu_a * mu_b
    smap = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)
            / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)))
    r = window // 2
    return float(smap[r:-r, r:-r].mean())


def nn_feature(img, height: int = 16, width: int = 32) -> np.ndarray:
    """Downsampled-luminance descriptor for nearest-neighbour search."""
    gray = _data(img).mean(axis=2)
    return resize_bilinear(gray, height, width).ravel()


def nn_baseline(generated, candidates: list[tuple[object, np.ndarray]]) -> tuple[object, float]:
    """Nearest candidate by L2 distance over nn_feature descriptors.

    candidates: (frame id, feature) pairs; ties go to the lowest id.
    Returns (best id, distance).
    """
    if not candidates:
        raise EmptyCandidateSet("no candidate frames supplied")
    feat = nn_feature(generated) if not (
        isinstance(generated, np.ndarray) and generated.ndim == 1) else generated
    best_id, best_dist = None, np.inf
    for fid, f in sorted(candidates, key=lambda kv: kv[0]):
        d = float(np.linalg.norm(feat - f))
        if d < best_dist - 1e-15:
            best_id, best_dist = fid, d
    return best_id, best_dist


@dataclass
class EvalRow:
    name: str
    mse_values: list = field(default_factory=list)
    psnr_values: list = field(default_factory=list)
    ssim_values: list = field(default_factory=list)

    def add(self, a, b) -> None:
        self.mse_values.append(mse(a, b))
        self.psnr_values.append(psnr(a, b))
        self.ssim_values.append(ssim(a, b))

    def summary(self) -> dict:
        def ms(vals):
            return (float(np.mean(vals)), float(np.std(vals))) if vals else (np.nan, np.nan)
        return {"name": self.name, "mse": ms(self.mse_values),
                "psnr": ms(self.psnr_values), "ssim": ms(self.ssim_values),
                "frames": len(self.mse_values)}


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    def row(self, name: str) -> EvalRow:
        for r in self.rows:
            if r.name == name:
                return r
        r = EvalRow(name)
        self.rows.append(r)
        return r

    def table(self) -> str:
        lines = [f"{'approach':<18}{'MSE':>16}{'PSNR (dB)':>18}{'SSIM':>16}"]
        for r in self.rows:
            s = r.summary()
            lines.append(
                f"{s['name']:<18}"
                f"{s['mse'][0]:>9.5f}±{s['mse'][1]:<6.4f}"
                f"{s['psnr'][0]:>10.2f}±{s['psnr'][1]:<7.2f}"
                f"{s['ssim'][0]:>9.4f}±{s['ssim'][1]:<6.4f}")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["approach", "frames", "mse_mean", "mse_std",
                        "psnr_mean", "psnr_std", "ssim_mean", "ssim_std"])
            for r in self.rows:
                s = r.summary()
                w.writerow([s["name"], s["frames"], *s["mse"], *s["psnr"], *s["ssim"]])

    def ranking(self, metric: str) -> list[str]:
        """Row names best-first; lower is better for MSE, higher otherwise."""
        rows = [(r.name, r.summary()[metric][0]) for r in self.rows]
        reverse = metric != "mse"
        return [name for name, _ in sorted(rows, key=lambda kv: kv[1], reverse=reverse)]
