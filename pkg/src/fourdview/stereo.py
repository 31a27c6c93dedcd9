"""Block-matching disparity for rectified pairs.

Zero-mean normalized cross-correlation over square windows, integer winner
refined by a 3-point parabola, validated by a uniqueness ratio and a
symmetric left-right consistency check. Holes are left INVALID; nothing is
in-painted here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .image import Image

_VAR_EPS = 1e-10
_MIN_SCORE = 1e-6  # NCC at or below this is treated as no match


@dataclass
class StereoParams:
    block_radius: int = 3
    max_disparity: int = 64
    lr_consistency_tol: float = 1.0
    uniqueness_ratio: float = 0.9

    def __post_init__(self):
        if self.block_radius < 1:
            raise ValueError("block_radius must be >= 1")
        if self.max_disparity < 1:
            raise ValueError("max_disparity must be >= 1")


def _gray(img: Image) -> np.ndarray:
    return img.data.mean(axis=2)


def _box_sum(a: np.ndarray, r: int) -> np.ndarray:
    """Sum over (2r+1)^2 windows; border windows see zero padding."""
    pad = np.zeros((a.shape[0] + 2 * r + 1, a.shape[1] + 2 * r + 1))
    pad[r + 1:r + 1 + a.shape[0], r + 1:r + 1 + a.shape[1]] = a
    ii = pad.cumsum(axis=0).cumsum(axis=1)
    w = 2 * r + 1
    return ii[w:, w:] - ii[:-w, w:] - ii[w:, :-w] + ii[:-w, :-w]


def _ncc_volume(L: np.ndarray, R: np.ndarray, mask_l: np.ndarray, mask_r: np.ndarray,
                r: int, dmax: int) -> np.ndarray:
    """ZNCC score volume: vol[y, x, d] matches L at x against R at x - d.

    Scores are -1 wherever either window leaves the image or touches an
    invalid pixel.
    """
    h, w = L.shape
    n = float((2 * r + 1) ** 2)
    mu_l = _box_sum(L, r) / n
    sig_l = np.sqrt(np.maximum(_box_sum(L * L, r) / n - mu_l ** 2, 0.0))
    mu_r = _box_sum(R, r) / n
    sig_r = np.sqrt(np.maximum(_box_sum(R * R, r) / n - mu_r ** 2, 0.0))
    full_l = _box_sum(mask_l.astype(np.float64), r) >= n - 0.5
    full_r = _box_sum(mask_r.astype(np.float64), r) >= n - 0.5

    vol = np.full((h, w, dmax + 1), -1.0, dtype=np.float32)
    for d in range(min(dmax + 1, w)):
        lr = np.zeros_like(L)
        lr[:, d:] = L[:, d:] * R[:, :w - d]
        cov = _box_sum(lr, r) / n
        cov[:, d:] -= mu_l[:, d:] * mu_r[:, :w - d]
        denom = np.zeros_like(L)
        denom[:, d:] = sig_l[:, d:] * sig_r[:, :w - d]
        score = np.where(denom > _VAR_EPS, cov / np.maximum(denom, _VAR_EPS), 0.0)
        ok = np.zeros((h, w), dtype=bool)
        ok[:, d:] = full_l[:, d:] & full_r[:, :w - d]
        vol[:, :, d] = np.where(ok, score, -1.0).astype(np.float32)
    border = np.zeros((h, w), dtype=bool)
    border[:r, :] = border[h - r:, :] = True
    border[:, :r] = border[:, w - r:] = True
    vol[border] = -1.0
    return vol


def _winner(vol: np.ndarray, uniqueness_ratio: float):
    """Best disparity with subpixel refinement plus a validity mask."""
    h, w, nd = vol.shape
    best = vol.argmax(axis=2)
    yy, xx = np.mgrid[0:h, 0:w]
    s0 = vol[yy, xx, best].astype(np.float64)

    # Uniqueness: no competing score >= ratio * best may exist outside the
    # contiguous peak around the winner. The peak itself can be many
    # disparities wide on low-frequency texture, so a fixed exclusion
    # window would reject perfectly good matches.
    thr = (uniqueness_ratio * s0)[..., None].astype(vol.dtype)
    above = vol >= thr
    dd = np.arange(nd, dtype=np.int32)[None, None, :]
    best32 = best[..., None].astype(np.int32)
    left_edge = np.where(~above & (dd <= best32), dd, -1).max(axis=2)      # -1 if none
    right_edge = np.where(~above & (dd >= best32), dd, nd).min(axis=2)     # nd if none
    outside = above & ((dd < left_edge[..., None]) | (dd > right_edge[..., None]))
    ambiguous = outside.any(axis=2)

    valid = (s0 > _MIN_SCORE) & ~ambiguous

    disp = best.astype(np.float64)
    interior = valid & (best > 0) & (best < nd - 1)
    bm = np.clip(best - 1, 0, nd - 1)
    bp = np.clip(best + 1, 0, nd - 1)
    sm = vol[yy, xx, bm].astype(np.float64)
    sp = vol[yy, xx, bp].astype(np.float64)
    denom = sm - 2.0 * s0 + sp
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = 0.5 * (sm - sp) / denom
    refine = interior & np.isfinite(delta) & (np.abs(delta) <= 0.5) & (denom < 0)
    disp = np.where(refine, disp + delta, disp)
    return disp, valid


def block_match_disparity(left: Image, right: Image,
                          params: StereoParams) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Disparity for a rectified pair.

    Returns (disp_left, valid_left, disp_right, valid_right). Disparity
    values are raw matcher output everywhere; only the validity masks
    encode the uniqueness and symmetric left-right checks, so the LR
    invariant can be re-verified on the returned arrays.
    """
    if left.data.shape != right.data.shape:
        raise DimensionMismatch(
            f"left {left.data.shape} vs right {right.data.shape}")
    L, R = _gray(left), _gray(right)
    h, w = L.shape
    dmax = min(params.max_disparity, w - 1)

    vol = _ncc_volume(L, R, left.mask, right.mask, params.block_radius, dmax)

    # the right-reference volume is the left volume sheared along x:
    # score_R[y, x, d] = score_L[y, x + d, d]
    vol_r = np.full_like(vol, -1.0)
    for d in range(dmax + 1):
        if d < w:
            vol_r[:, :w - d, d] = vol[:, d:, d]

    disp_l, uvalid_l = _winner(vol, params.uniqueness_ratio)
    disp_r, uvalid_r = _winner(vol_r, params.uniqueness_ratio)

    xx = np.arange(w)[None, :].repeat(h, axis=0)
    yy = np.arange(h)[:, None].repeat(w, axis=1)
    xl = np.clip(np.rint(xx - disp_l).astype(int), 0, w - 1)
    valid_l = uvalid_l & uvalid_r[yy, xl] & (
        np.abs(disp_l - disp_r[yy, xl]) <= params.lr_consistency_tol)

    xr = np.clip(np.rint(xx + disp_r).astype(int), 0, w - 1)
    valid_r = uvalid_r & uvalid_l[yy, xr] & (
        np.abs(disp_r - disp_l[yy, xr]) <= params.lr_consistency_tol)

    return disp_l, valid_l, disp_r, valid_r
