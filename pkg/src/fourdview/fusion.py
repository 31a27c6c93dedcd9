"""Depth cost volumes and their renders.

All stereo-pair reprojections into a target view are merged into a
per-pixel list of (depth, color, pair) candidates sorted by depth. The
instantaneous foreground picks, per pixel, the smallest depth supported by
at least `min_support` distinct pairs within a relative tolerance; the
static background comes from per-time farthest-depth renders reduced by a
temporal median.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateBaseline, DimensionMismatch
from .geometry import (PinholeCamera, disparity_to_depth, rectify_pair,
                       reproject_view, warp_homography)
from .image import DepthMap, Image
from .stereo import StereoParams, block_match_disparity

logger = logging.getLogger(__name__)


@dataclass
class ConsensusParams:
    min_support: int = 3
    depth_tolerance: float = 0.02    # relative to the candidate depth

    def __post_init__(self):
        if self.min_support < 2:
            raise ValueError("min_support must be >= 2")


@dataclass
class DepthCostVolume:
    """CSR-style per-pixel candidate lists, pixel-major, depth-ascending."""

    width: int
    height: int
    offsets: np.ndarray    # (H*W + 1,) int64
    depth: np.ndarray      # (K,) float64
    color: np.ndarray      # (K, 3) float64
    pair_id: np.ndarray    # (K,) int64
    num_pairs: int

    def candidates_at(self, x: int, y: int):
        s, e = self.offsets[y * self.width + x], self.offsets[y * self.width + x + 1]
        return [(float(self.depth[i]), self.color[i].copy(), int(self.pair_id[i]))
                for i in range(s, e)]

    def counts(self) -> np.ndarray:
        return np.diff(self.offsets).reshape(self.height, self.width)


@dataclass
class ViewLayers:
    """Instantaneous foreground plus static background for one target view."""

    foreground: Image
    foreground_depth: DepthMap
    background: Image
    camera: PinholeCamera
    time: int


def build_cost_volume(target: PinholeCamera,
                      reprojections: list[tuple[Image, DepthMap]]) -> DepthCostVolume:
    """One candidate per pair per pixel, sorted ascending by depth.

    Depth ties break by pair_id so the volume is independent of the order
    reprojections are supplied in.
    """
    h, w = target.height, target.width
    pix_parts, depth_parts, color_parts, pair_parts = [], [], [], []
    for pair_idx, (img, dep) in enumerate(reprojections):
        if img.data.shape[:2] != (h, w) or dep.depth.shape != (h, w):
            raise DimensionMismatch(
                f"reprojection {pair_idx} shape {img.data.shape[:2]} != target {(h, w)}")
        sel = img.mask & dep.valid
        if not sel.any():
            continue
        ys, xs = np.nonzero(sel)
        pix_parts.append(ys.astype(np.int64) * w + xs)
        depth_parts.append(dep.depth[ys, xs])
        color_parts.append(img.data[ys, xs])
        pair_parts.append(np.full(ys.shape[0], pair_idx, dtype=np.int64))

    if not pix_parts:
        return DepthCostVolume(w, h, np.zeros(h * w + 1, dtype=np.int64),
                               np.zeros(0), np.zeros((0, 3)), np.zeros(0, dtype=np.int64),
                               len(reprojections))

    pix = np.concatenate(pix_parts)
    depth = np.concatenate(depth_parts)
    color = np.concatenate(color_parts)
    pair = np.concatenate(pair_parts)
    order = np.lexsort((pair, depth, pix))
    pix, depth, color, pair = pix[order], depth[order], color[order], pair[order]
    offsets = np.zeros(h * w + 1, dtype=np.int64)
    np.cumsum(np.bincount(pix, minlength=h * w), out=offsets[1:])
    return DepthCostVolume(w, h, offsets, depth, color, pair, len(reprojections))


def _segment_first(eligible: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Index of the first eligible candidate per pixel segment, -1 if none."""
    n = eligible.shape[0]
    big = n + 1
    idx = np.where(eligible, np.arange(n), big)
    starts = offsets[:-1]
    nonempty = offsets[1:] > starts
    first = np.full(offsets.shape[0] - 1, big, dtype=np.int64)
    if n:
        red = np.minimum.reduceat(idx, np.minimum(starts, n - 1))
        first[nonempty] = red[nonempty]
    return np.where(first <= n, first, -1)


def _support_windows(vol: DepthCostVolume, tol: float):
    """Per candidate: [lo, hi) index range of same-pixel candidates within
    the relative depth window around it."""
    n = vol.depth.shape[0]
    if n == 0:
        z = np.zeros(0, dtype=np.int64)
        return z, z
    pix = np.repeat(np.arange(vol.height * vol.width, dtype=np.int64),
                    np.diff(vol.offsets))
    span = float(vol.depth.max()) * (1.0 + tol) + 1.0
    g = pix * span + vol.depth
    lo = np.searchsorted(g, pix * span + vol.depth * (1.0 - tol), side="left")
    hi = np.searchsorted(g, pix * span + vol.depth * (1.0 + tol), side="right")
    return lo, hi


def _median_over_windows(vol: DepthCostVolume, winners: np.ndarray,
                         lo: np.ndarray, hi: np.ndarray):
    """Median color/depth over each winner's support window."""
    sel = winners >= 0
    widx = winners[sel]
    wlo, whi = lo[widx], hi[widx]
    maxc = int((whi - wlo).max()) if widx.size else 1
    cols = wlo[:, None] + np.arange(maxc)[None, :]
    valid = cols < whi[:, None]
    cols = np.minimum(cols, len(vol.depth) - 1)
    dvals = np.where(valid, vol.depth[cols], np.nan)
    cvals = np.where(valid[..., None], vol.color[cols], np.nan)
    med_d = np.nanmedian(dvals, axis=1)
    med_c = np.nanmedian(cvals, axis=1)
    return sel, med_c, med_d


def consensus_foreground(vol: DepthCostVolume, params: ConsensusParams,
                         skip_clusters: int = 0) -> tuple[Image, DepthMap]:
    """Smallest-depth candidate supported by >= min_support distinct pairs
    within the relative tolerance wins; color/depth are medians over the
    supporting set; unsupported pixels stay blank.

    skip_clusters > 0 discards that many consensus clusters in ascending
    depth before selecting (the disocclusion primitive); pixels without a
    deeper cluster stay blank.
    """
    h, w = vol.height, vol.width
    out = np.zeros((h, w, 3))
    out_d = np.zeros((h, w))
    out_m = np.zeros((h, w), dtype=bool)
    if vol.depth.shape[0] == 0:
        return Image(out, out_m), DepthMap(out_d, out_m)

    lo, hi = _support_windows(vol, params.depth_tolerance)
    eligible = (hi - lo) >= params.min_support
    n_pix = h * w
    n = vol.depth.shape[0]
    pix = np.repeat(np.arange(n_pix, dtype=np.int64), np.diff(vol.offsets))

    # A cluster is a maximal chain of candidates whose consecutive depth
    # gaps stay within tolerance; skipping a cluster must pass the whole
    # chain, otherwise the same surface's depth spread masquerades as a
    # deeper one. chain_end[i] = last index of i's chain.
    breaks = np.ones(n, dtype=bool)
    if n > 1:
        same_pix = pix[1:] == pix[:-1]
        close = vol.depth[1:] <= vol.depth[:-1] * (1.0 + params.depth_tolerance)
        breaks[:-1] = ~(same_pix & close)
    idx = np.arange(n)
    chain_end = np.where(breaks, idx, n)
    chain_end = np.minimum.accumulate(chain_end[::-1])[::-1]

    bound = np.full(n_pix, -np.inf)
    winners = np.full(n_pix, -1, dtype=np.int64)
    for _ in range(skip_clusters + 1):
        open_mask = eligible & (vol.depth > bound[pix])
        winners = _segment_first(open_mask, vol.offsets)
        has = winners >= 0
        bound = np.full(n_pix, np.inf)
        bound[has] = vol.depth[chain_end[winners[has]]]

    sel, med_c, med_d = _median_over_windows(vol, winners, lo, hi)
    mask = sel.reshape(h, w)
    out[mask] = med_c
    out_d[mask] = med_d
    return Image(out, mask), DepthMap(out_d, mask)


def _pick_render(vol: DepthCostVolume, which: str) -> tuple[Image, DepthMap]:
    h, w = vol.height, vol.width
    out = np.zeros((h, w, 3))
    out_d = np.zeros((h, w))
    counts = np.diff(vol.offsets)
    mask = (counts > 0).reshape(h, w)
    if counts.sum():
        idx = vol.offsets[:-1] if which == "nearest" else vol.offsets[1:] - 1
        take = idx[counts > 0]
        out[mask] = vol.color[take]
        out_d[mask] = vol.depth[take]
    return Image(out, mask), DepthMap(out_d, mask)


def nearest_depth_render(vol: DepthCostVolume) -> Image:
    """Minimum-depth candidate per pixel (the ghosting-prone baseline)."""
    return _pick_render(vol, "nearest")[0]


def farthest_depth_render(vol: DepthCostVolume) -> Image:
    """Maximum-depth candidate per pixel; strips dynamic (near) content."""
    return _pick_render(vol, "farthest")[0]


def farthest_depth_render_with_depth(vol: DepthCostVolume) -> tuple[Image, DepthMap]:
    return _pick_render(vol, "farthest")


def _nanmedian(stack: np.ndarray) -> np.ndarray:
    """nanmedian over axis 0; silent on all-NaN pixels (expected: holes)."""
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        return np.nanmedian(stack, axis=0)


def median_render(reprojections: list[tuple[Image, DepthMap]]) -> Image:
    """Per-pixel per-channel median over valid samples of all reprojections."""
    if not reprojections:
        raise DimensionMismatch("median_render needs at least one reprojection")
    shape = reprojections[0][0].data.shape
    stack = np.full((len(reprojections),) + shape, np.nan)
    for i, (img, dep) in enumerate(reprojections):
        if img.data.shape != shape:
            raise DimensionMismatch("reprojection shapes differ")
        sel = img.mask & dep.valid
        stack[i][sel] = img.data[sel]
    med = _nanmedian(stack)
    mask = np.isfinite(med).all(axis=2)
    med[~mask] = 0.0
    return Image(med, mask)


def accumulate_background(renders: list[Image]) -> Image:
    """Temporal per-pixel median over renders that are valid at each pixel."""
    if not renders:
        raise DimensionMismatch("need at least one time sample")
    shape = renders[0].data.shape
    stack = np.full((len(renders),) + shape, np.nan)
    for i, img in enumerate(renders):
        if img.data.shape != shape:
            raise DimensionMismatch("render shapes differ")
        stack[i][img.mask] = img.data[img.mask]
    med = _nanmedian(stack)
    mask = np.isfinite(med).all(axis=2)
    med[~mask] = 0.0
    return Image(med, mask)


# --- full pipeline orchestration -------------------------------------------

@dataclass
class FusionConfig:
    """End-to-end knobs for turning frames into view layers."""

    consensus: ConsensusParams = field(default_factory=ConsensusParams)
    block_radius: int = 3
    lr_consistency_tol: float = 1.0
    uniqueness_ratio: float = 0.9
    depth_range: tuple[float, float] = (2.0, 60.0)
    max_disparity_frac: float = 0.45       # cap: fraction of image width
    background_window: tuple[int, int] | None = None   # [t0, t1) frame window
    background_stride: int = 1
    resolution: tuple[int, int] | None = None  # working (w, h); None = scene native

    def stereo_params(self, width: int, focal: float, baseline: float) -> StereoParams:
        dmax = int(np.ceil(focal * baseline / max(self.depth_range[0], 1e-6)))
        dmax = max(1, min(dmax, int(self.max_disparity_frac * width)))
        return StereoParams(block_radius=self.block_radius, max_disparity=dmax,
                            lr_consistency_tol=self.lr_consistency_tol,
                            uniqueness_ratio=self.uniqueness_ratio)


def merge_reprojections(a: tuple[Image, DepthMap],
                        b: tuple[Image, DepthMap]) -> tuple[Image, DepthMap]:
    """Nearest-depth merge of two reprojections of the same pair."""
    ia, da = a
    ib, db = b
    take_b = (ib.mask & db.valid) & (~(ia.mask & da.valid) | (db.depth < da.depth))
    data = np.where(take_b[..., None], ib.data, ia.data)
    depth = np.where(take_b, db.depth, da.depth)
    mask = (ia.mask & da.valid) | take_b
    data = np.where(mask[..., None], data, 0.0)
    depth = np.where(mask, depth, 0.0)
    return Image(data, mask), DepthMap(depth, mask)


def pair_reprojection(cam_a: PinholeCamera, frame_a: Image,
                      cam_b: PinholeCamera, frame_b: Image,
                      target: PinholeCamera,
                      config: FusionConfig) -> tuple[Image, DepthMap] | None:
    """Disparity for one rectified pair, reprojected into the target view.

    Both rectified views are matched (the right map comes for free from the
    shared cost volume) and splatted; the pair contributes at most one
    candidate per target pixel. Returns None for degenerate geometry.
    """
    try:
        geom = rectify_pair(cam_a, cam_b)
    except DegenerateBaseline:
        logger.warning("skipping degenerate pair")
        return None
    rect_l = warp_homography(frame_a, geom.H_left, geom.left.width, geom.left.height)
    rect_r = warp_homography(frame_b, geom.H_right, geom.right.width, geom.right.height)
    params = config.stereo_params(geom.left.width, geom.focal, geom.baseline)
    disp_l, valid_l, disp_r, valid_r = block_match_disparity(rect_l, rect_r, params)

    far = config.depth_range[1]
    dm_l = disparity_to_depth(disp_l, valid_l, geom)
    dm_l.valid &= dm_l.depth <= far
    dm_r = disparity_to_depth(disp_r, valid_r, geom)
    dm_r.valid &= dm_r.depth <= far

    ra = reproject_view(geom.left, rect_l, dm_l, target)
    rb = reproject_view(geom.right, rect_r, dm_r, target)
    return merge_reprojections(ra, rb)


def _pose_key(cam: PinholeCamera, quantum: float = 1e-6) -> tuple:
    """Extrinsics-only key: identifies a physical viewpoint regardless of
    the working resolution its intrinsics were scaled to."""
    q = lambda a: tuple(np.rint(np.asarray(a, dtype=np.float64).ravel() / quantum).astype(np.int64))
    return q(cam.R) + q(cam.t)


def _source_cameras(scene, target) -> list[str]:
    """All physical cameras except the target itself (held-out semantics)."""
    if isinstance(target, str):
        return [c for c in scene.camera_ids if c != target]
    tkey = _pose_key(target)
    return [c for c in scene.camera_ids if _pose_key(scene.camera(c)) != tkey]


def working_camera(cam: PinholeCamera, config: FusionConfig) -> PinholeCamera:
    """Target camera rescaled to the configured working resolution."""
    from .geometry import scale_camera
    if config.resolution is None:
        return cam
    w, h = config.resolution
    if (cam.width, cam.height) == (w, h):
        return cam
    return scale_camera(cam, w, h)


def _working_sources(scene, ids: list[str], time: int, config: FusionConfig,
                     frames: dict | None):
    """Source cameras and frames at the working resolution."""
    from . import scene_io
    from .geometry import scale_camera
    from .image import downsample_valid
    if frames is None:
        frames = {cid: scene_io.fetch_frame(scene, cid, time) for cid in ids}
    cams = {cid: scene.camera(cid) for cid in ids}
    if config.resolution is not None:
        w, h = config.resolution
        sw, sh = scene.resolution
        if (w, h) != (sw, sh):
            frames = {cid: downsample_valid(img, h, w) for cid, img in frames.items()}
            cams = {cid: scale_camera(cam, w, h) for cid, cam in cams.items()}
    return cams, frames


def compute_reprojections(scene, target_cam: PinholeCamera, time: int,
                          config: FusionConfig,
                          source_ids: list[str] | None = None,
                          frames: dict | None = None) -> list[tuple[Image, DepthMap]]:
    """All-pairs reprojections into the target view at one time instant.

    The target camera must already be at the working resolution (see
    working_camera); source frames are resampled as needed.
    """
    ids = source_ids if source_ids is not None else _source_cameras(scene, target_cam)
    cams, frames = _working_sources(scene, ids, time, config, frames)
    reps = []
    for a, b in itertools.combinations(ids, 2):
        rep = pair_reprojection(cams[a], frames[a], cams[b], frames[b],
                                target_cam, config)
        if rep is not None:
            reps.append(rep)
    return reps


def compute_background_products(scene, target_cam: PinholeCamera,
                                config: FusionConfig,
                                source_ids: list[str] | None = None) -> tuple[Image, Image]:
    """Both background accumulations over one sweep of the time window.

    Returns (farthest-median, median-median): temporal medians of per-time
    farthest-depth renders and of per-time median renders respectively.
    """
    t0, t1 = config.background_window or (0, scene.num_frames)
    far_renders, med_renders = [], []
    for t in range(t0, t1, max(config.background_stride, 1)):
        reps = compute_reprojections(scene, target_cam, t, config, source_ids)
        vol = build_cost_volume(target_cam, reps)
        far_renders.append(farthest_depth_render(vol))
        if reps:
            med_renders.append(median_render(reps))
        else:
            med_renders.append(far_renders[-1])
    return accumulate_background(far_renders), accumulate_background(med_renders)


def compute_background(scene, target_cam: PinholeCamera, config: FusionConfig,
                       source_ids: list[str] | None = None,
                       variant: str = "farthest") -> Image:
    """Static background: temporal median of per-time renders.

    variant 'farthest' reduces farthest-depth renders (the main path);
    'median' reduces per-pixel median renders (the alternate stream input).
    """
    if variant not in ("farthest", "median"):
        raise ValueError(f"unknown background variant {variant!r}")
    far, med = compute_background_products(scene, target_cam, config, source_ids)
    return far if variant == "farthest" else med


@dataclass
class FusionProducts:
    """Everything the compositor's streams need for one (camera, time)."""

    consensus: Image
    consensus_depth: DepthMap
    nearest: Image
    median: Image
    farthest: Image
    volume: DepthCostVolume


def compute_fusion_products(scene, target_cam: PinholeCamera, time: int,
                            config: FusionConfig,
                            source_ids: list[str] | None = None) -> FusionProducts:
    reps = compute_reprojections(scene, target_cam, time, config, source_ids)
    vol = build_cost_volume(target_cam, reps)
    fg, fg_depth = consensus_foreground(vol, config.consensus)
    return FusionProducts(
        consensus=fg, consensus_depth=fg_depth,
        nearest=nearest_depth_render(vol),
        median=median_render(reps) if reps else Image(
            np.zeros((target_cam.height, target_cam.width, 3)),
            np.zeros((target_cam.height, target_cam.width), dtype=bool)),
        farthest=farthest_depth_render(vol),
        volume=vol,
    )


def compute_view_layers(scene, target, time: int, config: FusionConfig) -> ViewLayers:
    """Full per-view pipeline: consensus foreground plus accumulated background."""
    target_cam = scene.camera(target) if isinstance(target, str) else target
    sources = _source_cameras(scene, target)
    target_cam = working_camera(target_cam, config)
    products = compute_fusion_products(scene, target_cam, time, config, sources)
    background = compute_background(scene, target_cam, config, sources)
    return ViewLayers(foreground=products.consensus,
                      foreground_depth=products.consensus_depth,
                      background=background, camera=target_cam, time=time)
