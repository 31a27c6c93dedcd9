"""User-driven 4D edits: mask propagation, object removal, disocclusion.

A mask drawn on a single frame lifts to world space through the consensus
foreground depth; a proximity tracker carries the point cluster through
time and rasterizes per-frame masks. Removal blanks foreground pixels so
composition falls back to background; disocclusion re-runs the consensus
selection skipping the nearest clusters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


from .errors import EmptyLift, ShapeMismatch, TrackLost
from .fusion import ConsensusParams, DepthCostVolume, ViewLayers, consensus_foreground
from .geometry import backproject_points
from .image import DepthMap, Image


@dataclass
class EditMask:
    camera_id: str
    time: int
    mask: np.ndarray           # (H, W) bool at the camera's resolution
    op: str = "remove"         # remove | disocclude

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.op not in ("remove", "disocclude"):
            raise ValueError(f"unknown edit op {self.op!r}")


@dataclass
class PropagationParams:
    radius_scale: float = 1.5   # radius = scale * RMS radius of the lifted cluster
    grace_frames: int = 5       # consecutive empty frames before TrackLost
    trim_sigma: float = 2.5     # lift outliers beyond trim_sigma * RMS are dropped
    close_mask: bool = True     # fill speckle holes in the rasterized masks


@dataclass
class PropagatedMask:
    anchor_time: int
    masks: dict = field(default_factory=dict)     # time -> (H, W) bool
    anchor_points: np.ndarray = None

    def mask_at(self, time: int) -> np.ndarray:
        return self.masks[time]


def lift_mask(mask: EditMask, layers: ViewLayers) -> np.ndarray:
    """Backproject masked pixels with valid foreground depth to world points."""
    if mask.mask.shape != layers.foreground_depth.depth.shape:
        raise ShapeMismatch(
            f"mask {mask.mask.shape} vs layers {layers.foreground_depth.depth.shape}")
    sel = mask.mask & layers.foreground_depth.valid
    if not sel.any():
        raise EmptyLift("no masked pixel carries valid foreground depth")
    ys, xs = np.nonzero(sel)
    pix = np.stack([xs, ys], axis=1).astype(np.float64)
    return backproject_points(layers.camera, pix, layers.foreground_depth.depth[ys, xs])


def trimmed_cluster(points: np.ndarray, trim_sigma: float = 2.5):
    """Robust centroid and RMS radius: one outlier-trimming pass."""
    centroid = points.mean(axis=0)
    d = np.linalg.norm(points - centroid, axis=1)
    rms = float(np.sqrt(np.mean(d ** 2)))
    keep = d <= trim_sigma * max(rms, 1e-9)
    if keep.any() and not keep.all():
        centroid = points[keep].mean(axis=0)
        d = np.linalg.norm(points[keep] - centroid, axis=1)
        rms = float(np.sqrt(np.mean(d ** 2)))
    return centroid, rms


def _frame_points(layers: ViewLayers):
    dm = layers.foreground_depth
    ys, xs = np.nonzero(dm.valid)
    if ys.size == 0:
        return np.zeros((0, 3)), ys, xs
    pix = np.stack([xs, ys], axis=1).astype(np.float64)
    return backproject_points(layers.camera, pix, dm.depth[ys, xs]), ys, xs


def propagate_mask(points: np.ndarray, layers_provider, window,
                   params: PropagationParams | None = None,
                   anchor_time: int | None = None) -> PropagatedMask:
    """Carry the lifted cluster through a frame window of one camera view.

    layers_provider: callable(time) -> ViewLayers for the target camera.
    window: iterable of frame indices. Mean-shift style tracking: per frame,
    foreground points within the radius of the current centroid form the
    mask and their mean becomes the new centroid. The radius is fixed from
    the anchor cluster's trimmed RMS; losing the cluster for more than
    grace_frames consecutive frames raises TrackLost.
    """
    params = params or PropagationParams()
    if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] == 0:
        raise EmptyLift("need a non-empty (N, 3) point set")
    window = sorted(window)
    anchor = anchor_time if anchor_time is not None else window[0]
    centroid0, rms = trimmed_cluster(points, params.trim_sigma)
    radius = params.radius_scale * max(rms, 1e-6)

    result = PropagatedMask(anchor_time=anchor, anchor_points=points.copy())

    def run(times):
        centroid = centroid0
        misses = 0
        for t in times:
            layers = layers_provider(t)
            fg_pts, ys, xs = _frame_points(layers)
            hit = np.zeros(layers.foreground_depth.depth.shape, dtype=bool)
            if fg_pts.shape[0]:
                # two mean-shift passes: associate, recenter, associate again
                near = np.linalg.norm(fg_pts - centroid, axis=1) <= radius
                if near.any():
                    shifted = fg_pts[near].mean(axis=0)
                    near = np.linalg.norm(fg_pts - shifted, axis=1) <= radius
                hit[ys[near], xs[near]] = True
                if near.any():
                    centroid = fg_pts[near].mean(axis=0)
                    misses = 0
                else:
                    misses += 1
                if params.close_mask and near.any():
                    from scipy.ndimage import binary_closing, binary_dilation
                    hit = binary_closing(binary_dilation(hit, np.ones((3, 3))),
                                         np.ones((3, 3)))
            else:
                misses += 1
            if misses > params.grace_frames:
                raise TrackLost(f"cluster empty for {misses} consecutive frames at t={t}")
            result.masks[t] = hit

    forward = [t for t in window if t >= anchor]
    backward = [t for t in window if t < anchor][::-1]
    run(forward)
    run(backward)
    return result


def remove_region(layers: ViewLayers, mask: np.ndarray) -> ViewLayers:
    """Blank masked foreground pixels; composition then fills from background."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != layers.foreground.mask.shape:
        raise ShapeMismatch(f"mask {mask.shape} vs layers {layers.foreground.mask.shape}")
    fg = layers.foreground.copy()
    fg.mask &= ~mask
    fg.data[~fg.mask] = 0.0
    fgd = layers.foreground_depth.copy()
    fgd.valid &= ~mask
    fgd.depth[~fgd.valid] = 0.0
    return ViewLayers(foreground=fg, foreground_depth=fgd,
                      background=layers.background, camera=layers.camera,
                      time=layers.time)


def disocclude(vol: DepthCostVolume, layers: ViewLayers, mask: np.ndarray,
               order: int, params: ConsensusParams | None = None) -> ViewLayers:
    """Reveal the surface behind the first `order` consensus clusters.

    Outside the mask the layers are untouched. Masked pixels with no deeper
    cluster are blanked so composition falls back to the background.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != layers.foreground.mask.shape:
        raise ShapeMismatch(f"mask {mask.shape} vs layers {layers.foreground.mask.shape}")
    if order == 0:
        return ViewLayers(foreground=layers.foreground.copy(),
                          foreground_depth=layers.foreground_depth.copy(),
                          background=layers.background, camera=layers.camera,
                          time=layers.time)
    params = params or ConsensusParams()
    deeper, deeper_d = consensus_foreground(vol, params, skip_clusters=order)

    fg = layers.foreground.copy()
    fgd = layers.foreground_depth.copy()
    inside = mask
    fg.data[inside] = np.where(deeper.mask[inside][:, None],
                               deeper.data[inside], 0.0)
    fg.mask[inside] = deeper.mask[inside]
    fgd.depth[inside] = np.where(deeper_d.valid[inside], deeper_d.depth[inside], 0.0)
    fgd.valid[inside] = deeper_d.valid[inside]
    return ViewLayers(foreground=fg, foreground_depth=fgd,
                      background=layers.background, camera=layers.camera,
                      time=layers.time)


# --- mask envelope (shared with the HTTP edit endpoint) ----------------------

def mask_to_rle(mask: np.ndarray) -> list[int]:
    """Row-major run lengths, alternating runs of 0s and 1s, starting with 0s."""
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return []
    changes = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.concatenate([[0], changes, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def rle_to_mask(runs: list[int], width: int, height: int) -> np.ndarray:
    total = width * height
    if sum(runs) != total:
        raise ShapeMismatch(f"RLE sums to {sum(runs)}, expected {total}")
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for r in runs:
        if value:
            flat[pos:pos + r] = True
        pos += r
        value = not value
    return flat.reshape(height, width)


def encode_mask_envelope(mask: EditMask) -> dict:
    h, w = mask.mask.shape
    return {"version": 1, "camera_id": mask.camera_id, "time": int(mask.time),
            "op": mask.op, "width": int(w), "height": int(h),
            "rle": mask_to_rle(mask.mask)}


def decode_mask_envelope(doc: dict) -> EditMask:
    for key in ("camera_id", "time", "op", "width", "height", "rle"):
        if key not in doc:
            raise ShapeMismatch(f"mask envelope missing field {key!r}")
    mask = rle_to_mask(list(doc["rle"]), int(doc["width"]), int(doc["height"]))
    return EditMask(camera_id=str(doc["camera_id"]), time=int(doc["time"]),
                    mask=mask, op=str(doc["op"]))
