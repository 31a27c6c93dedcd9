"""Pinhole camera math: projection, rectification, and forward reprojection.

World frame is z-up; cameras use the usual computer-vision convention
(+x right, +y down, +z along the optical axis). A camera maps a world
point X to pixel coordinates via K (R X + t); depth is the third
component of R X + t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, DegenerateBaseline, NonPositiveDepth
from .image import DepthMap, Image

DISPARITY_EPS = 0.1  # px; smaller disparities give no usable depth


@dataclass(frozen=True)
class PinholeCamera:
    """Calibrated pinhole camera (no distortion)."""

    K: np.ndarray       # (3, 3) intrinsics, upper triangular
    R: np.ndarray       # (3, 3) world->camera rotation
    t: np.ndarray       # (3,) world->camera translation
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "K", np.asarray(self.K, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "R", np.asarray(self.R, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64).reshape(3))

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates (-R^T t)."""
        return -self.R.T @ self.t

    def with_pose(self, R: np.ndarray, t: np.ndarray) -> "PinholeCamera":
        return PinholeCamera(self.K, R, t, self.width, self.height)


def look_at_camera(eye, target, K, width, height) -> PinholeCamera:
    """Build a camera at `eye` looking toward `target`, image up = world +z."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    z_c = target - eye
    nz = np.linalg.norm(z_c)
    if nz < 1e-12:
        raise DegenerateBaseline("eye and target coincide")
    z_c = z_c / nz
    up = np.array([0.0, 0.0, 1.0])
    x_c = np.cross(z_c, up)
    nx = np.linalg.norm(x_c)
    if nx < 1e-9:  # looking straight up/down: pick an arbitrary horizontal right
        x_c = np.array([1.0, 0.0, 0.0])
    else:
        x_c = x_c / nx
    y_c = np.cross(z_c, x_c)
    R = np.stack([x_c, y_c, z_c], axis=0)
    return PinholeCamera(K, R, -R @ eye, width, height)


def project(cam: PinholeCamera, X) -> tuple[np.ndarray, float]:
    """Project one world point; raises BehindCamera for depth <= 0."""
    X = np.asarray(X, dtype=np.float64).reshape(3)
    xc = cam.R @ X + cam.t
    depth = xc[2]
    if depth <= 0:
        raise BehindCamera(f"point has non-positive depth {depth}")
    p = cam.K @ xc
    return p[:2] / depth, float(depth)


def project_points(cam: PinholeCamera, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection of (N, 3) points -> ((N, 2) pixels, (N,) depths).

    Does not raise for points behind the camera; callers filter on depth > 0.
    """
    X = np.asarray(X, dtype=np.float64).reshape(-1, 3)
    xc = X @ cam.R.T + cam.t
    depth = xc[:, 2]
    p = xc @ cam.K.T
    with np.errstate(divide="ignore", invalid="ignore"):
        pix = p[:, :2] / depth[:, None]
    return pix, depth


def backproject(cam: PinholeCamera, pixel, depth: float) -> np.ndarray:
    """Inverse of project for a single pixel at a given depth."""
    if depth <= 0:
        raise NonPositiveDepth(f"depth must be > 0, got {depth}")
    u, v = float(pixel[0]), float(pixel[1])
    xc = depth * np.linalg.solve(cam.K, np.array([u, v, 1.0]))
    return cam.R.T @ (xc - cam.t)


def backproject_points(cam: PinholeCamera, pixels: np.ndarray, depths: np.ndarray) -> np.ndarray:
    """Vectorized backprojection of (N, 2) pixels with (N,) depths -> (N, 3)."""
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    depths = np.asarray(depths, dtype=np.float64).reshape(-1)
    ones = np.ones((pixels.shape[0], 1))
    homo = np.concatenate([pixels, ones], axis=1)
    Kinv = np.linalg.inv(cam.K)
    xc = (homo @ Kinv.T) * depths[:, None]
    return (xc - cam.t) @ cam.R


def pixel_rays(cam: PinholeCamera) -> tuple[np.ndarray, np.ndarray]:
    """World-space ray origin and per-pixel directions scaled so that
    origin + depth * dir hits the surface at camera-frame z == depth."""
    u, v = np.meshgrid(np.arange(cam.width, dtype=np.float64),
                       np.arange(cam.height, dtype=np.float64))
    homo = np.stack([u, v, np.ones_like(u)], axis=-1).reshape(-1, 3)
    Kinv = np.linalg.inv(cam.K)
    dirs_cam = homo @ Kinv.T             # z component is exactly 1
    dirs_world = dirs_cam @ cam.R
    return cam.center, dirs_world.reshape(cam.height, cam.width, 3)


@dataclass(frozen=True)
class RectifiedPairGeometry:
    """Rectified stereo pair: shared intrinsics, baseline along +x."""

    left: PinholeCamera
    right: PinholeCamera
    H_left: np.ndarray    # (3, 3) original-left pixels -> rectified-left pixels
    H_right: np.ndarray
    baseline: float
    focal: float


def rectify_pair(A: PinholeCamera, B: PinholeCamera) -> RectifiedPairGeometry:
    """Rotate both cameras so the baseline becomes the shared x-axis.

    Both rectified cameras keep their original centers, share averaged
    intrinsics (zero skew), and use the same image size as A.
    """
    Ca, Cb = A.center, B.center
    baseline_vec = Cb - Ca
    baseline = float(np.linalg.norm(baseline_vec))
    if baseline < 1e-9:
        raise DegenerateBaseline("camera centers coincide")

    x_axis = baseline_vec / baseline
    # mean optical axis, orthogonalized against the baseline
    z_mean = A.R[2] + B.R[2]
    z_axis = z_mean - x_axis * (z_mean @ x_axis)
    nz = np.linalg.norm(z_axis)
    if nz < 1e-9:
        raise DegenerateBaseline("baseline parallel to both optical axes")
    z_axis = z_axis / nz
    y_axis = np.cross(z_axis, x_axis)
    R_rect = np.stack([x_axis, y_axis, z_axis], axis=0)

    K_new = 0.5 * (A.K + B.K)
    K_new[0, 1] = 0.0

    H_left = K_new @ R_rect @ A.R.T @ np.linalg.inv(A.K)
    H_right = K_new @ R_rect @ B.R.T @ np.linalg.inv(B.K)

    left = PinholeCamera(K_new, R_rect, -R_rect @ Ca, A.width, A.height)
    right = PinholeCamera(K_new, R_rect, -R_rect @ Cb, A.width, A.height)
    return RectifiedPairGeometry(left, right, H_left, H_right, baseline, float(K_new[0, 0]))


def warp_homography(img: Image, H: np.ndarray, width: int, height: int) -> Image:
    """Resample an image under pixel homography H (src->dst), inverse-mapped.

    Bilinear for color; a destination pixel is valid only when all four
    source neighbours are in bounds and valid.
    """
    Hinv = np.linalg.inv(H)
    u, v = np.meshgrid(np.arange(width, dtype=np.float64),
                       np.arange(height, dtype=np.float64))
    homo = np.stack([u, v, np.ones_like(u)], axis=-1).reshape(-1, 3)
    src = homo @ Hinv.T
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = src[:, 0] / src[:, 2]
        sy = src[:, 1] / src[:, 2]
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    fx = sx - x0
    fy = sy - y0
    inb = (x0 >= 0) & (y0 >= 0) & (x0 + 1 <= img.width - 1) & (y0 + 1 <= img.height - 1)
    inb &= np.isfinite(sx) & np.isfinite(sy)
    x0c = np.clip(x0, 0, img.width - 2)
    y0c = np.clip(y0, 0, img.height - 2)

    d = img.data
    m = img.mask
    w00 = (1 - fx) * (1 - fy)
    w10 = fx * (1 - fy)
    w01 = (1 - fx) * fy
    w11 = fx * fy
    out = (d[y0c, x0c] * w00[:, None] + d[y0c, x0c + 1] * w10[:, None]
           + d[y0c + 1, x0c] * w01[:, None] + d[y0c + 1, x0c + 1] * w11[:, None])
    vmask = inb & m[y0c, x0c] & m[y0c, x0c + 1] & m[y0c + 1, x0c] & m[y0c + 1, x0c + 1]
    out[~vmask] = 0.0
    return Image(out.reshape(height, width, 3), vmask.reshape(height, width))


def disparity_to_depth(disp: np.ndarray, valid: np.ndarray,
                       geom: RectifiedPairGeometry) -> DepthMap:
    """depth = focal * baseline / disparity; near-zero disparities invalid."""
    disp = np.asarray(disp, dtype=np.float64)
    ok = np.asarray(valid, dtype=bool) & (disp > DISPARITY_EPS)
    depth = np.zeros_like(disp)
    depth[ok] = geom.focal * geom.baseline / disp[ok]
    return DepthMap(depth, ok)


def reproject_view(src: PinholeCamera, img: Image, depth: DepthMap,
                   dst: PinholeCamera) -> tuple[Image, DepthMap]:
    """Forward-splat a source view into a destination view.

    Each valid source pixel backprojects at its depth and lands on its
    nearest integer destination pixel (1-px splat); collisions keep the
    sample with smaller destination depth. Untouched pixels stay blank.
    """
    h, w = dst.height, dst.width
    out_img = np.zeros((h, w, 3))
    out_depth = np.zeros((h, w))
    out_mask = np.zeros((h, w), dtype=bool)

    sel = img.mask & depth.valid
    if not sel.any():
        return Image(out_img, out_mask), DepthMap(out_depth, out_mask)

    ys, xs = np.nonzero(sel)
    pix = np.stack([xs, ys], axis=1).astype(np.float64)
    X = backproject_points(src, pix, depth.depth[ys, xs])
    dpix, ddepth = project_points(dst, X)

    u = np.rint(dpix[:, 0]).astype(int)
    v = np.rint(dpix[:, 1]).astype(int)
    keep = (ddepth > 0) & (u >= 0) & (u < w) & (v >= 0) & (v < h)
    if not keep.any():
        return Image(out_img, out_mask), DepthMap(out_depth, out_mask)
    u, v, ddepth = u[keep], v[keep], ddepth[keep]
    colors = img.data[ys[keep], xs[keep]]

    # painter's order: write far samples first so the nearest wins
    order = np.argsort(-ddepth, kind="stable")
    u, v, ddepth, colors = u[order], v[order], ddepth[order], colors[order]
    out_img[v, u] = colors
    out_depth[v, u] = ddepth
    out_mask[v, u] = True
    return Image(out_img, out_mask), DepthMap(out_depth, out_mask)


def scale_camera(cam: PinholeCamera, width: int, height: int) -> PinholeCamera:
    """Rescale intrinsics to a new image size (pixel centers preserved)."""
    sx = width / cam.width
    sy = height / cam.height
    K = cam.K.copy()
    K[0, 0] *= sx
    K[0, 1] *= sx
    K[0, 2] = sx * (cam.K[0, 2] + 0.5) - 0.5
    K[1, 1] *= sy
    K[1, 2] = sy * (cam.K[1, 2] + 0.5) - 0.5
    return PinholeCamera(K, cam.R, cam.t, width, height)


def quantized_pose_key(cam: PinholeCamera, quantum: float = 1e-6) -> tuple:
    """Hashable pose key for caching; quantized to absorb float fuzz."""
    q = lambda a: tuple(np.rint(np.asarray(a, dtype=np.float64).ravel() / quantum).astype(np.int64))
    return q(cam.K) + q(cam.R) + q(cam.t) + (cam.width, cam.height)
