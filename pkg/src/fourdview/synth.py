"""Synthetic calibrated scenes with ray-cast ground truth.

Scenes are ambient-lit (no shadows): the color of a surface point is its
albedo, sampled from deterministic procedural value-noise textures, so
every render is an unambiguous oracle for the fusion pipeline. The ray
caster can render any pinhole camera, optionally excluding dynamic
objects, which supplies object-free and occluder-free reference renders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec
from .geometry import PinholeCamera, look_at_camera, pixel_rays, project_points
from .image import DepthMap, Image
from . import scene_io

_EPS = 1e-9


class ValueNoise3:
    """Deterministic trilinear value noise over a hashed integer lattice."""

    def __init__(self, seed: int):
        rng = np.random.default_rng(seed)
        perm = rng.permutation(256).astype(np.int64)
        self._perm = np.concatenate([perm, perm])
        self._values = rng.random(256)

    def _lattice(self, ix, iy, iz):
        p = self._perm
        h = p[p[p[ix & 255] + (iy & 255)] + (iz & 255)]
        return self._values[h]

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        p0 = np.floor(pts).astype(np.int64)
        f = pts - p0
        # smoothstep fade keeps the field C1
        w = f * f * f * (f * (f * 6.0 - 15.0) + 10.0)
        ix, iy, iz = p0[..., 0], p0[..., 1], p0[..., 2]
        wx, wy, wz = w[..., 0], w[..., 1], w[..., 2]

        def corner(dx, dy, dz):
            return self._lattice(ix + dx, iy + dy, iz + dz)

        c00 = corner(0, 0, 0) * (1 - wx) + corner(1, 0, 0) * wx
        c10 = corner(0, 1, 0) * (1 - wx) + corner(1, 1, 0) * wx
        c01 = corner(0, 0, 1) * (1 - wx) + corner(1, 0, 1) * wx
        c11 = corner(0, 1, 1) * (1 - wx) + corner(1, 1, 1) * wx
        c0 = c00 * (1 - wy) + c10 * wy
        c1 = c01 * (1 - wy) + c11 * wy
        return c0 * (1 - wz) + c1 * wz


@dataclass
class Material:
    """Procedural albedo: base color modulated by three noise octaves.

    Octave amplitudes trade stereo matchability against resampling error:
    gradients must stay gentle enough that half-pixel splats keep high
    PSNR, yet carry enough local structure for window correlation.
    """

    base: np.ndarray
    dir1: np.ndarray
    dir2: np.ndarray
    amp1: float
    amp2: float
    amp3: float
    freq1: float
    freq2: float
    freq3: float
    noise: ValueNoise3

    @classmethod
    def from_seed(cls, seed: int, base, amp1=0.18, amp2=0.10, amp3=0.10,
                  freq1=1.3, freq2=6.0, freq3=14.0) -> "Material":
        rng = np.random.default_rng(seed)
        d2 = rng.random(3) - 0.5
        d2 /= np.linalg.norm(d2)
        return cls(base=np.asarray(base, dtype=np.float64),
                   dir1=np.ones(3), dir2=d2, amp1=amp1, amp2=amp2, amp3=amp3,
                   freq1=freq1, freq2=freq2, freq3=freq3, noise=ValueNoise3(seed))

    def color(self, pts: np.ndarray) -> np.ndarray:
        n1 = self.noise(pts * self.freq1)[:, None] - 0.5
        n2 = self.noise(pts * self.freq2 + 31.7)[:, None] - 0.5
        n3 = self.noise(pts * self.freq3 + 77.3)[:, None] - 0.5
        c = (self.base + n1 * self.amp1 * self.dir1
             + (n2 * self.amp2 + n3 * self.amp3) * self.dir2)
        return np.clip(c, 0.0, 1.0)


# --- primitives -------------------------------------------------------------

def _safe(d: np.ndarray) -> np.ndarray:
    return np.where(np.abs(d) < 1e-12, 1e-12, d)


def intersect_ground(origin, dirs, extent: float) -> np.ndarray:
    """z=0 plane clipped to |x|,|y| <= extent; returns hit depth or inf."""
    t = -origin[2] / _safe(dirs[:, 2])
    pts = origin[None, :] + t[:, None] * dirs
    ok = (t > _EPS) & (np.abs(pts[:, 0]) <= extent) & (np.abs(pts[:, 1]) <= extent)
    return np.where(ok, t, np.inf)


def intersect_aabb(origin, dirs, lo, hi) -> np.ndarray:
    inv = 1.0 / _safe(dirs)
    t1 = (lo[None, :] - origin[None, :]) * inv
    t2 = (hi[None, :] - origin[None, :]) * inv
    tmin = np.minimum(t1, t2).max(axis=1)
    tmax = np.maximum(t1, t2).min(axis=1)
    ok = (tmax >= tmin) & (tmin > _EPS)
    return np.where(ok, tmin, np.inf)


def intersect_sphere(origin, dirs, center, radius: float) -> np.ndarray:
    oc = origin - center
    a = np.einsum("ij,ij->i", dirs, dirs)
    b = 2.0 * dirs @ oc
    c = oc @ oc - radius * radius
    disc = b * b - 4 * a * c
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t = (-b - sq) / (2 * a)
    ok &= t > _EPS
    return np.where(ok, t, np.inf)


# --- scene specification ----------------------------------------------------

@dataclass
class Trajectory:
    kind: str = "static"              # static | orbit | line
    center: tuple = (0.0, 0.0, 0.6)   # orbit center / static position
    radius: float = 0.0               # orbit radius
    revs: float = 1.0                 # orbit revolutions over the sequence
    phase: float = 0.0
    start: tuple = (0.0, 0.0, 0.6)    # line endpoints
    end: tuple = (0.0, 0.0, 0.6)

    def position(self, t: int, num_frames: int) -> np.ndarray:
        s = t / max(num_frames - 1, 1)
        if self.kind == "static":
            return np.asarray(self.center, dtype=np.float64)
        if self.kind == "orbit":
            a = self.phase + 2.0 * math.pi * self.revs * s
            c = np.asarray(self.center, dtype=np.float64)
            return c + np.array([self.radius * math.cos(a), self.radius * math.sin(a), 0.0])
        if self.kind == "line":
            p0 = np.asarray(self.start, dtype=np.float64)
            p1 = np.asarray(self.end, dtype=np.float64)
            return p0 + (p1 - p0) * s
        raise InvalidSpec(f"unknown trajectory kind {self.kind!r}")


@dataclass
class DynamicObject:
    shape: str = "sphere"             # sphere | box
    size: float = 0.55                # sphere radius or box half-edge
    trajectory: Trajectory = field(default_factory=Trajectory)
    base_color: tuple = (0.75, 0.3, 0.25)


@dataclass
class StaticBox:
    center: tuple = (0.0, 0.0, 0.5)
    half_extents: tuple = (0.5, 0.5, 0.5)
    base_color: tuple = (0.35, 0.55, 0.4)


@dataclass
class CameraRig:
    n: int = 8
    radius: float = 6.0
    span_deg: float = 360.0
    height: float = 2.6
    look_at: tuple = (0.0, 0.0, 0.7)
    fov_deg: float = 55.0
    jitter: float = 0.04              # relative positional jitter


@dataclass
class SyntheticSceneSpec:
    scene_id: str = "synthetic"
    seed: int = 0
    resolution: tuple = (480, 270)    # (width, height)
    num_frames: int = 30
    frame_rate: float = 30.0
    rig: CameraRig = field(default_factory=CameraRig)
    ground_extent: float = 14.0
    ground_color: tuple = (0.52, 0.52, 0.58)
    boxes: list = field(default_factory=list)
    dynamics: list = field(default_factory=list)
    sky_color: tuple = (0.74, 0.78, 0.84)

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "seed": self.seed,
            "resolution": list(self.resolution),
            "num_frames": self.num_frames,
            "frame_rate": self.frame_rate,
            "rig": {"n": self.rig.n, "radius": self.rig.radius,
                    "span_deg": self.rig.span_deg, "height": self.rig.height,
                    "look_at": list(self.rig.look_at), "fov_deg": self.rig.fov_deg,
                    "jitter": self.rig.jitter},
            "ground_extent": self.ground_extent,
            "ground_color": list(self.ground_color),
            "sky_color": list(self.sky_color),
            "boxes": [{"center": list(b.center), "half_extents": list(b.half_extents),
                       "base_color": list(b.base_color)} for b in self.boxes],
            "dynamics": [{"shape": d.shape, "size": d.size,
                          "base_color": list(d.base_color),
                          "trajectory": {
                              "kind": d.trajectory.kind,
                              "center": list(d.trajectory.center),
                              "radius": d.trajectory.radius,
                              "revs": d.trajectory.revs,
                              "phase": d.trajectory.phase,
                              "start": list(d.trajectory.start),
                              "end": list(d.trajectory.end)}} for d in self.dynamics],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticSceneSpec":
        rig_doc = doc.get("rig", {})
        rig = CameraRig(n=int(rig_doc.get("n", 8)), radius=float(rig_doc.get("radius", 6.0)),
                        span_deg=float(rig_doc.get("span_deg", 360.0)),
                        height=float(rig_doc.get("height", 2.6)),
                        look_at=tuple(rig_doc.get("look_at", (0.0, 0.0, 0.7))),
                        fov_deg=float(rig_doc.get("fov_deg", 55.0)),
                        jitter=float(rig_doc.get("jitter", 0.04)))
        boxes = [StaticBox(center=tuple(b["center"]), half_extents=tuple(b["half_extents"]),
                           base_color=tuple(b.get("base_color", (0.35, 0.55, 0.4))))
                 for b in doc.get("boxes", [])]
        dynamics = []
        for d in doc.get("dynamics", []):
            tr = d.get("trajectory", {})
            dynamics.append(DynamicObject(
                shape=d.get("shape", "sphere"), size=float(d.get("size", 0.55)),
                base_color=tuple(d.get("base_color", (0.75, 0.3, 0.25))),
                trajectory=Trajectory(kind=tr.get("kind", "static"),
                                      center=tuple(tr.get("center", (0, 0, 0.6))),
                                      radius=float(tr.get("radius", 0.0)),
                                      revs=float(tr.get("revs", 1.0)),
                                      phase=float(tr.get("phase", 0.0)),
                                      start=tuple(tr.get("start", (0, 0, 0.6))),
                                      end=tuple(tr.get("end", (0, 0, 0.6))))))
        return cls(scene_id=doc.get("scene_id", "synthetic"), seed=int(doc.get("seed", 0)),
                   resolution=tuple(doc.get("resolution", (480, 270))),
                   num_frames=int(doc.get("num_frames", 30)),
                   frame_rate=float(doc.get("frame_rate", 30.0)), rig=rig,
                   ground_extent=float(doc.get("ground_extent", 14.0)),
                   ground_color=tuple(doc.get("ground_color", (0.52, 0.52, 0.58))),
                   boxes=boxes, dynamics=dynamics,
                   sky_color=tuple(doc.get("sky_color", (0.74, 0.78, 0.84))))


def build_cameras(spec: SyntheticSceneSpec) -> list[tuple[str, PinholeCamera]]:
    """Deterministic camera ring: poses on an arc looking at the scene center."""
    rig = spec.rig
    if rig.n < 2:
        raise InvalidSpec("need at least 2 cameras")
    rng = np.random.default_rng(spec.seed + 7919)
    w, h = spec.resolution
    f = 0.5 * w / math.tan(math.radians(rig.fov_deg) * 0.5)
    K = np.array([[f, 0.0, (w - 1) / 2.0],
                  [0.0, f, (h - 1) / 2.0],
                  [0.0, 0.0, 1.0]])
    if rig.span_deg >= 360.0 - 1e-9:
        angles = [2.0 * math.pi * i / rig.n for i in range(rig.n)]
    else:
        half = math.radians(rig.span_deg) / 2.0
        angles = [-half + 2 * half * i / (rig.n - 1) for i in range(rig.n)]
    cams = []
    for i, a in enumerate(angles):
        jitter = (rng.random(3) - 0.5) * 2.0 * rig.jitter * rig.radius
        eye = np.array([rig.radius * math.cos(a), rig.radius * math.sin(a), rig.height]) + jitter
        target = np.asarray(rig.look_at, dtype=np.float64) + (rng.random(3) - 0.5) * 0.05
        cams.append((f"c{i}", look_at_camera(eye, target, K, w, h)))
    return cams


def _materials(spec: SyntheticSceneSpec):
    ground = Material.from_seed(spec.seed + 1, spec.ground_color)
    boxes = [Material.from_seed(spec.seed + 10 + i, b.base_color, amp1=0.2, amp2=0.12)
             for i, b in enumerate(spec.boxes)]
    dyn = [Material.from_seed(spec.seed + 100 + i, d.base_color,
                              amp1=0.2, amp2=0.12, amp3=0.12,
                              freq1=2.2, freq2=8.0, freq3=18.0)
           for i, d in enumerate(spec.dynamics)]
    return ground, boxes, dyn


def render_view(spec: SyntheticSceneSpec, cam: PinholeCamera, time: int,
                include_dynamic=None) -> tuple[Image, DepthMap, np.ndarray]:
    """Ray-cast one view; returns (rgb, depth, dynamic-object mask).

    include_dynamic: None renders all dynamic objects; an iterable of
    indices restricts to those; an empty set renders statics only.
    """
    include = set(range(len(spec.dynamics))) if include_dynamic is None else set(include_dynamic)
    ground_mat, box_mats, dyn_mats = _materials(spec)

    origin, dirs = pixel_rays(cam)
    h, w = dirs.shape[:2]
    flat = dirs.reshape(-1, 3)
    n = flat.shape[0]

    hits = [intersect_ground(origin, flat, spec.ground_extent)]
    mats = [ground_mat]
    dyn_flags = [False]
    for i, b in enumerate(spec.boxes):
        c = np.asarray(b.center, dtype=np.float64)
        e = np.asarray(b.half_extents, dtype=np.float64)
        hits.append(intersect_aabb(origin, flat, c - e, c + e))
        mats.append(box_mats[i])
        dyn_flags.append(False)
    for i in sorted(include):
        d = spec.dynamics[i]
        pos = d.trajectory.position(time, spec.num_frames)
        if d.shape == "sphere":
            hits.append(intersect_sphere(origin, flat, pos, d.size))
        elif d.shape == "box":
            e = np.full(3, d.size)
            hits.append(intersect_aabb(origin, flat, pos - e, pos + e))
        else:
            raise InvalidSpec(f"unknown dynamic shape {d.shape!r}")
        mats.append(dyn_mats[i])
        dyn_flags.append(True)

    all_t = np.stack(hits, axis=0)            # (P, n)
    best = np.argmin(all_t, axis=0)
    best_t = all_t[best, np.arange(n)]
    hit = np.isfinite(best_t)

    rgb = np.tile(np.asarray(spec.sky_color, dtype=np.float64), (n, 1))
    dyn_mask = np.zeros(n, dtype=bool)
    for pi, mat in enumerate(mats):
        sel = hit & (best == pi)
        if not sel.any():
            continue
        pts = origin[None, :] + best_t[sel, None] * flat[sel]
        rgb[sel] = mat.color(pts)
        if dyn_flags[pi]:
            dyn_mask[sel] = True

    depth = np.where(hit, best_t, 0.0).reshape(h, w)
    img = Image(rgb.reshape(h, w, 3))
    return img, DepthMap(depth, hit.reshape(h, w)), dyn_mask.reshape(h, w)


def validate_spec(spec: SyntheticSceneSpec) -> None:
    if spec.num_frames < 1:
        raise InvalidSpec("num_frames must be >= 1")
    if spec.resolution[0] < 8 or spec.resolution[1] < 8:
        raise InvalidSpec("resolution too small")
    cams = build_cameras(spec)
    for i, d in enumerate(spec.dynamics):
        visible_frames = 0
        for t in range(spec.num_frames):
            pos = d.trajectory.position(t, spec.num_frames)
            ok = True
            for _, cam in cams:
                pix, depth = project_points(cam, pos[None, :])
                if depth[0] <= 0 or not (0 <= pix[0, 0] < cam.width and 0 <= pix[0, 1] < cam.height):
                    ok = False
                    break
            visible_frames += ok
        if visible_frames < 0.8 * spec.num_frames:
            raise InvalidSpec(
                f"dynamic object {i} inside the common frustum only "
                f"{visible_frames}/{spec.num_frames} frames (< 80%)")


def generate_synthetic_scene(spec: SyntheticSceneSpec, out) -> scene_io.SceneManifest:
    """Write a full scene directory with ground truth; deterministic per seed."""
    from pathlib import Path

    validate_spec(spec)
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    cams = build_cameras(spec)

    entries = [scene_io.CalibrationEntry(cid, cam.K, cam.R, cam.t) for cid, cam in cams]
    scene_io.save_calibration(root / scene_io.CALIBRATION_NAME, entries)

    for cid, cam in cams:
        bg_img, _, _ = render_view(spec, cam, 0, include_dynamic=())
        scene_io.save_png(scene_io.background_path(root, cid), bg_img)
        for t in range(spec.num_frames):
            img, depth, mask = render_view(spec, cam, t)
            scene_io.save_png(scene_io.frame_path(root, cid, t), img)
            scene_io.save_depth(scene_io.depth_path(root, cid, t), depth)
            scene_io.save_mask_png(scene_io.mask_path(root, cid, t), mask)

    manifest = scene_io.SceneManifest(
        scene_id=spec.scene_id,
        num_cameras=len(cams),
        num_frames=spec.num_frames,
        frame_rate=spec.frame_rate,
        resolution=tuple(spec.resolution),
        camera_ids=[cid for cid, _ in cams],
        has_ground_truth=True,
        root=root,
    )
    scene_io.save_manifest(root, manifest)
    return scene_io.load_manifest(root)


# --- presets ----------------------------------------------------------------

def preset_ring(seed: int = 3, resolution=(480, 270), num_frames: int = 30,
                n_cameras: int = 8) -> SyntheticSceneSpec:
    """Full-circle ring around a moving sphere; fusion/ablation test bed."""
    return SyntheticSceneSpec(
        scene_id="ring", seed=seed, resolution=resolution, num_frames=num_frames,
        rig=CameraRig(n=n_cameras, radius=6.0, span_deg=360.0, height=2.6,
                      look_at=(0.0, 0.0, 0.7)),
        boxes=[StaticBox(center=(-1.6, -1.2, 0.45), half_extents=(0.45, 0.45, 0.45),
                         base_color=(0.32, 0.5, 0.38)),
               StaticBox(center=(1.7, 1.3, 0.35), half_extents=(0.4, 0.5, 0.35),
                         base_color=(0.5, 0.42, 0.3))],
        dynamics=[DynamicObject(
            shape="sphere", size=0.55, base_color=(0.78, 0.28, 0.22),
            trajectory=Trajectory(kind="orbit", center=(0.0, 0.0, 0.75),
                                  radius=0.9, revs=1.0, phase=0.6))],
    )


def preset_arc(seed: int = 11, resolution=(480, 270), num_frames: int = 30,
               n_cameras: int = 8, span_deg: float = 70.0) -> SyntheticSceneSpec:
    """Narrow arc rig with good stereo pairs; training/eval test bed."""
    return SyntheticSceneSpec(
        scene_id="arc", seed=seed, resolution=resolution, num_frames=num_frames,
        rig=CameraRig(n=n_cameras, radius=6.0, span_deg=span_deg, height=2.4,
                      look_at=(0.0, 0.0, 0.7), jitter=0.025),
        boxes=[StaticBox(center=(-1.8, 1.0, 0.5), half_extents=(0.5, 0.45, 0.5),
                         base_color=(0.3, 0.52, 0.4)),
               StaticBox(center=(1.9, 0.6, 0.4), half_extents=(0.45, 0.45, 0.4),
                         base_color=(0.52, 0.44, 0.3))],
        dynamics=[DynamicObject(
            shape="sphere", size=0.6, base_color=(0.78, 0.3, 0.2),
            trajectory=Trajectory(kind="line", start=(-1.2, -0.9, 1.05),
                                  end=(1.2, -0.6, 1.05)))],
    )


def preset_occlusion(seed: int = 23, resolution=(480, 270), num_frames: int = 24,
                     n_cameras: int = 14, span_deg: float = 110.0) -> SyntheticSceneSpec:
    """Two dynamic objects roughly aligned for the central cameras (ring
    angle 0 looks along -x): a front sphere occluding a larger rear sphere.
    Enough off-axis cameras see past the front object that its pixels hold
    two consensus clusters, which disocclusion can separate."""
    return SyntheticSceneSpec(
        scene_id="occlusion", seed=seed, resolution=resolution, num_frames=num_frames,
        rig=CameraRig(n=n_cameras, radius=6.0, span_deg=span_deg, height=2.0,
                      look_at=(0.0, 0.0, 0.8), jitter=0.02),
        dynamics=[
            DynamicObject(shape="sphere", size=0.45, base_color=(0.8, 0.32, 0.2),
                          trajectory=Trajectory(kind="line", start=(1.8, -0.25, 0.85),
                                                end=(1.8, 0.25, 0.85))),
            DynamicObject(shape="sphere", size=0.85, base_color=(0.25, 0.35, 0.72),
                          trajectory=Trajectory(kind="static", center=(-1.2, 0.0, 0.95))),
        ],
    )


def preset_backdrop(seed: int = 31, resolution=(480, 270), num_frames: int = 30,
                    n_cameras: int = 8, span_deg: float = 70.0) -> SyntheticSceneSpec:
    """Ground plus one moving sphere, no static occluders: isolates the
    farthest-depth/temporal-median background mechanism."""
    return SyntheticSceneSpec(
        scene_id="backdrop", seed=seed, resolution=resolution, num_frames=num_frames,
        rig=CameraRig(n=n_cameras, radius=6.0, span_deg=span_deg, height=2.4,
                      look_at=(0.0, 0.0, 0.7), jitter=0.025),
        dynamics=[DynamicObject(
            shape="sphere", size=0.65, base_color=(0.78, 0.3, 0.2),
            trajectory=Trajectory(kind="orbit", center=(0.0, 0.0, 0.8),
                                  radius=1.0, revs=1.0, phase=0.3))],
    )


PRESETS = {"ring": preset_ring, "arc": preset_arc, "occlusion": preset_occlusion,
           "backdrop": preset_backdrop}
