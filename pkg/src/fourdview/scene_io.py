"""Scene directory IO: manifest, calibration, frames, and ground-truth assets.

Directory layout:
    manifest.json
    calibration.yaml
    frames/<camera_id>/<t:06d>.png
    gt/depth/<camera_id>/<t:06d>.dpt      (optional)
    gt/mask/<camera_id>/<t:06d>.png       (optional)
    gt/background/<camera_id>.png         (optional)

Frames are 8-bit RGB PNG; pixel values are normalized to [0, 1] at load
time. Depth files are float32 binary with a one-line text header
(``fourdview-depth v1 <width> <height>``), row-major, NaN marking invalid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from PIL import Image as PILImage, UnidentifiedImageError

from .errors import (CalibrationInvalid, DecodeError, FrameCountMismatch,
                     MissingFile, OutOfRange)
from .geometry import PinholeCamera
from .image import DepthMap, Image

MANIFEST_NAME = "manifest.json"
CALIBRATION_NAME = "calibration.yaml"
DEPTH_MAGIC = "fourdview-depth v1"

_MANIFEST_FIELDS = ("scene_id", "num_cameras", "num_frames", "frame_rate",
                    "resolution", "camera_ids", "has_ground_truth")


@dataclass
class CalibrationEntry:
    camera_id: str
    K: np.ndarray
    R: np.ndarray
    t: np.ndarray

    def validate(self) -> None:
        K, R = self.K, self.R
        if K.shape != (3, 3) or R.shape != (3, 3) or self.t.shape != (3,):
            raise CalibrationInvalid(f"{self.camera_id}: bad matrix shapes")
        if not (K[0, 0] > 0 and K[1, 1] > 0):
            raise CalibrationInvalid(f"{self.camera_id}: focal lengths must be positive")
        if abs(K[2, 2] - 1.0) > 1e-12 or np.max(np.abs(K[np.tril_indices(3, -1)])) > 1e-12:
            raise CalibrationInvalid(f"{self.camera_id}: K must be upper triangular with K[2][2]=1")
        if np.max(np.abs(R.T @ R - np.eye(3))) >= 1e-9:
            raise CalibrationInvalid(f"{self.camera_id}: R not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise CalibrationInvalid(f"{self.camera_id}: det(R) != 1")

    def camera(self, width: int, height: int) -> PinholeCamera:
        return PinholeCamera(self.K, self.R, self.t, width, height)


@dataclass
class SceneManifest:
    scene_id: str
    num_cameras: int
    num_frames: int
    frame_rate: float
    resolution: tuple[int, int]          # (width, height)
    camera_ids: list[str]
    has_ground_truth: bool
    root: Path = None
    calibration: dict[str, CalibrationEntry] = field(default_factory=dict)

    def camera(self, camera_id: str) -> PinholeCamera:
        if camera_id not in self.calibration:
            raise OutOfRange(f"unknown camera {camera_id!r}")
        w, h = self.resolution
        return self.calibration[camera_id].camera(w, h)

    @property
    def cameras(self) -> dict[str, PinholeCamera]:
        return {cid: self.camera(cid) for cid in self.camera_ids}


def save_png(path: Path, img: Image) -> None:
    data = np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(data, mode="RGB").save(path, format="PNG")


def load_png(path: Path) -> Image:
    if not path.exists():
        raise MissingFile(str(path))
    try:
        with PILImage.open(path) as im:
            data = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    return Image(data)


def save_mask_png(path: Path, mask: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray((mask.astype(np.uint8) * 255), mode="L").save(path, format="PNG")


def load_mask_png(path: Path) -> np.ndarray:
    if not path.exists():
        raise MissingFile(str(path))
    try:
        with PILImage.open(path) as im:
            return np.asarray(im.convert("L")) > 127
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc


def save_depth(path: Path, dm: DepthMap) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    data = dm.depth.astype(np.float32).copy()
    data[~dm.valid] = np.nan
    with open(path, "wb") as f:
        f.write(f"{DEPTH_MAGIC} {dm.width} {dm.height}\n".encode("ascii"))
        f.write(data.tobytes())


def load_depth(path: Path) -> DepthMap:
    if not path.exists():
        raise MissingFile(str(path))
    with open(path, "rb") as f:
        header = f.readline().decode("ascii", errors="replace").strip()
        parts = header.split()
        if " ".join(parts[:2]) != DEPTH_MAGIC or len(parts) != 4:
            raise DecodeError(f"{path}: bad depth header {header!r}")
        w, h = int(parts[2]), int(parts[3])
        raw = f.read()
    expected = w * h * 4
    if len(raw) != expected:
        raise DecodeError(f"{path}: expected {expected} payload bytes, got {len(raw)}")
    data = np.frombuffer(raw, dtype=np.float32).reshape(h, w).astype(np.float64)
    valid = np.isfinite(data) & (data > 0)
    data = np.where(valid, data, 0.0)
    return DepthMap(data, valid)


def save_calibration(path: Path, entries: list[CalibrationEntry]) -> None:
    doc = {"cameras": [
        {"camera_id": e.camera_id,
         "K": [[float(x) for x in row] for row in e.K],
         "R": [[float(x) for x in row] for row in e.R],
         "t": [float(x) for x in e.t]}
        for e in entries]}
    path.write_text(yaml.safe_dump(doc, sort_keys=False), encoding="utf-8")


def load_calibration(path: Path) -> dict[str, CalibrationEntry]:
    if not path.exists():
        raise MissingFile(str(path))
    doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    if not isinstance(doc, dict) or "cameras" not in doc:
        raise CalibrationInvalid(f"{path}: missing 'cameras' section")
    entries = {}
    for row in doc["cameras"]:
        for key in ("camera_id", "K", "R", "t"):
            if key not in row:
                raise CalibrationInvalid(f"{path}: calibration entry missing {key!r}")
        e = CalibrationEntry(
            camera_id=str(row["camera_id"]),
            K=np.asarray(row["K"], dtype=np.float64),
            R=np.asarray(row["R"], dtype=np.float64),
            t=np.asarray(row["t"], dtype=np.float64),
        )
        e.validate()
        entries[e.camera_id] = e
    return entries


def frame_path(root: Path, camera_id: str, t: int) -> Path:
    return root / "frames" / camera_id / f"{t:06d}.png"


def depth_path(root: Path, camera_id: str, t: int) -> Path:
    return root / "gt" / "depth" / camera_id / f"{t:06d}.dpt"


def mask_path(root: Path, camera_id: str, t: int) -> Path:
    return root / "gt" / "mask" / camera_id / f"{t:06d}.png"


def background_path(root: Path, camera_id: str) -> Path:
    return root / "gt" / "background" / f"{camera_id}.png"


def save_manifest(root: Path, manifest: SceneManifest) -> None:
    doc = {
        "scene_id": manifest.scene_id,
        "num_cameras": manifest.num_cameras,
        "num_frames": manifest.num_frames,
        "frame_rate": manifest.frame_rate,
        "resolution": list(manifest.resolution),
        "camera_ids": list(manifest.camera_ids),
        "has_ground_truth": manifest.has_ground_truth,
    }
    (root / MANIFEST_NAME).write_text(json.dumps(doc, indent=2), encoding="utf-8")


def load_manifest(path) -> SceneManifest:
    """Load and fully validate a scene directory."""
    root = Path(path)
    mpath = root / MANIFEST_NAME
    if not mpath.exists():
        raise MissingFile(str(mpath))
    try:
        doc = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DecodeError(f"{mpath}: {exc}") from exc
    missing = [k for k in _MANIFEST_FIELDS if k not in doc]
    if missing:
        raise DecodeError(f"{mpath}: missing required fields {missing}")

    manifest = SceneManifest(
        scene_id=str(doc["scene_id"]),
        num_cameras=int(doc["num_cameras"]),
        num_frames=int(doc["num_frames"]),
        frame_rate=float(doc["frame_rate"]),
        resolution=(int(doc["resolution"][0]), int(doc["resolution"][1])),
        camera_ids=[str(c) for c in doc["camera_ids"]],
        has_ground_truth=bool(doc["has_ground_truth"]),
        root=root,
    )
    if manifest.num_cameras < 2:
        raise CalibrationInvalid("need at least 2 cameras for a stereo pair")
    if manifest.num_frames < 1:
        raise DecodeError("num_frames must be >= 1")
    if len(manifest.camera_ids) != manifest.num_cameras:
        raise DecodeError("camera_ids length disagrees with num_cameras")

    calib = load_calibration(root / CALIBRATION_NAME)
    for cid in manifest.camera_ids:
        if cid not in calib:
            raise CalibrationInvalid(f"camera {cid!r} has no calibration entry")
    manifest.calibration = calib

    for cid in manifest.camera_ids:
        frame_dir = root / "frames" / cid
        if not frame_dir.is_dir():
            raise MissingFile(str(frame_dir))
        count = len(list(frame_dir.glob("*.png")))
        if count != manifest.num_frames:
            raise FrameCountMismatch(
                f"camera {cid!r}: expected {manifest.num_frames} frames, found {count}")
    return manifest


def _check_time(manifest: SceneManifest, time: int) -> int:
    time = int(time)
    if time < 0 or time >= manifest.num_frames:
        raise OutOfRange(f"time {time} outside [0, {manifest.num_frames})")
    return time


def fetch_frame(manifest: SceneManifest, camera_id: str, time: int) -> Image:
    if camera_id not in manifest.camera_ids:
        raise OutOfRange(f"unknown camera {camera_id!r}")
    time = _check_time(manifest, time)
    return load_png(frame_path(manifest.root, camera_id, time))


def fetch_gt_depth(manifest: SceneManifest, camera_id: str, time: int) -> DepthMap:
    time = _check_time(manifest, time)
    return load_depth(depth_path(manifest.root, camera_id, time))


def fetch_gt_mask(manifest: SceneManifest, camera_id: str, time: int) -> np.ndarray:
    time = _check_time(manifest, time)
    return load_mask_png(mask_path(manifest.root, camera_id, time))


def fetch_gt_background(manifest: SceneManifest, camera_id: str) -> Image:
    return load_png(background_path(manifest.root, camera_id))
