"""Shared fixtures: small synthetic scenes and reusable pipeline products."""

import warnings

import numpy as np
import pytest

from fourdview import scene_io, synth

warnings.filterwarnings("ignore", message="All-NaN slice encountered")


@pytest.fixture(scope="session")
def tiny_scene_dir(tmp_path_factory):
    """4 cameras, 3 frames, 160x90: cheap IO-level scene."""
    spec = synth.preset_arc(resolution=(160, 90), num_frames=3, n_cameras=4)
    spec.scene_id = "tiny"
    out = tmp_path_factory.mktemp("tiny_scene")
    synth.generate_synthetic_scene(spec, out)
    return out


@pytest.fixture(scope="session")
def tiny_scene(tiny_scene_dir):
    return scene_io.load_manifest(tiny_scene_dir)


@pytest.fixture(scope="session")
def arc_spec():
    """In-memory spec of the 8-camera training arc at full resolution."""
    return synth.preset_arc(resolution=(480, 270), num_frames=30)


@pytest.fixture(scope="session")
def arc_cameras(arc_spec):
    return dict(synth.build_cameras(arc_spec))


def gt_reprojections(spec, cams, target_cam, source_ids, time, rng,
                     keep_rate=0.75, noise_rel=0.0015,
                     corrupt_pair_frac=0.0, corrupt_mag=(0.15, 0.25)):
    """Per-pair reprojections built from ray-cast ground-truth depth.

    Mimics stereo output statistics: per-pixel validity dropout plus small
    relative depth noise; optionally corrupts a fraction of pairs with
    per-pixel outlier scalings (random sign, magnitude in corrupt_mag).
    Returns (reprojections, corrupted pair indices).
    """
    import itertools

    from fourdview.fusion import merge_reprojections
    from fourdview.geometry import reproject_view
    from fourdview.image import DepthMap

    renders = {c: synth.render_view(spec, cams[c], time) for c in source_ids}
    pairs = list(itertools.combinations(source_ids, 2))
    n_corrupt = round(corrupt_pair_frac * len(pairs))
    corrupted = set(rng.choice(len(pairs), size=n_corrupt, replace=False).tolist()) \
        if n_corrupt else set()
    reps = []
    for k, (a, b) in enumerate(pairs):
        merged = None
        for c in (a, b):
            img, dep, _ = renders[c]
            d = dep.depth * (1.0 + noise_rel * rng.standard_normal(dep.depth.shape))
            if k in corrupted:
                sign = np.where(rng.random(dep.depth.shape) < 0.5, 1.0, -1.0)
                mag = rng.uniform(*corrupt_mag, dep.depth.shape)
                d = d * (1.0 + mag * sign)
            v = dep.valid & (rng.random(dep.depth.shape) < keep_rate)
            r = reproject_view(cams[c], img, DepthMap(np.where(v, d, 0.0), v), target_cam)
            merged = r if merged is None else merge_reprojections(merged, r)
        reps.append(merged)
    return reps, corrupted
