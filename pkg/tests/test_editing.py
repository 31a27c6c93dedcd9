import numpy as np
import pytest

from fourdview import synth
from fourdview.editing import (EditMask, PropagationParams, decode_mask_envelope,
                               disocclude, encode_mask_envelope, lift_mask,
                               mask_to_rle, propagate_mask, remove_region,
                               rle_to_mask)
from fourdview.errors import EmptyLift, ShapeMismatch, TrackLost
from fourdview.fusion import (ConsensusParams, ViewLayers, build_cost_volume,
                              consensus_foreground)
from fourdview.geometry import PinholeCamera, project_points
from fourdview.image import DepthMap, Image

RNG = np.random.default_rng(0)


def make_layers(spec, cam, t, include=None):
    """GT-driven layers: foreground = dynamic object only, with true depth."""
    img, dep, mask = synth.render_view(spec, cam, t, include_dynamic=include)
    fg = Image(img.data * mask[..., None], mask.copy())
    fgd = DepthMap(np.where(mask, dep.depth, 0.0), mask.copy())
    bgimg, _, _ = synth.render_view(spec, cam, t, include_dynamic=())
    return ViewLayers(foreground=fg, foreground_depth=fgd, background=bgimg,
                      camera=cam, time=t)


@pytest.fixture(scope="module")
def track_spec():
    return synth.preset_arc(resolution=(240, 135), num_frames=12)


@pytest.fixture(scope="module")
def track_cam(track_spec):
    return dict(synth.build_cameras(track_spec))["c3"]


def test_rle_roundtrip():
    for shape in [(7, 9), (1, 5), (16, 16)]:
        mask = RNG.random(shape) > 0.6
        runs = mask_to_rle(mask)
        assert sum(runs) == mask.size
        back = rle_to_mask(runs, shape[1], shape[0])
        assert np.array_equal(back, mask)
    # all-false and all-true
    assert mask_to_rle(np.zeros((3, 3), dtype=bool)) == [9]
    assert mask_to_rle(np.ones((3, 3), dtype=bool)) == [0, 9]


def test_envelope_roundtrip():
    mask = RNG.random((12, 20)) > 0.5
    em = EditMask("c2", 4, mask, "disocclude")
    doc = encode_mask_envelope(em)
    back = decode_mask_envelope(doc)
    assert back.camera_id == "c2" and back.time == 4 and back.op == "disocclude"
    assert np.array_equal(back.mask, mask)
    with pytest.raises(ShapeMismatch):
        decode_mask_envelope({"camera_id": "x"})


def test_lift_mask_empty_and_full(track_spec, track_cam):
    layers = make_layers(track_spec, track_cam, 0)
    blank_region = ~layers.foreground_depth.valid
    # empty mask and mask covering only blank pixels both fail to lift
    with pytest.raises(EmptyLift):
        lift_mask(EditMask("c3", 0, np.zeros_like(blank_region), "remove"), layers)
    with pytest.raises(EmptyLift):
        lift_mask(EditMask("c3", 0, blank_region, "remove"), layers)
    # full-image mask lifts exactly the valid foreground pixels
    pts = lift_mask(EditMask("c3", 0, np.ones_like(blank_region), "remove"), layers)
    assert pts.shape[0] == layers.foreground_depth.valid.sum()


def test_lift_points_near_sphere_center(track_spec, track_cam):
    layers = make_layers(track_spec, track_cam, 0)
    pts = lift_mask(EditMask("c3", 0, layers.foreground.mask, "remove"), layers)
    center = track_spec.dynamics[0].trajectory.position(0, track_spec.num_frames)
    r = track_spec.dynamics[0].size
    d = np.linalg.norm(pts - center, axis=1)
    assert d.max() <= r * 1.05
    assert d.min() >= r * 0.9


def test_propagate_static_object_constant_mask(track_spec, track_cam):
    spec = synth.preset_arc(resolution=(240, 135), num_frames=6)
    spec.dynamics[0].trajectory = synth.Trajectory(kind="static", center=(0, 0, 0.8))
    cam = dict(synth.build_cameras(spec))["c3"]
    layers0 = make_layers(spec, cam, 0)
    pts = lift_mask(EditMask("c3", 0, layers0.foreground.mask, "remove"), layers0)
    prop = propagate_mask(pts, lambda t: make_layers(spec, cam, t), range(6),
                          anchor_time=0)
    m0 = prop.masks[0]
    for t in range(6):
        inter = (prop.masks[t] & m0).sum()
        union = (prop.masks[t] | m0).sum()
        assert inter / union >= 0.9


def test_propagate_moving_sphere_iou(track_spec, track_cam):
    layers0 = make_layers(track_spec, track_cam, 0)
    pts = lift_mask(EditMask("c3", 0, layers0.foreground.mask, "remove"), layers0)
    prop = propagate_mask(pts, lambda t: make_layers(track_spec, track_cam, t),
                          range(track_spec.num_frames), anchor_time=0)
    for t in range(track_spec.num_frames):
        _, _, gt = synth.render_view(track_spec, track_cam, t)
        inter = (prop.masks[t] & gt).sum()
        union = (prop.masks[t] | gt).sum()
        assert inter / union >= 0.7, f"t={t}"


def test_propagate_track_lost():
    spec = synth.preset_arc(resolution=(160, 90), num_frames=10)
    cam = dict(synth.build_cameras(spec))["c3"]

    def provider(t):
        layers = make_layers(spec, cam, 0)
        if t >= 2:  # object vanishes from the foreground
            empty = np.zeros_like(layers.foreground.mask)
            layers = ViewLayers(Image(layers.foreground.data * 0, empty),
                                DepthMap(layers.foreground_depth.depth * 0, empty),
                                layers.background, cam, t)
        return layers

    layers0 = provider(0)
    pts = lift_mask(EditMask("c3", 0, layers0.foreground.mask, "remove"), layers0)
    with pytest.raises(TrackLost):
        propagate_mask(pts, provider, range(10), anchor_time=0,
                       params=PropagationParams(grace_frames=3))


def test_remove_region_identity_and_idempotent(track_spec, track_cam):
    layers = make_layers(track_spec, track_cam, 1)
    empty = np.zeros_like(layers.foreground.mask)
    out = remove_region(layers, empty)
    assert np.array_equal(out.foreground.data, layers.foreground.data)
    assert np.array_equal(out.foreground.mask, layers.foreground.mask)

    mask = layers.foreground.mask.copy()
    once = remove_region(layers, mask)
    twice = remove_region(once, mask)
    assert np.array_equal(once.foreground.mask, twice.foreground.mask)
    assert np.array_equal(once.foreground.data, twice.foreground.data)
    assert not once.foreground.mask[mask].any()
    # full mask leaves only background-driven content
    full = remove_region(layers, np.ones_like(empty))
    assert not full.foreground.mask.any()


def test_edits_are_local(track_spec, track_cam):
    layers = make_layers(track_spec, track_cam, 1)
    mask = np.zeros_like(layers.foreground.mask)
    mask[40:70, 80:140] = True
    out = remove_region(layers, mask)
    outside = ~mask
    assert np.array_equal(out.foreground.data[outside],
                          layers.foreground.data[outside])
    assert np.array_equal(out.foreground.mask[outside],
                          layers.foreground.mask[outside])


def _cam(w=6, h=4):
    K = np.array([[10.0, 0, (w - 1) / 2], [0, 10.0, (h - 1) / 2], [0, 0, 1]])
    return PinholeCamera(K, np.eye(3), np.zeros(3), w, h)


def _rep(cam, entries):
    img = np.zeros((cam.height, cam.width, 3))
    mask = np.zeros((cam.height, cam.width), dtype=bool)
    depth = np.zeros((cam.height, cam.width))
    for (x, y), (d, color) in entries.items():
        img[y, x] = color
        depth[y, x] = d
        mask[y, x] = True
    return Image(img, mask), DepthMap(depth, mask)


def test_disocclude_constructed_two_cluster_volume():
    cam = _cam()
    reps = []
    for d, color in [(2.0, (1, 0, 0)), (2.01, (1, 0, 0)), (1.99, (1, 0, 0)),
                     (5.0, (0, 0, 1)), (5.05, (0, 0, 1)), (4.95, (0, 0, 1))]:
        reps.append(_rep(cam, {(1, 1): (d, color)}))
    vol = build_cost_volume(cam, reps)
    params = ConsensusParams(3, 0.02)
    fg, fgd = consensus_foreground(vol, params)
    layers = ViewLayers(fg, fgd, Image(np.full((4, 6, 3), 0.5)), cam, 0)
    mask = np.zeros((4, 6), dtype=bool)
    mask[1, 1] = True

    out0 = disocclude(vol, layers, mask, order=0, params=params)
    assert np.array_equal(out0.foreground.data, layers.foreground.data)
    assert np.array_equal(out0.foreground.mask, layers.foreground.mask)

    out1 = disocclude(vol, layers, mask, order=1, params=params)
    assert out1.foreground.mask[1, 1]
    assert out1.foreground.data[1, 1, 2] == pytest.approx(1.0)
    assert out1.foreground_depth.depth[1, 1] == pytest.approx(5.0)

    # order past the last cluster: blank -> background fallback
    out2 = disocclude(vol, layers, mask, order=2, params=params)
    assert not out2.foreground.mask[1, 1]
    # untouched outside the mask in all cases
    outside = ~mask
    assert np.array_equal(out1.foreground.data[outside], fg.data[outside])
    assert np.array_equal(out1.foreground.mask[outside], fg.mask[outside])
