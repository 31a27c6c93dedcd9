import numpy as np
import pytest
from fastapi.testclient import TestClient

from fourdview import scene_io, synth
from fourdview.compositor import save_model
from fourdview.compositor.model import CompositorModel, ModelConfig
from fourdview.editing import encode_mask_envelope, EditMask
from fourdview.fusion import FusionConfig
from fourdview.pipeline import LayerCache
from fourdview.service import SessionState, create_app


@pytest.fixture(scope="module")
def service_scene(tmp_path_factory):
    spec = synth.preset_arc(resolution=(192, 108), num_frames=4, n_cameras=5)
    spec.scene_id = "svc"
    out = tmp_path_factory.mktemp("svc_scene")
    synth.generate_synthetic_scene(spec, out)
    return out


@pytest.fixture(scope="module")
def client(service_scene, tmp_path_factory):
    mdir = tmp_path_factory.mktemp("svc_models")
    natives = {"low": (48, 28), "mid": (96, 54), "hi": (192, 108)}
    paths = {}
    for stage, size in natives.items():
        m = CompositorModel(ModelConfig(stage=stage, n_f=4, native_size=size,
                                        width_cap=1), seed=2)
        p = mdir / f"{stage}.ckpt"
        save_model(m, p)
        paths[stage] = str(p)
    state = SessionState.load(service_scene, paths,
                              FusionConfig(background_stride=2))
    return TestClient(create_app(state))


def test_manifest(client):
    doc = client.get("/manifest").json()
    assert doc["num_cameras"] == 5
    assert doc["num_frames"] == 4
    assert doc["stages"] == ["hi", "low", "mid"]


def test_frame_roundtrip(client, service_scene):
    r = client.get("/frame", params={"camera": "c0", "t": 0})
    assert r.status_code == 200
    raw = (service_scene / "frames" / "c0" / "000000.png").read_bytes()
    assert r.content == raw


def test_frame_errors(client):
    assert client.get("/frame", params={"camera": "zz", "t": 0}).status_code == 404
    assert client.get("/frame", params={"camera": "c0", "t": 99}).status_code == 400


def test_render_identical_requests_byte_identical(client):
    req = {"camera": "c1", "time": 1, "stage": "low"}
    r1 = client.post("/render", json=req)      # cold cache
    assert r1.status_code == 200, r1.text
    r2 = client.post("/render", json=req)      # warm cache
    assert r1.content == r2.content
    assert r1.headers["X-Render-Meta"] == r2.headers["X-Render-Meta"]
    meta = __import__("json").loads(r1.headers["X-Render-Meta"])
    assert "psnr_vs_frame" in meta


def test_render_virtual_pose(client, service_scene):
    scene = scene_io.load_manifest(service_scene)
    a = scene.camera("c1")
    b = scene.camera("c2")
    mid_center = (a.center + b.center) / 2
    from fourdview.geometry import look_at_camera
    cam = look_at_camera(mid_center, [0, 0, 0.7], a.K, a.width, a.height)
    req = {"camera": {"K": cam.K.tolist(), "R": cam.R.tolist(), "t": cam.t.tolist()},
           "time": 0, "stage": "low"}
    r = client.post("/render", json=req)
    assert r.status_code == 200
    meta = __import__("json").loads(r.headers["X-Render-Meta"])
    assert "psnr_vs_frame" not in meta


def test_render_validation_errors(client):
    assert client.post("/render", json={"camera": "c0"}).status_code == 400
    assert client.post("/render", json={"camera": "zz", "time": 0}).status_code == 404
    assert client.post("/render",
                       json={"camera": "c0", "time": 99}).status_code == 400
    assert client.post("/render",
                       json={"camera": "c0", "time": 0,
                             "stage": "mega"}).status_code == 400
    assert client.post("/render",
                       json={"camera": "c0", "time": 0,
                             "edits": [77]}).status_code == 404


def test_render_missing_stage_409(service_scene, tmp_path_factory):
    mdir = tmp_path_factory.mktemp("svc_partial")
    m = CompositorModel(ModelConfig(stage="low", n_f=4, native_size=(48, 28),
                                    width_cap=1), seed=2)
    save_model(m, mdir / "low.ckpt")
    state = SessionState.load(service_scene, {"low": str(mdir / "low.ckpt")},
                              FusionConfig(background_stride=2))
    c = TestClient(create_app(state))
    r = c.post("/render", json={"camera": "c0", "time": 0, "stage": "cascade"})
    assert r.status_code == 409
    assert c.post("/render", json={"camera": "c0", "time": 0,
                                   "stage": "low"}).status_code == 200


def test_edit_lifecycle(client, service_scene):
    scene = scene_io.load_manifest(service_scene)
    gt = scene_io.fetch_gt_mask(scene, "c1", 1)
    env = encode_mask_envelope(EditMask("c1", 1, gt, "remove"))
    r = client.post("/edits", json=env)
    assert r.status_code == 200, r.text
    eid = r.json()["id"]
    assert r.json()["frames_tracked"] == 4

    listing = client.get("/edits").json()["edits"]
    assert any(e["id"] == eid for e in listing)

    # the edited render differs from the unedited one inside the mask
    base = client.post("/render", json={"camera": "c1", "time": 1, "stage": "low"})
    edited = client.post("/render", json={"camera": "c1", "time": 1,
                                          "stage": "low", "edits": [eid]})
    assert edited.status_code == 200
    assert base.content != edited.content

    # identical edited requests are byte-identical too
    edited2 = client.post("/render", json={"camera": "c1", "time": 1,
                                           "stage": "low", "edits": [eid]})
    assert edited.content == edited2.content

    got = client.get(f"/edits/{eid}")
    assert got.status_code == 200
    assert got.json()["op"] == "remove"

    assert client.delete(f"/edits/{eid}").status_code == 200
    assert client.get(f"/edits/{eid}").status_code == 404


def test_edit_empty_lift_422(client):
    mask = np.zeros((108, 192), dtype=bool)
    mask[0:2, 0:2] = True   # sky corner: no foreground depth
    env = encode_mask_envelope(EditMask("c1", 0, mask, "remove"))
    r = client.post("/edits", json=env)
    assert r.status_code == 422
    assert r.json()["error"] == "EmptyLift"
