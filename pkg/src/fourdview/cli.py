"""Command-line interface: scene synthesis, fusion dumps, training,
rendering, editing, evaluation, and the HTTP service."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import scene_io, synth
from .errors import EngineError
from .fusion import FusionConfig
from .image import Image, downsample_valid

logger = logging.getLogger(__name__)


def _fail(err: str, detail: str) -> int:
    print(json.dumps({"error": err, "detail": detail}), file=sys.stderr)
    return 1


def _parse_resolution(text):
    if not text:
        return None
    w, h = text.lower().split("x")
    return (int(w), int(h))


def _parse_times(text: str, num_frames: int) -> list[int]:
    """'a:b:c' slice syntax or comma-separated frame indices."""
    if ":" in text:
        parts = [p.strip() for p in text.split(":")]
        start = int(parts[0]) if parts[0] else 0
        stop = int(parts[1]) if len(parts) > 1 and parts[1] else num_frames
        step = int(parts[2]) if len(parts) > 2 and parts[2] else 1
        return list(range(start, stop, step))
    return [int(p) for p in text.split(",") if p.strip()]


def _fusion_config(args) -> FusionConfig:
    cfg = FusionConfig()
    if getattr(args, "resolution", None):
        cfg.resolution = _parse_resolution(args.resolution)
    if getattr(args, "bg_stride", None):
        cfg.background_stride = args.bg_stride
    if getattr(args, "window", None):
        a, b = args.window.split(":")
        cfg.background_window = (int(a), int(b))
    return cfg


def _save_layer(out_dir: Path, name: str, img: Image) -> None:
    scene_io.save_png(out_dir / f"{name}.png", img)
    scene_io.save_mask_png(out_dir / f"{name}_mask.png", img.mask)


# --- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.spec:
        doc = yaml.safe_load(Path(args.spec).read_text(encoding="utf-8"))
        spec = synth.SyntheticSceneSpec.from_dict(doc)
    else:
        kwargs = {}
        if args.frames:
            kwargs["num_frames"] = args.frames
        if args.cameras:
            kwargs["n_cameras"] = args.cameras
        if args.resolution:
            kwargs["resolution"] = _parse_resolution(args.resolution)
        spec = synth.PRESETS[args.preset](**kwargs)
    if args.seed is not None:
        spec.seed = args.seed
    manifest = synth.generate_synthetic_scene(spec, args.out)
    print(f"scene {manifest.scene_id!r}: {manifest.num_cameras} cameras x "
          f"{manifest.num_frames} frames at {manifest.resolution} -> {args.out}")
    return 0


def cmd_fuse(args) -> int:
    from .pipeline import LayerCache
    scene = scene_io.load_manifest(args.scene)
    cfg = _fusion_config(args)
    cache = LayerCache(scene, cfg)
    bundle = cache.bundle(args.camera, args.time)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    p = bundle.products
    _save_layer(out_dir, "foreground", p.consensus)
    scene_io.save_depth(out_dir / "foreground_depth.dpt", p.consensus_depth)
    _save_layer(out_dir, "nearest", p.nearest)
    _save_layer(out_dir, "median", p.median)
    _save_layer(out_dir, "farthest", p.farthest)
    _save_layer(out_dir, "background", bundle.bg_farthest)
    _save_layer(out_dir, "background_median", bundle.bg_median)
    print(f"fusion products for camera {args.camera} t={args.time} -> {out_dir}")
    return 0


def cmd_background(args) -> int:
    from .fusion import compute_background, working_camera
    scene = scene_io.load_manifest(args.scene)
    cfg = _fusion_config(args)
    cam = working_camera(scene.camera(args.camera), cfg)
    bg = compute_background(scene, cam, cfg, variant=args.variant)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    scene_io.save_png(out, bg)
    scene_io.save_mask_png(out.with_name(out.stem + "_mask.png"), bg.mask)
    print(f"{args.variant} background for camera {args.camera} -> {out}")
    return 0


def cmd_train(args) -> int:
    from .compositor import CompositorModel, LossWeights, save_model, train
    from .compositor.train import DEFAULT_STAGES, StageConfig, write_history_csv
    from .pipeline import LayerCache, build_training_set

    conf = {}
    if args.config:
        conf = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
    scene = scene_io.load_manifest(args.scene)
    stage_name = args.stage or conf.get("stage", "low")
    base = DEFAULT_STAGES[stage_name]
    stage = StageConfig(
        stage=stage_name,
        native_size=tuple(conf.get("native_size", base.native_size)),
        n_f=args.n_f or conf.get("n_f", base.n_f),
        learning_rate=conf.get("learning_rate", base.learning_rate),
        epochs=args.epochs or conf.get("epochs", base.epochs),
        augment=conf.get("augment", True),
        width_cap=conf.get("width_cap", base.width_cap),
    )
    weights = LossWeights(lambda_r=conf.get("lambda_r", 100.0),
                          lambda_adv=conf.get("lambda_adv", 0.0),
                          lambda_fr=conf.get("lambda_fr", 100.0))
    seed = args.seed if args.seed is not None else conf.get("seed", 0)

    cfg = _fusion_config(args)
    if cfg.resolution is None and "resolution" in conf:
        cfg.resolution = tuple(conf["resolution"])
    if "bg_stride" in conf and not args.bg_stride:
        cfg.background_stride = conf["bg_stride"]
    targets = (args.targets.split(",") if args.targets
               else conf.get("targets", scene.camera_ids[:-1]))
    times = _parse_times(args.times or conf.get("times", "0::5"), scene.num_frames)

    cache = LayerCache(scene, cfg)
    logger.info("building %d x %d training samples", len(targets), len(times))
    samples = build_training_set(scene, cache, targets, times, stage.native_size)
    model = CompositorModel(stage.model_config(), seed=seed)
    model, history = train(model, samples, stage, weights, seed=seed, log_every=1)
    out = Path(args.out)
    save_model(model, out)
    if args.history:
        write_history_csv(history, args.history)
    print(f"trained {stage_name} stage on {len(samples)} samples, "
          f"final loss {history[-1]['total']:.4f} -> {out}")
    return 0


def _load_models(models_dir: str) -> dict:
    from .compositor import load_model
    models = {}
    for stage in ("low", "mid", "hi"):
        p = Path(models_dir) / f"{stage}.ckpt"
        if p.exists():
            models[stage] = load_model(p)
    return models


def cmd_render(args) -> int:
    from .compositor.multistage import multi_stage_infer, single_stage_infer
    from .editing import decode_mask_envelope, lift_mask, propagate_mask, remove_region, disocclude
    from .pipeline import LayerCache

    scene = scene_io.load_manifest(args.scene)
    cfg = _fusion_config(args)
    cache = LayerCache(scene, cfg)
    models = _load_models(args.models)
    needed = ["low", "mid", "hi"] if args.stage == "cascade" else [args.stage]
    missing = [s for s in needed if s not in models]
    if missing:
        return _fail("MissingStage", f"no checkpoint for {missing} in {args.models}")

    t = int(round(args.time))
    bundle = cache.bundle(args.camera, t)
    layers = bundle.view_layers()
    if args.edits:
        docs = yaml.safe_load(Path(args.edits).read_text(encoding="utf-8"))
        for doc in docs if isinstance(docs, list) else [docs]:
            mask = decode_mask_envelope(doc)
            work = _rescale_mask(mask.mask, layers.foreground.mask.shape)
            anchor = cache.bundle(mask.camera_id, mask.time).view_layers()
            pts = lift_mask(type(mask)(mask.camera_id, mask.time,
                                       _rescale_mask(mask.mask, anchor.foreground.mask.shape),
                                       mask.op), anchor)
            prop = propagate_mask(pts, lambda tt: cache.bundle(mask.camera_id, tt).view_layers(),
                                  window=range(scene.num_frames), anchor_time=mask.time)
            m_t = prop.masks.get(t, np.zeros_like(work))
            if mask.op == "remove":
                layers = remove_region(layers, m_t)
            else:
                layers = disocclude(bundle.products.volume, layers, m_t, order=1,
                                    params=cfg.consensus)
    if args.stage == "cascade":
        out = multi_stage_infer(models, layers)
    else:
        out = single_stage_infer(models[args.stage], layers)
    scene_io.save_png(Path(args.out), out)
    print(f"rendered camera {args.camera} t={t} stage={args.stage} -> {args.out}")
    return 0


def _rescale_mask(mask: np.ndarray, shape) -> np.ndarray:
    if mask.shape == tuple(shape):
        return mask
    from .image import resize_nearest
    m3 = Image(np.repeat(mask[:, :, None], 3, axis=2).astype(float))
    return resize_nearest(m3, shape[0], shape[1]).data[:, :, 0] > 0.5


def cmd_edit(args) -> int:
    from .editing import decode_mask_envelope, lift_mask, propagate_mask
    from .pipeline import LayerCache

    scene = scene_io.load_manifest(args.scene)
    cfg = _fusion_config(args)
    cache = LayerCache(scene, cfg)
    doc = yaml.safe_load(Path(args.mask).read_text(encoding="utf-8"))
    mask = decode_mask_envelope(doc)
    anchor = cache.bundle(mask.camera_id, mask.time).view_layers()
    work = _rescale_mask(mask.mask, anchor.foreground.mask.shape)
    points = lift_mask(type(mask)(mask.camera_id, mask.time, work, mask.op), anchor)
    prop = propagate_mask(points, lambda tt: cache.bundle(mask.camera_id, tt).view_layers(),
                          window=range(scene.num_frames), anchor_time=mask.time)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for t, m in sorted(prop.masks.items()):
        scene_io.save_mask_png(out_dir / f"{t:06d}.png", m)
    summary = {"camera_id": mask.camera_id, "anchor_time": mask.time, "op": mask.op,
               "frames": len(prop.masks),
               "areas": {int(t): int(m.sum()) for t, m in prop.masks.items()}}
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    print(f"propagated mask over {len(prop.masks)} frames -> {out_dir}")
    return 0


def cmd_eval(args) -> int:
    from .compositor.multistage import multi_stage_infer, single_stage_infer
    from .metrics import EvalReport, nn_baseline, nn_feature
    from .pipeline import LayerCache

    scene = scene_io.load_manifest(args.scene)
    cfg = _fusion_config(args)
    cache = LayerCache(scene, cfg)
    models = _load_models(args.models)
    if not models:
        return _fail("MissingStage", f"no checkpoints in {args.models}")
    stage = args.stage
    if stage == "cascade" and not all(s in models for s in ("low", "mid", "hi")):
        stage = sorted(models)[0]
        logger.warning("cascade unavailable; falling back to %s", stage)

    held = args.held_out
    times = _parse_times(args.times, scene.num_frames)
    others = [c for c in scene.camera_ids if c != held]
    eval_model = models[stage] if stage != "cascade" else models["hi"]
    wn, hn = eval_model.config.native_size

    def to_native(img: Image) -> Image:
        return downsample_valid(img, hn, wn)

    feats_same = {t: [(c, nn_feature(to_native(scene_io.fetch_frame(scene, c, t))))
                      for c in others] for t in times}
    feats_all = [((c, t2), nn_feature(to_native(scene_io.fetch_frame(scene, c, t2))))
                 for c in others for t2 in range(scene.num_frames)]

    report = EvalReport()
    for t in times:
        ref = to_native(scene_io.fetch_frame(scene, held, t))
        bundle = cache.bundle(held, t)
        layers = bundle.view_layers()
        if stage == "cascade":
            out = multi_stage_infer(models, layers)
        else:
            out = single_stage_infer(models[stage], layers)
        fg = to_native(layers.foreground)

        nn_id, _ = nn_baseline(out, feats_same[t])
        nn_frame = to_native(scene_io.fetch_frame(scene, nn_id, t))
        report.row("nn-same-time").add(nn_frame.data, ref.data)
        nn_id2, _ = nn_baseline(out, feats_all)
        nn_frame2 = to_native(scene_io.fetch_frame(scene, nn_id2[0], nn_id2[1]))
        report.row("nn-all-time").add(nn_frame2.data, ref.data)
        report.row("foreground-only").add(fg.data * fg.mask[..., None], ref.data)
        report.row("composed").add(out.data, ref.data)

    print(report.table())
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        report.write_csv(out_dir / "report.csv")
        (out_dir / "report.txt").write_text(report.table() + "\n", encoding="utf-8")
        print(f"report -> {out_dir}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn
    from .service import SessionState, create_app

    model_paths = {}
    for stage in ("low", "mid", "hi"):
        p = Path(args.models) / f"{stage}.ckpt"
        if p.exists():
            model_paths[stage] = str(p)
    state = SessionState.load(args.scene, model_paths, _fusion_config(args))
    app = create_app(state)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fourdview",
                                 description="4D space-time browsing engine")
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic calibrated scene")
    p.add_argument("--preset", choices=sorted(synth.PRESETS), default="arc")
    p.add_argument("--spec", help="YAML scene spec (overrides --preset)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--cameras", type=int)
    p.add_argument("--resolution", help="WxH")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fuse", help="dump fusion products for one view/time")
    p.add_argument("--scene", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--time", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", help="working WxH")
    p.add_argument("--bg-stride", type=int)
    p.add_argument("--window", help="background window a:b")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("background", help="accumulate a static background")
    p.add_argument("--scene", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=["farthest", "median"], default="farthest")
    p.add_argument("--resolution")
    p.add_argument("--bg-stride", type=int)
    p.add_argument("--window")
    p.set_defaults(func=cmd_background)

    p = sub.add_parser("train", help="train one compositor stage")
    p.add_argument("--scene", required=True)
    p.add_argument("--stage", choices=["low", "mid", "hi"])
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="YAML training config")
    p.add_argument("--epochs", type=int)
    p.add_argument("--n-f", type=int, dest="n_f")
    p.add_argument("--seed", type=int)
    p.add_argument("--targets", help="comma-separated camera ids")
    p.add_argument("--times", help="a:b:c slice or comma list")
    p.add_argument("--history", help="loss history CSV path")
    p.add_argument("--resolution")
    p.add_argument("--bg-stride", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", help="render a view through trained stages")
    p.add_argument("--scene", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--stage", choices=["low", "mid", "hi", "cascade"], default="cascade")
    p.add_argument("--out", required=True)
    p.add_argument("--edits", help="YAML mask envelope(s)")
    p.add_argument("--resolution")
    p.add_argument("--bg-stride", type=int)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("edit", help="lift and propagate a mask envelope")
    p.add_argument("--scene", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resolution")
    p.add_argument("--bg-stride", type=int)
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("eval", help="held-out evaluation vs baselines")
    p.add_argument("--scene", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--held-out", required=True, dest="held_out")
    p.add_argument("--times", default="0::3")
    p.add_argument("--stage", choices=["low", "mid", "hi", "cascade"], default="cascade")
    p.add_argument("--out")
    p.add_argument("--resolution")
    p.add_argument("--bg-stride", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP render/edit service")
    p.add_argument("--scene", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--resolution")
    p.add_argument("--bg-stride", type=int)
    p.set_defaults(func=cmd_serve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EngineError as exc:
        return _fail(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
