"""Versioned binary checkpoints for compositor stages.

Layout: magic, format version, length-prefixed JSON header (stage, n_f,
backbone depth, width cap, sizes, operator-set version, ordered parameter
manifest), then raw float64 parameter payloads in declared order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointVersionMismatch, DecodeError
from .autodiff import OPSET_VERSION
from .model import CompositorModel, ModelConfig

MAGIC = b"FDVC"
FORMAT_VERSION = 1


def save_model(model: CompositorModel, path) -> None:
    cfg = model.config
    header = {
        "stage": cfg.stage,
        "n_f": cfg.n_f,
        "depth": cfg.depth,
        "width_cap": cfg.width_cap,
        "kernel": cfg.kernel,
        "native_size": list(cfg.native_size),
        "padded_size": list(cfg.padded_size),
        "opset": OPSET_VERSION,
        "params": [[name, list(arr.shape)] for name, arr in model.params.items()],
    }
    blob = json.dumps(header).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        f.write(blob)
        for arr in model.params.values():
            f.write(np.ascontiguousarray(arr, dtype=np.float64).tobytes())


def load_model(path) -> CompositorModel:
    path = Path(path)
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise DecodeError(f"{path}: not a compositor checkpoint")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != FORMAT_VERSION:
            raise CheckpointVersionMismatch(
                f"{path}: format version {version}, expected {FORMAT_VERSION}")
        header = json.loads(f.read(hlen).decode("utf-8"))
        if header.get("opset") != OPSET_VERSION:
            raise CheckpointVersionMismatch(
                f"{path}: operator set {header.get('opset')!r}, "
                f"engine has {OPSET_VERSION!r}")
        cfg = ModelConfig(stage=header["stage"], n_f=header["n_f"],
                          native_size=tuple(header["native_size"]),
                          depth=header["depth"], width_cap=header["width_cap"],
                          kernel=header["kernel"],
                          padded_size=tuple(header["padded_size"]))
        model = CompositorModel(cfg, seed=0)
        declared = [(name, tuple(shape)) for name, shape in header["params"]]
        actual = [(name, arr.shape) for name, arr in model.params.items()]
        if declared != actual:
            raise CheckpointVersionMismatch(
                f"{path}: parameter manifest disagrees with architecture")
        for name, shape in declared:
            n = int(np.prod(shape)) if shape else 1
            raw = f.read(n * 8)
            if len(raw) != n * 8:
                raise DecodeError(f"{path}: truncated payload at {name}")
            model.params[name][...] = np.frombuffer(raw, dtype=np.float64).reshape(shape)
    return model
