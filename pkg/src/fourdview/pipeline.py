"""Dataset assembly and layer caching on top of the fusion pipeline.

Layers are computed once at the cache's working resolution and resampled
per compositor stage; backgrounds (both accumulation variants) are cached
per camera pose. Training streams differ per sample (consensus /
nearest-depth / median foregrounds; two accumulations plus the single-frame
farthest for background); inference feeds each stream kind one estimate.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .fusion import (FusionConfig, FusionProducts, ViewLayers,
                     compute_background_products, compute_fusion_products,
                     _source_cameras, working_camera, _pose_key)
from .geometry import PinholeCamera
from .image import Image, downsample_valid
from . import scene_io
from .compositor.train import TrainingSample

logger = logging.getLogger(__name__)


@dataclass
class LayerBundle:
    """Cached per-(pose, time) fusion products plus per-pose backgrounds."""

    products: FusionProducts
    bg_farthest: Image
    bg_median: Image
    camera: PinholeCamera
    time: int

    def view_layers(self) -> ViewLayers:
        return ViewLayers(foreground=self.products.consensus,
                          foreground_depth=self.products.consensus_depth,
                          background=self.bg_farthest,
                          camera=self.camera, time=self.time)


class LayerCache:
    """Bounded cache of fusion products keyed by quantized pose and time."""

    def __init__(self, scene: scene_io.SceneManifest, config: FusionConfig,
                 max_entries: int = 64):
        self.scene = scene
        self.config = config
        self.max_entries = max_entries
        self._products: OrderedDict = OrderedDict()
        self._backgrounds: OrderedDict = OrderedDict()

    def _resolve(self, target) -> tuple[PinholeCamera, list[str]]:
        cam = self.scene.camera(target) if isinstance(target, str) else target
        sources = _source_cameras(self.scene, target)
        return working_camera(cam, self.config), sources

    def _get(self, store: OrderedDict, key, builder):
        if key in store:
            store.move_to_end(key)
            return store[key]
        value = builder()
        store[key] = value
        if len(store) > self.max_entries:
            store.popitem(last=False)
        return value

    def products(self, target, time: int) -> tuple[FusionProducts, PinholeCamera]:
        cam, sources = self._resolve(target)
        key = (_pose_key(cam), int(time))
        prods = self._get(self._products, key,
                          lambda: compute_fusion_products(self.scene, cam, time,
                                                          self.config, sources))
        return prods, cam

    def backgrounds(self, target) -> tuple[Image, Image]:
        cam, sources = self._resolve(target)
        key = _pose_key(cam)
        return self._get(self._backgrounds, key,
                         lambda: compute_background_products(self.scene, cam,
                                                             self.config, sources))

    def bundle(self, target, time: int) -> LayerBundle:
        prods, cam = self.products(target, time)
        bg_far, bg_med = self.backgrounds(target)
        return LayerBundle(products=prods, bg_farthest=bg_far, bg_median=bg_med,
                           camera=cam, time=int(time))


def _resize(img: Image, size: tuple[int, int]) -> Image:
    w, h = size
    if (img.width, img.height) == (w, h):
        return img
    return downsample_valid(img, h, w)


def training_sample(scene: scene_io.SceneManifest, bundle: LayerBundle,
                    target_id: str, stage_size: tuple[int, int]) -> TrainingSample:
    """One training pair at a stage's native size.

    Foreground streams: consensus, nearest-depth, median renders of the
    sample's time; background streams: farthest-median accumulation,
    median-median accumulation, single-frame farthest render.
    """
    p = bundle.products
    frame = scene_io.fetch_frame(scene, target_id, bundle.time)
    return TrainingSample(
        fg_streams=[_resize(p.consensus, stage_size),
                    _resize(p.nearest, stage_size),
                    _resize(p.median, stage_size)],
        bg_streams=[_resize(bundle.bg_farthest, stage_size),
                    _resize(bundle.bg_median, stage_size),
                    _resize(p.farthest, stage_size)],
        target=_resize(frame, stage_size),
        camera_id=target_id, time=bundle.time)


def build_training_set(scene: scene_io.SceneManifest, cache: LayerCache,
                       target_ids: list[str], times: list[int],
                       stage_size: tuple[int, int]) -> list[TrainingSample]:
    samples = []
    for cid in target_ids:
        for t in times:
            logger.info("building sample %s t=%d", cid, t)
            samples.append(training_sample(scene, cache.bundle(cid, t), cid, stage_size))
    return samples
