"""Self-supervised training of one compositor stage.

Paired data reconstructs a held-out physical camera view from layers built
out of the remaining cameras. At training time the three foreground
streams see different foreground estimates (consensus / nearest-depth /
median) and the three background streams see different accumulations; at
test time every stream of a kind receives the same estimate.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyDataset, ShapeMismatch
from ..image import Image, resize_nearest
from . import autodiff as ad
from .autodiff import Tensor, backward
from .losses import LossWeights, loss_adversarial, loss_frequency, loss_reconstruction
from .model import CompositorModel, Discriminator, ModelConfig, pad_to_multiple

logger = logging.getLogger(__name__)


@dataclass
class StageConfig:
    stage: str
    native_size: tuple[int, int]        # (width, height)
    n_f: int
    learning_rate: float = 2e-4
    epochs: int = 10
    augment: bool = True
    max_resize: float = 1.5
    depth: int = 4
    width_cap: int = 8
    padded_size: tuple[int, int] = None
    train_crop: tuple[int, int] = None  # train on random crops of this size

    def __post_init__(self):
        if self.padded_size is None:
            self.padded_size = pad_to_multiple(self.native_size, 2 ** self.depth)

    def train_size(self) -> tuple[int, int]:
        return self.train_crop if self.train_crop is not None else self.native_size

    def model_config(self) -> ModelConfig:
        return ModelConfig(stage=self.stage, n_f=self.n_f, native_size=self.native_size,
                           depth=self.depth, width_cap=self.width_cap,
                           padded_size=self.padded_size)


# desk-scale defaults: a quarter-HD resolution ladder with filter counts
# sized to train on a CPU in minutes
DEFAULT_STAGES = {
    "low": StageConfig(stage="low", native_size=(120, 68), n_f=14),
    "mid": StageConfig(stage="mid", native_size=(240, 135), n_f=12),
    "hi": StageConfig(stage="hi", native_size=(480, 270), n_f=7),
}


@dataclass
class TrainingSample:
    """Stream inputs and the held-out target for one (camera, time)."""

    fg_streams: list           # 3 Images: consensus, nearest-depth, median
    bg_streams: list           # 3 Images: accumulated-farthest, accumulated-median, single farthest
    target: Image
    camera_id: str = ""
    time: int = 0

    def __post_init__(self):
        if len(self.fg_streams) != 3 or len(self.bg_streams) != 3:
            raise ShapeMismatch("need exactly 3 foreground and 3 background streams")


def stream_array(img: Image) -> np.ndarray:
    """(H, W, 3) image + mask -> (4, H, W): masked RGB plus validity channel."""
    rgb = img.data.transpose(2, 0, 1) * img.mask[None, :, :]
    return np.concatenate([rgb, img.mask[None, :, :].astype(np.float64)], axis=0)


def pad_stream(arr: np.ndarray, padded_size: tuple[int, int]) -> np.ndarray:
    wp, hp = padded_size
    c, h, w = arr.shape
    out = np.zeros((c, hp, wp))
    out[:, :h, :w] = arr
    return out


def _augmented(images: list[Image], rng: np.random.Generator,
               max_resize: float) -> list[Image]:
    """Random resize up to max_resize then a random crop back to native."""
    h, w = images[0].height, images[0].width
    s = 1.0 + rng.random() * (max_resize - 1.0)
    hh, ww = int(np.ceil(h * s)), int(np.ceil(w * s))
    y0 = rng.integers(0, hh - h + 1)
    x0 = rng.integers(0, ww - w + 1)
    out = []
    for img in images:
        big = resize_nearest(img, hh, ww)
        out.append(Image(big.data[y0:y0 + h, x0:x0 + w],
                         big.mask[y0:y0 + h, x0:x0 + w]))
    return out


def prepare_inputs(sample: TrainingSample, config: StageConfig,
                   rng: np.random.Generator | None = None):
    """Stream arrays padded to training dims plus the (3, H, W) target.

    With train_crop set, samples are cropped (randomly during training,
    centered for evaluation passes) — the network is fully convolutional,
    so crop-trained stages apply unchanged at their native size.
    """
    images = list(sample.fg_streams) + list(sample.bg_streams) + [sample.target]
    wn, hn = config.native_size
    for img in images:
        if (img.height, img.width) != (hn, wn):
            raise ShapeMismatch(
                f"sample image {(img.height, img.width)} != stage native {(hn, wn)}")
    if rng is not None and config.augment:
        images = _augmented(images, rng, config.max_resize)
    if config.train_crop is not None:
        wc, hc = config.train_crop
        if rng is not None:
            y0 = int(rng.integers(0, hn - hc + 1))
            x0 = int(rng.integers(0, wn - wc + 1))
        else:
            y0, x0 = (hn - hc) // 2, (wn - wc) // 2
        images = [Image(img.data[y0:y0 + hc, x0:x0 + wc],
                        img.mask[y0:y0 + hc, x0:x0 + wc]) for img in images]
    padded = pad_to_multiple(config.train_size(), 2 ** config.depth)
    streams = [pad_stream(stream_array(img), padded) for img in images[:6]]
    target = images[6].data.transpose(2, 0, 1)
    return streams, target


class Adam:
    """Standard Adam over a named parameter dict, updating in place."""

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            if g is None:
                continue
            m = self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            v = self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * (g * g)
            self.params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(model: CompositorModel, samples: list[TrainingSample],
          config: StageConfig, weights: LossWeights, seed: int = 0,
          discriminator: Discriminator | None = None,
          log_every: int = 0) -> tuple[CompositorModel, list[dict]]:
    """Adam training, deterministic per seed; returns per-epoch loss history.

    history[0] is an evaluation-only pass of the untrained model over the
    dataset (the epoch-0 baseline); rows 1..epochs are training epochs.
    """
    if not samples:
        raise EmptyDataset("training requires at least one sample")
    rng = np.random.default_rng(seed)
    opt = Adam(model.params, config.learning_rate)
    use_adv = weights.lambda_adv > 0
    disc = discriminator
    opt_d = None
    if use_adv:
        disc = disc or Discriminator(n_f=max(4, model.config.n_f // 2), seed=seed + 1)
        opt_d = Adam(disc.params, config.learning_rate)

    wn, hn = config.train_size()
    history = []
    for epoch in range(config.epochs + 1):
        update = epoch > 0
        order = rng.permutation(len(samples)) if update else np.arange(len(samples))
        sums = {"loss_r": 0.0, "loss_fr": 0.0, "loss_adv": 0.0, "total": 0.0}
        for si in order:
            streams, target = prepare_inputs(samples[si], config,
                                             rng if update else None)
            leaves = model.store.leaves()
            out = model.forward(streams, leaves=leaves)
            pred = ad.crop(out, hn, wn)
            tgt = Tensor(target)
            l_r = loss_reconstruction(pred, tgt)
            l_fr = loss_frequency(pred, tgt)
            total = ad.add(ad.scale(l_r, weights.lambda_r),
                           ad.scale(l_fr, weights.lambda_fr))
            l_adv_val = 0.0
            if use_adv:
                d_leaves = disc.store.leaves()
                gen_term, disc_term = loss_adversarial(disc, pred, tgt,
                                                       disc_leaves=d_leaves)
                total = ad.add(total, ad.scale(gen_term, weights.lambda_adv))
                l_adv_val = float(gen_term.data)
                if update:
                    backward(disc_term)
                    opt_d.step({k: t.grad for k, t in d_leaves.items()})
            if update:
                backward(total)
                opt.step({k: t.grad for k, t in leaves.items()})
            sums["loss_r"] += float(l_r.data)
            sums["loss_fr"] += float(l_fr.data)
            sums["loss_adv"] += l_adv_val
            sums["total"] += float(total.data)
        row = {"epoch": epoch}
        row.update({k: v / len(samples) for k, v in sums.items()})
        history.append(row)
        if log_every and epoch % log_every == 0:
            logger.info("stage %s epoch %d: total %.4f (r %.4f fr %.4f adv %.4f)",
                        config.stage, epoch, row["total"], row["loss_r"],
                        row["loss_fr"], row["loss_adv"])
    return model, history


def write_history_csv(history: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["epoch", "loss_r", "loss_fr",
                                               "loss_adv", "total"])
        writer.writeheader()
        for row in history:
            writer.writerow(row)
