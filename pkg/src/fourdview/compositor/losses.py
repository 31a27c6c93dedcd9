"""Training losses: reconstruction, frequency (spectral L1), adversarial.

Both image losses are means (not sums) so the loss weights transfer
across stage resolutions; each is homogeneous of degree 1 in the pixel
values. The frequency loss penalizes real and imaginary spectrum
components separately, normalized by H*W per channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class LossWeights:
    lambda_r: float = 100.0
    lambda_adv: float = 1.0
    lambda_fr: float = 100.0

    def __post_init__(self):
        if min(self.lambda_r, self.lambda_adv, self.lambda_fr) < 0:
            raise ValueError("loss weights must be >= 0")


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def fft2(channel: np.ndarray) -> np.ndarray:
    """Unnormalized forward 2-D DFT of one real channel -> complex spectrum."""
    channel = np.asarray(channel, dtype=np.float64)
    if channel.ndim != 2:
        raise ShapeMismatch(f"fft2 expects a 2-D array, got {channel.shape}")
    return np.fft.fft2(channel)


def loss_reconstruction(pred, target) -> Tensor:
    """Mean absolute difference over all pixels and channels."""
    p, t = _as_tensor(pred), _as_tensor(target)
    if p.data.shape != t.data.shape:
        raise ShapeMismatch(f"{p.data.shape} vs {t.data.shape}")
    return ad.mean_all(ad.abs_(ad.sub(p, t)))


def loss_frequency(pred, target) -> Tensor:
    """L1 over per-channel spectra of the difference: mean |Re| + mean |Im|."""
    p, t = _as_tensor(pred), _as_tensor(target)
    if p.data.shape != t.data.shape:
        raise ShapeMismatch(f"{p.data.shape} vs {t.data.shape}")
    c, h, w = p.data.shape
    spec = ad.dft2(ad.sub(p, t))                 # (2C, H, W)
    return ad.scale(ad.sum_all(ad.abs_(spec)), 1.0 / (c * h * w))


def loss_adversarial(disc, pred, target,
                     disc_leaves=None) -> tuple[Tensor, Tensor]:
    """Non-saturating GAN losses.

    Returns (generator_term, discriminator_term):
        generator_term     = -log sigmoid(D(pred))            [backprops into pred]
        discriminator_term = -log sigmoid(D(target))
                             - log(1 - sigmoid(D(pred_detached)))
    """
    p = _as_tensor(pred)
    t = _as_tensor(target)
    if p.data.shape != t.data.shape:
        raise ShapeMismatch(f"{p.data.shape} vs {t.data.shape}")
    gen_term = ad.softplus(ad.neg(disc.forward(p, leaves=disc_leaves)))
    d_leaves = disc_leaves if disc_leaves is not None else disc.store.leaves()
    d_real = disc.forward(t, leaves=d_leaves)
    d_fake = disc.forward(p.detach(), leaves=d_leaves)
    disc_term = ad.add(ad.softplus(ad.neg(d_real)), ad.softplus(d_fake))
    return gen_term, disc_term
