"""Low -> mid -> hi cascade: each stage's output fills the next stage's holes."""

from __future__ import annotations

import numpy as np

from ..errors import MissingStage
from ..fusion import ViewLayers
from ..image import Image, downsample_valid, resize_bilinear
from .model import CompositorModel
from .train import pad_stream, stream_array

STAGE_ORDER = ("low", "mid", "hi")


def _fill_blanks(img: Image, fill: Image) -> Image:
    """Replace blank pixels with the fill image; valid pixels untouched."""
    data = np.where(img.mask[..., None], img.data, fill.data)
    return Image(data, np.ones_like(img.mask))


def _stage_forward(model: CompositorModel, fg: Image, bg: Image) -> Image:
    """Inference path: the identical estimate feeds all three streams of a kind."""
    wn, hn = model.config.native_size
    fg_arr = pad_stream(stream_array(fg), model.config.padded_size)
    bg_arr = pad_stream(stream_array(bg), model.config.padded_size)
    out = model.infer([fg_arr, fg_arr, fg_arr, bg_arr, bg_arr, bg_arr])
    return Image(out[:, :hn, :wn].transpose(1, 2, 0))


def inference_streams(fg: Image, bg: Image) -> list[Image]:
    """Structural contract: every fg stream gets the consensus foreground,
    every bg stream the accumulated background."""
    return [fg, fg, fg, bg, bg, bg]


def single_stage_infer(model: CompositorModel, layers: ViewLayers) -> Image:
    """One stage alone; layers are resampled to the stage's native size."""
    wn, hn = model.config.native_size
    fg = downsample_valid(layers.foreground, hn, wn)
    bg = downsample_valid(layers.background, hn, wn)
    return _stage_forward(model, fg, bg)


def multi_stage_infer(models: dict[str, CompositorModel],
                      layers: ViewLayers) -> Image:
    """Sequential composition; the final image has no blank pixels.

    Each stage sees the layers downsampled to its native size; blank pixels
    are replaced by the previous stage's output upsampled bilinearly.
    """
    for stage in STAGE_ORDER:
        if stage not in models:
            raise MissingStage(f"cascade requires a {stage!r} model")

    fill: Image | None = None
    out: Image | None = None
    for stage in STAGE_ORDER:
        model = models[stage]
        wn, hn = model.config.native_size
        fg = downsample_valid(layers.foreground, hn, wn)
        bg = downsample_valid(layers.background, hn, wn)
        if fill is not None:
            fg = _fill_blanks(fg, fill)
            bg = _fill_blanks(bg, fill)
        out = _stage_forward(model, fg, bg)
        if stage != STAGE_ORDER[-1]:
            nxt = models[STAGE_ORDER[STAGE_ORDER.index(stage) + 1]]
            wn2, hn2 = nxt.config.native_size
            fill = Image(resize_bilinear(out.data, hn2, wn2))
    return out
