import numpy as np
import pytest

from fourdview.compositor import autodiff as ad
from fourdview.compositor import (CompositorModel, Discriminator, LossWeights,
                                  ModelConfig, fft2, load_model,
                                  loss_adversarial, loss_frequency,
                                  loss_reconstruction, save_model, train)
from fourdview.compositor.multistage import (inference_streams,
                                             multi_stage_infer,
                                             single_stage_infer)
from fourdview.compositor.train import (DEFAULT_STAGES, StageConfig,
                                        TrainingSample, pad_stream,
                                        prepare_inputs, stream_array)
from fourdview.errors import (CheckpointVersionMismatch, EmptyDataset,
                              MissingStage, ShapeMismatch)
from fourdview.fusion import ViewLayers
from fourdview.image import Image, DepthMap

RNG = np.random.default_rng(0)


def naive_dft2(a: np.ndarray) -> np.ndarray:
    """O(n^2) direct 2-D DFT used as the oracle."""
    h, w = a.shape
    out = np.zeros((h, w), dtype=complex)
    ys = np.arange(h)
    xs = np.arange(w)
    for ky in range(h):
        for kx in range(w):
            phase = np.exp(-2j * np.pi * (ky * ys[:, None] / h + kx * xs[None, :] / w))
            out[ky, kx] = (a * phase).sum()
    return out


def small_model(n_f=4, size=(64, 32)):
    cfg = ModelConfig(stage="low", n_f=n_f, native_size=size, width_cap=1)
    return CompositorModel(cfg, seed=0)


def rand_streams(cfg, rng):
    wp, hp = cfg.padded_size
    return [rng.random((4, hp, wp)) for _ in range(6)]


# --- forward -----------------------------------------------------------------

def test_zero_input_forward_is_smooth_clamp_of_zero():
    m = small_model()
    wp, hp = m.config.padded_size
    out = m.infer([np.zeros((4, hp, wp))] * 6)
    assert np.allclose(out, 0.5)


def test_fully_convolutional_shape_doubling():
    m = small_model()
    wp, hp = m.config.padded_size
    rng = np.random.default_rng(1)
    out1 = m.infer([rng.random((4, hp, wp)) for _ in range(6)])
    out2 = m.infer([rng.random((4, 2 * hp, 2 * wp)) for _ in range(6)])
    assert out1.shape == (3, hp, wp)
    assert out2.shape == (3, 2 * hp, 2 * wp)


def test_forward_deterministic():
    m = small_model()
    streams = rand_streams(m.config, np.random.default_rng(2))
    a = m.forward(streams).data
    b = m.forward(streams).data
    assert np.array_equal(a, b)


def test_tape_and_fast_paths_agree():
    m = small_model(n_f=5)
    streams = rand_streams(m.config, np.random.default_rng(3))
    assert np.array_equal(m.forward(streams).data, m.infer(streams))


def test_translation_covariance_on_interior():
    """Shifting inputs by the backbone stride shifts the output identically
    away from the borders."""
    cfg = ModelConfig(stage="low", n_f=4, native_size=(288, 160), width_cap=2)
    m = CompositorModel(cfg, seed=0)
    rng = np.random.default_rng(4)
    wp, hp = cfg.padded_size
    stride = 2 ** cfg.depth
    streams = [rng.random((4, hp, wp)) for _ in range(6)]
    shifted = [np.roll(s, (stride, stride), axis=(1, 2)) for s in streams]
    out = m.infer(streams)
    out_s = m.infer(shifted)
    margin = 72
    a = out[:, margin:hp - margin - stride, margin:wp - margin - stride]
    b = out_s[:, margin + stride:hp - margin, margin + stride:wp - margin]
    assert np.allclose(a, b, atol=1e-9)


# --- losses ------------------------------------------------------------------

def test_loss_reconstruction_cases():
    x = RNG.random((3, 10, 14))
    assert float(loss_reconstruction(ad.Tensor(x), ad.Tensor(x)).data) == 0.0
    y = x + 0.1
    assert float(loss_reconstruction(ad.Tensor(y), ad.Tensor(x)).data) == pytest.approx(0.1)
    z = RNG.random((3, 10, 14))
    assert float(loss_reconstruction(ad.Tensor(x), ad.Tensor(z)).data) == pytest.approx(
        np.abs(x - z).mean())
    with pytest.raises(ShapeMismatch):
        loss_reconstruction(ad.Tensor(x), ad.Tensor(z[:, :5]))


def test_fft2_delta_and_constant():
    delta = np.zeros((8, 8))
    delta[0, 0] = 1.0
    assert np.allclose(fft2(delta), 1.0)
    const = np.full((6, 10), 0.7)
    spec = fft2(const)
    assert spec[0, 0] == pytest.approx(0.7 * 60)
    spec[0, 0] = 0.0
    assert np.abs(spec).max() < 1e-9


def test_fft2_matches_naive_dft():
    for shape in [(8, 8), (13, 17)]:
        a = np.random.default_rng(7).random(shape)
        assert np.abs(fft2(a) - naive_dft2(a)).max() < 1e-9


def test_fft2_linearity():
    rng = np.random.default_rng(8)
    a, b = rng.random((9, 11)), rng.random((9, 11))
    assert np.abs(fft2(a + b) - (fft2(a) + fft2(b))).max() < 1e-9


def test_loss_frequency_zero_and_oracle():
    x = RNG.random((3, 8, 8))
    assert float(loss_frequency(ad.Tensor(x), ad.Tensor(x)).data) == 0.0
    y = RNG.random((3, 8, 8))
    # scripted oracle via the naive DFT
    expected = 0.0
    for c in range(3):
        spec = naive_dft2(x[c] - y[c])
        expected += (np.abs(spec.real).sum() + np.abs(spec.imag).sum())
    expected /= 3 * 8 * 8
    assert float(loss_frequency(ad.Tensor(x), ad.Tensor(y)).data) == pytest.approx(expected)


def test_losses_homogeneous_degree_one():
    rng = np.random.default_rng(9)
    x, y = rng.random((3, 8, 12)), rng.random((3, 8, 12))
    for alpha in (0.5, 2.0):
        lr1 = float(loss_reconstruction(ad.Tensor(x), ad.Tensor(y)).data)
        lr2 = float(loss_reconstruction(ad.Tensor(alpha * x), ad.Tensor(alpha * y)).data)
        assert lr2 == pytest.approx(alpha * lr1)
        lf1 = float(loss_frequency(ad.Tensor(x), ad.Tensor(y)).data)
        lf2 = float(loss_frequency(ad.Tensor(alpha * x), ad.Tensor(alpha * y)).data)
        assert lf2 == pytest.approx(alpha * lf1)


def test_adversarial_zero_logit_values():
    """With D == 0 everywhere the terms are log 4 and log 2 analytically."""
    class ZeroDisc(Discriminator):
        def forward(self, image, leaves=None):
            x = image if isinstance(image, ad.Tensor) else ad.Tensor(image)
            return ad.scale(ad.mean_all(x), 0.0)

    d = ZeroDisc(n_f=4)
    x = RNG.random((3, 16, 16))
    g_term, d_term = loss_adversarial(d, ad.Tensor(x), ad.Tensor(x * 0.5))
    assert float(d_term.data) == pytest.approx(np.log(4.0))
    assert float(g_term.data) == pytest.approx(np.log(2.0))


def test_adversarial_generator_gradient_fd():
    d = Discriminator(n_f=4, seed=3)
    rng = np.random.default_rng(10)
    x0 = rng.random((3, 16, 16))
    target = rng.random((3, 16, 16))

    def loss_of(x):
        g_term, _ = loss_adversarial(d, ad.Tensor(x), ad.Tensor(target))
        return g_term

    t = ad.Tensor(x0)
    g_term, _ = loss_adversarial(d, t, ad.Tensor(target))
    ad.backward(g_term)
    worst = 0.0
    for _ in range(8):
        idx = tuple(rng.integers(0, s) for s in x0.shape)
        xp = x0.copy(); xp[idx] += 1e-5
        xm = x0.copy(); xm[idx] -= 1e-5
        fd = (float(loss_of(xp).data) - float(loss_of(xm).data)) / 2e-5
        denom = max(abs(fd), abs(t.grad[idx]), 1e-6)
        worst = max(worst, abs(fd - t.grad[idx]) / denom)
    assert worst < 1e-4


# --- training ----------------------------------------------------------------

def _toy_samples(n, size=(32, 16), seed=0):
    rng = np.random.default_rng(seed)
    w, h = size
    samples = []
    for _ in range(n):
        target = Image(rng.random((h, w, 3)))
        fg = Image(target.data.copy(), rng.random((h, w)) > 0.3)
        bg = Image(np.clip(target.data + 0.05 * rng.standard_normal((h, w, 3)), 0, 1))
        samples.append(TrainingSample(fg_streams=[fg, fg, fg],
                                      bg_streams=[bg, bg, bg], target=target))
    return samples


def _toy_stage(epochs=3, augment=False):
    return StageConfig(stage="low", native_size=(32, 16), n_f=4, epochs=epochs,
                       width_cap=1, augment=augment)


def test_train_requires_samples():
    stage = _toy_stage()
    m = CompositorModel(stage.model_config(), seed=0)
    with pytest.raises(EmptyDataset):
        train(m, [], stage, LossWeights(lambda_adv=0))


def test_train_deterministic_same_seed():
    stage = _toy_stage(epochs=2, augment=True)
    w = LossWeights(lambda_adv=0)
    m1, h1 = train(CompositorModel(stage.model_config(), seed=0),
                   _toy_samples(3), stage, w, seed=11)
    m2, h2 = train(CompositorModel(stage.model_config(), seed=0),
                   _toy_samples(3), stage, w, seed=11)
    assert h1 == h2
    for k in m1.params:
        assert np.array_equal(m1.params[k], m2.params[k])


def test_pure_l1_training_decreases_monotonically():
    """lambda_fr = lambda_adv = 0: loss non-increasing within 5% tolerance."""
    stage = _toy_stage(epochs=6)
    w = LossWeights(lambda_r=100.0, lambda_fr=0.0, lambda_adv=0.0)
    _, hist = train(CompositorModel(stage.model_config(), seed=0),
                    _toy_samples(4), stage, w, seed=0)
    totals = [h["total"] for h in hist]
    for a, b in zip(totals, totals[1:]):
        assert b <= a * 1.05
    assert all(h["loss_fr"] == 0 or h["loss_fr"] > 0 for h in hist)


def test_identity_foreground_beats_identity_copy_baseline():
    """One sample whose streams already carry the target: converged loss is
    at most the loss of copying the (partially blank) foreground through."""
    from scipy.ndimage import gaussian_filter
    stage = StageConfig(stage="low", native_size=(32, 16), n_f=6, epochs=150,
                        width_cap=2, augment=False)
    rng = np.random.default_rng(4)
    smooth = rng.random((16, 32, 3))
    for c in range(3):
        smooth[:, :, c] = gaussian_filter(smooth[:, :, c], 2.0)
    smooth = (smooth - smooth.min()) / (smooth.max() - smooth.min())
    target = Image(smooth)
    hole = np.zeros((16, 32), dtype=bool)
    hole[4:10, 8:20] = True           # one big blank block, 22% of pixels
    fg = Image(target.data * ~hole[..., None], ~hole)
    bg = Image(target.data.copy())
    sample = TrainingSample(fg_streams=[fg] * 3, bg_streams=[bg] * 3, target=target)
    w = LossWeights(lambda_r=100.0, lambda_fr=100.0, lambda_adv=0.0)
    model, hist = train(CompositorModel(stage.model_config(), seed=0),
                        [sample], stage, w, seed=0)
    # scripted identity-copy baseline: emit the fg stream as-is
    t = ad.Tensor(target.data.transpose(2, 0, 1))
    copy = ad.Tensor(fg.data.transpose(2, 0, 1))
    baseline = 100 * float(loss_reconstruction(copy, t).data) \
        + 100 * float(loss_frequency(copy, t).data)
    assert hist[-1]["total"] <= baseline


def test_adversarial_training_step_runs():
    stage = _toy_stage(epochs=1)
    w = LossWeights(lambda_r=100.0, lambda_fr=100.0, lambda_adv=1.0)
    m, hist = train(CompositorModel(stage.model_config(), seed=0),
                    _toy_samples(2), stage, w, seed=0)
    assert hist[0]["loss_adv"] > 0


def test_loss_excludes_adversarial_term_when_disabled():
    stage = _toy_stage(epochs=1)
    samples = _toy_samples(2)
    w_off = LossWeights(lambda_r=100.0, lambda_fr=100.0, lambda_adv=0.0)
    _, hist = train(CompositorModel(stage.model_config(), seed=0),
                    samples, stage, w_off, seed=0)
    assert hist[0]["loss_adv"] == 0.0
    assert hist[0]["total"] == pytest.approx(
        100 * hist[0]["loss_r"] + 100 * hist[0]["loss_fr"], rel=1e-9)


# --- checkpoints -------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    m = small_model(n_f=5)
    rng = np.random.default_rng(5)
    for k in m.params:
        m.params[k][...] = rng.standard_normal(m.params[k].shape)
    save_model(m, tmp_path / "m.ckpt")
    back = load_model(tmp_path / "m.ckpt")
    assert back.config == m.config
    for k in m.params:
        assert np.array_equal(back.params[k], m.params[k])
    streams = rand_streams(m.config, rng)
    assert np.array_equal(m.infer(streams), back.infer(streams))


def test_checkpoint_rejects_other_opset(tmp_path):
    m = small_model()
    save_model(m, tmp_path / "m.ckpt")
    blob = (tmp_path / "m.ckpt").read_bytes()
    import fourdview.compositor.autodiff as adiff
    bad = blob.replace(adiff.OPSET_VERSION.encode(), b"fixed-ops-0")
    (tmp_path / "bad.ckpt").write_bytes(bad)
    with pytest.raises(CheckpointVersionMismatch):
        load_model(tmp_path / "bad.ckpt")


# --- multi-stage cascade ----------------------------------------------------

def _layers_from(fg: Image, bg: Image) -> ViewLayers:
    from fourdview.geometry import PinholeCamera
    h, w = fg.data.shape[:2]
    K = np.array([[50.0, 0, (w - 1) / 2], [0, 50.0, (h - 1) / 2], [0, 0, 1]])
    cam = PinholeCamera(K, np.eye(3), np.zeros(3), w, h)
    return ViewLayers(foreground=fg, foreground_depth=DepthMap(
        np.where(fg.mask, 5.0, 0.0), fg.mask.copy()), background=bg,
        camera=cam, time=0)


def _stage_models():
    models = {}
    for stage, size in [("low", (16, 8)), ("mid", (32, 16)), ("hi", (64, 32))]:
        cfg = ModelConfig(stage=stage, n_f=4, native_size=size, width_cap=1)
        models[stage] = CompositorModel(cfg, seed=1)
    return models


def test_cascade_requires_all_stages():
    models = _stage_models()
    del models["mid"]
    rng = np.random.default_rng(6)
    layers = _layers_from(Image(rng.random((32, 64, 3))), Image(rng.random((32, 64, 3))))
    with pytest.raises(MissingStage):
        multi_stage_infer(models, layers)


def test_cascade_holefree_equals_hi_stage():
    models = _stage_models()
    rng = np.random.default_rng(7)
    layers = _layers_from(Image(rng.random((32, 64, 3))), Image(rng.random((32, 64, 3))))
    out_cascade = multi_stage_infer(models, layers)
    out_hi = single_stage_infer(models["hi"], layers)
    assert np.array_equal(out_cascade.data, out_hi.data)


def test_cascade_fully_blank_foreground_still_dense():
    models = _stage_models()
    rng = np.random.default_rng(8)
    fg = Image(np.zeros((32, 64, 3)), np.zeros((32, 64), dtype=bool))
    bg = Image(rng.random((32, 64, 3)))
    out = multi_stage_infer(models, _layers_from(fg, bg))
    assert out.mask.all()
    assert np.isfinite(out.data).all()


def test_inference_streams_are_structurally_identical():
    rng = np.random.default_rng(9)
    fg = Image(rng.random((8, 8, 3)))
    bg = Image(rng.random((8, 8, 3)))
    streams = inference_streams(fg, bg)
    assert streams[0] is streams[1] is streams[2] is fg
    assert streams[3] is streams[4] is streams[5] is bg
