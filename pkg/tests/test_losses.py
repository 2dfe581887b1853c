import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

import gradcheck
import oracles
from hrstyle.errors import ChannelMismatch, MissingLayer, ShapeMismatch, UnknownLayer, ValidationError
from hrstyle.losses import (
    DEFAULT_STYLE_LAYERS,
    LossConfig,
    content_loss,
    gram_matrix,
    precompute_targets,
    style_loss_layer,
    total_loss,
    total_style_loss,
    tv_loss,
)

t64 = lambda a: torch.as_tensor(np.asarray(a), dtype=torch.float64)  # noqa: E731

shapes = st.tuples(st.integers(1, 8), st.integers(1, 6), st.integers(1, 6))


@st.composite
def feature_maps(draw, shape=shapes):
    c, h, w = draw(shape)
    seed = draw(st.integers(0, 2**32 - 1))
    return np.random.default_rng(seed).standard_normal((c, h, w))


# -- content ------------------------------------------------------------------


def test_content_identical_is_zero():
    y = torch.randn(3, 4, 5)
    assert float(content_loss(y, y.clone())) == 0.0


def test_content_constant_offset():
    y = torch.randn(2, 2, 2, dtype=torch.float64)
    assert float(content_loss(y, y + 1)) == pytest.approx(1.0, abs=1e-12)


def test_content_matches_oracle(rng):
    y, yhat = rng.standard_normal((2, 7, 5, 3))
    assert float(content_loss(t64(y), t64(yhat))) == pytest.approx(oracles.content_loss(y, yhat), rel=1e-6)


def test_content_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        content_loss(torch.zeros(2, 3, 3), torch.zeros(2, 3, 4))


# -- gram ---------------------------------------------------------------------


def test_gram_zero():
    assert torch.equal(gram_matrix(torch.zeros(5, 3, 2)), torch.zeros(5, 5))


def test_gram_ones():
    assert gram_matrix(torch.ones(1, 2, 2, dtype=torch.float64)).tolist() == [[1.0]]


def test_gram_matches_oracle(rng):
    f = rng.standard_normal((3, 2, 2))
    np.testing.assert_allclose(gram_matrix(t64(f)).numpy(), oracles.gram(f), rtol=1e-6, atol=1e-12)


def test_gram_batched():
    f = torch.randn(2, 4, 3, 3, dtype=torch.float64)
    g = gram_matrix(f)
    assert g.shape == (2, 4, 4)
    torch.testing.assert_close(g[1], gram_matrix(f[1]))


@settings(max_examples=100, deadline=None)
@given(feature_maps())
def test_gram_symmetric_psd(f):
    g = gram_matrix(t64(f)).numpy()
    np.testing.assert_allclose(g, g.T, atol=1e-6)
    assert np.linalg.eigvalsh(g).min() >= -1e-6


@settings(max_examples=100, deadline=None)
@given(feature_maps(), st.integers(0, 2**32 - 1))
def test_gram_spatial_permutation_invariance(f, seed):
    c, h, w = f.shape
    perm = np.random.default_rng(seed).permutation(h * w)
    shuffled = f.reshape(c, -1)[:, perm].reshape(c, h, w)
    np.testing.assert_allclose(gram_matrix(t64(shuffled)).numpy(), gram_matrix(t64(f)).numpy(), atol=1e-6)


@settings(max_examples=100, deadline=None)
@given(feature_maps(), st.floats(-5, 5, allow_nan=False))
def test_gram_scales_quadratically(f, s):
    np.testing.assert_allclose(
        gram_matrix(t64(s * f)).numpy(), s * s * gram_matrix(t64(f)).numpy(), rtol=1e-9, atol=1e-9
    )


# -- style --------------------------------------------------------------------


def test_style_same_feature_zero():
    y = torch.randn(4, 3, 3)
    assert float(style_loss_layer(y, y)) == 0.0


def test_style_permutation_zero(rng):
    y = rng.standard_normal((4, 3, 5))
    perm = rng.permutation(15)
    yhat = y.reshape(4, -1)[:, perm].reshape(4, 3, 5)
    assert float(style_loss_layer(t64(y), t64(yhat))) < 1e-20


def test_style_unequal_spatial_sizes(rng):
    y, yhat = rng.standard_normal((4, 3, 3)), rng.standard_normal((4, 5, 2))
    val = float(style_loss_layer(t64(y), t64(yhat)))
    assert np.isfinite(val)
    assert val == pytest.approx(oracles.style_loss(y, yhat), rel=1e-6)


def test_style_channel_mismatch():
    with pytest.raises(ChannelMismatch):
        style_loss_layer(torch.zeros(3, 2, 2), torch.zeros(4, 2, 2))


def test_total_style_zero_and_linear(rng):
    y = {k: t64(rng.standard_normal((3, 2, 2))) for k in DEFAULT_STYLE_LAYERS}
    assert float(total_style_loss(y, y, LossConfig())) == 0.0
    a, b = t64(rng.standard_normal((3, 4, 4))), t64(rng.standard_normal((3, 4, 4)))
    layer = float(style_loss_layer(a, b))
    assert float(total_style_loss({"c": a}, {"c": b}, {"c": 2.0})) == pytest.approx(2 * layer, rel=1e-12)


def test_total_style_default_layers_matches_oracle(rng):
    ys = {k: rng.standard_normal((4, 3, 3)) for k in DEFAULT_STYLE_LAYERS}
    yh = {k: rng.standard_normal((4, 2, 5)) for k in DEFAULT_STYLE_LAYERS}
    got = float(total_style_loss({k: t64(v) for k, v in ys.items()}, {k: t64(v) for k, v in yh.items()},
                                 LossConfig()))
    assert got == pytest.approx(oracles.total_style_loss(ys, yh, DEFAULT_STYLE_LAYERS), rel=1e-6)


def test_total_style_missing_layer():
    with pytest.raises(MissingLayer):
        total_style_loss({"conv1_1": torch.zeros(2, 2, 2)}, {}, {"conv1_1": 1.0})


def test_total_style_per_layer_report(rng):
    y = {"a": t64(rng.standard_normal((2, 3, 3))), "b": t64(rng.standard_normal((2, 3, 3)))}
    yh = {"a": t64(rng.standard_normal((2, 3, 3))), "b": t64(rng.standard_normal((2, 3, 3)))}
    per = {}
    total = total_style_loss(y, yh, {"a": 0.5, "b": 3.0}, per_layer=per)
    assert float(total) == pytest.approx(0.5 * per["a"] + 3.0 * per["b"], rel=1e-12)


# -- total variation ----------------------------------------------------------


def test_tv_constant_zero():
    assert float(tv_loss(torch.full((3, 5, 4), 0.3))) == 0.0


def test_tv_single_difference():
    a, d = 0.2, 0.5
    img = torch.tensor([a, a + d], dtype=torch.float64).view(1, 1, 2).repeat(3, 1, 1)
    assert float(tv_loss(img)) == pytest.approx(d * d, rel=1e-12)


def test_tv_matches_oracle(rng):
    img = rng.random((3, 6, 5))
    assert float(tv_loss(t64(img))) == pytest.approx(oracles.tv_loss(img), rel=1e-6)


# -- config and total objective ----------------------------------------------


def test_loss_config_defaults():
    cfg = LossConfig()
    assert cfg.content_layer == "conv4_2"
    assert cfg.style_layers == {"conv1_1": 0.1, "conv2_1": 0.2, "conv3_1": 0.4, "conv4_1": 0.8, "conv5_1": 1.6}
    assert (cfg.lambda_content, cfg.lambda_style, cfg.lambda_tv) == (80.0, 1.0, 1e-6)
    assert cfg.deepest_layer() == "conv5_1"


@pytest.mark.parametrize("cw", [0.8, 8, 80, 800, 8000])
def test_sweep_content_weights_accepted(cw):
    assert LossConfig(lambda_content=cw, lambda_style=1).lambda_content == cw


@pytest.mark.parametrize(
    "kwargs, exc",
    [
        ({"style_layers": {}}, ValidationError),
        ({"style_layers": {"conv1_1": -1}}, ValidationError),
        ({"lambda_content": -1}, ValidationError),
        ({"lambda_tv": float("nan")}, ValidationError),
        ({"content_layer": "conv9_9"}, UnknownLayer),
    ],
)
def test_loss_config_validation(kwargs, exc):
    with pytest.raises(exc):
        LossConfig(**kwargs)


def test_total_loss_identical_images(fx):
    img = torch.rand(3, 32, 32, generator=torch.Generator().manual_seed(0))
    cfg = LossConfig()
    total, bd = total_loss(img, img, img, fx, cfg)
    assert bd.content == 0.0
    assert bd.style == pytest.approx(0.0, abs=1e-12)
    assert float(total) == pytest.approx(cfg.lambda_tv * float(tv_loss(img)), rel=1e-5)


def test_total_loss_linear_in_content_weight(fx):
    gen = torch.Generator().manual_seed(1)
    c, s, o = (torch.rand(3, 32, 32, generator=gen) for _ in range(3))
    _, a = total_loss(c, s, o, fx, LossConfig(lambda_content=80))
    _, b = total_loss(c, s, o, fx, LossConfig(lambda_content=160))
    assert b.weighted_content == pytest.approx(2 * a.weighted_content, rel=1e-6)
    assert b.weighted_style == a.weighted_style and b.weighted_tv == a.weighted_tv
    assert a.total == pytest.approx(a.weighted_content + a.weighted_style + a.weighted_tv, rel=1e-6)
    assert a.weighted_content == pytest.approx(80 * a.content, rel=1e-6)


def test_total_loss_style_image_may_differ_in_size(fx):
    gen = torch.Generator().manual_seed(2)
    c, o = torch.rand(3, 32, 32, generator=gen), torch.rand(3, 32, 32, generator=gen)
    s = torch.rand(3, 48, 24, generator=gen)
    cfg = LossConfig()
    targets = precompute_targets(c, s, fx, cfg)
    assert set(targets.style_grams) == set(cfg.style_layers)
    t1, _ = total_loss(c, s, o, fx, cfg)
    t2, _ = total_loss(None, None, o, fx, cfg, targets=targets)
    assert float(t1) == float(t2)


def test_total_loss_gradient_within_activation_region(fx64_tiny):
    assert gradcheck.loss_image_check(fx64_tiny, step=1e-3, frozen=True) <= 1e-8


@pytest.mark.parametrize("seed", [0, 1])
def test_total_loss_gradient_small_step(fx64_tiny, seed):
    assert gradcheck.loss_image_check(fx64_tiny, step=1e-6, seed=seed) <= 1e-6
