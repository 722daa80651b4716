import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from fontfusion.networks import (
    Discriminator,
    FusionEncoder,
    GeneratorSpec,
    Generator,
    IndexOutOfRange,
    ScheduleLengthMismatch,
    ShapeMismatch,
    StyleAffine,
    StyleSchedule,
    adain,
    discriminator_forward,
    encoder_forward,
    generator_forward,
    make_style_schedule,
    minibatch_stddev,
    style_affine,
    uniform_schedule,
)

TINY = GeneratorSpec(size=16, style_dim=8, channel_base=32, channel_max=8)


def tiny_models(seed=0):
    rng = torch.Generator().manual_seed(seed)
    g, e, d = Generator(TINY), FusionEncoder(TINY), Discriminator(TINY, zero_final=False)
    for net in (g, e, d):
        net.reset_parameters_seeded(rng)
    return g, e, d


# ---------------------------------------------------------------------------
# adain
# ---------------------------------------------------------------------------


def test_adain_moment_contract():
    torch.manual_seed(0)
    x = torch.randn(1000, 8, 16, 16)
    y = adain(x, torch.ones(8), torch.zeros(8))
    mean = y.mean(dim=(-2, -1))
    std = y.std(dim=(-2, -1), unbiased=False)
    assert mean.abs().max() < 1e-5
    assert (std - 1).abs().max() < 1e-3


def test_adain_hand_case():
    x = torch.tensor([[[-1.0, 0.0, 1.0]]])
    out = adain(x, torch.tensor([2.0]), torch.tensor([3.0]))
    expected = torch.tensor([0.5505, 3.0, 5.4495])
    assert torch.allclose(out.flatten(), expected, atol=1e-3)


def test_adain_constant_channel_collapses_to_bias():
    x = torch.full((1, 4, 6, 6), 3.7, dtype=torch.float64)
    scale = torch.full((4,), 9.0, dtype=torch.float64)
    bias = torch.full((4,), -0.25, dtype=torch.float64)
    out = adain(x, scale, bias)
    assert torch.allclose(out, torch.full_like(out, -0.25), atol=1e-6)


def test_adain_batched_scale_bias():
    x = torch.randn(3, 2, 5, 5)
    scale = torch.rand(3, 2) + 0.5
    bias = torch.randn(3, 2)
    out = adain(x, scale, bias)
    for b in range(3):
        ref = adain(x[b], scale[b], bias[b])
        assert torch.allclose(out[b], ref, atol=1e-6)


def test_adain_shape_errors():
    x = torch.randn(2, 4, 8, 8)
    with pytest.raises(ShapeMismatch):
        adain(x, torch.ones(3), torch.zeros(4))
    with pytest.raises(ShapeMismatch):
        adain(torch.randn(8, 8), torch.ones(8), torch.zeros(8))
    with pytest.raises(ValueError):
        adain(x, torch.ones(4), torch.zeros(4), eps=0.0)


@settings(max_examples=30, deadline=None)
@given(
    channels=st.integers(1, 6),
    hw=st.integers(2, 10),
    seed=st.integers(0, 10_000),
)
def test_adain_is_scale_and_shift_invariant_of_input(channels, hw, seed):
    # normalizing first removes any per-channel affine disturbance of x
    gen = torch.Generator().manual_seed(seed)
    x = torch.randn(channels, hw, hw, generator=gen, dtype=torch.float64)
    a = torch.rand(channels, 1, 1, generator=gen, dtype=torch.float64) + 0.5
    b = torch.randn(channels, 1, 1, generator=gen, dtype=torch.float64)
    scale = torch.ones(channels, dtype=torch.float64)
    bias = torch.zeros(channels, dtype=torch.float64)
    assert torch.allclose(adain(x, scale, bias), adain(a * x + b, scale, bias), atol=1e-6)


# ---------------------------------------------------------------------------
# style affine and schedules
# ---------------------------------------------------------------------------


def test_style_affine_identity_at_zero():
    site = StyleAffine(style_dim=8, channels=5)
    scale, bias = site(torch.zeros(8))
    assert torch.equal(scale, torch.ones(5))
    assert torch.equal(bias, torch.zeros(5))


def test_style_affine_linearity():
    site = StyleAffine(style_dim=8, channels=5)
    site.reset_parameters_seeded(torch.Generator().manual_seed(3))
    w = torch.randn(8)
    s0, b0 = site(torch.zeros(8))
    s1, b1 = site(w)
    s2, b2 = site(2.0 * w)
    assert torch.allclose(s2 - s0, 2.0 * (s1 - s0), atol=1e-6)
    assert torch.allclose(b2 - b0, 2.0 * (b1 - b0), atol=1e-6)


def test_style_affine_shapes_and_errors():
    site = StyleAffine(style_dim=8, channels=5)
    scale, bias = style_affine(torch.randn(3, 8), site)
    assert scale.shape == (3, 5) and bias.shape == (3, 5)
    assert torch.isfinite(scale).all() and torch.isfinite(bias).all()
    with pytest.raises(ShapeMismatch):
        site(torch.randn(7))


def test_make_style_schedule_routing():
    w1, w2 = torch.randn(8), torch.randn(8)
    sch = make_style_schedule(w1, w2, 6, n_sites=7)
    assert all(torch.equal(sch.per_site[i], w1) for i in range(6))
    assert torch.equal(sch.per_site[6], w2)
    assert all(torch.equal(v, w1) for v in make_style_schedule(w1, w2, 7, 7))
    assert all(torch.equal(v, w2) for v in make_style_schedule(w1, w2, 0, 7))


def test_make_style_schedule_bounds():
    w = torch.randn(8)
    for k in (-1, 8):
        with pytest.raises(IndexOutOfRange):
            make_style_schedule(w, w, k, n_sites=7)
    with pytest.raises(ShapeMismatch):
        make_style_schedule(torch.randn(8), torch.randn(9), 3, 7)


def test_schedule_shape_validation():
    with pytest.raises(ShapeMismatch):
        StyleSchedule((torch.randn(8), torch.randn(2, 8)))
    with pytest.raises(ScheduleLengthMismatch):
        StyleSchedule(())


# ---------------------------------------------------------------------------
# generator
# ---------------------------------------------------------------------------


def test_generator_default_output_shape():
    g = Generator()
    out = generator_forward(g, uniform_schedule(torch.randn(64), g.n_sites))
    assert out.shape == (1, 128, 128)
    assert g.n_sites == 7
    assert tuple(g.const.shape) == (64, 4, 4)


def test_generator_default_channel_schedule():
    spec = GeneratorSpec()
    assert {r: spec.channels_at(r) for r in spec.resolutions} == {
        4: 64, 8: 64, 16: 64, 32: 64, 64: 32, 128: 16,
    }


def test_generator_spec_validation():
    with pytest.raises(ValueError):
        GeneratorSpec(size=48)
    with pytest.raises(ValueError):
        GeneratorSpec(size=8)
    with pytest.raises(ValueError):
        GeneratorSpec(size=32, channels={4: 8, 8: 16, 16: 16, 32: 4})
    with pytest.raises(ValueError):
        GeneratorSpec(size=32, channels={4: 8})


def test_generator_schedule_equivalence_bit_exact():
    g, _, _ = tiny_models()
    w = torch.randn(8)
    outs = [g(make_style_schedule(w, torch.randn(8) * 0 + w, k, g.n_sites).as_batched())
            for k in range(g.n_sites + 1)]
    ref = g(uniform_schedule(w.unsqueeze(0), g.n_sites))
    assert all(torch.equal(o, ref) for o in outs)


def test_generator_outputs_bounded_and_finite():
    g, _, _ = tiny_models(seed=5)
    gen = torch.Generator().manual_seed(11)
    for _ in range(100):
        w = torch.randn(8, generator=gen)
        out = generator_forward(g, uniform_schedule(w, g.n_sites))
        assert torch.isfinite(out).all()
        assert out.min() >= -1.0 and out.max() <= 1.0


def test_generator_rejects_wrong_schedule_length():
    g, _, _ = tiny_models()
    with pytest.raises(ScheduleLengthMismatch):
        g(uniform_schedule(torch.randn(8), g.n_sites + 1))


def test_generator_deterministic_construction():
    a, b = Generator(TINY), Generator(TINY)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)


def test_generator_batched_matches_stacked_singles():
    g, _, _ = tiny_models(seed=2)
    ws = torch.randn(3, 8)
    batched = g(uniform_schedule(ws, g.n_sites))
    singles = torch.cat([g(uniform_schedule(ws[i : i + 1], g.n_sites)) for i in range(3)])
    assert torch.allclose(batched, singles, atol=1e-5)


# ---------------------------------------------------------------------------
# encoder and discriminator
# ---------------------------------------------------------------------------


def test_encoder_output_shape_default():
    e = FusionEncoder()
    img = torch.rand(2, 1, 128, 128) * 2 - 1
    w = encoder_forward(e, img)
    assert w.shape == (2, 64)
    assert encoder_forward(e, img[0]).shape == (64,)


def test_encoder_is_pure():
    _, e, _ = tiny_models()
    img = torch.rand(1, 1, 16, 16)
    assert torch.equal(e(img), e(img))


def test_encoder_batch_independence():
    _, e, _ = tiny_models(seed=3)
    imgs = torch.rand(4, 1, 16, 16) * 2 - 1
    together = e(imgs)
    singles = torch.stack([e(imgs[i]) for i in range(4)])
    assert torch.allclose(together, singles, atol=1e-5)


def test_discriminator_scores_depend_on_batch_composition():
    _, _, d = tiny_models(seed=4)
    probe = torch.rand(1, 1, 16, 16) * 2 - 1
    mates_a = torch.rand(3, 1, 16, 16) * 2 - 1
    mates_b = torch.zeros(3, 1, 16, 16)
    score_a = d(torch.cat([probe, mates_a]))[0][0]
    score_b = d(torch.cat([probe, mates_b]))[0][0]
    assert (score_a - score_b).abs() > 1e-3


def test_discriminator_shapes_and_feature_stack():
    _, _, d = tiny_models()
    batch = torch.rand(4, 1, 16, 16) * 2 - 1
    scores, feats = discriminator_forward(d, batch)
    assert scores.shape == (4,)
    assert torch.isfinite(scores).all()
    assert len(feats) == d.block_count + 1
    assert feats[-1].dim() == 2  # pre-score activation


def test_discriminator_zero_final_scores_zero():
    d = Discriminator(TINY)  # zero_final defaults on
    scores, _ = d(torch.rand(3, 1, 16, 16))
    assert torch.equal(scores, torch.zeros(3))


def test_discriminator_handles_all_zero_batch():
    _, _, d = tiny_models()
    scores, _ = d(torch.zeros(4, 1, 16, 16))
    assert torch.isfinite(scores).all()


def test_discriminator_rejects_bad_shapes():
    _, _, d = tiny_models()
    with pytest.raises(ShapeMismatch):
        d(torch.rand(2, 1, 32, 32))
    with pytest.raises(ShapeMismatch):
        d(torch.rand(2, 3, 16, 16))
    with pytest.raises(ShapeMismatch):
        minibatch_stddev(torch.rand(4, 4))


def test_minibatch_stddev_appends_shared_channel():
    x = torch.randn(5, 3, 4, 4)
    out = minibatch_stddev(x)
    assert out.shape == (5, 4, 4, 4)
    extra = out[:, 3]
    assert torch.equal(extra, extra[0].expand_as(extra))
    expected = torch.sqrt(x.var(dim=0, unbiased=False) + 1e-8).mean()
    assert torch.allclose(extra[0, 0, 0], expected)


def test_shape_closure_across_sizes():
    for size in (16, 32):
        spec = GeneratorSpec(size=size, style_dim=8, channel_base=64, channel_max=8)
        g, e = Generator(spec), FusionEncoder(spec)
        w = e(generator_forward(g, uniform_schedule(torch.randn(2, 8), g.n_sites)))
        assert w.shape == (2, 8)


# ---------------------------------------------------------------------------
# finite-difference gradients (end-to-end generator)
# ---------------------------------------------------------------------------


def test_generator_gradients_match_finite_differences():
    from gradcheck import assert_grads_match_fd

    g, _, _ = tiny_models(seed=9)
    g = g.double()
    assert sum(p.numel() for p in g.parameters()) <= 10_000
    gen = torch.Generator().manual_seed(21)
    w1 = torch.randn(1, 8, dtype=torch.float64, generator=gen).requires_grad_(True)
    w2 = torch.randn(1, 8, dtype=torch.float64, generator=gen).requires_grad_(True)

    def loss():
        sch = make_style_schedule(w1, w2, 2, g.n_sites)
        return g(sch).mean()

    params = list(g.parameters()) + [w1, w2]
    checked = assert_grads_match_fd(loss, params, h=1e-5, rtol=1e-5)
    assert checked == sum(p.numel() for p in params)
