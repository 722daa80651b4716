"""End-to-end acceptance gate.

Nine checks, one test each, executed in order:

 1. closed-form adversarial loss values and the fresh-model coin-flip score
 2. finite-difference verification of every loss gradient on miniature
    float64 networks
 3. normalization moment contract and a hand-computed case
 4. analytic gradient-penalty value on a linear critic plus the lazy
    every-16th-step application schedule
 5. style-mixing invariants: self-mix identity, boundary collapse,
    schedule equivalence
 6. desk-scale convergence run against frozen regression bounds
 7. bit-level reproducibility: identical runs byte-identical, and
    train-10-resume-10 equals train-20
 8. label independence: renaming every font id, name, category, and
    codepoint changes no training byte
 9. split-protocol counts and disjointness at the reference corpus sizes

Each test prints one ``criterion N PASS`` line with the measured values;
``pytest -v`` shows the per-criterion verdict.  The desk-scale fixture
trains the full system twice (criteria 6 and 7), so this module takes a
few minutes of CPU; everything else completes in seconds.
"""

import dataclasses
import math
from types import SimpleNamespace

import numpy as np
import pytest
import torch

from gradcheck import assert_grads_match_fd
from fontfusion.glyph_data import (
    BatchIterator,
    DatasetSplit,
    FontDataset,
    FontRecord,
    make_split,
    synth_glyph_dataset,
)
from fontfusion.losses import (
    LossWeights,
    d_adv_loss,
    feature_match_loss,
    g_adv_loss,
    r1_penalty,
    recon_loss,
)
from fontfusion.mixer import load_model, mix_fonts, reconstruct
from fontfusion.networks import (
    Discriminator,
    FusionEncoder,
    Generator,
    GeneratorSpec,
    adain,
    make_style_schedule,
    uniform_schedule,
)
from fontfusion.rng import fork_seed
from fontfusion.trainer import (
    TrainConfig,
    TrainState,
    adversarial_step,
    load_checkpoint,
    save_checkpoint,
    train,
)

# ---------------------------------------------------------------------------
# frozen desk-scale configuration
#
# Corpus: synthetic, seed 1, 4 fonts x 16 glyphs at 32x32 (all pairs train).
# Width: channel_base 512 / channel_max 64 -> channels {4:64, 8:64, 16:32,
# 32:16}, five injection sites.  Every other hyperparameter is the library
# default.  The convergence bounds below are frozen from an oracle run of
# this exact configuration (final logged recon_loss 0.0976, mean
# reconstruction L1 with EMA weights 0.1673); training is bit-deterministic,
# so a rerun reproduces those values exactly and the margin only absorbs
# drift from deliberate refactors.  For calibration: with the adversarial
# and feature-matching terms disabled the same setup reaches mean L1 0.054,
# and across train seeds 1-5 the full objective lands in 0.126-0.176, so
# the bounds below hold for any nearby trajectory, not just the pinned one.
# ---------------------------------------------------------------------------

DESK = TrainConfig(
    image_size=32,
    channel_base=512,
    channel_max=64,
    batch_size=8,
    total_steps=2000,
    seed=1,
    log_every=100,
)
RECON_BOUND = 0.15  # final logged training recon_loss (oracle: 0.0976)
MEAN_L1_BOUND = 0.20  # mean |x - reconstruct(x)| over train images (oracle: 0.1673)

TINY = GeneratorSpec(size=16, style_dim=8, channel_base=32, channel_max=8)
FD_PARAM_BUDGET = 10_000  # per-network ceiling keeping the sweep under 2 min

# narrow-but-complete architecture for the structural checks (4 and 5)
NARROW = TrainConfig(
    image_size=32,
    channel_base=128,
    channel_max=16,
    batch_size=4,
    total_steps=3,
    seed=7,
    log_every=2,
)


def _desk_corpus() -> FontDataset:
    return synth_glyph_dataset(seed=1, n_fonts=4, n_chars=16, size=32)


def _first_batch(dataset: FontDataset, config: TrainConfig) -> torch.Tensor:
    it = BatchIterator(dataset, "train", config.batch_size, seed=fork_seed(config.seed, "data"))
    return torch.from_numpy(it.batch_at(0).copy())


def _mean_l1(model, dataset: FontDataset) -> float:
    errors = [
        float(np.abs(dataset.glyph(f, c).pixels - reconstruct(model, dataset.glyph(f, c)).pixels).mean())
        for f, c in dataset.train_pairs()
    ]
    return float(np.mean(errors))


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_a")
    dataset = _desk_corpus()
    state, rows = train(DESK, dataset, out_dir=out)
    return SimpleNamespace(dataset=dataset, out=out, state=state, rows=rows)


# ------------------------------------------------------------- criterion 1


def test_criterion_1_closed_form_loss_values():
    zero = torch.zeros(1)
    d_val = float(d_adv_loss(zero, zero))
    g_val = float(g_adv_loss(zero))
    assert d_val == pytest.approx(2 * math.log(2), abs=1e-6)
    assert g_val == pytest.approx(math.log(2), abs=1e-6)

    # fresh model: the zero-initialized score head makes every score exactly
    # zero, so the first discriminator loss is the coin-flip value
    state = TrainState.fresh(DESK)
    real = _first_batch(_desk_corpus(), DESK)
    w = torch.randn(8, DESK.style_dim, generator=torch.Generator().manual_seed(0))
    with torch.no_grad():
        fake = state.g(uniform_schedule(w, state.g.n_sites))
        smoke = float(d_adv_loss(state.d(real)[0], state.d(fake)[0]))
    assert smoke == pytest.approx(2 * math.log(2), abs=1e-4)
    print(
        f"criterion 1 PASS: d_adv(0,0)={d_val:.6f}, g_adv(0)={g_val:.6f} "
        f"(2ln2/ln2 within 1e-6); fresh-model d loss {smoke:.6f} within 1e-4"
    )


# ------------------------------------------------------------- criterion 2


def _tiny_f64_models(seed: int):
    rng = torch.Generator().manual_seed(seed)
    g, e, d = Generator(TINY), FusionEncoder(TINY), Discriminator(TINY, zero_final=False)
    for net in (g, e, d):
        net.reset_parameters_seeded(rng)
        assert sum(p.numel() for p in net.parameters()) <= FD_PARAM_BUDGET
    return g.double(), e.double(), d.double()


def test_criterion_2_gradients_match_finite_differences():
    # input seeds are pinned per sweep so every leaky-ReLU pre-activation
    # sits farther than the stencil width from its kink; a fresh seed can
    # land an activation within h of zero and invalidate the comparison
    checked = 0

    def batch(seed: int) -> torch.Tensor:
        gen = torch.Generator().manual_seed(seed)
        return torch.rand(2, 1, 16, 16, generator=gen, dtype=torch.float64) * 2 - 1

    # discriminator loss through D
    _, _, d = _tiny_f64_models(seed=3)
    gen = torch.Generator().manual_seed(31)
    xr = torch.rand(2, 1, 16, 16, generator=gen, dtype=torch.float64) * 2 - 1
    xf = torch.rand(2, 1, 16, 16, generator=gen, dtype=torch.float64) * 2 - 1
    checked += assert_grads_match_fd(
        lambda: d_adv_loss(d(xr)[0], d(xf)[0]), list(d.parameters()), h=1e-5, rtol=1e-5
    )

    # generator loss end-to-end through G and D
    g, _, d = _tiny_f64_models(seed=4)
    w = torch.randn(2, 8, dtype=torch.float64, generator=torch.Generator().manual_seed(41))
    checked += assert_grads_match_fd(
        lambda: g_adv_loss(d(g(uniform_schedule(w, g.n_sites)))[0]),
        list(g.parameters()),
        h=1e-5,
        rtol=1e-5,
    )

    # reconstruction through E and G (smaller step + looser tolerance at the
    # absolute-value kink; inputs verified to sit away from zero differences)
    g, e, _ = _tiny_f64_models(seed=5)
    x = batch(51)
    rec = lambda: g(uniform_schedule(e(x), g.n_sites))
    with torch.no_grad():
        assert float((x - rec()).abs().min()) > 1e-4
    checked += assert_grads_match_fd(
        lambda: recon_loss(x, rec()), list(g.parameters()) + list(e.parameters()), h=1e-6, rtol=1e-4
    )

    # feature matching through all three networks
    g, e, d = _tiny_f64_models(seed=6)
    x = batch(61)
    checked += assert_grads_match_fd(
        lambda: feature_match_loss(d(x)[1], d(g(uniform_schedule(e(x), g.n_sites)))[1]),
        list(g.parameters()) + list(e.parameters()),
        h=1e-6,
        rtol=1e-4,
    )

    # gradient penalty (a double-backward quantity) through D
    _, _, d = _tiny_f64_models(seed=7)
    x = batch(71)
    checked += assert_grads_match_fd(
        lambda: r1_penalty(d, x, gamma=10.0), list(d.parameters()), h=1e-5, rtol=1e-4, floor=1e-6
    )

    # end-to-end generator map (pixels, not a loss) through a mixed schedule
    g, _, _ = _tiny_f64_models(seed=9)
    gen = torch.Generator().manual_seed(21)
    w1 = torch.randn(1, 8, dtype=torch.float64, generator=gen).requires_grad_(True)
    w2 = torch.randn(1, 8, dtype=torch.float64, generator=gen).requires_grad_(True)
    checked += assert_grads_match_fd(
        lambda: g(make_style_schedule(w1, w2, 2, g.n_sites)).mean(),
        list(g.parameters()) + [w1, w2],
        h=1e-5,
        rtol=1e-5,
    )

    print(f"criterion 2 PASS: {checked} gradient elements match central differences")


# ------------------------------------------------------------- criterion 3


def test_criterion_3_normalization_moment_contract():
    torch.manual_seed(0)
    x = torch.randn(1000, 8, 16, 16)
    y = adain(x, torch.ones(8), torch.zeros(8))
    mean_err = float(y.mean(dim=(-2, -1)).abs().max())
    std_err = float((y.std(dim=(-2, -1), unbiased=False) - 1).abs().max())
    assert mean_err < 1e-5
    assert std_err < 1e-3

    hand = adain(torch.tensor([[[-1.0, 0.0, 1.0]]]), torch.tensor([2.0]), torch.tensor([3.0]))
    expected = torch.tensor([0.5505, 3.0, 5.4495])
    assert torch.allclose(hand.flatten(), expected, atol=1e-3)
    print(
        f"criterion 3 PASS: max |mean| {mean_err:.2e} < 1e-5, "
        f"max |std-1| {std_err:.2e} < 1e-3; hand case within 1e-3"
    )


# ------------------------------------------------------------- criterion 4


def test_criterion_4_gradient_penalty_value_and_lazy_schedule(tmp_path):
    # a linear critic's penalty is (gamma/2) * ||w||^2, independent of the
    # evaluation point
    w = torch.randn(1, 1, 8, 8, dtype=torch.float64, generator=torch.Generator().manual_seed(40))
    lin = lambda x: (x * w).sum(dim=(1, 2, 3))
    x = torch.randn(5, 1, 8, 8, dtype=torch.float64)
    expected = 5.0 * float(w.pow(2).sum())
    got = float(r1_penalty(lin, x, gamma=10.0).detach())
    assert got == pytest.approx(expected, abs=1e-6)

    # lazy application: warm two byte-identical states differing only in the
    # penalty weight, then step them off- and on-schedule and compare D
    dataset = _desk_corpus()

    def warm_pair():
        state, _ = train(NARROW, dataset)
        path = tmp_path / "warm.ckpt"
        save_checkpoint(state, path)
        a, b = load_checkpoint(path), load_checkpoint(path)
        a.config = dataclasses.replace(a.config, weights=LossWeights(gamma_r1=10.0))
        b.config = dataclasses.replace(b.config, weights=LossWeights(gamma_r1=0.0))
        return a, b

    batch = _first_batch(dataset, NARROW)

    a, b = warm_pair()
    a.step = b.step = 5  # 5 % 16 != 0 -> no penalty either way
    ma, mb = adversarial_step(a, batch), adversarial_step(b, batch)
    assert ma["r1"] == 0.0 and mb["r1"] == 0.0
    off_identical = all(
        torch.equal(pa.detach(), pb.detach()) for pa, pb in zip(a.d.parameters(), b.d.parameters())
    )
    assert off_identical

    a, b = warm_pair()
    a.step = b.step = 16  # 16 % 16 == 0 -> penalty enters a's update only
    ma, mb = adversarial_step(a, batch), adversarial_step(b, batch)
    assert ma["r1"] > 0.0 and mb["r1"] == 0.0
    on_differs = not all(
        torch.equal(pa.detach(), pb.detach()) for pa, pb in zip(a.d.parameters(), b.d.parameters())
    )
    assert on_differs
    print(
        f"criterion 4 PASS: linear critic penalty {got:.6f} == (gamma/2)||w||^2 within 1e-6; "
        f"off-schedule D untouched by gamma, on-schedule D diverges (r1={ma['r1']:.4f})"
    )


# ------------------------------------------------------------- criterion 5


def test_criterion_5_mixing_schedule_invariants(tmp_path):
    state = TrainState.fresh(NARROW)
    path = tmp_path / "fresh.ckpt"
    save_checkpoint(state, path)
    model = load_model(path)
    n = model.n_sites

    dataset = _desk_corpus()
    ids = [r.font_id for r in dataset.records]
    cps = dataset.charset
    x = dataset.glyph(ids[0], cps[0])
    x2 = dataset.glyph(ids[0], cps[1])
    y = dataset.glyph(ids[1], cps[2])
    y2 = dataset.glyph(ids[2], cps[3])

    base = reconstruct(model, x)
    for k in range(n + 1):
        assert np.array_equal(mix_fonts(model, x, x, k).pixels, base.pixels)

    # boundary collapse: at k = n the style image is ignored, at k = 0 the
    # content image is ignored — perturbing the ignored input changes nothing
    assert np.array_equal(mix_fonts(model, x, y, n).pixels, mix_fonts(model, x, y2, n).pixels)
    assert np.array_equal(mix_fonts(model, x, y, 0).pixels, mix_fonts(model, x2, y, 0).pixels)

    # schedule equivalence: (w, w, k) collapses to the uniform schedule
    w = torch.randn(2, NARROW.style_dim, generator=torch.Generator().manual_seed(50))
    uniform = uniform_schedule(w, n)
    for k in range(n + 1):
        mixed = make_style_schedule(w, w, k, n)
        assert all(torch.equal(a, b) for a, b in zip(mixed.per_site, uniform.per_site))

    print(
        f"criterion 5 PASS: self-mix identity bit-exact for k in 0..{n}, "
        f"boundary inputs ignored at k=0 and k={n}, (w,w,k) == uniform schedule"
    )


# ------------------------------------------------------------- criterion 6


def test_criterion_6_desk_scale_convergence(desk_run):
    recon = desk_run.rows[-1]["recon"]
    model = load_model(desk_run.out / "checkpoint_final.ckpt")  # EMA weights
    mean_l1 = _mean_l1(model, desk_run.dataset)
    assert recon < RECON_BOUND, f"final logged recon_loss {recon:.4f} >= {RECON_BOUND}"
    assert mean_l1 < MEAN_L1_BOUND, f"mean reconstruction L1 {mean_l1:.4f} >= {MEAN_L1_BOUND}"
    print(
        f"criterion 6 PASS: 2000-step desk run: final recon_loss {recon:.4f} < {RECON_BOUND}, "
        f"mean reconstruction L1 {mean_l1:.4f} < {MEAN_L1_BOUND} over "
        f"{len(desk_run.dataset.train_pairs())} training images"
    )


# ------------------------------------------------------------- criterion 7


def test_criterion_7_bit_reproducibility(desk_run, tmp_path_factory, tmp_path):
    # (a) a second full desk-scale run, fresh corpus included, is byte-identical
    out_b = tmp_path_factory.mktemp("desk_b")
    train(DESK, _desk_corpus(), out_dir=out_b)
    ckpt_a = (desk_run.out / "checkpoint_final.ckpt").read_bytes()
    ckpt_b = (out_b / "checkpoint_final.ckpt").read_bytes()
    assert ckpt_a == ckpt_b, "identical desk-scale runs diverged"
    metrics_same = (desk_run.out / "metrics.csv").read_bytes() == (out_b / "metrics.csv").read_bytes()
    assert metrics_same

    # (b) train-10-resume-10 equals train-20 at the desk architecture
    dataset = desk_run.dataset
    short = dataclasses.replace(DESK, total_steps=10, log_every=5)
    full = dataclasses.replace(DESK, total_steps=20, log_every=5)
    a, b, c = tmp_path / "first10", tmp_path / "resumed", tmp_path / "straight"
    train(short, dataset, out_dir=a)
    train(full, dataset, out_dir=b, resume=a / "checkpoint_final.ckpt")
    train(full, dataset, out_dir=c)
    resumed = (b / "checkpoint_final.ckpt").read_bytes()
    straight = (c / "checkpoint_final.ckpt").read_bytes()
    assert resumed == straight, "resumed training diverged from an unbroken run"
    print(
        f"criterion 7 PASS: two desk runs byte-identical ({len(ckpt_a)} checkpoint bytes, "
        f"metrics identical); train-10-resume-10 == train-20 ({len(resumed)} bytes)"
    )


# ------------------------------------------------------------- criterion 8


def _relabeled_twin(ds: FontDataset) -> FontDataset:
    """Same pixels and ordering; every id, name, category, codepoint renamed."""
    flipped = {"handwritten": "printed", "printed": "handwritten"}
    records = [
        FontRecord(
            font_id=f"renamed{i:02d}",
            name=f"other-name-{i}",
            category=flipped[r.category],
            source="elsewhere",
        )
        for i, r in enumerate(ds.records)
    ]
    idmap = {r.font_id: n.font_id for r, n in zip(ds.records, records)}
    shift = 0x1000
    return FontDataset(
        records=records,
        charset=tuple(cp + shift for cp in ds.charset),
        split=DatasetSplit(
            train_fonts=tuple(idmap[f] for f in ds.split.train_fonts),
            test_fonts=tuple(idmap[f] for f in ds.split.test_fonts),
            train_chars=tuple(cp + shift for cp in ds.split.train_chars),
            test_chars=tuple(cp + shift for cp in ds.split.test_chars),
            seed=ds.split.seed,
        ),
        size=ds.size,
        images={(idmap[f], cp + shift): px for (f, cp), px in ds.images.items()},
        skips=[],
        seed=ds.seed,
    )


def test_criterion_8_labels_change_no_training_byte(tmp_path):
    dataset = _desk_corpus()
    twin = _relabeled_twin(dataset)
    assert twin.charset != dataset.charset
    assert [r.category for r in twin.records] != [r.category for r in dataset.records]

    cfg = dataclasses.replace(DESK, total_steps=30, log_every=10)
    out_a, out_b = tmp_path / "orig", tmp_path / "twin"
    train(cfg, dataset, out_dir=out_a)
    train(cfg, twin, out_dir=out_b)
    same = (out_a / "checkpoint_final.ckpt").read_bytes() == (
        out_b / "checkpoint_final.ckpt"
    ).read_bytes()
    assert same, "renaming metadata changed training bytes"
    print(
        "criterion 8 PASS: flipping every category and shifting every codepoint/font id "
        "left the 30-step training checkpoint byte-identical"
    )


# ------------------------------------------------------------- criterion 9


def test_criterion_9_split_protocol_counts():
    # 110 fonts x 1000 characters, 20% of fonts held out, 80% of characters
    # in train
    fonts = [f"font{i:03d}" for i in range(110)]
    chars = list(range(0x4E00, 0x4E00 + 1000))
    split = make_split(fonts, chars, font_holdout=0.2, char_counts=0.8, seed=3)
    assert (len(split.train_fonts), len(split.test_fonts)) == (88, 22)
    assert (len(split.train_chars), len(split.test_chars)) == (800, 200)
    assert not set(split.train_fonts) & set(split.test_fonts)
    assert not set(split.train_chars) & set(split.test_chars)

    # 174 fonts x 2350 characters with explicit character counts
    kfonts = [f"kfont{i:03d}" for i in range(174)]
    kchars = list(range(0xAC00, 0xAC00 + 2350))
    ksplit = make_split(kfonts, kchars, font_holdout=0.2, char_counts=(2000, 350), seed=3)
    assert len(ksplit.train_chars) == 2000
    assert len(ksplit.test_chars) == 350
    assert not set(ksplit.train_chars) & set(ksplit.test_chars)
    assert not set(ksplit.train_fonts) & set(ksplit.test_fonts)
    print(
        "criterion 9 PASS: 110/1000 corpus splits 88/22 fonts and 800/200 chars; "
        "explicit-count path yields 2000/350 chars; all partitions disjoint"
    )
