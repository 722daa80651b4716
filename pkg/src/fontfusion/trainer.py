"""Joint training of generator, fusion encoder, and discriminator.

Each iteration runs two sub-steps in strict alternation:

1. ``adversarial_step`` — two Gaussian style vectors mixed at a random
   crossover drive fakes; the discriminator updates on the logistic loss
   (plus a lazy gradient penalty every ``r1_interval`` iterations), then
   the generator updates against the refreshed critic.
2. ``reconstruction_step`` — the encoder maps real glyphs to style
   vectors injected at every site; generator and encoder update on pixel
   and feature-matching error while the discriminator stays frozen.

The loop is a pure function of (config, dataset): batches are addressed
statelessly by global step, every random draw comes from one owned
torch generator, and checkpoints capture parameters, optimizer moments,
step, and generator state, so an interrupted run resumed from disk is
bit-identical to an unbroken one.  Training never reads font or
character labels — only pixels and stored order.
"""

from __future__ import annotations

import csv
import math
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np
import torch

from fontfusion.checkpoint import (
    FORMAT_VERSION,
    CheckpointCorrupt,
    read_checkpoint_file,
    write_checkpoint_file,
)
from fontfusion.glyph_data import BatchIterator, FontDataset
from fontfusion.losses import (
    EmptyBatch,
    LossWeights,
    d_adv_loss,
    feature_match_loss,
    g_adv_loss,
    r1_penalty,
    recon_loss,
)
from fontfusion.networks import (
    Discriminator,
    FusionEncoder,
    Generator,
    GeneratorSpec,
    ShapeMismatch,
    make_style_schedule,
    uniform_schedule,
)
from fontfusion.rng import fork_seed

METRIC_FIELDS = ("step", "d_loss", "g_loss", "r1", "recon", "featmatch", "k")


class BatchTooSmall(ValueError):
    """The adversarial path needs at least two images per batch."""


class NonFiniteLoss(RuntimeError):
    """A loss went NaN or infinite; the run aborts rather than drift."""


class ConfigMismatch(ValueError):
    """A resume was attempted with an incompatible configuration."""


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines a training run, data aside."""

    image_size: int = 128
    style_dim: int = 64
    channel_base: int = 2048
    channel_max: int = 64
    batch_size: int = 8
    total_steps: int = 2000
    lr: float = 2e-3
    adam_beta1: float = 0.0
    adam_beta2: float = 0.99
    adam_eps: float = 1e-8
    weights: LossWeights = LossWeights()
    ema_decay: float = 0.999
    mixing_prob: float = 1.0
    seed: int = 0
    log_every: int = 50
    checkpoint_every: int = 0  # 0: only the final checkpoint

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch-stddev needs companions)")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ValueError("ema_decay must lie in [0, 1]")
        if not 0.0 <= self.mixing_prob <= 1.0:
            raise ValueError("mixing_prob must lie in [0, 1]")
        if self.log_every < 1 or self.checkpoint_every < 0:
            raise ValueError("log_every must be >= 1 and checkpoint_every >= 0")

    def generator_spec(self) -> GeneratorSpec:
        return GeneratorSpec(
            size=self.image_size,
            style_dim=self.style_dim,
            channel_base=self.channel_base,
            channel_max=self.channel_max,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "TrainConfig":
        data = dict(data)
        data["weights"] = LossWeights(**data["weights"])
        return cls(**data)


@dataclass
class TrainState:
    """Mutable bundle owned by the training loop."""

    config: TrainConfig
    g: Generator
    e: FusionEncoder
    d: Discriminator
    g_ema: Generator
    opt_g: torch.optim.Adam
    opt_e: torch.optim.Adam
    opt_d: torch.optim.Adam
    rng: torch.Generator
    step: int = 0

    @classmethod
    def fresh(cls, config: TrainConfig) -> "TrainState":
        spec = config.generator_spec()
        g, e, d = Generator(spec), FusionEncoder(spec), Discriminator(spec)
        for net, label in ((g, "g"), (e, "e"), (d, "d")):
            rng = torch.Generator().manual_seed(fork_seed(config.seed, "init", label))
            net.reset_parameters_seeded(rng)
        g_ema = Generator(spec)
        g_ema.load_state_dict(g.state_dict())
        g_ema.requires_grad_(False)

        def adam(params: Iterator[torch.nn.Parameter]) -> torch.optim.Adam:
            return torch.optim.Adam(
                params,
                lr=config.lr,
                betas=(config.adam_beta1, config.adam_beta2),
                eps=config.adam_eps,
            )

        rng = torch.Generator().manual_seed(fork_seed(config.seed, "train"))
        return cls(
            config=config,
            g=g,
            e=e,
            d=d,
            g_ema=g_ema,
            opt_g=adam(g.parameters()),
            opt_e=adam(e.parameters()),
            opt_d=adam(d.parameters()),
            rng=rng,
            step=0,
        )


@contextmanager
def _frozen(module: torch.nn.Module):
    """Temporarily stop gradients from reaching a module's parameters."""
    states = [p.requires_grad for p in module.parameters()]
    module.requires_grad_(False)
    try:
        yield
    finally:
        for p, s in zip(module.parameters(), states):
            p.requires_grad_(s)


def ema_update(ema_model: torch.nn.Module, model: torch.nn.Module, decay: float) -> None:
    """ema <- decay * ema + (1 - decay) * params, elementwise in place."""
    if not 0.0 <= decay <= 1.0:
        raise ValueError(f"decay must lie in [0, 1], got {decay}")
    ema_params = list(ema_model.parameters())
    params = list(model.parameters())
    if len(ema_params) != len(params):
        raise ShapeMismatch("parameter collections differ in length")
    with torch.no_grad():
        for ema_p, p in zip(ema_params, params):
            if ema_p.shape != p.shape:
                raise ShapeMismatch(f"shape {tuple(ema_p.shape)} vs {tuple(p.shape)}")
            ema_p.mul_(decay).add_(p, alpha=1.0 - decay)


def _check_finite(step: int, **components: float) -> None:
    bad = {k: v for k, v in components.items() if not math.isfinite(v)}
    if bad:
        detail = ", ".join(f"{k}={v}" for k, v in bad.items())
        raise NonFiniteLoss(f"non-finite loss at step {step}: {detail}")


def adversarial_step(state: TrainState, real_batch: torch.Tensor) -> dict[str, float]:
    """One critic update (with lazy gradient penalty) then one generator
    update, both driven by crossover-mixed Gaussian styles."""
    if real_batch.dim() != 4 or real_batch.shape[0] < 2:
        raise BatchTooSmall(
            f"adversarial batches need >= 2 images, got shape {tuple(real_batch.shape)}"
        )
    cfg = state.config
    n_sites = state.g.n_sites
    batch = real_batch.shape[0]

    # fixed draw order keeps the stream identical whatever branch is taken
    z1 = torch.randn(batch, cfg.style_dim, generator=state.rng)
    z2 = torch.randn(batch, cfg.style_dim, generator=state.rng)
    u = torch.rand((), generator=state.rng)
    k_draw = int(torch.randint(1, n_sites, (), generator=state.rng))
    k = k_draw if float(u) < cfg.mixing_prob else n_sites
    schedule = make_style_schedule(z1, z2, k, n_sites)

    # critic update
    with torch.no_grad():
        fake = state.g(schedule)
    real_scores, _ = state.d(real_batch)
    fake_scores, _ = state.d(fake)
    d_loss = d_adv_loss(real_scores, fake_scores)
    w = cfg.weights
    d_total = w.lambda_adv * d_loss
    r1_value = 0.0
    if w.gamma_r1 > 0 and state.step % w.r1_interval == 0:
        penalty = r1_penalty(state.d, real_batch, w.gamma_r1)
        r1_value = float(penalty.detach())
        # lazy schedule: applied once per interval, scaled to keep the
        # average regularization strength unchanged
        d_total = d_total + penalty * w.r1_interval
    state.opt_d.zero_grad(set_to_none=True)
    d_total.backward()
    state.opt_d.step()

    # generator update against the refreshed critic, same schedule
    with _frozen(state.d):
        fake_scores2, _ = state.d(state.g(schedule))
        g_loss = w.lambda_adv * g_adv_loss(fake_scores2)
        state.opt_g.zero_grad(set_to_none=True)
        g_loss.backward()
        state.opt_g.step()

    ema_update(state.g_ema, state.g, cfg.ema_decay)
    metrics = {
        "d_loss": float(d_loss.detach()),
        "g_loss": float(g_loss.detach()),
        "r1": r1_value,
        "k": float(k),
    }
    _check_finite(state.step, **metrics)
    return metrics


def reconstruction_step(state: TrainState, real_batch: torch.Tensor) -> dict[str, float]:
    """Encode reals, regenerate them with the code at every site, and
    update generator and encoder on pixel + feature error.  The
    discriminator serves only as a frozen feature extractor here."""
    if real_batch.dim() != 4 or real_batch.shape[0] < 1:
        raise EmptyBatch(f"reconstruction needs a nonempty batch, got {tuple(real_batch.shape)}")
    cfg = state.config
    w = cfg.weights

    codes = state.e(real_batch)
    y = state.g(uniform_schedule(codes, state.g.n_sites))
    rec = recon_loss(real_batch, y)
    with torch.no_grad():
        _, real_feats = state.d(real_batch)
    with _frozen(state.d):
        _, fake_feats = state.d(y)
        fm = feature_match_loss(real_feats, fake_feats)
        loss = w.lambda_imgrecon * rec + w.lambda_feat * fm
        state.opt_g.zero_grad(set_to_none=True)
        state.opt_e.zero_grad(set_to_none=True)
        loss.backward()
        state.opt_g.step()
        state.opt_e.step()

    ema_update(state.g_ema, state.g, cfg.ema_decay)
    metrics = {"recon": float(rec.detach()), "featmatch": float(fm.detach())}
    _check_finite(state.step, **metrics)
    return metrics


def train(
    config: TrainConfig,
    dataset: FontDataset,
    out_dir: str | Path | None = None,
    resume: str | Path | None = None,
) -> tuple[TrainState, list[dict[str, float]]]:
    """Run the alternating loop for ``config.total_steps`` iterations.

    Each iteration consumes two batches (one per sub-step), addressed by
    global step so a resumed run sees exactly the byte stream an unbroken
    run would.  Returns the final state plus the logged metric rows; with
    ``out_dir`` also writes ``metrics.csv`` and checkpoints.
    """
    if dataset.size != config.image_size:
        raise ConfigMismatch(
            f"dataset rasters are {dataset.size}px but image_size is {config.image_size}"
        )
    if resume is not None:
        state = load_checkpoint(resume)
        if state.config.generator_spec() != config.generator_spec():
            raise ConfigMismatch(
                "checkpoint architecture differs from the requested configuration"
            )
        state.config = config
    else:
        state = TrainState.fresh(config)

    iterator = BatchIterator(
        dataset, "train", config.batch_size, seed=fork_seed(config.seed, "data")
    )
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    rows: list[dict[str, float]] = []
    for it in range(state.step, config.total_steps):
        adv_batch = torch.from_numpy(iterator.batch_at(2 * it).copy())
        adv_metrics = adversarial_step(state, adv_batch)
        rec_batch = torch.from_numpy(iterator.batch_at(2 * it + 1).copy())
        rec_metrics = reconstruction_step(state, rec_batch)
        state.step = it + 1
        if it % config.log_every == 0:
            row = {"step": float(it), **adv_metrics, **rec_metrics}
            rows.append({k: row[k] for k in METRIC_FIELDS})
        if (
            out_path is not None
            and config.checkpoint_every
            and state.step % config.checkpoint_every == 0
            and state.step < config.total_steps
        ):
            save_checkpoint(state, out_path / f"checkpoint_{state.step:06d}.ckpt")

    if out_path is not None:
        save_checkpoint(state, out_path / "checkpoint_final.ckpt")
        _write_metrics(out_path / "metrics.csv", rows)
    return state, rows


def _write_metrics(path: Path, rows: list[dict[str, float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------


def _module_arrays(prefix: str, module: torch.nn.Module) -> dict[str, np.ndarray]:
    return {
        f"{prefix}.{name}": tensor.detach().cpu().numpy()
        for name, tensor in module.state_dict().items()
    }


def _optimizer_arrays(prefix: str, opt: torch.optim.Adam) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for idx, slots in opt.state_dict()["state"].items():
        for slot, value in slots.items():
            tensor = value if isinstance(value, torch.Tensor) else torch.tensor(value)
            out[f"{prefix}.{idx}.{slot}"] = tensor.detach().cpu().numpy()
    return out


def save_checkpoint(state: TrainState, path: str | Path) -> None:
    """Write the complete training state to one self-describing file."""
    arrays: dict[str, np.ndarray] = {}
    for prefix, module in (
        ("g", state.g),
        ("e", state.e),
        ("d", state.d),
        ("g_ema", state.g_ema),
    ):
        arrays.update(_module_arrays(prefix, module))
    for prefix, opt in (("opt_g", state.opt_g), ("opt_e", state.opt_e), ("opt_d", state.opt_d)):
        arrays.update(_optimizer_arrays(prefix, opt))
    arrays["rng.torch"] = state.rng.get_state().numpy()
    meta = {
        "format_version": FORMAT_VERSION,
        "step": state.step,
        "config": state.config.to_dict(),
    }
    write_checkpoint_file(path, arrays, meta)


def _load_module(arrays: dict[str, np.ndarray], prefix: str, module: torch.nn.Module) -> None:
    wanted = {}
    for name, tensor in module.state_dict().items():
        key = f"{prefix}.{name}"
        if key not in arrays:
            raise CheckpointCorrupt(f"checkpoint lacks entry {key!r}")
        wanted[name] = torch.from_numpy(arrays[key].copy()).to(tensor.dtype)
    module.load_state_dict(wanted)


def _load_optimizer(arrays: dict[str, np.ndarray], prefix: str, opt: torch.optim.Adam) -> None:
    per_index: dict[int, dict[str, torch.Tensor]] = {}
    lead = f"{prefix}."
    for key, value in arrays.items():
        if not key.startswith(lead):
            continue
        idx_str, slot = key[len(lead) :].split(".", 1)
        per_index.setdefault(int(idx_str), {})[slot] = torch.from_numpy(value.copy())
    sd = opt.state_dict()
    sd["state"] = per_index
    opt.load_state_dict(sd)


def load_checkpoint(path: str | Path) -> TrainState:
    """Reconstruct a ``TrainState`` exactly as saved."""
    arrays, meta = read_checkpoint_file(path)
    try:
        config = TrainConfig.from_dict(meta["config"])
        step = int(meta["step"])
    except (KeyError, TypeError) as exc:
        raise CheckpointCorrupt(f"{path}: malformed metadata ({exc})") from exc
    state = TrainState.fresh(config)
    for prefix, module in (
        ("g", state.g),
        ("e", state.e),
        ("d", state.d),
        ("g_ema", state.g_ema),
    ):
        _load_module(arrays, prefix, module)
    for prefix, opt in (("opt_g", state.opt_g), ("opt_e", state.opt_e), ("opt_d", state.opt_d)):
        _load_optimizer(arrays, prefix, opt)
    if "rng.torch" not in arrays:
        raise CheckpointCorrupt(f"{path}: missing generator state")
    state.rng.set_state(torch.from_numpy(arrays["rng.torch"].copy()))
    state.step = step
    return state
