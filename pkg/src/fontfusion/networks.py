"""The three differentiable networks and the style-schedule machinery.

* ``Generator`` grows a learned 4x4 constant into a glyph raster, with a
  per-site style vector injected through adaptive instance normalization
  after every convolution.  There is no separate mapping network and no
  per-pixel noise: the output is a pure function of parameters and the
  style schedule.
* ``FusionEncoder`` mirrors the discriminator trunk down to the 8x8
  feature map, average-pools it, and maps linearly to a style vector.
  It contains no cross-batch layer, so each image's code depends only on
  that image.
* ``Discriminator`` is the mirrored downsampling trunk with a whole-batch
  standard-deviation channel before its final block, an unbounded score
  head, and feature taps used for feature matching.

Style schedules express mixing: ``make_style_schedule(w1, w2, k)`` routes
``w1`` to injection sites before the crossover ``k`` and ``w2`` to the
rest.  The default generator has S = 7 sites: one per resolution block
(4 through 128) plus a final full-resolution detail block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import torch
from torch import Tensor, nn
from torch.nn import functional as F

LEAK = 0.2
ADAIN_EPS = 1e-8
_MBSTD_EPS = 1e-8


class ShapeMismatch(ValueError):
    """An input's shape is inconsistent with the model configuration."""


class ScheduleLengthMismatch(ValueError):
    """A style schedule's site count differs from the generator's."""


class IndexOutOfRange(ValueError):
    """A crossover index lies outside [0, S]."""


def _lrelu(x: Tensor) -> Tensor:
    return F.leaky_relu(x, LEAK)


_LRELU_GAIN = math.sqrt(2.0 / (1.0 + LEAK**2))


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorSpec:
    """Structural configuration shared by G, E, and D.

    ``size`` must be 4 * 2**k for k >= 2.  The channel count at resolution
    ``r`` is ``min(channel_max, channel_base // r)`` unless an explicit
    ``channels`` map overrides it.  The defaults give a 64-channel 4x4
    constant tapering to 16 channels at 128x128, and S = 7 style sites.
    """

    size: int = 128
    style_dim: int = 64
    channel_base: int = 2048
    channel_max: int = 64
    channels: dict[int, int] | None = None

    def __post_init__(self) -> None:
        n = self.size // 4
        if self.size < 16 or n & (n - 1) or self.size % 4:
            raise ValueError(f"size must be 4 * 2**k with k >= 2, got {self.size}")
        if self.style_dim < 1:
            raise ValueError(f"style_dim must be positive, got {self.style_dim}")
        last = None
        for res in self.resolutions:
            ch = self.channels_at(res)
            if ch < 1:
                raise ValueError(f"non-positive channel count {ch} at resolution {res}")
            if last is not None and ch > last:
                raise ValueError("channel schedule must be non-increasing with resolution")
            last = ch

    @property
    def resolutions(self) -> tuple[int, ...]:
        out = []
        res = 4
        while res <= self.size:
            out.append(res)
            res *= 2
        return tuple(out)

    def channels_at(self, res: int) -> int:
        if self.channels is not None:
            try:
                return self.channels[res]
            except KeyError:
                raise ValueError(f"channel schedule has no entry for resolution {res}") from None
        return min(self.channel_max, self.channel_base // res)

    @property
    def n_blocks(self) -> int:
        return len(self.resolutions)

    @property
    def n_sites(self) -> int:
        # one site per resolution block plus the full-resolution detail block
        return self.n_blocks + 1


# ---------------------------------------------------------------------------
# style schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StyleSchedule:
    """Ordered per-site style vectors handed to the generator.

    Entries are tensors of shape (style_dim,) or (batch, style_dim); all
    entries must agree in shape.
    """

    per_site: tuple[Tensor, ...]

    def __post_init__(self) -> None:
        if not self.per_site:
            raise ScheduleLengthMismatch("schedule has no sites")
        shape = self.per_site[0].shape
        for i, w in enumerate(self.per_site):
            if w.dim() not in (1, 2):
                raise ShapeMismatch(f"site {i} vector has {w.dim()} dims, expected 1 or 2")
            if w.shape != shape:
                raise ShapeMismatch(f"site {i} shape {tuple(w.shape)} != site 0 shape {tuple(shape)}")

    def __len__(self) -> int:
        return len(self.per_site)

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.per_site)

    @property
    def batched(self) -> bool:
        return self.per_site[0].dim() == 2

    def batch_size(self) -> int:
        return self.per_site[0].shape[0] if self.batched else 1

    def as_batched(self) -> "StyleSchedule":
        if self.batched:
            return self
        return StyleSchedule(tuple(w.unsqueeze(0) for w in self.per_site))


def make_style_schedule(w1: Tensor, w2: Tensor, k: int, n_sites: int = 7) -> StyleSchedule:
    """Route ``w1`` to sites before crossover ``k`` and ``w2`` to the rest.

    ``k = n_sites`` yields pure ``w1``; ``k = 0`` pure ``w2``.
    """
    if not 0 <= k <= n_sites:
        raise IndexOutOfRange(f"crossover {k} outside [0, {n_sites}]")
    if w1.shape != w2.shape:
        raise ShapeMismatch(f"style shapes differ: {tuple(w1.shape)} vs {tuple(w2.shape)}")
    return StyleSchedule(tuple(w1 if i < k else w2 for i in range(n_sites)))


def uniform_schedule(w: Tensor, n_sites: int = 7) -> StyleSchedule:
    """The same style vector at every site (reconstruction mode)."""
    return StyleSchedule((w,) * n_sites)


# ---------------------------------------------------------------------------
# adaptive instance normalization
# ---------------------------------------------------------------------------


def adain(features: Tensor, scale: Tensor, bias: Tensor, eps: float = ADAIN_EPS) -> Tensor:
    """Normalize each channel map to zero mean / unit variance, then
    re-statistic it with ``scale`` and ``bias``.

    ``features`` is (C, H, W) or (B, C, H, W); ``scale`` and ``bias`` are
    (C,) or (B, C) matching the leading dims.  Moments are population
    statistics over the spatial axes; ``eps`` keeps constant channels
    defined (they come out as ``bias``).
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if features.dim() not in (3, 4):
        raise ShapeMismatch(f"features must be 3- or 4-dimensional, got {features.dim()}")
    channels = features.shape[-3]
    for name, t in (("scale", scale), ("bias", bias)):
        if t.shape[-1] != channels:
            raise ShapeMismatch(f"{name} has {t.shape[-1]} channels, features have {channels}")
        if t.dim() >= features.dim() - 1:
            raise ShapeMismatch(f"{name} shape {tuple(t.shape)} too deep for features")
    mean = features.mean(dim=(-2, -1), keepdim=True)
    var = features.var(dim=(-2, -1), keepdim=True, unbiased=False)
    normalized = (features - mean) / torch.sqrt(var + eps)
    return normalized * scale.unsqueeze(-1).unsqueeze(-1) + bias.unsqueeze(-1).unsqueeze(-1)


class StyleAffine(nn.Module):
    """Learned affine map from a style vector to per-channel (scale, bias).

    Freshly initialized, w = 0 maps to scale 1 and bias 0 (identity
    modulation), so an untrained site leaves its feature statistics alone.
    """

    def __init__(self, style_dim: int, channels: int) -> None:
        super().__init__()
        self.style_dim = style_dim
        self.channels = channels
        self.map = nn.Linear(style_dim, 2 * channels)
        self.reset_parameters_seeded(torch.Generator().manual_seed(0))

    def reset_parameters_seeded(self, rng: torch.Generator) -> None:
        with torch.no_grad():
            self.map.weight.normal_(0.0, 1.0 / math.sqrt(self.style_dim), generator=rng)
            self.map.bias[: self.channels].fill_(1.0)
            self.map.bias[self.channels :].fill_(0.0)

    def forward(self, w: Tensor) -> tuple[Tensor, Tensor]:
        if w.shape[-1] != self.style_dim:
            raise ShapeMismatch(f"style vector has dim {w.shape[-1]}, expected {self.style_dim}")
        out = self.map(w)
        return out[..., : self.channels], out[..., self.channels :]


def style_affine(w: Tensor, site_params: StyleAffine) -> tuple[Tensor, Tensor]:
    """Apply one site's affine map to a style vector."""
    return site_params(w)


# ---------------------------------------------------------------------------
# generator
# ---------------------------------------------------------------------------


class GenBlock(nn.Module):
    """conv 3x3 -> leaky rectification -> style-modulated normalization."""

    def __init__(self, in_ch: int, out_ch: int, style_dim: int) -> None:
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.affine = StyleAffine(style_dim, out_ch)
        self.reset_parameters_seeded(torch.Generator().manual_seed(0))

    def reset_parameters_seeded(self, rng: torch.Generator) -> None:
        _init_conv(self.conv, rng)
        self.affine.reset_parameters_seeded(rng)

    def forward(self, x: Tensor, w: Tensor) -> Tensor:
        h = _lrelu(self.conv(x))
        scale, bias = self.affine(w)
        return adain(h, scale, bias)


class Generator(nn.Module):
    """Constant-seeded upsampling generator with per-site style injection.

    Structure for spec size 128 (S = 7): a learned 64x4x4 constant, a
    block per resolution 4, 8, 16, 32, 64, 128 with nearest-neighbor
    upsampling between them, one extra detail block at full resolution,
    then a 1x1 convolution squashed by tanh into a single-channel glyph.
    """

    def __init__(self, spec: GeneratorSpec | None = None, init_seed: int = 0) -> None:
        super().__init__()
        self.spec = spec or GeneratorSpec()
        s = self.spec
        self.const = nn.Parameter(torch.zeros(s.channels_at(4), 4, 4))
        blocks = []
        prev = s.channels_at(4)
        for res in s.resolutions:
            ch = s.channels_at(res)
            blocks.append(GenBlock(prev, ch, s.style_dim))
            prev = ch
        blocks.append(GenBlock(prev, prev, s.style_dim))  # detail block, no upsample
        self.blocks = nn.ModuleList(blocks)
        self.to_out = nn.Conv2d(prev, 1, 1)
        self.reset_parameters_seeded(torch.Generator().manual_seed(init_seed))

    @property
    def n_sites(self) -> int:
        return self.spec.n_sites

    def reset_parameters_seeded(self, rng: torch.Generator) -> None:
        with torch.no_grad():
            self.const.normal_(0.0, 1.0, generator=rng)
        for block in self.blocks:
            block.reset_parameters_seeded(rng)
        with torch.no_grad():
            fan_in = self.to_out.weight[0].numel()
            self.to_out.weight.normal_(0.0, 1.0 / math.sqrt(fan_in), generator=rng)
            self.to_out.bias.zero_()

    def forward(self, schedule: StyleSchedule) -> Tensor:
        if len(schedule) != self.n_sites:
            raise ScheduleLengthMismatch(
                f"schedule has {len(schedule)} sites, generator needs {self.n_sites}"
            )
        schedule = schedule.as_batched()
        batch = schedule.batch_size()
        x = self.const.unsqueeze(0).expand(batch, -1, -1, -1)
        for i, (block, w) in enumerate(zip(self.blocks, schedule)):
            if 1 <= i < self.spec.n_blocks:
                x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = block(x, w)
        return torch.tanh(self.to_out(x))


def generator_forward(g: Generator, schedule: StyleSchedule) -> Tensor:
    """Run the generator; unbatched schedules yield a (1, size, size) glyph."""
    out = g(schedule)
    return out if schedule.batched else out.squeeze(0)


# ---------------------------------------------------------------------------
# encoder and discriminator
# ---------------------------------------------------------------------------


class DownBlock(nn.Module):
    """conv 3x3 -> leaky rectification -> 2x average-pool downsample."""

    def __init__(self, in_ch: int, out_ch: int) -> None:
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.reset_parameters_seeded(torch.Generator().manual_seed(0))

    def reset_parameters_seeded(self, rng: torch.Generator) -> None:
        _init_conv(self.conv, rng)

    def forward(self, x: Tensor) -> Tensor:
        return F.avg_pool2d(_lrelu(self.conv(x)), 2)


def _trunk_blocks(spec: GeneratorSpec, stop_res: int) -> list[DownBlock]:
    blocks = []
    res = spec.size
    while res > stop_res:
        blocks.append(DownBlock(spec.channels_at(res), spec.channels_at(res // 2)))
        res //= 2
    return blocks


class FusionEncoder(nn.Module):
    """Downsampling trunk to 8x8, average pool, linear map to a style code.

    Mirrors the discriminator trunk structurally but owns its weights and
    has no batch-statistics layer: codes are image-local.
    """

    def __init__(self, spec: GeneratorSpec | None = None, init_seed: int = 0) -> None:
        super().__init__()
        self.spec = spec or GeneratorSpec()
        self.from_image = nn.Conv2d(1, self.spec.channels_at(self.spec.size), 1)
        self.downs = nn.ModuleList(_trunk_blocks(self.spec, stop_res=8))
        self.head = nn.Linear(self.spec.channels_at(8), self.spec.style_dim)
        self.reset_parameters_seeded(torch.Generator().manual_seed(init_seed))

    def reset_parameters_seeded(self, rng: torch.Generator) -> None:
        _init_conv(self.from_image, rng)
        for block in self.downs:
            block.reset_parameters_seeded(rng)
        _init_linear(self.head, rng)

    def forward(self, image: Tensor) -> Tensor:
        single = image.dim() == 3
        if single:
            image = image.unsqueeze(0)
        _check_image_batch(image, self.spec.size)
        x = _lrelu(self.from_image(image))
        for block in self.downs:
            x = block(x)
        w = self.head(x.mean(dim=(-2, -1)))
        return w.squeeze(0) if single else w


def encoder_forward(e: FusionEncoder, image: Tensor) -> Tensor:
    """Encode an image (or batch) into style vector(s)."""
    return e(image)


def minibatch_stddev(x: Tensor, eps: float = _MBSTD_EPS) -> Tensor:
    """Append one channel holding the whole batch's mean feature stddev.

    The scalar sqrt(Var_batch + eps) averaged over channels and positions
    is broadcast to every sample, deliberately coupling scores across the
    batch.
    """
    if x.dim() != 4:
        raise ShapeMismatch(f"expected a 4-dimensional batch, got {x.dim()} dims")
    std = torch.sqrt(x.var(dim=0, unbiased=False) + eps).mean()
    feat = std.expand(x.shape[0], 1, x.shape[2], x.shape[3])
    return torch.cat([x, feat], dim=1)


@dataclass(frozen=True)
class FeatureStack:
    """Ordered feature taps from the discriminator: every block's output
    plus the final pre-score activation."""

    maps: tuple[Tensor, ...]

    def __len__(self) -> int:
        return len(self.maps)

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.maps)

    def __getitem__(self, i: int) -> Tensor:
        return self.maps[i]


class Discriminator(nn.Module):
    """Mirrored downsampling critic with feature taps.

    Trunk: 1x1 from-image convolution, then a down block per octave to the
    4x4 map.  A whole-batch stddev channel is appended before the final
    3x3 block; a linear layer over the flattened 4x4 map gives the
    pre-score activation and a last linear layer the unbounded score.
    With ``zero_final`` (the default) the score layer starts at exactly
    zero, so a fresh critic scores every image 0.
    """

    def __init__(
        self, spec: GeneratorSpec | None = None, zero_final: bool = True, init_seed: int = 0
    ) -> None:
        super().__init__()
        self.spec = spec or GeneratorSpec()
        self.zero_final = zero_final
        ch4 = self.spec.channels_at(4)
        self.from_image = nn.Conv2d(1, self.spec.channels_at(self.spec.size), 1)
        self.downs = nn.ModuleList(_trunk_blocks(self.spec, stop_res=4))
        self.final_conv = nn.Conv2d(ch4 + 1, ch4, 3, padding=1)
        self.fc = nn.Linear(ch4 * 4 * 4, ch4)
        self.score_out = nn.Linear(ch4, 1)
        self.reset_parameters_seeded(torch.Generator().manual_seed(init_seed))

    @property
    def block_count(self) -> int:
        return len(self.downs) + 1  # down blocks plus the post-stddev block

    def reset_parameters_seeded(self, rng: torch.Generator) -> None:
        _init_conv(self.from_image, rng)
        for block in self.downs:
            block.reset_parameters_seeded(rng)
        _init_conv(self.final_conv, rng)
        _init_linear(self.fc, rng)
        if self.zero_final:
            with torch.no_grad():
                self.score_out.weight.zero_()
                self.score_out.bias.zero_()
        else:
            _init_linear(self.score_out, rng)

    def forward(self, batch: Tensor) -> tuple[Tensor, FeatureStack]:
        _check_image_batch(batch, self.spec.size)
        if batch.shape[0] < 1:
            raise ShapeMismatch("batch is empty")
        taps = []
        x = _lrelu(self.from_image(batch))
        for block in self.downs:
            x = block(x)
            taps.append(x)
        x = minibatch_stddev(x)
        x = _lrelu(self.final_conv(x))
        taps.append(x)
        pre_score = _lrelu(self.fc(x.flatten(1)))
        taps.append(pre_score)
        score = self.score_out(pre_score).squeeze(-1)
        return score, FeatureStack(tuple(taps))


def discriminator_forward(d: Discriminator, batch: Tensor) -> tuple[Tensor, FeatureStack]:
    """Score a batch; returns (per-image logits, feature taps)."""
    return d(batch)


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _check_image_batch(x: Tensor, size: int) -> None:
    if x.dim() != 4 or x.shape[1] != 1 or x.shape[-2:] != (size, size):
        raise ShapeMismatch(
            f"expected images shaped (B, 1, {size}, {size}), got {tuple(x.shape)}"
        )


def _init_conv(conv: nn.Conv2d, rng: torch.Generator) -> None:
    with torch.no_grad():
        fan_in = conv.weight[0].numel()
        conv.weight.normal_(0.0, _LRELU_GAIN / math.sqrt(fan_in), generator=rng)
        conv.bias.zero_()


def _init_linear(lin: nn.Linear, rng: torch.Generator) -> None:
    with torch.no_grad():
        lin.weight.normal_(0.0, _LRELU_GAIN / math.sqrt(lin.in_features), generator=rng)
        lin.bias.zero_()
