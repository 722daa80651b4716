"""Differentiable scalar objectives for the three-network training scheme.

Adversarial terms use the non-saturating logistic form (softplus of
signed scores), reconstruction is mean absolute pixel error, and feature
matching compares discriminator taps layer by layer with the real branch
held constant.  ``r1_penalty`` is the gradient penalty on real images,
applied lazily by the trainer every ``r1_interval`` steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import torch
from torch import Tensor
from torch.nn import functional as F

from fontfusion.networks import FeatureStack, ShapeMismatch


class EmptyBatch(ValueError):
    """A loss was asked to average over zero items."""


class StackMismatch(ValueError):
    """Two feature stacks differ in depth or layer shapes."""


class NonFiniteComponent(ValueError):
    """A loss component is NaN or infinite."""


@dataclass(frozen=True)
class LossWeights:
    """Weights of the total objective plus the gradient-penalty schedule."""

    lambda_adv: float = 1.0
    lambda_imgrecon: float = 1.0
    lambda_feat: float = 1.0
    gamma_r1: float = 10.0
    r1_interval: int = 16

    def __post_init__(self) -> None:
        for name in ("lambda_adv", "lambda_imgrecon", "lambda_feat", "gamma_r1"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.r1_interval < 1:
            raise ValueError(f"r1_interval must be >= 1, got {self.r1_interval}")


def _require_nonempty(scores: Tensor, name: str) -> None:
    if scores.numel() == 0:
        raise EmptyBatch(f"{name} is empty")


def d_adv_loss(real_scores: Tensor, fake_scores: Tensor) -> Tensor:
    """Critic objective: push real scores up, fake scores down.

    mean softplus(-real) + mean softplus(fake); equals 2 ln 2 when every
    score is zero.
    """
    _require_nonempty(real_scores, "real_scores")
    _require_nonempty(fake_scores, "fake_scores")
    return F.softplus(-real_scores).mean() + F.softplus(fake_scores).mean()


def g_adv_loss(fake_scores: Tensor) -> Tensor:
    """Generator objective: mean softplus(-fake); ln 2 at score zero."""
    _require_nonempty(fake_scores, "fake_scores")
    return F.softplus(-fake_scores).mean()


def r1_penalty(d: Callable[[Tensor], object], real_batch: Tensor, gamma: float) -> Tensor:
    """(gamma / 2) x mean squared norm of d(score)/d(image) on real images.

    ``d`` may return bare scores or a (scores, features) pair.  The result
    stays connected to D's parameter graph so it can be backpropagated
    (second-order gradients through the score).
    """
    if real_batch.dim() < 1 or real_batch.shape[0] == 0:
        raise EmptyBatch("real_batch is empty")
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")
    x = real_batch.detach().requires_grad_(True)
    out = d(x)
    scores = out[0] if isinstance(out, tuple) else out
    (grad,) = torch.autograd.grad(scores.sum(), x, create_graph=True)
    return (gamma / 2.0) * grad.pow(2).flatten(1).sum(dim=1).mean()


def recon_loss(x: Tensor, y: Tensor) -> Tensor:
    """Mean absolute pixel difference over the whole batch."""
    if x.shape != y.shape:
        raise ShapeMismatch(f"image shapes differ: {tuple(x.shape)} vs {tuple(y.shape)}")
    _require_nonempty(x, "image batch")
    return (x - y).abs().mean()


def feature_match_loss(fx: FeatureStack, fy: FeatureStack) -> Tensor:
    """Mean over layers of each layer's mean absolute difference.

    ``fx`` (the real-image taps) is detached: gradients reach only the
    branch that produced ``fy``.
    """
    if len(fx) != len(fy):
        raise StackMismatch(f"stack depths differ: {len(fx)} vs {len(fy)}")
    if len(fx) == 0:
        raise StackMismatch("empty feature stacks")
    per_layer = []
    for i, (a, b) in enumerate(zip(fx, fy)):
        if a.shape != b.shape:
            raise StackMismatch(f"layer {i} shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
        per_layer.append((a.detach() - b).abs().mean())
    return torch.stack(per_layer).mean()


def total_loss(adv: Tensor, imgrecon: Tensor, feat: Tensor, weights: LossWeights) -> Tensor:
    """Weighted sum of the three objective components."""
    for name, value in (("adv", adv), ("imgrecon", imgrecon), ("feat", feat)):
        v = float(value)
        if not math.isfinite(v):
            raise NonFiniteComponent(f"{name} component is {v}")
    return weights.lambda_adv * adv + weights.lambda_imgrecon * imgrecon + weights.lambda_feat * feat
