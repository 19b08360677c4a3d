"""Training objective: weighted sum of a color term and a perceptual term.

The color term is the mean absolute difference between the estimate and the
ground truth.  The perceptual term compares frozen deep features of both
images at a set of depths (mean squared difference per depth, summed over
depths); it sharpens edges and fine detail that the absolute-difference term
alone leaves blurry.  Both reduce by mean over elements so the scale is
stable across resolutions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .errors import DimensionError, ValidationError
from .providers import resolve_perceptual_provider

__all__ = ["LossConfig", "color_loss", "perceptual_loss", "total_loss", "loss_terms"]


@dataclass(frozen=True)
class LossConfig:
    """Objective weights and perceptual feature selection.

    Defaults: color weight 10, perceptual weight 2e-2, feature depths
    (1, 3, 5, 9, 13) of the configured provider.
    """

    lambda_color: float = 10.0
    lambda_perceptual: float = 2e-2
    depths: tuple[int, ...] = (1, 3, 5, 9, 13)
    provider: str = "fixed-random"

    def __post_init__(self) -> None:
        if self.lambda_color < 0 or self.lambda_perceptual < 0:
            raise ValidationError("loss weights must be non-negative")
        if not self.depths:
            raise ValidationError("at least one perceptual depth is required")


def _check_pair(truth: torch.Tensor, estimate: torch.Tensor) -> None:
    if truth.shape != estimate.shape:
        raise DimensionError(
            f"image shapes differ: {tuple(truth.shape)} vs {tuple(estimate.shape)}"
        )


def color_loss(truth: torch.Tensor, estimate: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over all pixels and channels."""
    _check_pair(truth, estimate)
    return (truth - estimate).abs().mean()


def perceptual_loss(
    truth: torch.Tensor,
    estimate: torch.Tensor,
    provider,
    depths: tuple[int, ...] = LossConfig.depths,
) -> torch.Tensor:
    """Sum over depths of the mean squared feature difference.

    Inputs are (B, 3, H, W) batches; single images may be passed as
    (3, H, W) and are promoted.  Symmetric in its two image arguments.
    """
    _check_pair(truth, estimate)
    if truth.ndim == 3:
        truth = truth[None]
        estimate = estimate[None]
    feats_truth = provider.features(truth, tuple(depths))
    feats_est = provider.features(estimate, tuple(depths))
    total = truth.new_zeros(())
    for depth in depths:
        total = total + (feats_truth[depth] - feats_est[depth]).square().mean()
    return total


def loss_terms(
    truth: torch.Tensor,
    estimate: torch.Tensor,
    cfg: LossConfig,
    provider=None,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(color, perceptual, weighted total); the perceptual term is skipped
    entirely when its weight is zero."""
    col = color_loss(truth, estimate)
    if cfg.lambda_perceptual == 0:
        per = col.new_zeros(())
    else:
        if provider is None:
            provider = resolve_perceptual_provider(cfg.provider)
        per = perceptual_loss(truth, estimate, provider, cfg.depths)
    return col, per, cfg.lambda_color * col + cfg.lambda_perceptual * per


def total_loss(
    truth: torch.Tensor,
    estimate: torch.Tensor,
    cfg: LossConfig,
    provider=None,
) -> torch.Tensor:
    """Weighted objective: lambda_color * color + lambda_perceptual * perceptual."""
    return loss_terms(truth, estimate, cfg, provider)[2]
