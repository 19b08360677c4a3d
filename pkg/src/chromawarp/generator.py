"""Coarse-to-fine colorization generator.

The network estimates the next colored frame from three inputs: the previous
sketch, the previous colored frame, and the next sketch.  Four encoders feed
one decoder:

* a head encoder on the next sketch (the U-Net backbone, skip connections
  into every decoder level);
* a shared dilated sketch encoder applied to both sketches (its taps are the
  matching features);
* a color encoder on the previous colored frame (its taps are the warp
  payload);
* an optional frozen provider adding extra matching channels at the deepest
  level.

At each decoder level the previous frame's color features are warped into
alignment with the next sketch by correlation transfer, concatenated with
the skip features, and refined by grouped-convolution residual blocks
followed by pixel-shuffle upsampling.  Warping at the two finest levels uses
the tiled kernel so the full correlation matrix is never materialized.

Resolutions are handled generically: any square-or-not input whose sides are
multiples of 8 works, with taps at full, 1/2, 1/4 and 1/8 resolution
(256x256 training frames reach 32x32 at the deepest tap).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import matching
from .errors import DimensionError, ValidationError
from .providers import resolve_matching_provider

__all__ = [
    "GeneratorConfig",
    "ColorizationGenerator",
    "receptive_field",
]

LEVELS = 4  # decoder levels; 0 is the deepest (1/8 resolution)


@dataclass(frozen=True)
class GeneratorConfig:
    """Architecture hyperparameters; all trainable widths are configurable.

    ``head_widths`` orders encoder stages shallow to deep (full resolution
    first).  ``warp_levels`` selects which decoder levels align the color
    reference by correlation transfer (level 3, the full-resolution one, is
    off by default for memory; it always uses the tiled kernel when on).
    ``ablation_no_warp`` disables every warp regardless of ``warp_levels``:
    the decoder then consumes the unaligned color features directly.
    """

    head_widths: tuple[int, int, int, int] = (64, 128, 256, 512)
    sketch_widths: tuple[int, ...] = (32, 64, 128, 256, 256, 256)
    sketch_dilations: tuple[int, ...] = (1, 1, 2, 2, 4, 4)
    ru_blocks: int = 2
    cardinality: int = 8
    warp_levels: tuple[int, ...] = (0, 1, 2)
    ablation_no_warp: bool = False
    matching_provider: str = "null"
    warp_tile: int = 1024
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.head_widths) != 4 or any(w < 1 for w in self.head_widths):
            raise ValidationError("head_widths must be 4 positive integers")
        if len(self.sketch_widths) != 6 or any(w < 1 for w in self.sketch_widths):
            raise ValidationError("sketch_widths must be 6 positive integers")
        if len(self.sketch_dilations) != 6 or any(d < 0 for d in self.sketch_dilations):
            raise ValidationError("sketch_dilations must be 6 non-negative integers")
        if not set(self.warp_levels) <= {0, 1, 2, 3}:
            raise ValidationError(f"warp_levels must be within 0..3, got {self.warp_levels}")
        if self.ru_blocks < 1:
            raise ValidationError("ru_blocks must be >= 1")
        if self.warp_tile < 1:
            raise ValidationError("warp_tile must be >= 1")
        for w in self.head_widths:
            if w % self.cardinality:
                raise ValidationError(
                    f"head width {w} not divisible by cardinality {self.cardinality}"
                )

    @property
    def active_warp_levels(self) -> frozenset[int]:
        if self.ablation_no_warp:
            return frozenset()
        return frozenset(self.warp_levels)

    def fingerprint(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, default=list)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def receptive_field(kernels, strides, dilations) -> int:
    """Analytic receptive field of a plain conv stack (no padding effects)."""
    rf = 1
    jump = 1
    for k, s, d in zip(kernels, strides, dilations):
        rf += (k - 1) * d * jump
        jump *= s
    return rf


def _conv(in_ch: int, out_ch: int, stride: int = 1, dilation: int = 1) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=dilation, dilation=dilation)


class StageEncoder(nn.Module):
    """Four conv stages; the first keeps resolution, the rest halve it."""

    strides = (1, 2, 2, 2)

    def __init__(self, in_channels: int, widths: tuple[int, ...]):
        super().__init__()
        layers = []
        prev = in_channels
        for width, stride in zip(widths, self.strides):
            layers.append(_conv(prev, width, stride=stride))
            prev = width
        self.layers = nn.ModuleList(layers)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        taps = []
        for layer in self.layers:
            x = F.leaky_relu(layer(x), 0.2)
            taps.append(x)
        return taps  # ordered full resolution -> 1/8 resolution


class DilatedSketchEncoder(nn.Module):
    """Six conv layers; dilation on the later stages widens the view of
    sparse line drawings without further downsampling."""

    strides = (1, 2, 2, 2, 1, 1)
    tap_layers = (0, 1, 2, 5)

    def __init__(self, widths: tuple[int, ...], dilations: tuple[int, ...]):
        super().__init__()
        layers = []
        prev = 1
        for width, stride, dilation in zip(widths, self.strides, dilations):
            layers.append(_conv(prev, width, stride=stride, dilation=max(dilation, 1)))
            prev = width
        self.layers = nn.ModuleList(layers)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        taps = []
        for idx, layer in enumerate(self.layers):
            x = F.leaky_relu(layer(x), 0.2)
            if idx in self.tap_layers:
                taps.append(x)
        return taps  # ordered full resolution -> 1/8 resolution


class GroupedResidualBlock(nn.Module):
    """Bottleneck residual block with a grouped 3x3 in the middle."""

    def __init__(self, channels: int, cardinality: int):
        super().__init__()
        mid = max(channels // 2, cardinality)
        self.reduce = nn.Conv2d(channels, mid, 1)
        self.grouped = nn.Conv2d(mid, mid, 3, padding=1, groups=cardinality)
        self.expand = nn.Conv2d(mid, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = F.leaky_relu(self.reduce(x), 0.2)
        y = F.leaky_relu(self.grouped(y), 0.2)
        y = self.expand(y)
        return F.leaky_relu(x + y, 0.2)


class UpsampleUnit(nn.Module):
    """Residual block group followed by sub-pixel x2 upsampling."""

    def __init__(self, in_channels: int, out_channels: int, blocks: int, cardinality: int):
        super().__init__()
        self.blocks = nn.ModuleList(
            GroupedResidualBlock(in_channels, cardinality) for _ in range(blocks)
        )
        self.expand = nn.Conv2d(in_channels, out_channels * 4, 3, padding=1)
        self.shuffle = nn.PixelShuffle(2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            x = block(x)
        return F.leaky_relu(self.shuffle(self.expand(x)), 0.2)


def _check_image(name: str, x: torch.Tensor, channels: int) -> None:
    if x.ndim != 4 or x.shape[1] != channels:
        raise DimensionError(
            f"{name} must be (B, {channels}, H, W), got {tuple(x.shape)}"
        )
    h, w = x.shape[-2:]
    if h % 8 or w % 8 or h < 8 or w < 8:
        raise ValidationError(f"{name} resolution {h}x{w} must be a positive multiple of 8")
    if not torch.isfinite(x).all():
        raise ValidationError(f"{name} contains NaN or Inf")
    if x.min() < -1e-6 or x.max() > 1 + 1e-6:
        raise ValidationError(f"{name} values must lie in [0, 1]")


class ColorizationGenerator(nn.Module):
    """Estimate the next colored frame from (prev sketch, prev color, next sketch)."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        self.provider = resolve_matching_provider(config.matching_provider)
        deep = list(reversed(config.head_widths))  # deep[k] = tap channels at level k
        with torch.random.fork_rng():
            torch.manual_seed(config.seed)
            self.head_encoder = StageEncoder(1, config.head_widths)
            self.color_encoder = StageEncoder(3, config.head_widths)
            self.sketch_encoder = DilatedSketchEncoder(
                config.sketch_widths, config.sketch_dilations
            )
            self.upsamplers = nn.ModuleList(
                UpsampleUnit(2 * deep[k], deep[k + 1], config.ru_blocks, config.cardinality)
                for k in range(LEVELS - 1)
            )
            self.final_mix = nn.Conv2d(2 * deep[3], deep[3], 3, padding=1)
            self.final_rgb = nn.Conv2d(deep[3], 3, 3, padding=1)

    # -- encoder surfaces ---------------------------------------------------

    def encode_head(self, sketch: torch.Tensor) -> list[torch.Tensor]:
        _check_image("sketch", sketch, 1)
        return self.head_encoder(sketch)

    def encode_sketch(self, sketch: torch.Tensor) -> list[torch.Tensor]:
        _check_image("sketch", sketch, 1)
        return self.sketch_encoder(sketch)

    def encode_color(self, color: torch.Tensor) -> list[torch.Tensor]:
        _check_image("color", color, 3)
        return self.color_encoder(color)

    def matching_features(self, sketch: torch.Tensor) -> torch.Tensor:
        """Provider features resampled to the deepest sketch tap grid."""
        _check_image("sketch", sketch, 1)
        h, w = sketch.shape[-2:]
        return self.provider.extract(sketch, (h // 8, w // 8))

    def sketch_receptive_field(self) -> int:
        dil = [max(d, 1) for d in self.config.sketch_dilations]
        return receptive_field([3] * 6, DilatedSketchEncoder.strides, dil)

    # -- decoding -----------------------------------------------------------

    def _warp(self, level: int, match_next, match_prev, payload) -> torch.Tensor:
        """Per-sample correlation transfer in channels-last space."""
        outputs = []
        use_tiled = level >= 2
        for b in range(match_next.shape[0]):
            fx = match_next[b].permute(1, 2, 0)
            fy = match_prev[b].permute(1, 2, 0)
            v = payload[b].permute(1, 2, 0)
            if use_tiled:
                out = matching.transfer_tiled(
                    fx, fy, v, tile=self.config.warp_tile,
                    temperature=self.config.temperature,
                )
            else:
                out = matching.transfer(fx, fy, v, temperature=self.config.temperature)
            outputs.append(out.permute(2, 0, 1))
        return torch.stack(outputs)

    def forward(
        self,
        prev_sketch: torch.Tensor,
        prev_color: torch.Tensor,
        next_sketch: torch.Tensor,
    ) -> torch.Tensor:
        _check_image("prev_sketch", prev_sketch, 1)
        _check_image("prev_color", prev_color, 3)
        _check_image("next_sketch", next_sketch, 1)
        if prev_sketch.shape[-2:] != prev_color.shape[-2:] or prev_sketch.shape[-2:] != next_sketch.shape[-2:]:
            raise DimensionError(
                "all inputs must share one resolution: "
                f"{tuple(prev_sketch.shape[-2:])}, {tuple(prev_color.shape[-2:])}, "
                f"{tuple(next_sketch.shape[-2:])}"
            )

        head_taps = self.head_encoder(next_sketch)
        next_taps = self.sketch_encoder(next_sketch)
        prev_taps = self.sketch_encoder(prev_sketch)
        color_taps = self.color_encoder(prev_color)
        active = self.config.active_warp_levels

        state = None  # decoder feature map entering each level
        for level in range(LEVELS):
            tap = 3 - level  # tap lists are ordered full -> deep
            payload = color_taps[tap]
            if level == 0:
                extra_next = self.matching_features(next_sketch)
                extra_prev = self.matching_features(prev_sketch)
                match_next = torch.cat([next_taps[tap], extra_next], dim=1)
                match_prev = torch.cat([prev_taps[tap], extra_prev], dim=1)
                proxy = payload
            else:
                match_next = torch.cat([state, next_taps[tap]], dim=1)
                match_prev = torch.cat([payload, prev_taps[tap]], dim=1)
                proxy = state
            if level in active:
                aligned = self._warp(level, match_next, match_prev, payload)
            else:
                aligned = proxy
            fused = torch.cat([aligned, head_taps[tap]], dim=1)
            if level < LEVELS - 1:
                state = self.upsamplers[level](fused)
            else:
                out = F.leaky_relu(self.final_mix(fused), 0.2)
                out = torch.sigmoid(self.final_rgb(out))
        return out

    # -- convenience --------------------------------------------------------

    @torch.no_grad()
    def colorize(
        self,
        prev_sketch: np.ndarray,
        prev_color: np.ndarray,
        next_sketch: np.ndarray,
    ) -> np.ndarray:
        """Single-image inference on HxW / HxWx3 float arrays in [0, 1]."""
        was_training = self.training
        self.eval()
        try:
            sp = torch.from_numpy(np.ascontiguousarray(prev_sketch, dtype=np.float32))[None, None]
            cp = torch.from_numpy(
                np.ascontiguousarray(prev_color, dtype=np.float32)
            ).permute(2, 0, 1)[None]
            sn = torch.from_numpy(np.ascontiguousarray(next_sketch, dtype=np.float32))[None, None]
            out = self.forward(sp, cp, sn)
        finally:
            self.train(was_training)
        return out[0].permute(1, 2, 0).numpy()
