"""Frozen feature-extractor providers.

Two families of pluggable extractors live here:

* matching providers — add extra semantic channels to the sketch features
  used for correlation matching.  Built-ins: ``null`` (zero channels, a
  concatenation no-op), ``fixed-random`` (a frozen, seeded conv stack), and
  ``external`` (anything registered via :func:`register_external`).
* perceptual providers — expose activations of a deep conv stack at numbered
  depths for the perceptual training loss.  ``fixed-random`` is a frozen
  seeded stack usable without any downloaded weights; ``vgg19`` tries the
  torchvision ImageNet model and falls back to ``fixed-random`` with a
  warning when the weights are unavailable.

Provider ids are strings of the form ``name`` or ``name(key=value, ...)``,
e.g. ``fixed-random(seed=7, channels=32)``.  All providers are deterministic
per (input, id) and hold no trainable parameters.
"""

from __future__ import annotations

import logging
import re

import torch
import torch.nn.functional as F

from .errors import ConfigError

logger = logging.getLogger(__name__)

_SPEC_RE = re.compile(r"^\s*([\w.-]+)\s*(?:\((.*)\))?\s*$")


def parse_provider_spec(spec: str) -> tuple[str, dict[str, str]]:
    """Split ``name(key=value, ...)`` into (name, {key: value})."""
    m = _SPEC_RE.match(spec)
    if not m:
        raise ConfigError(f"malformed provider spec: {spec!r}")
    name, argstr = m.group(1), m.group(2)
    args: dict[str, str] = {}
    if argstr:
        for part in argstr.split(","):
            if not part.strip():
                continue
            if "=" not in part:
                raise ConfigError(f"provider argument without '=': {part!r} in {spec!r}")
            key, value = part.split("=", 1)
            args[key.strip()] = value.strip()
    return name, args


def _seeded_conv_weights(seed: int, plan: list[tuple[int, int, int]]) -> list[tuple[torch.Tensor, torch.Tensor]]:
    """Gaussian conv kernels (kaiming-ish scale) from a private generator."""
    gen = torch.Generator().manual_seed(seed)
    weights = []
    for in_ch, out_ch, k in plan:
        fan_in = in_ch * k * k
        w = torch.randn(out_ch, in_ch, k, k, generator=gen) * (2.0 / fan_in) ** 0.5
        b = torch.zeros(out_ch)
        weights.append((w, b))
    return weights


# ---------------------------------------------------------------------------
# matching providers
# ---------------------------------------------------------------------------


class NullMatchingProvider:
    """Disabled provider: contributes zero channels."""

    channels = 0

    def extract(self, sketch: torch.Tensor, out_hw: tuple[int, int]) -> torch.Tensor:
        b = sketch.shape[0]
        return sketch.new_zeros((b, 0, out_hw[0], out_hw[1]))


class FixedRandomMatchingProvider:
    """Frozen randomly initialized conv stack, seeded for reproducibility.

    Three stride-2 convolutions bring the sketch to 1/8 resolution; the
    result is bilinearly resampled to the requested grid so it always lines
    up with the deepest sketch-encoder tap.
    """

    def __init__(self, seed: int = 0, channels: int = 64):
        if channels < 1:
            raise ConfigError("fixed-random matching provider needs channels >= 1")
        self.channels = channels
        mid = max(16, channels // 2)
        self._weights = _seeded_conv_weights(
            seed, [(1, mid, 3), (mid, mid, 3), (mid, channels, 3)]
        )

    def extract(self, sketch: torch.Tensor, out_hw: tuple[int, int]) -> torch.Tensor:
        x = sketch
        for w, b in self._weights:
            x = F.conv2d(x, w.to(x.dtype), b.to(x.dtype), stride=2, padding=1)
            x = F.leaky_relu(x, 0.2)
        if x.shape[-2:] != tuple(out_hw):
            x = F.interpolate(x, size=tuple(out_hw), mode="bilinear", align_corners=False)
        return x


class ExternalMatchingProvider:
    """Adapter around a user-registered extractor callable."""

    def __init__(self, name: str, fn, channels: int):
        self.name = name
        self.channels = channels
        self._fn = fn

    def extract(self, sketch: torch.Tensor, out_hw: tuple[int, int]) -> torch.Tensor:
        feats = self._fn(sketch)
        if feats.shape[1] != self.channels:
            raise ConfigError(
                f"external provider {self.name!r} returned {feats.shape[1]} channels, "
                f"registered with {self.channels}"
            )
        if feats.shape[-2:] != tuple(out_hw):
            feats = F.interpolate(feats, size=tuple(out_hw), mode="bilinear", align_corners=False)
        return feats


_EXTERNAL_REGISTRY: dict[str, tuple[object, int]] = {}


def register_external(name: str, fn, channels: int) -> None:
    """Register a feature extractor usable as ``external(name=<name>)``.

    ``fn`` maps a (B, 1, H, W) sketch batch to (B, channels, h, w) features;
    any spatial size is accepted and resampled.
    """
    _EXTERNAL_REGISTRY[name] = (fn, channels)


def resolve_matching_provider(spec: str):
    """Build a matching provider from its id; unknown ids fall back.

    An unrecognized or unavailable provider logs a warning and degrades to
    ``fixed-random`` so a missing optional asset never blocks inference.
    """
    name, args = parse_provider_spec(spec)
    if name == "null":
        return NullMatchingProvider()
    if name == "fixed-random":
        return FixedRandomMatchingProvider(
            seed=int(args.get("seed", 0)), channels=int(args.get("channels", 64))
        )
    if name == "external":
        ext = args.get("name")
        if ext in _EXTERNAL_REGISTRY:
            fn, channels = _EXTERNAL_REGISTRY[ext]
            return ExternalMatchingProvider(ext, fn, channels)
        logger.warning(
            "external matching provider %r is not registered; falling back to fixed-random",
            ext,
        )
        return FixedRandomMatchingProvider()
    logger.warning("unknown matching provider %r; falling back to fixed-random", spec)
    return FixedRandomMatchingProvider()


# ---------------------------------------------------------------------------
# perceptual providers
# ---------------------------------------------------------------------------


class FixedRandomPerceptualProvider:
    """Frozen seeded conv stack exposing activations at numbered depths.

    Canonical layer list: 13 successive 3x3 convolutions (ReLU after each);
    depth d is the activation of convolution number d (1-based).  Spatial
    pooling happens after convolutions 2 and 4 only, so small test images
    stay usable at every depth.
    """

    max_depth = 13
    _widths = (16, 16, 32, 32, 48, 48, 48, 48, 64, 64, 64, 64, 64)
    _pool_after = frozenset({2, 4})

    def __init__(self, seed: int = 0):
        plan = []
        in_ch = 3
        for out_ch in self._widths:
            plan.append((in_ch, out_ch, 3))
            in_ch = out_ch
        self._weights = _seeded_conv_weights(seed, plan)

    def features(self, images: torch.Tensor, depths: tuple[int, ...]) -> dict[int, torch.Tensor]:
        bad = [d for d in depths if not 1 <= d <= self.max_depth]
        if bad:
            raise ConfigError(f"depths {bad} outside 1..{self.max_depth}")
        out: dict[int, torch.Tensor] = {}
        x = images
        deepest = max(depths)
        for idx, (w, b) in enumerate(self._weights, start=1):
            x = F.relu(F.conv2d(x, w.to(x.dtype), b.to(x.dtype), padding=1))
            if idx in depths:
                out[idx] = x
            if idx == deepest:
                break
            if idx in self._pool_after and min(x.shape[-2:]) >= 2:
                x = F.max_pool2d(x, 2)
        return out


class PretrainedVgg19Provider:
    """ImageNet-trained VGG-19 features via torchvision.

    Canonical layer list: the 16 convolutions of VGG-19 in order (1-based).
    Inputs in [0, 1] are normalized with the standard ImageNet statistics.
    """

    max_depth = 16

    def __init__(self):
        from torchvision.models import VGG19_Weights, vgg19  # noqa: PLC0415  heavy import

        self._net = vgg19(weights=VGG19_Weights.IMAGENET1K_V1).features.eval()
        for p in self._net.parameters():
            p.requires_grad_(False)
        self._mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
        self._std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)

    def features(self, images: torch.Tensor, depths: tuple[int, ...]) -> dict[int, torch.Tensor]:
        bad = [d for d in depths if not 1 <= d <= self.max_depth]
        if bad:
            raise ConfigError(f"depths {bad} outside 1..{self.max_depth}")
        x = (images - self._mean.to(images)) / self._std.to(images)
        out: dict[int, torch.Tensor] = {}
        conv_idx = 0
        pending = None
        deepest = max(depths)
        for layer in self._net:
            x = layer(x)
            if isinstance(layer, torch.nn.Conv2d):
                conv_idx += 1
                # features are recorded post-ReLU; remember the index until then
                pending = conv_idx if conv_idx in depths else None
            elif isinstance(layer, torch.nn.ReLU) and pending is not None:
                out[pending] = x
                pending = None
                if conv_idx == deepest:
                    break
        return out


def resolve_perceptual_provider(spec: str):
    """Build a perceptual provider; pretrained ids degrade gracefully.

    ``vgg19`` requires downloadable weights; when they cannot be loaded the
    resolver logs a warning and returns the hermetic ``fixed-random`` stack.
    """
    name, args = parse_provider_spec(spec)
    if name == "fixed-random":
        return FixedRandomPerceptualProvider(seed=int(args.get("seed", 0)))
    if name == "vgg19":
        try:
            return PretrainedVgg19Provider()
        except Exception as exc:  # noqa: BLE001  any load failure degrades
            logger.warning("vgg19 perceptual provider unavailable (%s); using fixed-random", exc)
            return FixedRandomPerceptualProvider(seed=int(args.get("seed", 0)))
    logger.warning("unknown perceptual provider %r; falling back to fixed-random", spec)
    return FixedRandomPerceptualProvider()
