"""Deterministic synthetic footage for demos and tests.

`render_demo_clip` produces a small multi-shot animation (flat-shaded shapes
bouncing over distinct backgrounds) that exercises the whole pipeline: shot
boundaries with strong histogram jumps, in-shot motion large enough to
survive the unchanged-frame cleaning, and clean line-art contours.

`motion_pair_set` produces training pairs with very large displacement: a
uniquely colored square jumps across the canvas between the two frames of
each pair, so correctly coloring the second sketch requires moving color
information from where it was to where the sketch says it is now.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import imgio
from .dataset import LineArtParams, synthesize_lineart

__all__ = ["render_demo_clip", "write_clip", "motion_pair_set", "write_pair_dataset"]

DEMO_FRAMES = 200
DEMO_SIZE = 64


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    return xs, ys


def _blend(canvas: np.ndarray, mask: np.ndarray, color) -> None:
    for c in range(3):
        canvas[..., c] = canvas[..., c] * (1 - mask) + color[c] * mask


def _circle(xs, ys, cx, cy, r) -> np.ndarray:
    dist = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
    return np.clip(r + 0.5 - dist, 0.0, 1.0)  # ~1px soft edge


def _box(xs, ys, cx, cy, half) -> np.ndarray:
    dx = np.abs(xs - cx) - half
    dy = np.abs(ys - cy) - half
    dist = np.maximum(dx, dy)
    return np.clip(0.5 - dist, 0.0, 1.0)


def _bounce(t: float, lo: float, hi: float, speed: float) -> float:
    """Triangle-wave position between lo and hi."""
    span = hi - lo
    phase = (t * speed) % (2 * span)
    return lo + (phase if phase <= span else 2 * span - phase)


def render_demo_frame(index: int, size: int = DEMO_SIZE) -> np.ndarray:
    """Frame ``index`` of the demo clip; four shots of 60/60/40/40 frames."""
    xs, ys = _grid(size)
    s = size / 64.0
    canvas = np.zeros((size, size, 3), dtype=np.float64)
    # each shot pairs a fast bouncer with a slow linear drifter so both short
    # and long frame intervals show genuine change
    if index < 60:
        t = float(index)
        canvas[...] = (0.55, 0.75, 0.95)
        _blend(canvas, _box(xs, ys, (12 + 0.15 * t) * s, 48 * s, 7 * s), (0.10, 0.45, 0.15))
        cx = _bounce(t, 14 * s, 50 * s, 1.83 * s)
        _blend(canvas, _circle(xs, ys, cx, 24 * s, 9 * s), (0.85, 0.12, 0.10))
    elif index < 120:
        t = float(index - 60)
        canvas[...] = (0.98, 0.92, 0.60)
        _blend(canvas, _circle(xs, ys, 16 * s, (12 + 0.12 * t) * s, 7 * s), (0.95, 0.55, 0.10))
        cy = _bounce(t, 14 * s, 50 * s, 1.57 * s)
        _blend(canvas, _box(xs, ys, 42 * s, cy, 8 * s), (0.50, 0.15, 0.60))
    elif index < 160:
        t = float(index - 120)
        canvas[...] = (0.85, 0.95, 0.85)
        _blend(canvas, _box(xs, ys, (52 - 0.13 * t) * s, 14 * s, 6 * s), (0.80, 0.15, 0.55))
        cx = _bounce(t, 16 * s, 48 * s, 1.71 * s)
        cy = _bounce(t, 18 * s, 46 * s, 1.29 * s)
        _blend(canvas, _circle(xs, ys, cx, cy, 11 * s), (0.10, 0.55, 0.55))
    else:
        t = float(index - 160)
        canvas[...] = (0.93, 0.86, 0.98)
        _blend(canvas, _circle(xs, ys, (14 + 0.14 * t) * s, 46 * s, 8 * s), (0.55, 0.35, 0.15))
        cx = _bounce(t, 16 * s, 48 * s, 1.93 * s)
        _blend(canvas, _box(xs, ys, cx, 24 * s, 7 * s), (0.15, 0.20, 0.65))
    return canvas.astype(np.float32)


def render_demo_clip(frames: int = DEMO_FRAMES, size: int = DEMO_SIZE) -> list[np.ndarray]:
    return [render_demo_frame(i, size) for i in range(frames)]


def write_clip(out_dir, frames: list[np.ndarray]) -> list[Path]:
    """Write frames as frame_XXXXXX.png; returns the paths in order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        path = out_dir / f"frame_{i:06d}.png"
        imgio.save_color(path, frame)
        paths.append(path)
    return paths


def _hsv_color(hue: float, sat: float = 0.85, val: float = 0.8) -> tuple[float, float, float]:
    from matplotlib.colors import hsv_to_rgb

    return tuple(float(v) for v in hsv_to_rgb((hue % 1.0, sat, val)))


def motion_pair_set(
    n_pairs: int = 8,
    size: int = 64,
    seed: int = 0,
    lineart: LineArtParams = LineArtParams(),
) -> list[dict[str, np.ndarray]]:
    """Large-displacement analogy pairs for motion-sensitivity experiments.

    Each entry holds prev/next color frames plus synthesized sketches; the
    square's color is unique per pair and its center jumps roughly half the
    canvas between the frames.
    """
    rng = np.random.default_rng(seed)
    xs, ys = _grid(size)
    pairs = []
    for i in range(n_pairs):
        color = _hsv_color(i / max(n_pairs, 1))
        half = size * (0.12 + 0.04 * rng.random())
        margin = half + 2
        cy_a = rng.uniform(margin, size - margin)
        cy_b = rng.uniform(margin, size - margin)
        cx_a = rng.uniform(margin, size * 0.32)
        cx_b = rng.uniform(size * 0.68, size - margin)
        if i % 2:
            cx_a, cx_b = cx_b, cx_a
        frames = {}
        for tag, (cx, cy) in (("prev", (cx_a, cy_a)), ("next", (cx_b, cy_b))):
            canvas = np.full((size, size, 3), 0.92, dtype=np.float64)
            _blend(canvas, _box(xs, ys, cx, cy, half), color)
            frames[f"{tag}_color"] = canvas.astype(np.float32)
            frames[f"{tag}_sketch"] = synthesize_lineart(canvas, lineart)
        pairs.append(frames)
    return pairs


def write_pair_dataset(pairs, out_dir, stride: int = 1, width: int = 1):
    """Materialize in-memory pairs as a standard on-disk dataset.

    Writes the color frames, their sketches and a manifest where each pair is
    its own shot, so the training loader consumes exactly the same format the
    dataset builder emits.  Returns the manifest path.
    """
    from .dataset import DatasetManifest, FramePairRecord, write_manifest

    out_dir = Path(out_dir)
    frames_dir = out_dir / "frames"
    sketch_dir = out_dir / "sketch"
    frames_dir.mkdir(parents=True, exist_ok=True)
    sketch_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i, pair in enumerate(pairs):
        names = (f"pair{i:03d}_a.png", f"pair{i:03d}_b.png")
        for name, color, sketch in zip(
            names,
            (pair["prev_color"], pair["next_color"]),
            (pair["prev_sketch"], pair["next_sketch"]),
        ):
            imgio.save_color(frames_dir / name, color)
            imgio.save_sketch(sketch_dir / name, sketch)
        records.append(
            FramePairRecord(
                shot_id=i,
                first=f"frames/{names[0]}",
                second=f"frames/{names[1]}",
                stride=stride,
                width=width,
            )
        )
    manifest = DatasetManifest(
        source="synthetic-pairs",
        created="1970-01-01T00:00:00Z",
        stride=stride,
        width=width,
        shot_threshold=0.0,
        lineart=LineArtParams(),
        records=records,
    )
    path = out_dir / "manifest.txt"
    write_manifest(path, manifest)
    return path
