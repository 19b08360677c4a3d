"""Dataset construction from animation footage.

Pipeline: split a directory of numbered color frames into shots (histogram
discontinuities), slide a window over each shot to extract training pairs
with intense-but-coherent motion, synthesize line art for every frame, and
emit a line-delimited manifest.  The same shot index feeds the evaluation
harness, which samples short fixed-stride frame sequences per shot and drops
sequences containing effectively unchanged frames.

Shot detection substitutes a simple, dependency-free method: per-frame HSV
histograms (16x4x4 bins) compared with the chi-square distance, cut where
the distance exceeds a threshold.  Line art is synthesized with an extended
difference-of-Gaussians operator on luminance: flat regions map to white and
the dark flank of strong edges maps to soft black strokes (tanh shaping), so
any solid-color input yields a near-blank page.

Everything here is deterministic given (frames, parameters, seed); the
manifest's creation stamp derives from the newest input frame mtime so
rebuilds over unchanged inputs are byte-identical.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path, PurePosixPath

import numpy as np
from matplotlib.colors import rgb_to_hsv
from scipy.ndimage import gaussian_filter

from . import imgio
from .errors import ValidationError

__all__ = [
    "LineArtParams",
    "FramePairRecord",
    "DatasetManifest",
    "EvalSequence",
    "synthesize_lineart",
    "detect_shots",
    "window_pairs",
    "extract_pairs",
    "build_manifest",
    "write_manifest",
    "read_manifest",
    "build_eval_sequences",
    "load_exclusions",
    "MANIFEST_FORMAT",
]

MANIFEST_FORMAT = "chromawarp-manifest"
MANIFEST_VERSION = 1
MANIFEST_FIELDS = ("shot_id", "first", "second", "stride", "width")
SKETCH_DIRNAME = "sketch"

DEFAULT_STRIDE = 5
DEFAULT_WIDTH = 40
DEFAULT_SHOT_THRESHOLD = 0.3
DEFAULT_CHANGE_THRESHOLD = 0.002

HIST_BINS = (16, 4, 4)  # hue, saturation, value


@dataclass(frozen=True)
class LineArtParams:
    """Edge-to-stroke conversion parameters.

    ``sigma`` / ``k`` set the two Gaussian scales; their difference is
    amplified by ``gain``.  Pixels whose amplified response falls below
    ``-threshold`` (the dark flank of an edge) darken through a tanh ramp of
    steepness ``softness``; everything else stays white.
    """

    sigma: float = 1.0
    k: float = 1.6
    gain: float = 20.0
    threshold: float = 0.05
    softness: float = 6.0


def luminance(rgb: np.ndarray) -> np.ndarray:
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def synthesize_lineart(color: np.ndarray, params: LineArtParams = LineArtParams()) -> np.ndarray:
    """Single-channel synthetic sketch in [0, 1]: white page, dark strokes."""
    if color.ndim != 3 or color.shape[2] != 3:
        raise ValidationError(f"expected HxWx3 color image, got {color.shape}")
    gray = luminance(np.asarray(color, dtype=np.float64))
    fine = gaussian_filter(gray, params.sigma, mode="nearest")
    coarse = gaussian_filter(gray, params.sigma * params.k, mode="nearest")
    response = params.gain * (fine - coarse)
    sketch = np.ones_like(gray)
    dark = response < -params.threshold
    sketch[dark] = 1.0 + np.tanh(params.softness * (response[dark] + params.threshold))
    return np.clip(sketch, 0.0, 1.0).astype(np.float32)


def _frame_histogram(color: np.ndarray) -> np.ndarray:
    hsv = rgb_to_hsv(np.clip(color, 0.0, 1.0))
    hist, _ = np.histogramdd(
        hsv.reshape(-1, 3),
        bins=HIST_BINS,
        range=((0, 1), (0, 1), (0, 1)),
    )
    flat = hist.reshape(-1)
    return flat / max(flat.sum(), 1.0)


def _chi_square(a: np.ndarray, b: np.ndarray) -> float:
    denom = a + b
    mask = denom > 0
    return float(0.5 * np.sum((a[mask] - b[mask]) ** 2 / denom[mask]))


def _load(frame) -> np.ndarray:
    if isinstance(frame, (str, Path)):
        return imgio.load_color(frame)
    return np.asarray(frame, dtype=np.float32)


def detect_shots(frames, threshold: float = DEFAULT_SHOT_THRESHOLD) -> list[tuple[int, int]]:
    """Half-open (start, end) frame ranges split at histogram discontinuities.

    ``frames`` is an ordered sequence of paths or HxWx3 arrays.  Boundaries
    fall wherever the chi-square distance between consecutive frame
    histograms exceeds ``threshold``.
    """
    n = len(frames)
    if n < 2:
        raise ValidationError(f"need at least 2 frames to split shots, got {n}")
    shots = []
    start = 0
    prev_hist = _frame_histogram(_load(frames[0]))
    for idx in range(1, n):
        hist = _frame_histogram(_load(frames[idx]))
        if _chi_square(prev_hist, hist) > threshold:
            shots.append((start, idx))
            start = idx
        prev_hist = hist
    shots.append((start, n))
    return shots


def window_pairs(n_frames: int, stride: int = DEFAULT_STRIDE, width: int = DEFAULT_WIDTH) -> list[tuple[int, int]]:
    """(start, start+width) index pairs of a sliding window within one shot.

    Windows start at 0 and advance by ``stride``; windows that would run past
    the last frame are dropped, so a shot of length <= width yields nothing.
    """
    if stride < 1 or width < 1:
        raise ValidationError(f"stride and width must be >= 1, got {stride}, {width}")
    pairs = []
    start = 0
    while start + width < n_frames:
        pairs.append((start, start + width))
        start += stride
    return pairs


@dataclass(frozen=True)
class FramePairRecord:
    shot_id: int
    first: str  # path relative to the manifest, POSIX separators
    second: str
    stride: int
    width: int

    def to_line(self) -> str:
        return "\t".join(
            [str(self.shot_id), self.first, self.second, str(self.stride), str(self.width)]
        )

    @classmethod
    def from_line(cls, line: str) -> "FramePairRecord":
        shot_id, first, second, stride, width = line.rstrip("\n").split("\t")
        return cls(int(shot_id), first, second, int(stride), int(width))


@dataclass
class DatasetManifest:
    source: str
    created: str
    stride: int
    width: int
    shot_threshold: float
    lineart: LineArtParams
    records: list[FramePairRecord] = field(default_factory=list)
    sketch_dir: str = SKETCH_DIRNAME
    version: int = MANIFEST_VERSION

    def header(self) -> dict:
        return {
            "format": MANIFEST_FORMAT,
            "version": self.version,
            "source": self.source,
            "created": self.created,
            "stride": self.stride,
            "width": self.width,
            "shot_threshold": self.shot_threshold,
            "lineart": asdict(self.lineart),
            "sketch_dir": self.sketch_dir,
            "fields": list(MANIFEST_FIELDS),
        }


def extract_pairs(
    shots: list[tuple[int, int]],
    frame_paths: list[Path],
    base_dir: Path,
    stride: int,
    width: int,
) -> list[FramePairRecord]:
    """Window pairs for every shot, as records with base-relative paths."""
    records = []
    for shot_id, (start, end) in enumerate(shots):
        for a, b in window_pairs(end - start, stride, width):
            records.append(
                FramePairRecord(
                    shot_id=shot_id,
                    first=_relpath(frame_paths[start + a], base_dir),
                    second=_relpath(frame_paths[start + b], base_dir),
                    stride=stride,
                    width=width,
                )
            )
    return records


def _relpath(path: Path, base: Path) -> str:
    rel = os.path.relpath(Path(path).resolve(), Path(base).resolve())
    return str(PurePosixPath(Path(rel)))


def _source_stamp(frame_paths: list[Path]) -> str:
    """Creation stamp from the newest input mtime, so identical inputs give
    byte-identical manifests on rebuild."""
    newest = max(p.stat().st_mtime for p in frame_paths)
    return datetime.fromtimestamp(newest, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def build_manifest(
    frames_dir,
    out_dir,
    stride: int = DEFAULT_STRIDE,
    width: int = DEFAULT_WIDTH,
    shot_threshold: float = DEFAULT_SHOT_THRESHOLD,
    lineart: LineArtParams = LineArtParams(),
    source: str | None = None,
    write_sketches: bool = True,
) -> tuple[DatasetManifest, list[tuple[int, int]]]:
    """Run the full construction pipeline and write its outputs.

    Writes ``manifest.txt``, ``shots.json`` and (optionally) one synthetic
    sketch per input frame under ``out_dir/sketch/``.  Returns the manifest
    and the shot index.
    """
    frames_dir = Path(frames_dir)
    out_dir = Path(out_dir)
    frame_paths = imgio.list_frames(frames_dir)
    if not frame_paths:
        raise ValidationError(f"no frames found in {frames_dir}")
    shots = detect_shots(frame_paths, shot_threshold)
    records = extract_pairs(shots, frame_paths, out_dir, stride, width)
    manifest = DatasetManifest(
        source=source if source is not None else frames_dir.name,
        created=_source_stamp(frame_paths),
        stride=stride,
        width=width,
        shot_threshold=shot_threshold,
        lineart=lineart,
        records=records,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    if write_sketches:
        sketch_dir = out_dir / manifest.sketch_dir
        sketch_dir.mkdir(exist_ok=True)
        for path in frame_paths:
            sketch = synthesize_lineart(imgio.load_color(path), lineart)
            imgio.save_sketch(sketch_dir / path.name, sketch)
    write_manifest(out_dir / "manifest.txt", manifest)
    with open(out_dir / "shots.json", "w", encoding="utf-8") as fh:
        json.dump(shots, fh)
        fh.write("\n")
    return manifest, shots


def write_manifest(path, manifest: DatasetManifest) -> None:
    lines = [json.dumps(manifest.header(), sort_keys=True)]
    lines.extend(record.to_line() for record in manifest.records)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != MANIFEST_FORMAT:
            raise ValidationError(f"{path} is not a dataset manifest")
        records = [FramePairRecord.from_line(line) for line in fh if line.strip()]
    return DatasetManifest(
        source=header["source"],
        created=header["created"],
        stride=header["stride"],
        width=header["width"],
        shot_threshold=header["shot_threshold"],
        lineart=LineArtParams(**header["lineart"]),
        records=records,
        sketch_dir=header["sketch_dir"],
        version=header["version"],
    )


@dataclass(frozen=True)
class EvalSequence:
    """A reference frame plus 4 successors at a fixed stride within one shot."""

    shot_id: int
    stride: int
    frame_indices: tuple[int, int, int, int, int]

    @property
    def intervals(self) -> tuple[int, int, int, int]:
        ref = self.frame_indices[0]
        return tuple(idx - ref for idx in self.frame_indices[1:])


def load_exclusions(path) -> frozenset[int]:
    """Shot ids to skip during evaluation, one integer per line, # comments."""
    ids = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        body = line.split("#", 1)[0].strip()
        if body:
            ids.add(int(body))
    return frozenset(ids)


def build_eval_sequences(
    shots: list[tuple[int, int]],
    frames,
    stride: int,
    seed: int = 0,
    change_threshold: float = DEFAULT_CHANGE_THRESHOLD,
    exclusions: frozenset[int] = frozenset(),
) -> list[EvalSequence]:
    """One random fixed-stride 5-frame sequence per eligible shot.

    Shots shorter than the 4*stride span are skipped.  A sequence is dropped
    when any successor differs from the reference by less than
    ``change_threshold`` mean absolute difference (nothing to predict), or
    when its shot id is excluded (manual semantic cleaning).
    """
    if not 1 <= stride <= 10:
        raise ValidationError(f"stride must be in 1..10, got {stride}")
    rng = np.random.default_rng(seed)
    sequences = []
    span = 4 * stride
    for shot_id, (start, end) in enumerate(shots):
        if shot_id in exclusions:
            continue
        if end - start <= span:
            continue
        first = int(rng.integers(start, end - span))
        indices = tuple(first + i * stride for i in range(5))
        ref = _load(frames[indices[0]])
        changed = all(
            float(np.mean(np.abs(_load(frames[idx]) - ref))) >= change_threshold
            for idx in indices[1:]
        )
        if changed:
            sequences.append(EvalSequence(shot_id, stride, indices))
    return sequences
