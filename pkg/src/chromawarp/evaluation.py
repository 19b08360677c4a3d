"""Consistency evaluation harness.

Metrics: PSNR (0-255 convention on RGB) and mean local SSIM (11x11 Gaussian
window, sigma 1.5, K1=0.01, K2=0.03, dynamic range 255, averaged over
channels).  Identical images produce an infinite PSNR sentinel that tables
cap at 99.0 dB and flag.

Protocol: for every sampled 5-frame sequence, the first frame is the fixed
color reference; each of the 4 successor sketches is predicted independently
from that reference (predictions are not chained).  Scores aggregate into
per-(stride, frame position) means, written as CSV, a human-readable table
with "PSNR/SSIM" cells, and a figure.
"""

from __future__ import annotations

import csv
import io
import math
import platform
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

from . import imgio
from .dataset import EvalSequence, LineArtParams, synthesize_lineart
from .errors import DimensionError, ValidationError

__all__ = [
    "psnr",
    "ssim",
    "EvalRow",
    "EvalReport",
    "evaluate",
    "benchmark_time",
    "BenchmarkResult",
    "PSNR_CAP",
    "CSV_FIELDS",
]

PSNR_CAP = 99.0  # table stand-in for the infinite-PSNR sentinel
CSV_FIELDS = ("method", "stride", "frame", "iv", "psnr", "ssim", "n")

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 255.0


def _check_images(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 3 or a.shape[2] != 3:
        raise DimensionError(f"expected HxWx3 images, got {a.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    _check_images(a, b)
    diff = (np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) * DYNAMIC_RANGE
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DYNAMIC_RANGE**2 / mse)


def _gaussian_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(coords**2) / (2 * SSIM_SIGMA**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


_SSIM_KERNEL = _gaussian_window()


def _ssim_channel(x: np.ndarray, y: np.ndarray) -> float:
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    win = _SSIM_KERNEL
    mu_x = convolve2d(x, win, mode="valid")
    mu_y = convolve2d(y, win, mode="valid")
    mu_xx = mu_x * mu_x
    mu_yy = mu_y * mu_y
    mu_xy = mu_x * mu_y
    sigma_xx = convolve2d(x * x, win, mode="valid") - mu_xx
    sigma_yy = convolve2d(y * y, win, mode="valid") - mu_yy
    sigma_xy = convolve2d(x * y, win, mode="valid") - mu_xy
    num = (2 * mu_xy + c1) * (2 * sigma_xy + c2)
    den = (mu_xx + mu_yy + c1) * (sigma_xx + sigma_yy + c2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local structural similarity, averaged over the RGB channels."""
    _check_images(a, b)
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise ValidationError(
            f"images must be at least {SSIM_WINDOW}px per side, got {a.shape[:2]}"
        )
    x = np.asarray(a, dtype=np.float64) * DYNAMIC_RANGE
    y = np.asarray(b, dtype=np.float64) * DYNAMIC_RANGE
    return float(np.mean([_ssim_channel(x[..., c], y[..., c]) for c in range(3)]))


# ---------------------------------------------------------------------------
# sequence evaluation protocol
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalRow:
    method: str
    stride: int
    frame: int  # successor position 1..4
    interval: int  # frame distance from the reference = stride * frame
    psnr: float  # mean over sequences, infinite samples capped at PSNR_CAP
    ssim: float
    n: int
    n_capped: int = 0  # how many samples hit the infinite-PSNR sentinel

    def cell(self) -> str:
        return f"{self.psnr:.2f}/{self.ssim:.4f}"


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def merge(self, other: "EvalReport") -> "EvalReport":
        meta = dict(self.metadata)
        meta.update(other.metadata)
        return EvalReport(rows=self.rows + other.rows, metadata=meta)

    def methods(self) -> list[str]:
        seen = dict.fromkeys(row.method for row in self.rows)
        return list(seen)

    def strides(self) -> list[int]:
        return sorted({row.stride for row in self.rows})

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for row in sorted(self.rows, key=lambda r: (r.stride, r.method, r.frame)):
            writer.writerow(
                [
                    row.method,
                    row.stride,
                    row.frame,
                    row.interval,
                    f"{row.psnr:.6f}",
                    f"{row.ssim:.6f}",
                    row.n,
                ]
            )
        return buf.getvalue()

    def to_table(self) -> str:
        """One table per stride, methods as rows, PSNR/SSIM cells."""
        lines = []
        methods = self.methods()
        for stride in self.strides():
            lines.append(f"PSNR/SSIM of frame sequences, stride={stride}")
            header = ["method"] + [f"frame{k}(iv:{stride * k})" for k in range(1, 5)]
            table = [header]
            for method in methods:
                by_frame = {
                    r.frame: r for r in self.rows if r.method == method and r.stride == stride
                }
                if not by_frame:
                    continue
                cells = [by_frame[k].cell() if k in by_frame else "-" for k in range(1, 5)]
                table.append([method] + cells)
            widths = [max(len(r[c]) for r in table) for c in range(5)]
            for r in table:
                lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
            capped = sum(r.n_capped for r in self.rows if r.stride == stride)
            if capped:
                lines.append(f"(*) {capped} sample(s) with identical images capped at {PSNR_CAP} dB")
            lines.append("")
        return "\n".join(lines)


def _mean_psnr(values: list[float]) -> tuple[float, int]:
    capped = sum(1 for v in values if math.isinf(v))
    finite = [min(v, PSNR_CAP) for v in values]
    return float(np.mean(finite)), capped


def _load_frame(frame) -> np.ndarray:
    if isinstance(frame, np.ndarray):
        return frame
    return imgio.load_color(frame)


def evaluate(
    predict,
    sequences: list[EvalSequence],
    frames,
    method: str = "model",
    lineart: LineArtParams = LineArtParams(),
    metadata: dict | None = None,
) -> EvalReport:
    """Score a predictor over sampled sequences.

    ``predict(prev_sketch, prev_color, next_sketch) -> color`` works on HxW /
    HxWx3 float arrays in [0, 1].  The first frame of each sequence is the
    fixed reference; every successor is predicted from it independently.
    Deterministic given (predict, sequences).
    """
    if not sequences:
        raise ValidationError("no sequences to evaluate")
    scores: dict[tuple[int, int], dict[str, list[float]]] = {}
    for seq in sequences:
        colors = [_load_frame(frames[idx]) for idx in seq.frame_indices]
        sketches = [synthesize_lineart(c, lineart) for c in colors]
        for pos in range(1, 5):
            estimate = predict(sketches[0], colors[0], sketches[pos])
            bucket = scores.setdefault((seq.stride, pos), {"psnr": [], "ssim": []})
            bucket["psnr"].append(psnr(colors[pos], estimate))
            bucket["ssim"].append(ssim(colors[pos], estimate))
    rows = []
    for (stride, pos), bucket in sorted(scores.items()):
        mean_psnr, capped = _mean_psnr(bucket["psnr"])
        rows.append(
            EvalRow(
                method=method,
                stride=stride,
                frame=pos,
                interval=stride * pos,
                psnr=mean_psnr,
                ssim=float(np.mean(bucket["ssim"])),
                n=len(bucket["psnr"]),
                n_capped=capped,
            )
        )
    return EvalReport(rows=rows, metadata=dict(metadata or {}))


# ---------------------------------------------------------------------------
# timing benchmark
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkResult:
    seconds_per_frame: float  # median over all timed forwards
    n_frames: int
    repeats: int
    hardware: str

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["seconds_per_frame", "frames", "repeats", "hardware"])
        writer.writerow([f"{self.seconds_per_frame:.6f}", self.n_frames, self.repeats, self.hardware])
        return buf.getvalue()


def _hardware_descriptor() -> str:
    import torch

    return f"{platform.machine()} cpu, {torch.get_num_threads()} torch threads"


def benchmark_time(predict, inputs, warmup: int = 1, repeats: int = 5) -> BenchmarkResult:
    """Median wall-clock seconds per forward pass after warmup.

    ``inputs`` is a list of (prev_sketch, prev_color, next_sketch) triples.
    """
    if repeats < 3:
        raise ValidationError(f"repeats must be >= 3, got {repeats}")
    if not inputs:
        raise ValidationError("no benchmark inputs")
    for _ in range(warmup):
        for sp, cp, sn in inputs:
            predict(sp, cp, sn)
    times = []
    for _ in range(repeats):
        for sp, cp, sn in inputs:
            start = time.perf_counter()
            predict(sp, cp, sn)
            times.append(time.perf_counter() - start)
    return BenchmarkResult(
        seconds_per_frame=float(np.median(times)),
        n_frames=len(inputs),
        repeats=repeats,
        hardware=_hardware_descriptor(),
    )
