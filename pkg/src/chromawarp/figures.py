"""Matplotlib figure rendering for reports.

Every report-producing command writes a PNG next to its delimited output:
evaluation reports get PSNR/SSIM-vs-interval curves, training runs get a
loss curve, benchmarks a per-method bar chart.  Rendering is headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import BenchmarkResult, EvalReport

__all__ = ["save_eval_figure", "save_loss_figure", "save_benchmark_figure"]

_MARKERS = ["o", "s", "^", "d", "v", "*"]


def save_eval_figure(report: EvalReport, path) -> None:
    """PSNR and SSIM against frame interval, one line per (method, stride)."""
    fig, (ax_psnr, ax_ssim) = plt.subplots(1, 2, figsize=(10, 4))
    for mi, method in enumerate(report.methods()):
        for stride in report.strides():
            rows = sorted(
                (r for r in report.rows if r.method == method and r.stride == stride),
                key=lambda r: r.frame,
            )
            if not rows:
                continue
            ivs = [r.interval for r in rows]
            label = f"{method} (stride {stride})"
            marker = _MARKERS[mi % len(_MARKERS)]
            ax_psnr.plot(ivs, [r.psnr for r in rows], marker=marker, label=label)
            ax_ssim.plot(ivs, [r.ssim for r in rows], marker=marker, label=label)
    ax_psnr.set_xlabel("interval (frames)")
    ax_psnr.set_ylabel("PSNR (dB)")
    ax_ssim.set_xlabel("interval (frames)")
    ax_ssim.set_ylabel("SSIM")
    ax_psnr.grid(alpha=0.3)
    ax_ssim.grid(alpha=0.3)
    ax_psnr.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_loss_figure(records: list[dict], path) -> None:
    """Training loss trajectory from parsed log records."""
    fig, ax = plt.subplots(figsize=(7, 4))
    iterations = [r["iteration"] for r in records]
    ax.plot(iterations, [r["total"] for r in records], label="total", lw=1)
    ax.plot(iterations, [r["color"] for r in records], label="color", lw=1, alpha=0.7)
    if any(r.get("perceptual", 0.0) for r in records):
        ax.plot(
            iterations,
            [r["perceptual"] for r in records],
            label="perceptual",
            lw=1,
            alpha=0.7,
        )
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_benchmark_figure(results: dict[str, BenchmarkResult], path) -> None:
    """Seconds-per-frame bars, one per labelled model."""
    fig, ax = plt.subplots(figsize=(5, 4))
    labels = list(results)
    values = [results[k].seconds_per_frame for k in labels]
    ax.bar(labels, values, color="tab:blue")
    ax.set_ylabel("seconds per frame")
    for i, v in enumerate(values):
        ax.text(i, v, f"{v:.3f}", ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
