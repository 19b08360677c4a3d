"""Optimization loop with checkpointing and exact resume.

Adam with momentum terms (0.5, 0.9) at a constant learning rate 1e-4,
batch 2, 40 epochs over 256x256 inputs by default.  No augmentation, no
schedule; sample order is a seeded shuffle per epoch recomputed from
(seed, epoch), so a run is a pure function of (manifest, config) and a
resumed run continues the exact trajectory of an uninterrupted one.

Per-iteration losses stream to a line-delimited JSON log; checkpoints embed
the generator config (and its fingerprint), optimizer state and RNG state.
A non-finite loss aborts immediately after writing a diagnostic checkpoint;
unreadable samples are skipped with a logged warning.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import imgio
from .dataset import read_manifest
from .errors import CheckpointError, TrainingDivergedError, ValidationError
from .evaluation import PSNR_CAP, psnr
from .generator import ColorizationGenerator, GeneratorConfig
from .losses import LossConfig, loss_terms
from .providers import resolve_perceptual_provider

logger = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "PairDataset",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "load_colorizer",
    "read_training_log",
    "training_set_psnr",
    "CHECKPOINT_KIND",
]

CHECKPOINT_KIND = "chromawarp-checkpoint"
CHECKPOINT_VERSION = 1
LOG_NAME = "train_log.jsonl"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    batch_size: int = 2
    epochs: int = 40
    resolution: int = 256
    seed: int = 0
    checkpoint_interval: int = 1000  # iterations; the final state is always saved
    max_iterations: int | None = None  # optional budget cap for smoke-scale runs
    target_train_psnr: float | None = None  # optional early stop once reached
    psnr_check_interval: int = 100
    loss: LossConfig = field(default_factory=LossConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValidationError("learning_rate, batch_size and epochs must be positive")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ValidationError("momentum terms must lie in [0, 1)")
        if self.resolution % 8 or self.resolution < 8:
            raise ValidationError("resolution must be a positive multiple of 8")
        if self.checkpoint_interval < 0:
            raise ValidationError("checkpoint_interval must be >= 0")


class PairDataset:
    """Loads (prev sketch, prev color, next sketch, next color) from a manifest."""

    def __init__(self, manifest_path, resolution: int):
        self.manifest_path = Path(manifest_path)
        self.base_dir = self.manifest_path.parent
        self.manifest = read_manifest(self.manifest_path)
        if not self.manifest.records:
            raise ValidationError(f"manifest {manifest_path} lists no training pairs")
        self.resolution = resolution

    def __len__(self) -> int:
        return len(self.manifest.records)

    def _sketch_path(self, frame_rel: str) -> Path:
        return self.base_dir / self.manifest.sketch_dir / Path(frame_rel).name

    def _resize(self, arr: np.ndarray) -> np.ndarray:
        if arr.shape[0] == self.resolution and arr.shape[1] == self.resolution:
            return arr
        from PIL import Image

        mode = "RGB" if arr.ndim == 3 else "L"
        img = Image.fromarray(np.clip(np.rint(arr * 255), 0, 255).astype(np.uint8), mode)
        img = img.resize((self.resolution, self.resolution), Image.BILINEAR)
        return np.asarray(img, dtype=np.float32) / 255.0

    def load(self, idx: int):
        record = self.manifest.records[idx]
        prev_color = self._resize(imgio.load_color(self.base_dir / record.first))
        next_color = self._resize(imgio.load_color(self.base_dir / record.second))
        prev_sketch = self._resize(imgio.load_sketch(self._sketch_path(record.first)))
        next_sketch = self._resize(imgio.load_sketch(self._sketch_path(record.second)))
        to_t = lambda a: torch.from_numpy(np.ascontiguousarray(a, dtype=np.float32))
        return (
            to_t(prev_sketch)[None],
            to_t(prev_color).permute(2, 0, 1),
            to_t(next_sketch)[None],
            to_t(next_color).permute(2, 0, 1),
        )


def _epoch_order(n: int, seed: int, epoch: int) -> torch.Tensor:
    gen = torch.Generator().manual_seed(seed * 1_000_003 + epoch)
    return torch.randperm(n, generator=gen)


def save_checkpoint(
    path,
    model: ColorizationGenerator,
    optimizer: torch.optim.Optimizer | None,
    iteration: int,
    epoch: int,
    loss_config: LossConfig,
    batch_idx: int = 0,
) -> None:
    payload = {
        "kind": CHECKPOINT_KIND,
        "format_version": CHECKPOINT_VERSION,
        "generator_config": asdict(model.config),
        "config_fingerprint": model.config.fingerprint(),
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "iteration": iteration,
        "epoch": epoch,
        "batch_idx": batch_idx,
        "torch_rng": torch.get_rng_state(),
        "loss_config": asdict(loss_config),
    }
    torch.save(payload, path)


def _config_from_payload(payload) -> GeneratorConfig:
    raw = dict(payload["generator_config"])
    for key in ("head_widths", "sketch_widths", "sketch_dilations", "warp_levels"):
        raw[key] = tuple(raw[key])
    return GeneratorConfig(**raw)


def load_checkpoint(path, expected_config: GeneratorConfig | None = None):
    """Rebuild the generator from a checkpoint; returns (model, payload)."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("kind") != CHECKPOINT_KIND:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_KIND} file")
    config = _config_from_payload(payload)
    if expected_config is not None and expected_config.fingerprint() != payload["config_fingerprint"]:
        raise CheckpointError(
            "checkpoint config fingerprint does not match the requested config: "
            f"{payload['config_fingerprint'][:12]} vs {expected_config.fingerprint()[:12]}"
        )
    model = ColorizationGenerator(config)
    model.load_state_dict(payload["model_state"])
    return model, payload


def load_colorizer(path):
    """Checkpoint -> predict(prev_sketch, prev_color, next_sketch) on arrays."""
    model, _ = load_checkpoint(path)
    model.eval()
    return model.colorize


def read_training_log(path) -> list[dict]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(json.loads(line))
    return records


@torch.no_grad()
def training_set_psnr(model: ColorizationGenerator, ds: PairDataset) -> float:
    """Mean PSNR of the model over its own training pairs (eval mode)."""
    was_training = model.training
    model.eval()
    try:
        values = []
        for idx in range(len(ds)):
            sp, cp, sn, cn = ds.load(idx)
            est = model(sp[None], cp[None], sn[None])[0]
            values.append(
                min(
                    psnr(
                        cn.permute(1, 2, 0).numpy(),
                        est.permute(1, 2, 0).numpy(),
                    ),
                    PSNR_CAP,
                )
            )
    finally:
        model.train(was_training)
    return float(np.mean(values))


def train(
    manifest_path,
    cfg: TrainConfig,
    out_dir,
    resume_from=None,
) -> tuple[ColorizationGenerator, Path]:
    """Run the optimization; returns the trained model and final checkpoint.

    Deterministic given (manifest, cfg): single-threaded loading, seeded
    per-epoch shuffles, constant learning rate.  ``resume_from`` continues an
    interrupted run exactly, including optimizer state and data order.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = PairDataset(manifest_path, cfg.resolution)

    if resume_from is not None:
        model, payload = load_checkpoint(resume_from, expected_config=cfg.generator)
        optimizer = torch.optim.Adam(
            model.parameters(), lr=cfg.learning_rate, betas=(cfg.beta1, cfg.beta2)
        )
        if payload["optimizer_state"] is None:
            raise CheckpointError(f"{resume_from} has no optimizer state; cannot resume")
        optimizer.load_state_dict(payload["optimizer_state"])
        torch.set_rng_state(payload["torch_rng"])
        iteration = payload["iteration"]
        epoch = payload["epoch"]
        batch_idx = payload["batch_idx"]
        log_mode = "a"
    else:
        model = ColorizationGenerator(cfg.generator)
        optimizer = torch.optim.Adam(
            model.parameters(), lr=cfg.learning_rate, betas=(cfg.beta1, cfg.beta2)
        )
        iteration = 0
        epoch = 0
        batch_idx = 0
        log_mode = "w"

    provider = None
    if cfg.loss.lambda_perceptual > 0:
        provider = resolve_perceptual_provider(cfg.loss.provider)

    batches_per_epoch = (len(ds) + cfg.batch_size - 1) // cfg.batch_size
    total_iterations = cfg.epochs * batches_per_epoch
    if cfg.max_iterations is not None:
        total_iterations = min(total_iterations, cfg.max_iterations)

    model.train()
    start_time = time.monotonic()
    stop = iteration >= total_iterations
    with open(out_dir / LOG_NAME, log_mode, encoding="utf-8") as log:
        while epoch < cfg.epochs and not stop:
            order = _epoch_order(len(ds), cfg.seed, epoch)
            while batch_idx < batches_per_epoch and not stop:
                lo = batch_idx * cfg.batch_size
                batch_idx += 1
                samples = []
                for idx in order[lo : lo + cfg.batch_size].tolist():
                    try:
                        samples.append(ds.load(idx))
                    except Exception as exc:  # noqa: BLE001  skip broken samples
                        logger.warning("skipping unreadable sample %d: %s", idx, exc)
                if not samples:
                    continue
                sp, cp, sn, cn = (torch.stack(parts) for parts in zip(*samples))
                estimate = model(sp, cp, sn)
                col, per, total = loss_terms(cn, estimate, cfg.loss, provider)
                if not torch.isfinite(total):
                    diag = out_dir / "ckpt_diverged.pt"
                    save_checkpoint(diag, model, optimizer, iteration, epoch, cfg.loss, batch_idx)
                    raise TrainingDivergedError(
                        f"non-finite loss at iteration {iteration + 1}; diagnostic "
                        f"checkpoint written to {diag}"
                    )
                optimizer.zero_grad()
                total.backward()
                optimizer.step()
                iteration += 1
                log.write(
                    json.dumps(
                        {
                            "iteration": iteration,
                            "epoch": epoch,
                            "color": col.item(),
                            "perceptual": per.item(),
                            "total": total.item(),
                            "wall_time": round(time.monotonic() - start_time, 3),
                        }
                    )
                    + "\n"
                )
                if cfg.checkpoint_interval and iteration % cfg.checkpoint_interval == 0:
                    save_checkpoint(
                        out_dir / f"ckpt_{iteration:07d}.pt",
                        model, optimizer, iteration, epoch, cfg.loss, batch_idx,
                    )
                if (
                    cfg.target_train_psnr is not None
                    and iteration % cfg.psnr_check_interval == 0
                    and training_set_psnr(model, ds) >= cfg.target_train_psnr
                ):
                    logger.info("target training PSNR reached at iteration %d", iteration)
                    stop = True
                if iteration >= total_iterations:
                    stop = True
            if not stop:
                epoch += 1
                batch_idx = 0

    final = out_dir / "ckpt_final.pt"
    save_checkpoint(final, model, optimizer, iteration, epoch, cfg.loss, batch_idx)
    return model, final
