"""Correlation-matched feature transfer.

Given two feature maps in the same style domain (the "matching" pair) and a
third map holding the values to move (the "payload"), every output position i
is reconstructed as a convex combination of payload positions, weighted by
exp(dot(match_x[i], match_y[j])) normalized over j.  Applying the exponential
kernel and then normalizing is exactly a softmax over raw dot products, so
all implementations compute a numerically stabilized softmax (per-row max
subtraction, which is algebraically exact).

Three implementations share one contract:

* :func:`transfer` — vectorized; materializes the full (HW x HW) logit
  matrix.  Use for small grids.
* :func:`transfer_naive` — explicit Python loops over both spatial indices.
  Slow by design; it is the ground-truth oracle the other paths are tested
  against.
* :func:`transfer_tiled` — streaming softmax over column tiles with a
  running max / running normalizer, so peak auxiliary memory is
  O(tile * HW) logit entries instead of O(HW^2).  Backward recomputes the
  tiles, keeping the same bound during training.

Feature maps are torch tensors of shape (H, W, L), spatial positions
flattened in row-major order.  All paths are differentiable.
"""

from __future__ import annotations

import threading

import torch

from .errors import DimensionError, ValidationError

__all__ = [
    "correlation_logits",
    "transfer",
    "transfer_naive",
    "transfer_tiled",
    "transfer_weights_row",
    "stats",
]


class TransferStats:
    """Process-wide instrumentation for transfer calls.

    ``calls`` counts transfer invocations (any implementation); the ablation
    tests assert it stays at zero.  ``peak_block_entries`` tracks the largest
    logit block materialized by a single call, in matrix entries, which is
    how the tiled path's memory bound is checked.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.calls = 0
        self.peak_block_entries = 0

    def reset(self) -> None:
        with self._lock:
            self.calls = 0
            self.peak_block_entries = 0

    def record_call(self) -> None:
        with self._lock:
            self.calls += 1

    def record_block(self, entries: int) -> None:
        with self._lock:
            if entries > self.peak_block_entries:
                self.peak_block_entries = entries


stats = TransferStats()


def _check_map(name: str, f: torch.Tensor) -> None:
    if f.ndim != 3:
        raise DimensionError(f"{name} must have shape (H, W, L), got {tuple(f.shape)}")
    if min(f.shape) < 1:
        raise DimensionError(f"{name} has an empty dimension: {tuple(f.shape)}")
    if not torch.isfinite(f).all():
        raise ValidationError(f"{name} contains NaN or Inf values")


def _check_matching_pair(fx: torch.Tensor, fy: torch.Tensor) -> None:
    _check_map("match_x", fx)
    _check_map("match_y", fy)
    if fx.shape != fy.shape:
        raise DimensionError(
            f"matching maps must share (H, W, L): {tuple(fx.shape)} vs {tuple(fy.shape)}"
        )


def _check_payload(fx: torch.Tensor, payload: torch.Tensor) -> None:
    _check_map("payload", payload)
    if payload.shape[:2] != fx.shape[:2]:
        raise DimensionError(
            "payload spatial shape must match the matching maps: "
            f"{tuple(payload.shape[:2])} vs {tuple(fx.shape[:2])}"
        )


def correlation_logits(fx: torch.Tensor, fy: torch.Tensor) -> torch.Tensor:
    """Raw pairwise similarity scores between two same-shape feature maps.

    Returns an (HW x HW) tensor whose (i, j) entry is dot(fx_i, fy_j), with
    spatial positions flattened row-major.  The exponential kernel is *not*
    applied here; it lives inside the normalization of the transfer ops.
    """
    _check_matching_pair(fx, fy)
    n = fx.shape[0] * fx.shape[1]
    a = fx.reshape(n, fx.shape[2])
    b = fy.reshape(n, fy.shape[2])
    stats.record_block(n * n)
    return a @ b.T


def transfer(
    fx_match: torch.Tensor,
    fy_match: torch.Tensor,
    fy_payload: torch.Tensor,
    temperature: float = 1.0,
) -> torch.Tensor:
    """Warp ``fy_payload`` into alignment with ``fx_match``.

    Output position i is sum_j softmax_j(dot(fx_i, fy_j) / temperature) *
    payload_j.  Matching channels and payload channels may differ; the output
    has the payload's channel count.  ``temperature`` defaults to 1.0 (raw
    dot products); other values are an experimental knob.
    """
    _check_matching_pair(fx_match, fy_match)
    _check_payload(fx_match, fy_payload)
    stats.record_call()
    h, w, _ = fx_match.shape
    n = h * w
    a = fx_match.reshape(n, -1)
    if temperature != 1.0:
        a = a / temperature
    b = fy_match.reshape(n, -1)
    v = fy_payload.reshape(n, -1)
    logits = a @ b.T
    stats.record_block(n * n)
    weights = torch.softmax(logits, dim=1)
    out = weights @ v
    return out.reshape(h, w, fy_payload.shape[2])


def transfer_naive(
    fx_match: torch.Tensor,
    fy_match: torch.Tensor,
    fy_payload: torch.Tensor,
    temperature: float = 1.0,
) -> torch.Tensor:
    """Reference implementation: explicit loops over both spatial indices.

    Identical contract to :func:`transfer`, no vectorization across
    positions.  Intended for small inputs (HW <= 4096); this is the oracle
    the vectorized and tiled paths are checked against.
    """
    _check_matching_pair(fx_match, fy_match)
    _check_payload(fx_match, fy_payload)
    stats.record_call()
    h, w, _ = fx_match.shape
    n = h * w
    a = fx_match.reshape(n, -1)
    if temperature != 1.0:
        a = a / temperature
    b = fy_match.reshape(n, -1)
    v = fy_payload.reshape(n, -1)
    rows = []
    for i in range(n):
        scores = [torch.dot(a[i], b[j]) for j in range(n)]
        row = torch.stack(scores)
        stats.record_block(n)
        row_max = row.max()
        exp_row = torch.exp(row - row_max)
        norm = exp_row.sum()
        acc = torch.zeros_like(v[0])
        for j in range(n):
            acc = acc + exp_row[j] * v[j]
        rows.append(acc / norm)
    return torch.stack(rows).reshape(h, w, fy_payload.shape[2])


class _TiledTransfer(torch.autograd.Function):
    """Streaming-softmax transfer over column tiles.

    Forward keeps a running max ``m`` and running normalizer ``s`` per output
    row, rescaling the partial accumulation whenever the max grows, so only
    one (HW x tile) logit block is live at a time.  Backward recomputes the
    softmax blocks from the saved log-normalizer instead of retaining them.
    """

    @staticmethod
    def forward(ctx, a: torch.Tensor, b: torch.Tensor, v: torch.Tensor, tile: int):
        n = a.shape[0]
        m = torch.full((n,), float("-inf"), dtype=a.dtype, device=a.device)
        s = torch.zeros(n, dtype=a.dtype, device=a.device)
        acc = torch.zeros((n, v.shape[1]), dtype=a.dtype, device=a.device)
        for j0 in range(0, n, tile):
            b_blk = b[j0 : j0 + tile]
            v_blk = v[j0 : j0 + tile]
            logits = a @ b_blk.T
            stats.record_block(n * b_blk.shape[0])
            blk_max = logits.max(dim=1).values
            new_m = torch.maximum(m, blk_max)
            scale = torch.exp(m - new_m)
            p = torch.exp(logits - new_m[:, None])
            s = s * scale + p.sum(dim=1)
            acc = acc * scale[:, None] + p @ v_blk
            m = new_m
        out = acc / s[:, None]
        lse = m + torch.log(s)
        ctx.save_for_backward(a, b, v, lse, out)
        ctx.tile = tile
        return out

    @staticmethod
    def backward(ctx, grad_out: torch.Tensor):
        a, b, v, lse, out = ctx.saved_tensors
        tile = ctx.tile
        n = a.shape[0]
        delta = (grad_out * out).sum(dim=1)
        grad_a = torch.zeros_like(a)
        grad_b = torch.zeros_like(b)
        grad_v = torch.zeros_like(v)
        for j0 in range(0, n, tile):
            b_blk = b[j0 : j0 + tile]
            v_blk = v[j0 : j0 + tile]
            p = torch.exp(a @ b_blk.T - lse[:, None])
            stats.record_block(n * b_blk.shape[0])
            grad_v[j0 : j0 + tile] = p.T @ grad_out
            d_logits = p * (grad_out @ v_blk.T - delta[:, None])
            grad_a += d_logits @ b_blk
            grad_b[j0 : j0 + tile] = d_logits.T @ a
        return grad_a, grad_b, grad_v, None


def transfer_tiled(
    fx_match: torch.Tensor,
    fy_match: torch.Tensor,
    fy_payload: torch.Tensor,
    tile: int,
    temperature: float = 1.0,
) -> torch.Tensor:
    """Memory-bounded transfer; numerically matches :func:`transfer`.

    The full (HW x HW) logit matrix is never materialized; peak auxiliary
    memory is one (HW x tile) block (recorded in :data:`stats`).  Results are
    invariant to ``tile`` up to floating-point roundoff.
    """
    _check_matching_pair(fx_match, fy_match)
    _check_payload(fx_match, fy_payload)
    if tile < 1:
        raise ValidationError(f"tile must be >= 1, got {tile}")
    stats.record_call()
    h, w, _ = fx_match.shape
    n = h * w
    a = fx_match.reshape(n, -1)
    if temperature != 1.0:
        a = a / temperature
    b = fy_match.reshape(n, -1)
    v = fy_payload.reshape(n, -1)
    out = _TiledTransfer.apply(a, b, v, int(tile))
    return out.reshape(h, w, fy_payload.shape[2])


def transfer_weights_row(
    fx_match: torch.Tensor,
    fy_match: torch.Tensor,
    row: int,
    temperature: float = 1.0,
) -> torch.Tensor:
    """Debug accessor: the normalized weight row for one output position.

    Recomputes softmax_j(dot(fx_row, fy_j) / temperature) on demand; weight
    matrices are never stored across calls.  ``row`` indexes the row-major
    flattened spatial grid.
    """
    _check_matching_pair(fx_match, fy_match)
    n = fx_match.shape[0] * fx_match.shape[1]
    if not 0 <= row < n:
        raise DimensionError(f"row {row} out of range for HW={n}")
    a = fx_match.reshape(n, -1)[row]
    if temperature != 1.0:
        a = a / temperature
    b = fy_match.reshape(n, -1)
    scores = b @ a
    stats.record_block(n)
    return torch.softmax(scores, dim=0)
