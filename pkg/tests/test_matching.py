"""Tests for the correlation transfer kernels.

The naive double-loop implementation is the oracle; the vectorized and tiled
paths are checked against it, plus the algebraic properties (weight
normalization, constant-payload collapse, permutation behaviour) and gradient
checks against central finite differences.
"""

import math
from pathlib import Path

import numpy as np
import pytest
import torch

from chromawarp import matching
from chromawarp.errors import DimensionError, ValidationError

DATA = Path(__file__).parent / "data"


def rand_maps(seed, h, w, l_match, l_out, dtype=torch.float64):
    gen = torch.Generator().manual_seed(seed)
    fx = torch.randn(h, w, l_match, generator=gen, dtype=dtype)
    fy = torch.randn(h, w, l_match, generator=gen, dtype=dtype)
    v = torch.randn(h, w, l_out, generator=gen, dtype=dtype)
    return fx, fy, v


class TestCorrelationLogits:
    def test_single_position(self):
        f = torch.tensor([[[2.0]]])
        logits = matching.correlation_logits(f, f)
        assert logits.shape == (1, 1)
        assert logits.item() == pytest.approx(4.0)

    def test_zero_features(self):
        fx = torch.zeros(2, 3, 4)
        fy = torch.randn(2, 3, 4)
        assert matching.correlation_logits(fx, fy).abs().max() == 0.0

    def test_pairwise_dots(self):
        fx = torch.tensor([[[1.0], [0.0]]])
        fy = torch.tensor([[[1.0], [0.0]]])
        logits = matching.correlation_logits(fx, fy)
        assert torch.equal(logits, torch.tensor([[1.0, 0.0], [0.0, 0.0]]))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            matching.correlation_logits(torch.zeros(2, 2, 3), torch.zeros(2, 2, 4))

    def test_nonfinite_rejected(self):
        bad = torch.full((1, 2, 1), float("nan"))
        with pytest.raises(ValidationError):
            matching.correlation_logits(bad, torch.zeros(1, 2, 1))


class TestTransfer:
    def test_hand_derived_example(self):
        # H=1, W=2, L=1: weights row 0 = softmax([1, 0])
        fx = torch.tensor([[[1.0], [0.0]]])
        fy = torch.tensor([[[1.0], [0.0]]])
        v = torch.tensor([[[10.0], [20.0]]])
        out = matching.transfer(fx, fy, v)
        assert out.flatten().tolist() == pytest.approx([12.6894, 15.0], abs=1e-4)
        w0 = matching.transfer_weights_row(fx, fy, 0)
        assert w0.tolist() == pytest.approx([0.73106, 0.26894], abs=1e-5)

    def test_constant_payload_collapses(self):
        fx, fy, _ = rand_maps(3, 4, 5, 6, 3)
        v = torch.full((4, 5, 3), 2.5, dtype=torch.float64)
        out = matching.transfer(fx, fy, v)
        assert (out - 2.5).abs().max() < 1e-6

    def test_sharp_matching_selects_matching_position(self):
        # identical matching maps scaled by tau=50 make softmax near-argmax
        gen = torch.Generator().manual_seed(7)
        eye = torch.eye(6, dtype=torch.float64)[torch.randperm(6, generator=gen)]
        fx = (50.0 * eye).reshape(2, 3, 6)
        v = torch.randn(2, 3, 4, generator=gen, dtype=torch.float64)
        out = matching.transfer(fx, fx, v)
        assert (out - v).abs().max() < 1e-3

    def test_payload_spatial_mismatch_rejected(self):
        fx, fy, _ = rand_maps(0, 2, 2, 3, 3)
        with pytest.raises(DimensionError):
            matching.transfer(fx, fy, torch.zeros(3, 2, 3, dtype=torch.float64))

    def test_channel_counts_may_differ(self):
        fx, fy, v = rand_maps(1, 3, 3, 5, 2)
        assert matching.transfer(fx, fy, v).shape == (3, 3, 2)

    def test_softmax_stable_at_large_magnitudes(self):
        fx, fy, v = rand_maps(2, 2, 2, 3, 2)
        out = matching.transfer(fx * 10, fy * 10, v)  # dots reach ~100
        assert torch.isfinite(out).all()

    def test_temperature_knob(self):
        fx, fy, v = rand_maps(4, 2, 2, 3, 2)
        hot = matching.transfer(fx, fy, v, temperature=2.0)
        ref = matching.transfer(fx / 2.0, fy, v)
        assert torch.allclose(hot, ref, atol=1e-12)


class TestOracleEquivalence:
    def test_naive_matches_vectorized_on_random_inputs(self):
        for seed in range(20):
            h, w, lm, lo = (
                1 + seed % 4,
                1 + (seed * 7) % 4,
                1 + seed % 5,
                1 + (seed * 3) % 5,
            )
            fx, fy, v = rand_maps(seed, h, w, lm, lo)
            with torch.no_grad():
                expected = matching.transfer_naive(fx, fy, v)
            got = matching.transfer(fx, fy, v)
            assert (got - expected).abs().max() < 1e-5

    def test_frozen_golden_output(self):
        blob = np.load(DATA / "transfer_golden_8x8x4.npz")
        fx = torch.from_numpy(blob["fx"])
        fy = torch.from_numpy(blob["fy"])
        v = torch.from_numpy(blob["payload"])
        tol = float(blob["tolerance"][0])
        expected = torch.from_numpy(blob["expected"])
        assert list(blob["shape"]) == [8, 8, 4]
        for fn in (matching.transfer, matching.transfer_naive):
            with torch.no_grad():
                got = fn(fx, fy, v)
            assert (got - expected).abs().max() < tol


class TestTiled:
    def test_single_tile_degenerates_to_full(self):
        fx, fy, v = rand_maps(11, 4, 4, 6, 3)
        full = matching.transfer(fx, fy, v)
        tiled = matching.transfer_tiled(fx, fy, v, tile=16)
        assert (tiled - full).abs().max() < 1e-6

    @pytest.mark.parametrize("tile", [1, 3, 64, 256, 1024])
    def test_tile_size_invariance(self, tile):
        fx, fy, v = rand_maps(13, 16, 16, 4, 3)
        ref = matching.transfer(fx, fy, v)
        got = matching.transfer_tiled(fx, fy, v, tile=tile)
        assert (got - ref).abs().max() < 1e-6

    def test_matches_naive_on_32x32(self):
        fx, fy, v = rand_maps(17, 32, 32, 4, 3)
        with torch.no_grad():
            expected = matching.transfer_naive(fx, fy, v)
            for tile in (64, 256, 1024):
                got = matching.transfer_tiled(fx, fy, v, tile=tile)
                assert (got - expected).abs().max() < 1e-5

    def test_memory_bound_on_large_maps(self):
        # HW = 16384; the full logit matrix (~2.7e8 entries) is never built
        fx, fy, v = rand_maps(19, 128, 128, 4, 3, dtype=torch.float32)
        matching.stats.reset()
        with torch.no_grad():
            out = matching.transfer_tiled(fx, fy, v, tile=1024)
        assert out.shape == (128, 128, 3)
        assert torch.isfinite(out).all()
        assert matching.stats.peak_block_entries <= 1024 * 128 * 128
        assert matching.stats.peak_block_entries < 16384 * 16384

    def test_bad_tile_rejected(self):
        fx, fy, v = rand_maps(23, 2, 2, 3, 3)
        with pytest.raises(ValidationError):
            matching.transfer_tiled(fx, fy, v, tile=0)


class TestProperties:
    def test_weight_rows_sum_to_one(self):
        for seed in range(25):
            fx, fy, _ = rand_maps(seed, 3, 4, 5, 1)
            for row in range(12):
                w = matching.transfer_weights_row(fx, fy, row)
                assert abs(w.sum().item() - 1.0) < 1e-6
                assert (w >= 0).all()

    def test_permutation_equivariance_in_x(self):
        for seed in range(10):
            fx, fy, v = rand_maps(seed, 3, 4, 4, 2)
            n = 12
            perm = torch.randperm(n, generator=torch.Generator().manual_seed(seed + 100))
            fx_p = fx.reshape(n, -1)[perm].reshape(3, 4, 4)
            base = matching.transfer(fx, fy, v).reshape(n, -1)
            permuted = matching.transfer(fx_p, fy, v).reshape(n, -1)
            assert (permuted - base[perm]).abs().max() < 1e-6

    def test_joint_permutation_invariance_in_y(self):
        for seed in range(10):
            fx, fy, v = rand_maps(seed, 4, 3, 4, 2)
            n = 12
            perm = torch.randperm(n, generator=torch.Generator().manual_seed(seed + 200))
            fy_p = fy.reshape(n, -1)[perm].reshape(4, 3, 4)
            v_p = v.reshape(n, -1)[perm].reshape(4, 3, 2)
            base = matching.transfer(fx, fy, v)
            permuted = matching.transfer(fx, fy_p, v_p)
            assert (permuted - base).abs().max() < 1e-6


def finite_difference_grads(fn, inputs, h=1e-4):
    """Central-difference gradient of a scalar fn w.r.t. each input tensor."""
    grads = []
    for t in inputs:
        g = torch.zeros_like(t)
        flat = t.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.numel()):
            orig = flat[k].item()
            flat[k] = orig + h
            hi = fn(*inputs).item()
            flat[k] = orig - h
            lo = fn(*inputs).item()
            flat[k] = orig
            gflat[k] = (hi - lo) / (2 * h)
        grads.append(g)
    return grads


def relative_error(a, b):
    denom = max(a.abs().max().item(), b.abs().max().item(), 1e-12)
    return (a - b).abs().max().item() / denom


class TestGradients:
    @pytest.mark.parametrize(
        "impl",
        [
            matching.transfer,
            lambda fx, fy, v: matching.transfer_tiled(fx, fy, v, tile=5),
            matching.transfer_naive,
        ],
        ids=["vectorized", "tiled", "naive"],
    )
    def test_gradients_match_finite_differences(self, impl):
        fx, fy, v = rand_maps(31, 4, 4, 3, 3)
        for t in (fx, fy, v):
            t.requires_grad_(True)

        def loss(a, b, c):
            return impl(a, b, c).sum()

        loss(fx, fy, v).backward()
        with torch.no_grad():
            fd = finite_difference_grads(loss, [fx.detach(), fy.detach(), v.detach()])
        for got, want in zip((fx.grad, fy.grad, v.grad), fd):
            assert relative_error(got, want) < 1e-3

    def test_tiled_gradients_match_vectorized(self):
        fx, fy, v = rand_maps(37, 5, 5, 4, 3)
        grads = {}
        for name, impl in (
            ("full", matching.transfer),
            ("tiled", lambda a, b, c: matching.transfer_tiled(a, b, c, tile=7)),
        ):
            ins = [t.clone().requires_grad_(True) for t in (fx, fy, v)]
            impl(*ins).square().sum().backward()
            grads[name] = [t.grad for t in ins]
        for g_full, g_tiled in zip(grads["full"], grads["tiled"]):
            assert (g_full - g_tiled).abs().max() < 1e-9


class TestInstrumentation:
    def test_call_counter(self):
        fx, fy, v = rand_maps(41, 2, 2, 3, 3)
        matching.stats.reset()
        matching.transfer(fx, fy, v)
        matching.transfer_tiled(fx, fy, v, tile=2)
        with torch.no_grad():
            matching.transfer_naive(fx, fy, v)
        assert matching.stats.calls == 3

    def test_weights_row_out_of_range(self):
        fx, fy, _ = rand_maps(43, 2, 2, 3, 3)
        with pytest.raises(DimensionError):
            matching.transfer_weights_row(fx, fy, 4)
