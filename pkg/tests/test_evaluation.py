"""Metric identities, the sequence protocol, report formats, benchmark."""

import csv
import io
import math

import numpy as np
import pytest

from chromawarp import dataset, demo
from chromawarp.errors import DimensionError, ValidationError
from chromawarp.evaluation import (
    CSV_FIELDS,
    PSNR_CAP,
    EvalReport,
    EvalRow,
    benchmark_time,
    evaluate,
    psnr,
    ssim,
)


def rand_image(seed, size=32):
    rng = np.random.default_rng(seed)
    return rng.random((size, size, 3), dtype=np.float64)


class TestPsnr:
    def test_identical_images_infinite(self):
        img = rand_image(0)
        assert math.isinf(psnr(img, img))

    def test_full_scale_error_is_zero_db(self):
        black = np.zeros((16, 16, 3))
        white = np.ones((16, 16, 3))
        assert psnr(black, white) == pytest.approx(0.0, abs=1e-12)

    def test_monotone_in_noise_level(self):
        rng = np.random.default_rng(1)
        base = np.full((32, 32, 3), 0.5)
        noisy = {}
        for sigma in (1.0, 5.0):
            noise = rng.normal(0, sigma / 255.0, base.shape)
            noisy[sigma] = psnr(base, np.clip(base + noise, 0, 1))
        assert noisy[5.0] < noisy[1.0]

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            psnr(np.zeros((8, 8, 3)), np.zeros((8, 9, 3)))


class TestSsim:
    def test_identical_images_one(self):
        img = rand_image(2)
        assert ssim(img, img) == pytest.approx(1.0, abs=1e-9)

    def test_symmetry(self):
        a, b = rand_image(3), rand_image(4)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_inverted_test_card_scores_low(self):
        # mid-contrast card: smooth gradient plus structure
        ys, xs = np.mgrid[0:48, 0:48] / 48.0
        card = np.stack([0.3 + 0.4 * xs, 0.3 + 0.4 * ys, np.full_like(xs, 0.5)], axis=-1)
        card[12:36, 12:36] = 0.25
        value = ssim(card, 1.0 - card)
        assert value < 0.5

    def test_small_image_rejected(self):
        tiny = np.zeros((8, 8, 3))
        with pytest.raises(ValidationError):
            ssim(tiny, tiny)

    def test_range(self):
        a, b = rand_image(5), rand_image(6)
        assert -1.0 <= ssim(a, b) <= 1.0


@pytest.fixture(scope="module")
def eval_setup(tmp_path_factory):
    """Demo frames + sequences for strides {1, 5}."""
    frames = demo.render_demo_clip()
    shots = dataset.detect_shots(frames)
    sequences = []
    for stride in (1, 5):
        sequences.extend(dataset.build_eval_sequences(shots, frames, stride=stride, seed=7))
    return frames, sequences


class TestEvaluate:
    def test_identity_oracle_maxes_every_row(self, eval_setup):
        frames, sequences = eval_setup
        truth_by_sketch = {}
        for frame in frames:
            key = dataset.synthesize_lineart(frame).tobytes()
            truth_by_sketch[key] = frame

        def oracle(prev_sketch, prev_color, next_sketch):
            return truth_by_sketch[next_sketch.astype(np.float32).tobytes()]

        report = evaluate(oracle, sequences, frames, method="oracle")
        assert report.rows
        for row in report.rows:
            assert row.psnr == pytest.approx(PSNR_CAP)
            assert row.ssim == pytest.approx(1.0, abs=1e-9)
            assert row.n_capped == row.n

    def test_reference_predictor_scores_below_oracle(self, eval_setup):
        frames, sequences = eval_setup
        report = evaluate(lambda sp, cp, sn: cp, sequences, frames, method="copy-ref")
        for row in report.rows:
            assert row.psnr < PSNR_CAP
            assert row.ssim < 1.0
            assert row.interval == row.stride * row.frame

    def test_row_count_is_strides_times_positions(self, eval_setup):
        frames, sequences = eval_setup
        report = evaluate(lambda sp, cp, sn: cp, sequences, frames)
        assert len(report.rows) == 2 * 4  # strides {1, 5} x positions 1..4

    def test_deterministic(self, eval_setup):
        frames, sequences = eval_setup
        a = evaluate(lambda sp, cp, sn: cp, sequences, frames)
        b = evaluate(lambda sp, cp, sn: cp, sequences, frames)
        assert a.rows == b.rows

    def test_empty_sequences_rejected(self, eval_setup):
        frames, _ = eval_setup
        with pytest.raises(ValidationError):
            evaluate(lambda sp, cp, sn: cp, [], frames)


class TestReportFormats:
    @staticmethod
    def toy_report():
        rows = [
            EvalRow("modelA", 1, k, k, 30.24 - k, 0.979 - 0.001 * k, n=5) for k in range(1, 5)
        ] + [
            EvalRow("modelB", 1, k, k, 28.0 - k, 0.95 - 0.001 * k, n=5) for k in range(1, 5)
        ]
        return EvalReport(rows=rows, metadata={"checkpoint": "toy"})

    def test_csv_header_and_rows(self):
        text = self.toy_report().to_csv()
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        assert header == list(CSV_FIELDS)
        rows = list(reader)
        assert len(rows) == 8
        assert rows[0][0] == "modelA"

    def test_table_cell_format(self):
        table = self.toy_report().to_table()
        assert "stride=1" in table
        assert "frame1(iv:1)" in table and "frame4(iv:4)" in table
        assert "29.24/0.9780" in table  # PSNR/SSIM cell, 2dp / 4dp

    def test_merge_keeps_both_methods(self):
        a = EvalReport(rows=[EvalRow("a", 1, 1, 1, 30.0, 0.9, 3)])
        b = EvalReport(rows=[EvalRow("b", 1, 1, 1, 29.0, 0.8, 3)])
        merged = a.merge(b)
        assert merged.methods() == ["a", "b"]

    def test_capped_rows_flagged_in_table(self):
        rows = [EvalRow("m", 1, 1, 1, PSNR_CAP, 1.0, n=2, n_capped=2)]
        table = EvalReport(rows=rows).to_table()
        assert "capped" in table


class TestBenchmark:
    @staticmethod
    def inputs(n=3, size=32):
        rng = np.random.default_rng(8)
        return [
            (
                rng.random((size, size), dtype=np.float32),
                rng.random((size, size, 3), dtype=np.float32),
                rng.random((size, size), dtype=np.float32),
            )
            for _ in range(n)
        ]

    def test_identity_is_near_zero_floor(self):
        result = benchmark_time(lambda sp, cp, sn: cp, self.inputs(), warmup=1, repeats=3)
        assert result.seconds_per_frame < 0.01
        assert result.hardware

    def test_slower_predictor_measures_higher(self):
        import time

        fast = benchmark_time(lambda sp, cp, sn: cp, self.inputs(), repeats=3)

        def slow(sp, cp, sn):
            time.sleep(0.003)
            return cp

        slow_result = benchmark_time(slow, self.inputs(), repeats=3)
        assert slow_result.seconds_per_frame > fast.seconds_per_frame

    def test_too_few_repeats_rejected(self):
        with pytest.raises(ValidationError):
            benchmark_time(lambda sp, cp, sn: cp, self.inputs(), repeats=2)

    def test_csv_shape(self):
        result = benchmark_time(lambda sp, cp, sn: cp, self.inputs(), repeats=3)
        lines = result.to_csv().strip().splitlines()
        assert lines[0] == "seconds_per_frame,frames,repeats,hardware"
        assert len(lines) == 2
