"""Objective function identities and gradient checks."""

import pytest
import torch

from chromawarp.errors import ConfigError, DimensionError, ValidationError
from chromawarp.losses import LossConfig, color_loss, loss_terms, perceptual_loss, total_loss
from chromawarp.providers import FixedRandomPerceptualProvider


@pytest.fixture(scope="module")
def provider():
    return FixedRandomPerceptualProvider(seed=0)


def pair(seed=0, size=8, batch=1):
    gen = torch.Generator().manual_seed(seed)
    return (
        torch.rand(batch, 3, size, size, generator=gen, dtype=torch.float64),
        torch.rand(batch, 3, size, size, generator=gen, dtype=torch.float64),
    )


class TestColorLoss:
    def test_identical_images_zero(self):
        y, _ = pair(1)
        assert color_loss(y, y).item() == 0.0

    def test_unit_separation(self):
        y = torch.ones(1, 3, 4, 4)
        g = torch.zeros(1, 3, 4, 4)
        assert color_loss(y, g).item() == pytest.approx(1.0)

    def test_quarter_separation(self):
        y = torch.ones(1, 3, 4, 4)
        g = torch.full((1, 3, 4, 4), 0.75)
        assert color_loss(y, g).item() == pytest.approx(0.25)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            color_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 8))


class TestPerceptualLoss:
    def test_identical_images_zero(self, provider):
        y, _ = pair(2)
        assert perceptual_loss(y, y, provider).item() == 0.0

    def test_symmetry(self, provider):
        y, g = pair(3)
        ab = perceptual_loss(y, g, provider).item()
        ba = perceptual_loss(g, y, provider).item()
        assert ab == pytest.approx(ba, rel=1e-12)

    def test_structural_difference_is_positive(self, provider):
        # checkerboard vs blank
        idx = torch.arange(16)
        checker = ((idx[:, None] + idx[None, :]) % 2).double()
        y = checker.expand(3, 16, 16)[None]
        g = torch.full_like(y, 0.5)
        assert perceptual_loss(y, g, provider).item() > 0.01

    def test_unavailable_depth_rejected(self, provider):
        y, g = pair(4)
        with pytest.raises(ConfigError):
            perceptual_loss(y, g, provider, depths=(1, 99))


class TestTotalLoss:
    def test_identical_images_zero(self, provider):
        y, _ = pair(5)
        assert total_loss(y, y, LossConfig(), provider).item() == 0.0

    def test_color_only_weighting(self):
        y, g = pair(6)
        cfg = LossConfig(lambda_perceptual=0.0)
        assert total_loss(y, g, cfg).item() == pytest.approx(
            10.0 * color_loss(y, g).item(), rel=1e-12
        )

    def test_perceptual_only_weighting(self, provider):
        y, g = pair(7)
        cfg = LossConfig(lambda_color=0.0, lambda_perceptual=1.0)
        assert total_loss(y, g, cfg, provider).item() == pytest.approx(
            perceptual_loss(y, g, provider).item(), rel=1e-12
        )

    def test_defaults(self):
        cfg = LossConfig()
        assert cfg.lambda_color == 10.0
        assert cfg.lambda_perceptual == 2e-2
        assert cfg.depths == (1, 3, 5, 9, 13)

    def test_linearity_in_weights(self, provider):
        y, g = pair(8)
        col = color_loss(y, g).item()
        per = perceptual_loss(y, g, provider).item()
        for lc, lp in ((1.0, 0.0), (0.0, 1.0), (3.5, 0.25), (10.0, 2e-2)):
            cfg = LossConfig(lambda_color=lc, lambda_perceptual=lp)
            want = lc * col + lp * per
            assert total_loss(y, g, cfg, provider).item() == pytest.approx(want, rel=1e-9)

    def test_terms_breakdown(self, provider):
        y, g = pair(9)
        col, per, tot = loss_terms(y, g, LossConfig(), provider)
        assert tot.item() == pytest.approx(10.0 * col.item() + 2e-2 * per.item(), rel=1e-9)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValidationError):
            LossConfig(lambda_color=-1.0)


class TestGradient:
    def test_total_loss_gradient_matches_finite_differences(self, provider):
        torch.manual_seed(10)
        y = torch.rand(1, 3, 8, 8, dtype=torch.float64)
        g = torch.rand(1, 3, 8, 8, dtype=torch.float64, requires_grad=True)
        cfg = LossConfig()
        total_loss(y, g, cfg, provider).backward()
        analytic = g.grad.clone()

        h = 1e-4
        fd = torch.zeros_like(analytic)
        with torch.no_grad():
            flat = g.reshape(-1)
            fd_flat = fd.reshape(-1)
            for k in range(flat.numel()):
                orig = flat[k].item()
                flat[k] = orig + h
                hi = total_loss(y, g, cfg, provider).item()
                flat[k] = orig - h
                lo = total_loss(y, g, cfg, provider).item()
                flat[k] = orig
                fd_flat[k] = (hi - lo) / (2 * h)
        denom = max(analytic.abs().max().item(), fd.abs().max().item(), 1e-12)
        assert (analytic - fd).abs().max().item() / denom < 1e-3
