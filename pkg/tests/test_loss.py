"""Weighted BCE/IoU loss and deep supervision."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from mixseg.loss import (CLAMP_EPS, resize_target, scale_loss, total_loss,
                         wbce, weight_map, wiou)
from mixseg.tensor import ShapeError, Tensor


def random_gt(rng, h=8, w=8, p=0.4):
    return (rng.uniform(0, 1, (1, h, w)) < p).astype(float)


class TestWeightMap:
    def test_all_zeros_gives_ones(self):
        assert np.array_equal(weight_map(np.zeros((1, 8, 8))), np.ones((1, 8, 8)))

    def test_all_ones_gives_ones_in_deep_interior(self):
        # window radius is 15, so only the centre of a 40x40 map is interior
        g = np.ones((1, 40, 40))
        w = weight_map(g)
        assert np.allclose(w[0, 18:22, 18:22], 1.0, atol=1e-9)

    def test_square_matches_pool_oracle_and_separates_classes(self, rng):
        g = np.zeros((1, 8, 8))
        g[0, 2:5, 3:6] = 1.0
        w = weight_map(g)
        assert np.allclose(w, oracles.weight_map_scalar(g), atol=1e-9)
        fg = g[0].astype(bool)
        assert w[0][fg].min() > w[0][~fg].max()

    def test_boundary_exceeds_interior_on_large_mask(self):
        g = np.zeros((1, 48, 48))
        g[0, 14:34, 14:34] = 1.0
        w = weight_map(g)
        boundary = w[0, 14, 24]   # edge row of the square
        interior = w[0, 24, 24]   # centre of the square
        assert boundary > interior

    def test_non_binary_rejected(self, rng):
        with pytest.raises(ValueError, match="binary"):
            weight_map(rng.uniform(0, 1, (1, 4, 4)) * 0.5 + 0.2)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
    def test_range_always_one_to_six(self, h, w, seed):
        g = (np.random.default_rng(seed).uniform(0, 1, (1, h, w)) < 0.5)
        wmap = weight_map(g.astype(float))
        assert wmap.min() >= 1.0 and wmap.max() <= 6.0


class TestWbce:
    def test_perfect_prediction_near_zero(self, rng):
        g = random_gt(rng)
        w = weight_map(g)
        value = wbce(Tensor(g), g, w).item()
        assert 0.0 <= value <= -math.log(1.0 - CLAMP_EPS) + 1e-12

    def test_half_everywhere_is_log2(self, rng):
        g = random_gt(rng)
        w = weight_map(g)
        value = wbce(Tensor(np.full(g.shape, 0.5)), g, w).item()
        assert np.isclose(value, math.log(2.0), atol=1e-12)

    def test_matches_scalar_oracle(self, rng):
        g = random_gt(rng, 2, 2, 0.5)
        w = weight_map(g)
        p = rng.uniform(0.01, 0.99, g.shape)
        assert np.isclose(wbce(Tensor(p), g, w).item(),
                          oracles.wbce_scalar(p, g, w), atol=1e-10)

    def test_weight_scaling_invariance(self, rng):
        g = random_gt(rng)
        w = weight_map(g)
        p = rng.uniform(0.05, 0.95, g.shape)
        a = wbce(Tensor(p), g, w).item()
        b = wbce(Tensor(p), g, 3.7 * w).item()
        assert np.isclose(a, b, rtol=1e-12)

    def test_shape_mismatch_rejected(self, rng):
        g = random_gt(rng)
        with pytest.raises(ShapeError):
            wbce(Tensor(np.full((1, 4, 4), 0.5)), g, weight_map(g))


class TestWiou:
    def test_equal_binary_masks_zero(self, rng):
        g = random_gt(rng)
        w = weight_map(g)
        assert wiou(Tensor(g), g, w).item() < 1e-5

    def test_complement_is_one(self, rng):
        g = random_gt(rng)
        w = weight_map(g)
        assert np.isclose(wiou(Tensor(1.0 - g), g, w).item(), 1.0, atol=1e-5)

    def test_matches_scalar_oracle(self, rng):
        g = random_gt(rng, 2, 2, 0.5)
        w = weight_map(g)
        p = rng.uniform(0.01, 0.99, g.shape)
        assert np.isclose(wiou(Tensor(p), g, w).item(),
                          oracles.wiou_scalar(p, g, w), atol=1e-10)

    def test_empty_on_empty_defined_as_zero(self):
        g = np.zeros((1, 4, 4))
        assert wiou(Tensor(np.zeros((1, 4, 4))), g, weight_map(g)).item() == 0.0

    def test_weight_scaling_invariance(self, rng):
        g = random_gt(rng)
        w = weight_map(g)
        p = rng.uniform(0.05, 0.95, g.shape)
        assert np.isclose(wiou(Tensor(p), g, w).item(),
                          wiou(Tensor(p), g, 0.25 * w).item(), rtol=1e-12)


class TestTotalLoss:
    def _masks_for(self, g, rng=None, perfect=True):
        shapes = [(1, 8, 8), (1, 6, 6), (1, 5, 5), (1, 4, 4)]
        masks = []
        for shape in shapes:
            target = resize_target(g, shape[1], shape[2])
            if perfect:
                masks.append(Tensor(target))
            else:
                masks.append(Tensor(rng.uniform(0.05, 0.95, shape)))
        return masks

    def test_perfect_masks_near_zero(self, rng):
        g = random_gt(rng)
        masks = self._masks_for(g)
        assert total_loss(masks, g).item() < 1e-5

    def test_equals_sum_of_per_scale_losses(self, rng):
        g = random_gt(rng)
        masks = self._masks_for(g, rng, perfect=False)
        total = total_loss(masks, g).item()
        parts = sum(scale_loss(m, resize_target(g, m.shape[1], m.shape[2])).item()
                    for m in masks)
        assert np.isclose(total, parts, rtol=1e-12)

    def test_fixed_case_matches_composed_oracles(self, rng):
        g = random_gt(rng, 64, 64, 0.3)
        gen = np.random.default_rng(3)
        masks = [Tensor(gen.uniform(0.01, 0.99, (1, s, s)))
                 for s in (64, 32, 16, 8)]
        got = total_loss(masks, g).item()
        want = 0.0
        for m in masks:
            target = resize_target(g, m.shape[1], m.shape[2])
            w = oracles.weight_map_scalar(target)
            want += oracles.wiou_scalar(m.data, target, w)
            want += oracles.wbce_scalar(m.data, target, w)
        assert np.isclose(got, want, rtol=1e-9)

    def test_nonnegative(self, rng):
        g = random_gt(rng)
        masks = self._masks_for(g, rng, perfect=False)
        assert total_loss(masks, g).item() >= 0.0

    def test_native_size_mismatch_rejected(self, rng):
        g = random_gt(rng)
        masks = [Tensor(np.full((1, 9, 8), 0.5))] + self._masks_for(g)[1:]
        with pytest.raises(ShapeError):
            total_loss(masks, g)

    def test_targets_rebinarized(self, rng):
        g = random_gt(rng, 9, 9, 0.5)
        target = resize_target(g, 5, 5)
        assert np.isin(target, (0.0, 1.0)).all()
