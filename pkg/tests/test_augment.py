import math

import numpy as np
import pytest

from scene.augment import MAX_ROTATION, MAX_SHIFT, apply_transform, augment, grid_rotation, transform_points
from scene.raster import HEADING, rasterize
from scene.synth import generate_scene


@pytest.fixture
def straight_sample(tiny_grid):
    return rasterize(generate_scene(21, "straight", grid=tiny_grid, speed=5.0), tiny_grid)


class TestTransformPoints:
    def test_rotation_about_anchor_keeps_anchor(self):
        anchor = np.array([16.0, 26.0])
        out = transform_points(anchor[None], anchor, 0.7, np.zeros(2))
        np.testing.assert_allclose(out, anchor[None])

    def test_quarter_turn_moves_forward_to_left(self):
        # one cell ahead (v - 1) turns to one cell left (u - 1) for +90 degrees
        anchor = np.zeros(2)
        out = transform_points(np.array([[0.0, -1.0]]), anchor, math.pi / 2, np.zeros(2))
        np.testing.assert_allclose(out, [[-1.0, 0.0]], atol=1e-12)

    def test_grid_rotation_is_orthonormal(self):
        rot = grid_rotation(1.1)
        np.testing.assert_allclose(rot @ rot.T, np.eye(2), atol=1e-12)


class TestApplyTransform:
    def test_identity(self, straight_sample):
        out = apply_transform(straight_sample, 0.0, (0.0, 0.0))
        assert out.equals(straight_sample)

    def test_pure_shift_along_x(self, straight_sample):
        out = apply_transform(straight_sample, 0.0, (3.0, 0.0))
        np.testing.assert_allclose(out.gt[:, 0] - straight_sample.gt[:, 0], 3.0, atol=1e-5)
        np.testing.assert_allclose(out.gt[:, 1], straight_sample.gt[:, 1], atol=1e-5)
        np.testing.assert_allclose(out.history[:, 0] - straight_sample.history[:, 0], 3.0, atol=1e-5)
        np.testing.assert_array_equal(out.ego_cell, straight_sample.ego_cell + [0.0, 3.0])
        np.testing.assert_array_equal(out.static[:, 3:], straight_sample.static[:, :-3])
        assert not out.static[:, :3].any()

    def test_shifted_dynamic_is_copied_exactly(self, straight_sample):
        out = apply_transform(straight_sample, 0.0, (0.0, 2.0))
        np.testing.assert_allclose(out.dynamic[:, 2:], straight_sample.dynamic[:, :-2], atol=1e-6)

    def test_rotation_turns_ego_heading(self, straight_sample, tiny_grid):
        theta = math.radians(60.0)
        out = apply_transform(straight_sample, theta, (0.0, 0.0))
        row, col = tiny_grid.ego_row, tiny_grid.ego_col
        before = straight_sample.dynamic[-1, row, col, HEADING]
        after = out.dynamic[-1, row, col, HEADING]
        assert after == pytest.approx((before + theta) % (2 * math.pi), abs=1e-5)

    def test_rotation_turns_velocity(self, straight_sample, tiny_grid):
        theta = math.radians(60.0)
        out = apply_transform(straight_sample, theta, (0.0, 0.0))
        vx, vy = out.dynamic[-1, tiny_grid.ego_row, tiny_grid.ego_col, 0:2]
        assert vx == pytest.approx(-5.0 * math.sin(theta), abs=1e-4)
        assert vy == pytest.approx(5.0 * math.cos(theta), abs=1e-4)

    def test_rotation_keeps_ego_and_turns_future(self, straight_sample):
        theta = math.radians(30.0)
        out = apply_transform(straight_sample, theta, (0.0, 0.0))
        np.testing.assert_allclose(out.history[-1], straight_sample.history[-1], atol=1e-5)
        # straight ahead turns towards the left (smaller u)
        assert (out.gt[:, 0] < straight_sample.gt[:, 0] - 1e-3).all()
        dist = np.linalg.norm(out.gt - out.history[-1], axis=1)
        np.testing.assert_allclose(dist, np.linalg.norm(straight_sample.gt - straight_sample.history[-1], axis=1),
                                   atol=1e-4)

    def test_masks_stay_binary(self, straight_sample):
        out = apply_transform(straight_sample, 0.4, (1.5, -2.0))
        assert set(np.unique(out.static)) <= {0, 1}
        assert set(np.unique(out.drivable_mask)) <= {0, 1}
        assert out.static.dtype == np.uint8 and out.dynamic.dtype == np.float32

    def test_input_untouched(self, straight_sample):
        before = straight_sample.dynamic.copy()
        apply_transform(straight_sample, 0.5, (1.0, 1.0))
        np.testing.assert_array_equal(straight_sample.dynamic, before)


class TestAugment:
    def test_never_when_probability_zero(self, straight_sample, rng):
        assert augment(straight_sample, rng, probability=0.0) is straight_sample

    def test_always_when_probability_one(self, straight_sample, rng):
        out = augment(straight_sample, rng, probability=1.0)
        assert out is not straight_sample
        shift = out.ego_cell - straight_sample.ego_cell
        assert (np.abs(shift) <= MAX_SHIFT).all()

    def test_forced_values_skip_coin_flip(self, straight_sample, rng):
        out = augment(straight_sample, rng, theta=0.0, shift=(3.0, 0.0), probability=0.0)
        np.testing.assert_allclose(out.gt[:, 0] - straight_sample.gt[:, 0], 3.0, atol=1e-5)

    def test_same_generator_state_same_result(self, straight_sample):
        a = augment(straight_sample, np.random.default_rng(5), probability=1.0)
        b = augment(straight_sample, np.random.default_rng(5), probability=1.0)
        assert a.equals(b)

    def test_rotation_range(self, straight_sample):
        rng = np.random.default_rng(0)
        for _ in range(20):
            out = augment(straight_sample, rng, probability=1.0)
            start = straight_sample.history[-1]
            moved = out.gt[-1] - (start + (out.ego_cell - straight_sample.ego_cell)[::-1])
            original = straight_sample.gt[-1] - start
            cos = np.dot(moved, original) / (np.linalg.norm(moved) * np.linalg.norm(original))
            assert math.acos(np.clip(cos, -1.0, 1.0)) <= MAX_ROTATION + 1e-4
