import math

import numpy as np
import pytest

from scene.grid import DESK_GRID, FULL_GRID, GridConfig
from scene.raster import rasterize
from scene.synth import DT, SCENE_KINDS, SceneSpec, empty_scene, generate_scene, point_at, trace


class TestGrid:
    def test_metric_round_trip(self):
        xy = np.array([[0.0, 0.0], [3.5, -2.25], [-10.0, 40.0]])
        np.testing.assert_allclose(FULL_GRID.to_metric(FULL_GRID.to_grid(xy)), xy)

    def test_ego_anchor(self):
        np.testing.assert_array_equal(DESK_GRID.to_grid(np.zeros(2)), [24.0, 61.0])

    def test_forward_is_up(self):
        u, v = DESK_GRID.to_grid(np.array([0.0, 10.0]))
        assert (u, v) == (24.0, 51.0)

    def test_cell_centers(self):
        centers = GridConfig(3, 4, 1.0, 1, 1).cell_centers()
        assert centers.shape == (3, 4, 2)
        np.testing.assert_array_equal(centers[2, 1], [1.5, 2.5])

    def test_rejects_anchor_outside(self):
        with pytest.raises(ValueError):
            GridConfig(10, 10, 1.0, 10, 5)


class TestTrace:
    def test_straight_line_spacing(self):
        poly = trace([("line", 10.0)], start=(0.0, 0.0))
        assert len(poly) == 21
        np.testing.assert_allclose(poly[-1], [0.0, 10.0], atol=1e-12)

    def test_left_quarter_turn(self):
        poly = trace([("arc", 10.0, math.pi / 2)], start=(0.0, 0.0))
        np.testing.assert_allclose(poly[-1], [-10.0, 10.0], atol=1e-9)

    def test_point_at_interpolates(self):
        poly = np.array([[0.0, 0.0], [0.0, 4.0], [3.0, 4.0]])
        np.testing.assert_allclose(point_at(poly, 5.5), [1.5, 4.0])


class TestGenerateScene:
    @pytest.mark.parametrize("kind", SCENE_KINDS)
    def test_deterministic(self, kind):
        a = generate_scene(42, kind)
        b = generate_scene(42, kind)
        assert a.speed == b.speed
        np.testing.assert_array_equal(a.gt_future, b.gt_future)
        assert len(a.agents) == len(b.agents)
        for x, y in zip(a.agents, b.agents):
            np.testing.assert_array_equal(x.poses, y.poses)
        for x, y in zip(a.drivable, b.drivable):
            np.testing.assert_array_equal(x, y)

    def test_seeds_differ(self):
        assert generate_scene(1, "curve").speed != generate_scene(2, "curve").speed

    @pytest.mark.parametrize("seed", range(5))
    def test_fork_corridors_diverge(self, seed):
        scene = generate_scene(seed, "fork", speed=10.0)
        assert len(scene.corridors) >= 2
        a, b = scene.corridor_point(0, 6.0), scene.corridor_point(1, 6.0)
        assert np.linalg.norm(a - b) > 10.0

    def test_zero_speed_future_stays_put(self):
        scene = generate_scene(3, "straight", speed=0.0)
        current = scene.ego.poses[-1, :2]
        np.testing.assert_allclose(scene.gt_future, np.tile(current, (scene.future_steps, 1)), atol=1e-12)

    @pytest.mark.parametrize("kind", SCENE_KINDS)
    def test_ego_at_origin_heading_up(self, kind):
        scene = generate_scene(11, kind)
        assert scene.ego_index == len(scene.agents) - 1
        np.testing.assert_allclose(scene.ego.poses[-1, :2], [0.0, 0.0], atol=1e-9)
        assert abs(scene.ego.poses[-1, 2] - math.pi / 2) < 0.05

    def test_constant_speed_spacing(self):
        scene = generate_scene(5, "straight", speed=8.0)
        steps = np.linalg.norm(np.diff(scene.gt_future, axis=0), axis=1)
        np.testing.assert_allclose(steps, 8.0 * DT, rtol=1e-9)

    @pytest.mark.parametrize("kind", SCENE_KINDS)
    def test_future_stays_on_desk_grid(self, kind):
        for seed in range(8):
            uv = DESK_GRID.to_grid(generate_scene(seed, kind, grid=DESK_GRID).gt_future)
            assert (uv[:, 0] >= 0).all() and (uv[:, 0] <= DESK_GRID.width).all()
            assert (uv[:, 1] >= 0).all() and (uv[:, 1] <= DESK_GRID.height).all()

    @pytest.mark.parametrize("grid", [DESK_GRID, FULL_GRID], ids=["desk", "full"])
    @pytest.mark.parametrize("kind", SCENE_KINDS)
    def test_future_lies_on_drivable_cells(self, grid, kind):
        for seed in range(10):
            sample = rasterize(generate_scene(seed, kind, grid=grid), grid)
            cols, rows = np.floor(sample.gt).astype(int).T
            assert ((rows >= 0) & (rows < grid.height) & (cols >= 0) & (cols < grid.width)).all()
            assert sample.drivable_mask[rows, cols].all(), f"seed {seed}"

    def test_history_and_future_lengths(self):
        scene = generate_scene(0, "t_junction", history_steps=5, future_steps=8)
        assert scene.gt_future.shape == (8, 2)
        assert all(agent.poses.shape == (5, 3) for agent in scene.agents)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            generate_scene(0, "roundabout")

    def test_rejects_inconsistent_future(self):
        with pytest.raises(ValueError):
            SceneSpec("straight", 0, [], [], [], [], [], -1, np.zeros((3, 2)), future_steps=12)

    def test_empty_scene(self):
        scene = empty_scene()
        assert scene.agents == [] and scene.ego_index == -1

    def test_translated(self):
        scene = generate_scene(9, "curve")
        moved = scene.translated(2.0, -1.0)
        np.testing.assert_allclose(moved.gt_future - scene.gt_future, np.tile([2.0, -1.0], (scene.future_steps, 1)))
        np.testing.assert_allclose(moved.ego.poses[:, 2], scene.ego.poses[:, 2])
