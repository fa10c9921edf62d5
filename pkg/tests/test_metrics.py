import json

import numpy as np
import pytest

from autograd.tensor import UsageError
from metrics import (
    corridor_coverage,
    covered_corridors,
    evaluate_predictions,
    metric_records,
    min_ade_k,
    min_fde_k,
    miss_rate_k,
    offroad_rate,
    read_records,
    top_k_modes,
    weighted_mean,
    write_records,
)


@pytest.fixture
def gt():
    t = np.arange(1, 13, dtype=np.float64)
    return np.stack([np.full(12, 16.0), 26.0 - 1.5 * t], axis=-1)[None]


@pytest.fixture
def drivable():
    mask = np.zeros((1, 32, 32), dtype=np.uint8)
    mask[0, :, 11:22] = 1
    return mask


class TestDisplacementMetrics:
    def test_exact_prediction(self, gt, drivable):
        mu = np.repeat(gt[:, None], 5, axis=1)
        values = evaluate_predictions(mu, np.full((1, 5), 0.2), gt, drivable, modes=5)
        assert values == {"minADE_5": 0.0, "minFDE_1": 0.0, "MR_5": 0.0, "OffRoadRate": 0.0}

    def test_three_four_offset(self, gt):
        mu = (gt + [3.0, 4.0])[:, None]
        assert min_ade_k(mu, gt, 1) == pytest.approx(5.0)
        assert min_fde_k(mu, gt, 1) == pytest.approx(5.0)
        assert miss_rate_k(mu, gt, 1) == 1.0

    def test_one_mode_strays_once(self, gt):
        mu = np.repeat(gt[:, None], 5, axis=1)
        mu[0, 2, 7, 0] += 2.1
        pi = np.array([[0.1, 0.1, 0.6, 0.1, 0.1]])
        assert miss_rate_k(mu, gt, 5, pi) == 0.0
        # the straying mode ranks first
        assert miss_rate_k(mu, gt, 1, pi) == 1.0
        assert min_fde_k(mu, gt, 1, pi) == 0.0

    def test_threshold_is_strict(self, gt):
        mu = (gt + [2.0, 0.0])[:, None]
        assert miss_rate_k(mu, gt, 1) == 0.0

    def test_resolution_scales_distances(self, gt):
        mu = (gt + [3.0, 4.0])[:, None]
        assert min_ade_k(mu, gt, 1, resolution=0.5) == pytest.approx(2.5)
        assert miss_rate_k(mu, gt, 1, resolution=0.25) == 0.0

    def test_k_larger_than_modes(self, gt):
        with pytest.raises(UsageError):
            min_ade_k(np.repeat(gt[:, None], 3, axis=1), gt, 4)
        with pytest.raises(UsageError):
            top_k_modes(None, 0, 3)

    def test_top_k_follows_probabilities(self):
        pi = np.array([[0.1, 0.5, 0.2, 0.2]])
        assert top_k_modes(pi, 3, 4).tolist() == [[1, 2, 3]]
        assert top_k_modes(None, 2, 4).tolist() == [[0, 1]]

    def test_monotonic_in_k(self, rng):
        gt = rng.normal(size=(6, 12, 2)) * 5
        mu = gt[:, None] + rng.normal(scale=3.0, size=(6, 5, 12, 2))
        pi = rng.dirichlet(np.ones(5), size=6)
        ade = [min_ade_k(mu, gt, k, pi) for k in range(1, 6)]
        mr = [miss_rate_k(mu, gt, k, pi) for k in range(1, 6)]
        assert all(a >= b for a, b in zip(ade, ade[1:]))
        assert all(a >= b for a, b in zip(mr, mr[1:]))

    def test_concatenation_is_weighted_mean(self, rng):
        gt = rng.normal(size=(7, 12, 2))
        mu = gt[:, None] + rng.normal(size=(7, 3, 12, 2))
        whole = min_ade_k(mu, gt, 3)
        parts = [min_ade_k(mu[:4], gt[:4], 3), min_ade_k(mu[4:], gt[4:], 3)]
        assert weighted_mean(parts, [4, 3]) == pytest.approx(whole)
        assert weighted_mean([], [], default=None) is None


class TestOffroadRate:
    def test_inside_corridor(self, gt, drivable):
        mu = np.repeat(gt[:, None], 3, axis=1)
        assert offroad_rate(mu, drivable) == 0.0

    def test_any_waypoint_counts(self, gt, drivable):
        mu = np.repeat(gt[:, None], 4, axis=1)
        mu[0, 1, 5, 0] = 25.0
        assert offroad_rate(mu, drivable) == 0.25

    def test_leaving_the_grid_is_offroad(self, gt):
        mu = np.repeat(gt[:, None], 2, axis=1)
        mu[0, 0, -1, 1] = -0.5
        assert offroad_rate(mu, np.ones((32, 32))) == 0.5

    def test_nearest_cell_lookup(self, drivable):
        # u = 21.9 still lies in column 21
        mu = np.array([[[[21.9, 10.0]], [[22.0, 10.0]]]])
        assert offroad_rate(mu, drivable) == 0.5


class TestCorridorCoverage:
    corridors = [np.array([[10.0, 30.0], [10.0, 0.0]]), np.array([[20.0, 30.0], [20.0, 0.0]])]

    def test_two_corridors_reached(self):
        mu = np.zeros((1, 3, 12, 2))
        mu[0, :, -1] = [[10.5, 4.0], [19.0, 3.0], [15.0, 2.0]]
        assert covered_corridors(mu[0, :, -1], self.corridors, 3.0) == {0, 1}
        assert corridor_coverage(mu, [self.corridors]) == 1.0

    def test_collapsed_modes(self):
        mu = np.zeros((2, 3, 12, 2))
        mu[:, :, -1] = [10.0, 5.0]
        assert corridor_coverage(mu, [self.corridors, self.corridors]) == 0.0

    def test_single_corridor_samples_are_skipped(self):
        mu = np.zeros((2, 2, 12, 2))
        mu[0, :, -1] = [[10.0, 1.0], [20.0, 1.0]]
        assert corridor_coverage(mu, [self.corridors, self.corridors[:1]]) == 1.0
        assert corridor_coverage(mu[1:], [self.corridors[:1]]) == 0.0

    def test_ambiguous_endpoint_is_not_owned(self):
        assert covered_corridors(np.array([[15.0, 5.0]]), self.corridors, 6.0) == set()


class TestReport:
    def test_records(self):
        records = metric_records({"minADE_5": 1.2, "OffRoadRate": 0.1}, 40, "abc", variant="baseline")
        assert records[0] == {
            "metric": "minADE",
            "k": 5,
            "value": 1.2,
            "n_samples": 40,
            "config_hash": "abc",
            "variant": "baseline",
        }
        assert records[1]["metric"] == "OffRoadRate" and records[1]["k"] is None

    def test_write_and_append(self, tmp_path):
        path = str(tmp_path / "metrics.jsonl")
        write_records(metric_records({"MR_5": 0.5}, 4, "h"), path)
        write_records(metric_records({"minFDE_1": 2.0}, 4, "h"), path, append=True)
        lines = (tmp_path / "metrics.jsonl").read_text().splitlines()
        assert list(json.loads(lines[0])) == sorted(json.loads(lines[0]))
        assert [r["metric"] for r in read_records(path)] == ["MR", "minFDE"]

    def test_write_into_missing_directory(self, tmp_path):
        with pytest.raises(OSError):
            write_records([], str(tmp_path / "missing" / "m.jsonl"))
