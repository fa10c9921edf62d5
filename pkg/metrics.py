"""Forecasting metrics and the metrics report.

Trajectories are in grid-frame cells; distances are converted to meters with
the grid resolution.
"""

import json
import logging
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from autograd.tensor import Tensor, UsageError

logger = logging.getLogger(__name__)

MISS_THRESHOLD = 2.0
COVERAGE_TOLERANCE = 3.0


def _array(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)


def top_k_modes(pi, k: int, modes: int) -> np.ndarray:
    """Indices [B, k] of the k most probable modes (stable on ties)."""
    if k < 1 or k > modes:
        raise UsageError(f"k={k} must be within 1..{modes}")
    if pi is None:
        return np.arange(k)[None]
    return np.argsort(-_array(pi), axis=1, kind="stable")[:, :k]


def _errors(mu, gt, k: int, pi, resolution: float) -> np.ndarray:
    """l2 errors [B, k, T] of the top-k modes, in meters."""
    mu, gt = _array(mu), _array(gt)
    idx = top_k_modes(pi, k, mu.shape[1])
    if idx.shape[0] != mu.shape[0]:
        idx = np.broadcast_to(idx, (mu.shape[0], k))
    chosen = np.take_along_axis(mu, idx[:, :, None, None], axis=1)
    return np.linalg.norm(chosen - gt[:, None], axis=-1) * resolution


def min_ade_k(mu, gt, k: int, pi=None, resolution: float = 1.0) -> float:
    """Mean over samples of the best top-k average displacement"""
    return float(_errors(mu, gt, k, pi, resolution).mean(axis=-1).min(axis=1).mean())


def min_fde_k(mu, gt, k: int, pi=None, resolution: float = 1.0) -> float:
    """Mean over samples of the best top-k final displacement"""
    return float(_errors(mu, gt, k, pi, resolution)[..., -1].min(axis=1).mean())


def miss_rate_k(mu, gt, k: int, pi=None, threshold: float = MISS_THRESHOLD, resolution: float = 1.0) -> float:
    """Fraction of samples where every top-k mode strays more than ``threshold`` somewhere"""
    worst = _errors(mu, gt, k, pi, resolution).max(axis=-1)
    return float((worst.min(axis=1) > threshold).mean())


def offroad_rate(mu, drivable_mask) -> float:
    """Fraction of trajectories with any waypoint outside the drivable cells.

    Args:
        mu: [B, M, T, 2] grid-frame (u, v).
        drivable_mask: [B, H, W] or a single [H, W] mask.
    """
    mu = _array(mu)
    mask = np.asarray(drivable_mask).astype(bool)
    if mask.ndim == 2:
        mask = np.broadcast_to(mask, (mu.shape[0],) + mask.shape)
    _, height, width = mask.shape
    cols = np.floor(mu[..., 0]).astype(np.int64)
    rows = np.floor(mu[..., 1]).astype(np.int64)
    inside = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
    batch = np.arange(mu.shape[0])[:, None, None]
    on_road = inside & mask[batch, np.clip(rows, 0, height - 1), np.clip(cols, 0, width - 1)]
    return float((~on_road).any(axis=-1).mean())


def _distance_to_polyline(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Distance from each point [N, 2] to the segments of ``poly`` [P, 2]."""
    a, b = poly[:-1], poly[1:]
    ab = b - a
    denom = np.maximum((ab * ab).sum(-1), 1e-12)
    ap = points[:, None, :] - a[None]
    t = np.clip((ap * ab[None]).sum(-1) / denom, 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(points[:, None, :] - closest, axis=-1).min(axis=1)


def covered_corridors(endpoints: np.ndarray, corridors: Sequence[np.ndarray], tolerance: float) -> set:
    """Corridors that own at least one endpoint.

    An endpoint belongs to a corridor when it lies within ``tolerance`` of it
    and of no other corridor.
    """
    if not len(corridors):
        return set()
    dist = np.stack([_distance_to_polyline(endpoints, c) for c in corridors], axis=1)
    near = dist <= tolerance
    owned = near.sum(axis=1) == 1
    return {int(np.argmax(row)) for row, keep in zip(near, owned) if keep}


def corridor_coverage(
    mu, corridors: Sequence[Sequence[np.ndarray]], tolerance: float = COVERAGE_TOLERANCE, resolution: float = 1.0
) -> float:
    """Fraction of multi-corridor samples whose mode endpoints reach two corridors.

    Args:
        mu: [B, M, T, 2] grid-frame predictions.
        corridors: Per sample, candidate corridor polylines in grid frame.
        tolerance: Distance in meters.
    """
    mu = _array(mu)
    hits, counted = 0, 0
    for sample_mu, sample_corridors in zip(mu, corridors):
        if len(sample_corridors) < 2:
            continue
        counted += 1
        if len(covered_corridors(sample_mu[:, -1], sample_corridors, tolerance / resolution)) >= 2:
            hits += 1
    return hits / counted if counted else 0.0


def evaluate_predictions(mu, pi, gt, drivable, modes: int, resolution: float = 1.0) -> Dict[str, float]:
    """The standard metric set: minADE_M, minFDE_1, MR_M and OffRoadRate"""
    return {
        f"minADE_{modes}": min_ade_k(mu, gt, modes, pi, resolution),
        "minFDE_1": min_fde_k(mu, gt, 1, pi, resolution),
        f"MR_{modes}": miss_rate_k(mu, gt, modes, pi, resolution=resolution),
        "OffRoadRate": offroad_rate(mu, drivable),
    }


def metric_records(values: Dict[str, float], n_samples: int, config_hash: str, **extra) -> List[Dict]:
    """Report records {metric, k, value, n_samples, config_hash}"""
    records = []
    for name, value in values.items():
        metric, _, k = name.partition("_")
        records.append(
            {
                "metric": metric,
                "k": int(k) if k.isdigit() else None,
                "value": value,
                "n_samples": n_samples,
                "config_hash": config_hash,
                **extra,
            }
        )
    return records


def write_records(records: Iterable[Dict], path: str, append: bool = False):
    """Newline-delimited JSON with sorted keys"""
    try:
        with open(path, "a" if append else "w", encoding="utf-8") as f:
            for record in records:
                f.write(json.dumps(record, sort_keys=True) + "\n")
    except OSError as e:
        logger.error(f"Error writing report {path}: {e}")
        raise


def read_records(path: str) -> List[Dict]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def weighted_mean(values: Sequence[float], counts: Sequence[int], default: Optional[float] = None) -> float:
    """Combine per-batch metrics into the metric of the concatenation."""
    total = sum(counts)
    if not total:
        return default
    return float(np.dot(values, counts) / total)
