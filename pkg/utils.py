"""Small helpers shared by the command implementations"""

import logging
import os
from typing import Dict, List, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

THREADS_ENV = "CASP_THREADS"


def worker_count(default: int = None) -> int:
    """
    Size of the worker pool.

    Args:
        default (int): Used when CASP_THREADS is unset; falls back to the CPU count.

    Returns:
        int: At least 1, capped by CASP_THREADS when it is set.
    """
    cpus = default or os.cpu_count() or 1
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return max(1, cpus)
    try:
        cap = int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer {THREADS_ENV}={raw!r}")
        return max(1, cpus)
    return max(1, min(cpus, cap))


def ensure_dir(path: str) -> str:
    if path:
        os.makedirs(path, exist_ok=True)
    return path


def split_counts(total: int, fractions: Sequence[Tuple[str, float]]) -> Dict[str, int]:
    """
    Distribute ``total`` items over named fractions (largest remainder).

    Ties in the remainder go to the name listed first.
    """
    raw = [(name, total * fraction) for name, fraction in fractions]
    counts = {name: int(np.floor(value)) for name, value in raw}
    left = total - sum(counts.values())
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i][1] - counts[raw[i][0]]), i))
    for i in order[:left]:
        counts[raw[i][0]] += 1
    return counts


def batches(indices: Sequence[int], size: int) -> List[Sequence[int]]:
    return [indices[i : i + size] for i in range(0, len(indices), size)]


def median(values: Sequence[float]) -> float:
    finite = [v for v in values if v is not None]
    return float(np.median(finite)) if finite else float("nan")
