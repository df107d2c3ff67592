"""Rank helpers shared by the ensemble proxy and the evaluation metrics.

Convention everywhere: rank 1 is the best (highest value); ties receive
the average of the ranks they span.
"""

from __future__ import annotations

import numpy as np


def average_ranks(values: np.ndarray, higher_is_better: bool = True) -> np.ndarray:
    """Fractional ranks of ``values`` (1 = best). Ties share the mean rank."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1D value array, got shape {v.shape}")
    key = -v if higher_is_better else v
    order = np.argsort(key, kind="stable")
    ranks = np.empty(len(v), dtype=np.float64)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and key[order[j + 1]] == key[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def normalized_ranks(values: np.ndarray, higher_is_better: bool = True) -> np.ndarray:
    """Map values to [0, 1] where 1 is the best rank; a single element maps to 1."""
    v = np.asarray(values, dtype=np.float64)
    n = len(v)
    if n == 1:
        return np.ones(1)
    r = average_ranks(v, higher_is_better)
    return (n - r) / (n - 1)
