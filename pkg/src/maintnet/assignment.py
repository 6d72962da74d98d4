"""Minimum-cost assignment via the shortest-augmenting-path method.

Solves square assignment problems exactly in O(n^3).  Rows are engineers,
columns are jobs; callers pad unbalanced problems with zero-cost dummy
columns before calling.
"""
from __future__ import annotations

import numpy as np

from .errors import ValidationError

__all__ = ["hungarian"]


def hungarian(cost_matrix: np.ndarray) -> tuple[np.ndarray, float]:
    """Return (assignment, total_cost) for a square non-negative matrix.

    ``assignment[i]`` is the column matched to row i; the total cost is
    the exact minimum over all permutations.
    """
    cost = np.asarray(cost_matrix, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValidationError(f"cost matrix must be square, got shape {cost.shape}")
    if cost.size == 0:
        return np.empty(0, dtype=np.int64), 0.0
    if np.any(cost < 0):
        raise ValidationError("cost matrix entries must be non-negative")

    n = cost.shape[0]
    # Dual potentials for rows/columns; col_match[j] = row assigned to column j.
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    col_match = np.full(n + 1, -1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)

    for i in range(n):
        col_match[n] = i
        j0 = n  # virtual start column
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = col_match[j0]
            delta = np.inf
            j1 = -1
            for j in range(n):
                if used[j]:
                    continue
                cur = cost[i0, j] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[col_match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if col_match[j0] == -1:
                break
        while j0 != n:  # augment along the found path
            j1 = way[j0]
            col_match[j0] = col_match[j1]
            j0 = j1

    assignment = np.empty(n, dtype=np.int64)
    for j in range(n):
        assignment[col_match[j]] = j
    total = float(cost[np.arange(n), assignment].sum())
    return assignment, total
