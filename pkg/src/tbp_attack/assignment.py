"""Linear assignment (Hungarian / Kuhn-Munkres with potentials).

Among all optimal assignments the lexicographically smallest one is returned
(row 0 gets the smallest feasible column, then row 1, ...), so results do not
depend on solver internals.
"""

from __future__ import annotations

import numpy as np

__all__ = ["hungarian_solve", "assignment_cost"]


def _potentials(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shortest-augmenting-path Hungarian for ``n <= m``.

    Returns ``(row_to_col, u, v)`` with dual potentials such that
    ``a[i, j] - u[i] - v[j] >= 0`` and equality on the assignment.
    """
    n, m = a.shape
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)  # p[j]: row (1-based) matched to column j
    way = np.zeros(m + 1, dtype=np.int64)
    cost = np.zeros((n + 1, m + 1))
    cost[1:, 1:] = a
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, INF)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = cost[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, INF)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_to_col = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j]:
            row_to_col[p[j] - 1] = j - 1
    return row_to_col, u[1:], v[1:]


def _has_completion(adj: list[list[int]], n: int, match_col: np.ndarray, first_free_row: int) -> bool:
    """Can rows ``first_free_row..`` all be matched into still-free columns?"""
    match_col = match_col.copy()

    def augment(r, seen):
        for c in adj[r]:
            if seen[c]:
                continue
            seen[c] = True
            if match_col[c] < 0 or (match_col[c] >= first_free_row and augment(match_col[c], seen)):
                match_col[c] = r
                return True
        return False

    for r in range(first_free_row, len(adj)):
        if not augment(r, np.zeros(n, dtype=bool)):
            return False
    return True


def _lexicographic_pairs(a: np.ndarray, transposed: bool, rc: np.ndarray,
                         u: np.ndarray, v: np.ndarray) -> list[tuple[int, int]]:
    """Smallest optimal assignment, searched over the tight-edge graph."""
    work = a.T if transposed else a
    tol = 1e-9 * max(1.0, float(np.max(np.abs(a))))
    tight_w = (work - u[:, None] - v[None, :]) <= tol
    fallback = sorted((int(c), int(r)) for r, c in enumerate(rc)) if transposed else \
        [(int(r), int(c)) for r, c in enumerate(rc)]
    if np.all(tight_w.sum(axis=1) == 1) and np.all(tight_w.sum(axis=0) <= 1):
        return fallback
    # work columns with nonzero potential must be covered by any optimum
    required_w_cols = np.abs(v) > tol
    tight = tight_w.T if transposed else tight_w
    m, n = a.shape
    N = max(m, n)
    if transposed:  # some original rows may stay unassigned
        row_required = required_w_cols
        col_required = np.ones(n, dtype=bool)
    else:
        row_required = np.ones(m, dtype=bool)
        col_required = required_w_cols
    adj: list[list[int]] = []
    for i in range(m):
        cols = list(np.flatnonzero(tight[i]))
        if not row_required[i]:
            cols += list(range(n, N))
        adj.append(cols)
    for _ in range(N - m):
        adj.append(list(np.flatnonzero(~col_required)))
    match_col = np.full(N, -1, dtype=np.int64)
    pairs = []
    for i in range(m):
        placed = False
        for j in adj[i]:
            if match_col[j] >= 0:
                continue
            match_col[j] = i
            if _has_completion(adj, N, match_col, i + 1):
                if j < n:
                    pairs.append((i, int(j)))
                placed = True
                break
            match_col[j] = -1
        if not placed:  # numerical corner case
            return fallback
    return pairs


def hungarian_solve(cost) -> list[tuple[int, int]]:
    """Minimum-cost assignment of an ``m x n`` matrix.

    Returns ``min(m, n)`` ``(row, col)`` pairs sorted by row. Ties between
    optimal assignments resolve to the lexicographically smallest pair list.

    Raises:
        ValueError: on non-finite entries or a non-2D matrix.
    """
    a = np.asarray(cost, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"hungarian_solve: expected a 2D matrix, got shape {a.shape}")
    if a.size == 0:
        return []
    if not np.all(np.isfinite(a)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(a))[0])
        raise ValueError(f"hungarian_solve: non-finite cost entry at {bad}")
    transposed = a.shape[0] > a.shape[1]
    rc, u, v = _potentials(a.T if transposed else a)
    return _lexicographic_pairs(a, transposed, rc, u, v)


def assignment_cost(cost, pairs) -> float:
    a = np.asarray(cost, dtype=np.float64)
    return float(sum(a[r, c] for r, c in pairs))
