"""Grid path planning on the observed map.

Traversal is over Free cells only, 8-connected, axial cost 1 and diagonal
cost sqrt(2), with corner cutting forbidden: a diagonal move is legal only if
neither adjacent axial cell is Occupied. Path costs are tracked as integer
(axial, diagonal) step counts, so comparing the float a + d*sqrt(2) is exact:
distinct count pairs are separated by far more than float64 resolution at any
reachable path length.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .grids import FREE, OCCUPIED, OccupancyGrid, Pose

SQRT2 = math.sqrt(2.0)

# axial moves first, then diagonals; fixed order keeps expansion deterministic
_AXIAL = ((0, 1), (0, -1), (1, 0), (-1, 0))
_DIAGONAL = ((1, 1), (1, -1), (-1, 1), (-1, -1))


@dataclass
class Path:
    waypoints: list[Pose]
    length: float  # meters

    @property
    def cells(self) -> int:
        return len(self.waypoints)


def snap_goal(observed: OccupancyGrid, goal: Pose, radius: int = 2) -> Pose | None:
    """The goal itself if Free, else the nearest Free cell within a Chebyshev
    radius (ties: lower squared euclidean distance, then y, then x)."""
    if goal.inside(observed) and observed.cells[goal.y, goal.x] == FREE:
        return goal
    best = None
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            y, x = goal.y + dy, goal.x + dx
            if 0 <= y < observed.height and 0 <= x < observed.width:
                if observed.cells[y, x] == FREE:
                    key = (dy * dy + dx * dx, y, x)
                    if best is None or key < best[0]:
                        best = (key, Pose(x, y))
    return best[1] if best else None


def octile(a: Pose, b: Pose) -> tuple[int, int]:
    """Admissible heuristic as (axial, diagonal) step counts."""
    dx, dy = abs(a.x - b.x), abs(a.y - b.y)
    return (max(dx, dy) - min(dx, dy), min(dx, dy))


def astar(observed: OccupancyGrid, start: Pose, goal: Pose) -> Path | None:
    """Minimum-cost Free-cell path from start to goal, or None if unreachable.

    Ties are broken by (f, h, y, x). A non-Free goal snaps to the nearest
    Free cell within Chebyshev radius 2 before planning.
    """
    if not start.inside(observed) or observed.cells[start.y, start.x] != FREE:
        raise ValueError(f"start {start} is not a Free cell")
    target = snap_goal(observed, goal)
    if target is None:
        return None
    if target == start:
        return Path([start], 0.0)

    cells = observed.cells
    h, w = observed.shape
    free = cells == FREE
    occ = cells == OCCUPIED

    g_axial = np.full((h, w), -1, dtype=np.int32)
    g_diag = np.full((h, w), -1, dtype=np.int32)
    parent = np.full((h, w, 2), -1, dtype=np.int32)
    closed = np.zeros((h, w), dtype=bool)

    ha, hd = octile(start, target)
    h0 = ha + hd * SQRT2
    heap = [(h0, h0, start.y, start.x, 0, 0)]
    g_axial[start.y, start.x] = 0
    g_diag[start.y, start.x] = 0

    while heap:
        f, _, y, x, na, nd = heapq.heappop(heap)
        if closed[y, x] or (na, nd) != (g_axial[y, x], g_diag[y, x]):
            continue
        closed[y, x] = True
        if (y, x) == (target.y, target.x):
            break
        for dy, dx in _AXIAL + _DIAGONAL:
            ny, nx = y + dy, x + dx
            if not (0 <= ny < h and 0 <= nx < w) or not free[ny, nx] or closed[ny, nx]:
                continue
            diagonal = dy != 0 and dx != 0
            if diagonal and (occ[y, nx] or occ[ny, x]):
                continue  # corner cut through a wall
            ca, cd = (na, nd + 1) if diagonal else (na + 1, nd)
            old_a, old_d = g_axial[ny, nx], g_diag[ny, nx]
            if old_a >= 0 and old_a + old_d * SQRT2 <= ca + cd * SQRT2:
                continue
            g_axial[ny, nx], g_diag[ny, nx] = ca, cd
            parent[ny, nx] = (y, x)
            ea, ed = octile(Pose(nx, ny), target)
            fh = (ea + ca) + (ed + cd) * SQRT2
            heapq.heappush(heap, (fh, ea + ed * SQRT2, ny, nx, ca, cd))
    else:
        return None

    if not closed[target.y, target.x]:
        return None
    waypoints = [target]
    y, x = target.y, target.x
    while (y, x) != (start.y, start.x):
        y, x = parent[y, x]
        waypoints.append(Pose(int(x), int(y)))
    waypoints.reverse()
    na, nd = int(g_axial[target.y, target.x]), int(g_diag[target.y, target.x])
    return Path(waypoints, (na + nd * SQRT2) * observed.resolution)


def _free_graph(observed: OccupancyGrid):
    """Sparse 8-connected no-corner-cut graph over Free cells."""
    from scipy import sparse

    cells = observed.cells
    h, w = observed.shape
    free = cells == FREE
    occ = cells == OCCUPIED
    idx = np.full((h, w), -1, dtype=np.int64)
    n = int(free.sum())
    idx[free] = np.arange(n)

    rows, cols, weights = [], [], []

    def link(dy, dx, weight, corner_check=False):
        src = free.copy()
        if dy > 0:
            src[h - dy :, :] = False
        elif dy < 0:
            src[: -dy, :] = False
        if dx > 0:
            src[:, w - dx :] = False
        elif dx < 0:
            src[:, : -dx] = False
        ys, xs = np.nonzero(src)
        ok = free[ys + dy, xs + dx]
        if corner_check:
            ok &= ~occ[ys + dy, xs] & ~occ[ys, xs + dx]
        ys, xs = ys[ok], xs[ok]
        rows.append(idx[ys, xs])
        cols.append(idx[ys + dy, xs + dx])
        weights.append(np.full(len(ys), weight))

    for dy, dx in _AXIAL:
        link(dy, dx, 1.0)
    for dy, dx in _DIAGONAL:
        link(dy, dx, SQRT2, corner_check=True)

    graph = sparse.coo_matrix(
        (np.concatenate(weights) if weights else np.zeros(0),
         (np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64),
          np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64))),
        shape=(n, n),
    ).tocsr()
    return graph, idx, free


def distance_field(observed: OccupancyGrid, source: Pose) -> np.ndarray:
    """Single-source shortest-path cost (in cells) from `source` to every
    Free cell on the same traversal graph as astar; +inf where unreachable
    or not Free. Used to score a whole frontier set in one sweep."""
    from scipy.sparse import csgraph

    if not source.inside(observed) or observed.cells[source.y, source.x] != FREE:
        raise ValueError(f"source {source} is not a Free cell")
    graph, idx, free = _free_graph(observed)
    dist = csgraph.dijkstra(graph, directed=True, indices=idx[source.y, source.x])
    out = np.full(observed.shape, np.inf)
    out[free] = dist
    return out
