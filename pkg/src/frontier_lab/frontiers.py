"""Frontier detection, clustering, deduplication, and action-set assembly.

A frontier cell is a Free cell with at least one Unknown 8-neighbor. Cells
group into 8-connected components; small components are noise and dropped.
Each surviving component is summarised by a center cell and later scored,
deduplicated, and packed into a fixed-width action set for the planners.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grids import DEFAULT_RESOLUTION_M, OccupancyGrid, Pose

DEFAULT_MIN_FRONTIER_SIZE = 5  # cells; 0.5 m suppresses single-cell aliasing
DEFAULT_ACTION_SLOTS = 10
DEFAULT_WINDOW_CELLS = 1600
DEFAULT_DEDUP_DIST_M = 5.0
DEFAULT_DEDUP_SCORE = 0.01

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass
class Frontier:
    center: Pose
    members: list[Pose]
    size: int
    utility_score: float = 0.0
    prediction_score: float = 0.0
    path_length: float = 0.0  # meters, filled by scoring
    valid: bool = True
    # raw quantities kept alongside the normalized scores; the classical
    # information-gain planner consumes these directly
    unknown_count: int = 0
    variance_sum: float = 0.0
    euclid_cells: float = 0.0
    dist_cells: float = 0.0


def padding_frontier() -> Frontier:
    return Frontier(center=Pose(0, 0), members=[], size=0, valid=False)


@dataclass
class ActionSet:
    slots: list[Frontier] = field(default_factory=list)
    n: int = DEFAULT_ACTION_SLOTS
    window: int = DEFAULT_WINDOW_CELLS

    @property
    def valid_slots(self) -> list[int]:
        return [i for i, f in enumerate(self.slots) if f.valid]

    def __len__(self) -> int:
        return len(self.slots)


def frontier_cell_mask(observed: OccupancyGrid) -> np.ndarray:
    """Boolean mask of Free cells with an Unknown 8-neighbor."""
    unknown = observed.unknown_mask()
    touches_unknown = ndimage.binary_dilation(unknown, structure=_EIGHT)
    return observed.free_mask() & touches_unknown


def detect_frontiers(
    observed: OccupancyGrid, min_size: int = DEFAULT_MIN_FRONTIER_SIZE
) -> list[Frontier]:
    """Group frontier cells into 8-connected components of >= min_size cells.

    The center is the member cell closest to the component centroid
    (euclidean; ties broken by lower y then x). Scores are left at zero.
    """
    if min_size < 1:
        raise ValueError("min_size must be >= 1")
    mask = frontier_cell_mask(observed)
    labels, count = ndimage.label(mask, structure=_EIGHT)
    out: list[Frontier] = []
    for idx in range(1, count + 1):
        ys, xs = np.nonzero(labels == idx)
        if len(ys) < min_size:
            continue
        cy, cx = ys.mean(), xs.mean()
        d2 = (ys - cy) ** 2 + (xs - cx) ** 2
        order = np.lexsort((xs, ys, d2))[0]
        center = Pose(int(xs[order]), int(ys[order]))
        members = [Pose(int(x), int(y)) for y, x in sorted(zip(ys, xs))]
        out.append(Frontier(center=center, members=members, size=len(members)))
    out.sort(key=lambda f: (f.center.y, f.center.x))
    return out


def deduplicate(
    frontiers: list[Frontier],
    dist_threshold_m: float = DEFAULT_DEDUP_DIST_M,
    score_threshold: float = DEFAULT_DEDUP_SCORE,
    resolution: float = DEFAULT_RESOLUTION_M,
) -> list[Frontier]:
    """Drop near-duplicates: pairs closer than the distance threshold whose
    utility AND prediction scores both differ by less than the score
    threshold keep only the higher-prediction-score member (ties: larger
    size, then lower y, x). Greedy in descending prediction-score order,
    which makes the pass idempotent."""
    dist_cells = dist_threshold_m / resolution
    ranked = sorted(
        frontiers,
        key=lambda f: (-f.prediction_score, -f.size, f.center.y, f.center.x),
    )
    kept: list[Frontier] = []
    for f in ranked:
        dup = False
        for k in kept:
            d = math.hypot(k.center.x - f.center.x, k.center.y - f.center.y)
            if (
                d < dist_cells
                and abs(k.utility_score - f.utility_score) < score_threshold
                and abs(k.prediction_score - f.prediction_score) < score_threshold
            ):
                dup = True
                break
        if not dup:
            kept.append(f)
    return kept


def build_action_set(
    frontiers: list[Frontier],
    robot: Pose,
    window: int = DEFAULT_WINDOW_CELLS,
    n: int = DEFAULT_ACTION_SLOTS,
) -> ActionSet:
    """Keep frontiers inside the robot-centered window x window box, order by
    prediction score (desc, ties by lower center y then x), cut to the top n,
    and pad with invalid all-zero slots."""
    if n < 1:
        raise ValueError("n must be >= 1")
    half = window // 2
    inside = [
        f
        for f in frontiers
        if max(abs(f.center.x - robot.x), abs(f.center.y - robot.y)) <= half
    ]
    inside.sort(key=lambda f: (-f.prediction_score, f.center.y, f.center.x))
    slots = inside[:n]
    while len(slots) < n:
        slots.append(padding_frontier())
    return ActionSet(slots=slots, n=n, window=window)
