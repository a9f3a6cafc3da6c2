"""Frontier scoring: expected coverage, prediction disagreement, and the
normalized per-step feature block consumed by the planners.

Utility is the number of still-unknown cells a sensor at the frontier center
would see, divided by the travel cost to get there. The prediction score
replaces the count with the summed ensemble variance inside a probabilistic
raycast of the mean predicted map — regions the ensemble disagrees about are
where information is to be gained. Both are min-max normalized per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .frontiers import ActionSet, Frontier
from .grids import UNKNOWN, OccupancyGrid, Pose
from .nav import distance_field
from .predictor import PredictionBundle
from .sensor import DEFAULT_TAU, Lidar, probabilistic_visibility, visibility_mask

DEFAULT_BUDGET = 500  # timesteps per episode
DEFAULT_STEP_CELLS = 6  # cells traversed per timestep; 500 steps = 300 m


@dataclass
class ScoringConfig:
    lidar: Lidar = field(default_factory=Lidar)
    tau: float = DEFAULT_TAU
    budget: int = DEFAULT_BUDGET
    step_cells: int = DEFAULT_STEP_CELLS

    def budget_meters(self, resolution: float) -> float:
        return self.budget * self.step_cells * resolution


@dataclass
class FrontierFeatures:
    """Fixed-width observation block: row i describes action slot i; padding
    rows are all zero."""

    centers: np.ndarray  # (N, 2) relative (dx, dy) / (window/2)
    utility: np.ndarray  # (N,)
    prediction: np.ndarray  # (N,)
    traj: np.ndarray  # (N,) path length / budget in meters
    valid: np.ndarray  # (N,) bool
    budget: float  # remaining / total

    @property
    def n(self) -> int:
        return len(self.utility)

    def flat(self) -> np.ndarray:
        """centers ‖ utility ‖ prediction ‖ traj ‖ budget, float32."""
        return np.concatenate(
            [
                self.centers.reshape(-1),
                self.utility,
                self.prediction,
                self.traj,
                [self.budget],
            ]
        ).astype(np.float32)


def minmax_normalize(values) -> list[float]:
    """(x - min)/(max - min); a degenerate spread maps everything to 0.5."""
    vals = list(values)
    if not vals:
        return []
    lo, hi = min(vals), max(vals)
    if hi == lo:
        return [0.5] * len(vals)
    return [(v - lo) / (hi - lo) for v in vals]


def compute_raw_scores(
    frontiers: list[Frontier],
    observed: OccupancyGrid,
    bundle: PredictionBundle,
    robot: Pose,
    cfg: ScoringConfig,
    dist_field: np.ndarray | None = None,
) -> None:
    """Fill the raw quantities on each frontier in place: unknown coverage,
    variance mass, travel distance. Unreachable frontiers are invalidated."""
    if dist_field is None:
        dist_field = distance_field(observed, robot)
    template = cfg.lidar.template_for(observed.resolution)
    unknown = observed.cells == UNKNOWN
    for f in frontiers:
        c = f.center
        d = float(dist_field[c.y, c.x])
        f.euclid_cells = math.hypot(c.x - robot.x, c.y - robot.y)
        if not math.isfinite(d):
            f.valid = False
            f.dist_cells = 0.0
            f.path_length = 0.0
            f.unknown_count = 0
            f.variance_sum = 0.0
            f.utility_score = 0.0
            f.prediction_score = 0.0
            continue
        f.valid = True
        f.dist_cells = d
        f.path_length = d * observed.resolution
        seen = visibility_mask(observed.cells, c, template)
        f.unknown_count = int((seen & unknown).sum())
        soft = probabilistic_visibility(bundle.mean.cells, c, template, cfg.tau)
        f.variance_sum = float(bundle.variance[soft].sum())


def normalize_scores(frontiers: list[Frontier]) -> None:
    """Min-max the raw score ratios across the valid frontiers in place."""
    valid = [f for f in frontiers if f.valid]
    floor = lambda f: max(f.dist_cells, 1.0)
    for f, u in zip(valid, minmax_normalize([f.unknown_count / floor(f) for f in valid])):
        f.utility_score = u
    for f, p in zip(valid, minmax_normalize([f.variance_sum / floor(f) for f in valid])):
        f.prediction_score = p
    for f in frontiers:
        if not f.valid:
            f.utility_score = 0.0
            f.prediction_score = 0.0


def score_frontiers(
    frontiers: list[Frontier],
    observed: OccupancyGrid,
    bundle: PredictionBundle,
    robot: Pose,
    cfg: ScoringConfig,
    dist_field: np.ndarray | None = None,
) -> list[Frontier]:
    """Raw + normalized scores over a detected frontier list (the stage that
    runs before deduplication). Returns the same list for chaining."""
    compute_raw_scores(frontiers, observed, bundle, robot, cfg, dist_field)
    normalize_scores(frontiers)
    return frontiers


def score_action_set(
    action_set: ActionSet,
    observed: OccupancyGrid,
    bundle: PredictionBundle,
    robot: Pose,
    remaining_budget: int,
    cfg: ScoringConfig,
    dist_field: np.ndarray | None = None,
) -> FrontierFeatures:
    """Final per-slot features: scores re-normalized across the surviving
    valid slots, centers relative to the robot, trajectory and budget ratios.
    Padding slots contribute all-zero rows."""
    slots = action_set.slots
    occupied_slots = [f for f in slots if f.valid]
    compute_raw_scores(occupied_slots, observed, bundle, robot, cfg, dist_field)
    normalize_scores(slots)

    n = len(slots)
    centers = np.zeros((n, 2), dtype=np.float64)
    utility = np.zeros(n)
    prediction = np.zeros(n)
    traj = np.zeros(n)
    valid = np.zeros(n, dtype=bool)
    half = action_set.window / 2.0
    b_meters = cfg.budget_meters(observed.resolution)
    for i, f in enumerate(slots):
        if not f.valid:
            continue
        valid[i] = True
        centers[i, 0] = (f.center.x - robot.x) / half
        centers[i, 1] = (f.center.y - robot.y) / half
        utility[i] = f.utility_score
        prediction[i] = f.prediction_score
        traj[i] = f.path_length / b_meters
    return FrontierFeatures(
        centers=centers,
        utility=utility,
        prediction=prediction,
        traj=traj,
        valid=valid,
        budget=remaining_budget / cfg.budget,
    )
