"""Planner interface and the non-learned policies.

A planner looks at the current step's action set (plus whatever else it
wants from the step view) and returns a decision: a frontier slot index, a
compass move for the motion-primitive baseline, or NoAction when nothing is
actionable (which terminates the episode). Planners never select padding
slots.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .frontiers import ActionSet
from .grids import OccupancyGrid, Pose, crop_center_values
from .predictor import PredictionBundle
from .scoring import FrontierFeatures

# compass order: E, NE, N, NW, W, SW, S, SE (math convention, y grows south)
PRIMITIVE_MOVES = (
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
)

DEFAULT_PRIMITIVE_PATCH = 15


@dataclass(frozen=True)
class FrontierChoice:
    slot: int


@dataclass(frozen=True)
class PrimitiveMove:
    direction: int  # index into PRIMITIVE_MOVES


@dataclass(frozen=True)
class NoAction:
    pass


PlannerDecision = "FrontierChoice | PrimitiveMove | NoAction"


@dataclass
class PlannerView:
    """Everything a planner may look at for one decision."""

    action_set: ActionSet
    features: FrontierFeatures
    observed: OccupancyGrid
    bundle: PredictionBundle
    robot: Pose
    remaining_budget: int


def nearest_frontier(action_set: ActionSet, robot: Pose):
    """Valid slot with minimum Euclidean center distance; ties take the
    lowest slot index."""
    best = None
    for i in action_set.valid_slots:
        c = action_set.slots[i].center
        d = math.hypot(c.x - robot.x, c.y - robot.y)
        if best is None or d < best[0]:
            best = (d, i)
    return FrontierChoice(best[1]) if best is not None else NoAction()


def mapex_choice(action_set: ActionSet, lam: float = 1.0):
    """Information-gain stand-in: argmax of (unknown_count + lam *
    variance_sum) / euclidean distance over valid slots; if every numerator
    is zero, fall back to the nearest frontier by the stored distances."""
    best = None
    all_zero = True
    for i in action_set.valid_slots:
        f = action_set.slots[i]
        gain = f.unknown_count + lam * f.variance_sum
        if gain > 0:
            all_zero = False
        score = gain / max(f.euclid_cells, 1.0)
        if best is None or score > best[0]:
            best = (score, i)
    if best is None:
        return NoAction()
    if all_zero:
        valid = action_set.valid_slots
        fallback = min(valid, key=lambda i: (action_set.slots[i].euclid_cells, i))
        return FrontierChoice(fallback)
    return FrontierChoice(best[1])


class NearestFrontierPlanner:
    kind = "frontier"

    def decide(self, view: PlannerView):
        return nearest_frontier(view.action_set, view.robot)


class MapexPlanner:
    kind = "frontier"

    def __init__(self, lam: float = 1.0):
        self.lam = lam

    def decide(self, view: PlannerView):
        return mapex_choice(view.action_set, self.lam)


class RandomPlanner:
    """Uniform over valid slots with an episode-owned generator."""

    kind = "frontier"

    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)

    def decide(self, view: PlannerView):
        valid = view.action_set.valid_slots
        if not valid:
            return NoAction()
        return FrontierChoice(valid[int(self.rng.integers(len(valid)))])


def untrained_primitive_policy(
    seed: int, patch: int = DEFAULT_PRIMITIVE_PATCH, hidden: int = 64
) -> Callable[[np.ndarray], int]:
    """Fixed random-weight two-layer policy over the flattened local patch
    plus the budget scalar. Deterministic per seed: the untrained baseline."""
    rng = np.random.default_rng(seed)
    n_in = patch * patch + 1
    w1 = rng.normal(0, 1.0 / math.sqrt(n_in), size=(n_in, hidden))
    b1 = np.zeros(hidden)
    w2 = rng.normal(0, 1.0 / math.sqrt(hidden), size=(hidden, 8))
    b2 = np.zeros(8)

    def policy(x: np.ndarray) -> int:
        h = np.maximum(x @ w1 + b1, 0.0)
        logits = h @ w2 + b2
        return int(np.argmax(logits))

    return policy


class PrimitivePlanner:
    """Compass-move baseline: a policy over the robot-centered observed
    patch. The episode executes the move and charges one timestep whether or
    not the move collides."""

    kind = "primitive"

    def __init__(self, policy: Optional[Callable[[np.ndarray], int]] = None, seed: int = 0,
                 patch: int = DEFAULT_PRIMITIVE_PATCH):
        self.patch = patch
        self.policy = policy if policy is not None else untrained_primitive_policy(seed, patch)

    def local_observation(self, view: PlannerView) -> np.ndarray:
        window = crop_center_values(view.observed.cells, view.robot, self.patch)
        budget = view.features.budget
        return np.concatenate([window.reshape(-1).astype(np.float64), [budget]])

    def decide(self, view: PlannerView):
        return PrimitiveMove(self.policy(self.local_observation(view)))


class ScriptedPlanner:
    """Replays a recorded slot sequence in order; NoAction once exhausted.
    Used to re-run an exported study session through the episode loop."""

    kind = "frontier"

    def __init__(self, slots):
        self.slots = list(slots)
        self._next = 0

    def decide(self, view: PlannerView):
        if self._next >= len(self.slots):
            return NoAction()
        slot = self.slots[self._next]
        self._next += 1
        return FrontierChoice(slot)


class HumanRelayPlanner:
    """Blocks the episode until a frontier choice arrives from the service.

    `decide` parks the episode thread on a condition variable; `submit`
    (called from a request handler) validates the slot against the pending
    view and wakes it. Invalid submissions are rejected without touching the
    episode. `cancel` releases a parked episode with NoAction (shutdown)."""

    kind = "frontier"

    def __init__(self, timeout_s: Optional[float] = None):
        self.timeout_s = timeout_s
        self._cond = threading.Condition()
        self._view: Optional[PlannerView] = None
        self._choice: Optional[int] = None
        self._cancelled = False

    @property
    def awaiting(self) -> bool:
        with self._cond:
            return self._view is not None

    def pending_view(self) -> Optional[PlannerView]:
        with self._cond:
            return self._view

    def submit(self, slot: int) -> tuple[bool, str]:
        with self._cond:
            if self._view is None:
                return False, "no decision pending"
            if self._choice is not None:
                return False, "a choice was already submitted"
            if slot not in self._view.action_set.valid_slots:
                return False, f"slot {slot} is not a valid frontier"
            self._choice = slot
            self._cond.notify_all()
            return True, ""

    def cancel(self) -> None:
        with self._cond:
            self._cancelled = True
            self._cond.notify_all()

    def decide(self, view: PlannerView):
        with self._cond:
            if not view.action_set.valid_slots:
                return NoAction()
            self._view = view
            self._choice = None
            try:
                while self._choice is None and not self._cancelled:
                    if not self._cond.wait(timeout=self.timeout_s):
                        raise TimeoutError("no human choice arrived in time")
                if self._cancelled:
                    return NoAction()
                return FrontierChoice(self._choice)
            finally:
                self._view = None
                self._choice = None
