"""Exploration episodes: the sense/predict/choose/advance loop, plus the
multi-map benchmark runner with paired start poses.

One episode owns its state exclusively and runs strictly sequentially;
given the same inputs and a deterministic planner it produces a
bitwise-identical result record.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
from scipy import ndimage

from .frontiers import (
    DEFAULT_ACTION_SLOTS,
    DEFAULT_DEDUP_DIST_M,
    DEFAULT_DEDUP_SCORE,
    DEFAULT_MIN_FRONTIER_SIZE,
    DEFAULT_WINDOW_CELLS,
    build_action_set,
    deduplicate,
    detect_frontiers,
)
from .grids import FREE, OCCUPIED, OccupancyGrid, Pose, unknown_grid
from .metrics import IoUEvaluator, study_reward, training_reward
from .nav import astar, distance_field
from .planners import PRIMITIVE_MOVES, FrontierChoice, NoAction, PlannerView, PrimitiveMove
from .predictor import predict
from .scoring import DEFAULT_BUDGET, DEFAULT_STEP_CELLS, ScoringConfig, score_action_set, score_frontiers
from .sensor import DEFAULT_BEAM_COUNT, DEFAULT_RANGE_M, DEFAULT_TAU, Lidar

SEED_ENV = "FRONTIER_LAB_SEED"
RUNS_DIR_ENV = "FRONTIER_LAB_RUNS_DIR"

# consecutive decisions that moved nothing and spent nothing before the
# episode is declared wedged and ended
_STALL_LIMIT = 3


@dataclass
class EpisodeConfig:
    budget: int = DEFAULT_BUDGET
    step_cells: int = DEFAULT_STEP_CELLS
    iou_target: float = 0.95
    action_slots: int = DEFAULT_ACTION_SLOTS
    window_cells: int = DEFAULT_WINDOW_CELLS
    min_frontier_size: int = DEFAULT_MIN_FRONTIER_SIZE
    dedup_dist_m: float = DEFAULT_DEDUP_DIST_M
    dedup_score: float = DEFAULT_DEDUP_SCORE
    beam_count: int = DEFAULT_BEAM_COUNT
    range_m: float = DEFAULT_RANGE_M
    tau: float = DEFAULT_TAU
    replan_every_step: bool = False

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if self.step_cells < 1:
            raise ValueError("step_cells must be >= 1")
        if not 0.0 < self.iou_target <= 1.0:
            raise ValueError("iou_target must be in (0, 1]")


@dataclass
class EpisodeState:
    """Live exploration state; mutated only by its owning episode."""

    truth: OccupancyGrid
    observed: OccupancyGrid
    robot: Pose
    b_r: int
    trajectory: list = field(default_factory=list)


@dataclass
class AdvanceOutcome:
    timesteps: int
    cells_moved: int
    blocked: bool
    reached_end: bool


def advance(state, path, step_cells, lidar, on_timestep=None, max_timesteps=None):
    """Walk the robot along `path`, up to step_cells waypoints per timestep.

    Each timestep costs one budget unit, ends with a sense at the new
    pose, and then calls on_timestep (return True to stop early).  The
    walk stops at path end, budget exhaustion, or when the next waypoint
    is observed Occupied; if that happens before any move, no budget is
    consumed and control returns to the planner.
    """
    wp = path.waypoints
    i = 0
    timesteps = 0
    cells_moved = 0
    blocked = False
    while i < len(wp) - 1:
        if state.b_r <= 0:
            break
        if max_timesteps is not None and timesteps >= max_timesteps:
            break
        moves = 0
        while moves < step_cells and i < len(wp) - 1:
            nxt = wp[i + 1]
            if state.observed.cells[nxt.y, nxt.x] == OCCUPIED:
                blocked = True
                break
            i += 1
            moves += 1
        if moves == 0:
            break
        state.robot = wp[i]
        state.trajectory.append(state.robot)
        state.b_r -= 1
        timesteps += 1
        cells_moved += moves
        lidar.sense(state.truth, state.observed, state.robot)
        if on_timestep is not None and on_timestep(state):
            break
        if blocked:
            break
    return AdvanceOutcome(timesteps, cells_moved, blocked, i == len(wp) - 1)


def advance_primitive(state, direction, step_cells, lidar, on_timestep=None):
    """One compass move of up to step_cells cells.  Always costs one
    timestep — a move blocked by a wall is a bumped, wasted step."""
    dx, dy = PRIMITIVE_MOVES[direction]
    h, w = state.truth.shape
    x, y = state.robot.x, state.robot.y
    moves = 0
    for _ in range(step_cells):
        nx, ny = x + dx, y + dy
        if not (0 <= nx < w and 0 <= ny < h):
            break
        if state.truth.cells[ny, nx] == OCCUPIED:
            break
        x, y = nx, ny
        moves += 1
    state.robot = Pose(x, y)
    state.trajectory.append(state.robot)
    state.b_r -= 1
    lidar.sense(state.truth, state.observed, state.robot)
    if on_timestep is not None:
        on_timestep(state)
    return AdvanceOutcome(1, moves, moves < step_cells, False)


@dataclass
class EpisodeResult:
    final_iou: float
    reward: float        # terminal training reward
    study_reward: float
    steps_used: int
    b_r: int
    terminal_reason: str  # "iou_target" | "budget" | "no_action"
    records: list         # one dict per planning decision
    trajectory: list      # [x, y] per timestep endpoint, starting pose first

    def to_dict(self):
        return {
            "final_iou": self.final_iou,
            "reward": self.reward,
            "study_reward": self.study_reward,
            "steps_used": self.steps_used,
            "b_r": self.b_r,
            "terminal_reason": self.terminal_reason,
            "records": self.records,
            "trajectory": self.trajectory,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


class Episode:
    """Sense at start, then loop: predict, score frontiers, let the
    planner pick, execute, until IoU target / budget / no action."""

    def __init__(self, truth, start, ensemble, planner, config=None):
        self.config = config or EpisodeConfig()
        if not start.inside(truth) or truth.cells[start.y, start.x] != FREE:
            raise ValueError(f"start {start} is not a free cell")
        self.truth = truth
        self.ensemble = ensemble
        self.planner = planner
        self.lidar = Lidar(self.config.beam_count, self.config.range_m)
        self.scoring = ScoringConfig(lidar=self.lidar, tau=self.config.tau,
                                     budget=self.config.budget,
                                     step_cells=self.config.step_cells)
        observed = unknown_grid(truth.width, truth.height, truth.resolution)
        self.state = EpisodeState(truth, observed, start, self.config.budget,
                                  [start])
        self.evaluator = IoUEvaluator(truth)
        self.records = []
        self.planning_steps = 0
        self.terminal_reason = None
        self.iou = 0.0
        self.timestep_hook = None  # service streaming taps in here
        self._bundle = None
        self._prediction_stale = True
        self._view = None
        self._stalled = 0

        self.lidar.sense(truth, observed, start)
        self._refresh_prediction()
        if self.iou >= self.config.iou_target:
            self.terminal_reason = "iou_target"
        elif self.state.b_r <= 0:
            self.terminal_reason = "budget"

    @property
    def done(self):
        return self.terminal_reason is not None

    @property
    def bundle(self):
        return self._bundle

    def _refresh_prediction(self):
        self._bundle = predict(self.state.observed, self.ensemble)
        self._prediction_stale = False
        self.iou = self.evaluator.evaluate(self._bundle.mean,
                                           self.state.observed).iou

    def _on_timestep(self, state):
        # termination checks reuse the latest bundle against the freshly
        # updated observed map; prediction itself refreshes once per
        # planning step
        self.iou = self.evaluator.evaluate(self._bundle.mean,
                                           state.observed).iou
        if self.timestep_hook is not None:
            self.timestep_hook(self)
        if self.iou >= self.config.iou_target:
            self.terminal_reason = "iou_target"
            return True
        return False

    def plan(self):
        """Prediction + frontier pipeline for one decision; returns the
        planner's view."""
        if self._prediction_stale:
            self._refresh_prediction()
        cfg = self.config
        observed, robot = self.state.observed, self.state.robot
        dist = distance_field(observed, robot)
        detected = detect_frontiers(observed, cfg.min_frontier_size)
        score_frontiers(detected, observed, self._bundle, robot, self.scoring,
                        dist)
        kept = deduplicate(detected, cfg.dedup_dist_m, cfg.dedup_score,
                           observed.resolution)
        action_set = build_action_set(kept, robot, cfg.window_cells,
                                      cfg.action_slots)
        features = score_action_set(action_set, observed, self._bundle, robot,
                                    self.state.b_r, self.scoring, dist)
        self._view = PlannerView(action_set=action_set, features=features,
                                 observed=observed, bundle=self._bundle,
                                 robot=robot, remaining_budget=self.state.b_r)
        return self._view

    def execute(self, decision, view=None):
        """Apply one planner decision; returns the per-decision record."""
        if self.done:
            raise RuntimeError("episode already terminal")
        view = view or self._view
        record = {"step": self.planning_steps,
                  "pose": [self.state.robot.x, self.state.robot.y],
                  "kind": "none", "slot": None, "direction": None,
                  "utility": 0.0, "prediction": 0.0, "path_m": 0.0,
                  "timesteps": 0}
        outcome = None
        if isinstance(decision, NoAction):
            self.terminal_reason = "no_action"
        elif isinstance(decision, FrontierChoice):
            slot = decision.slot
            slots = view.action_set.slots
            if not 0 <= slot < len(slots) or not slots[slot].valid:
                raise ValueError(f"chose invalid slot {slot}")
            chosen = slots[slot]
            record.update(kind="frontier", slot=slot,
                          utility=chosen.utility_score,
                          prediction=chosen.prediction_score,
                          path_m=chosen.path_length)
            path = astar(self.state.observed, self.state.robot, chosen.center)
            if path is not None:
                cap = 1 if self.config.replan_every_step else None
                outcome = advance(self.state, path, self.config.step_cells,
                                  self.lidar, self._on_timestep,
                                  max_timesteps=cap)
            else:
                outcome = AdvanceOutcome(0, 0, True, False)
        elif isinstance(decision, PrimitiveMove):
            record.update(kind="primitive", direction=decision.direction)
            outcome = advance_primitive(self.state, decision.direction,
                                        self.config.step_cells, self.lidar,
                                        self._on_timestep)
        else:
            raise TypeError(f"unknown decision {decision!r}")

        if outcome is not None:
            record["timesteps"] = outcome.timesteps
            self._prediction_stale = True
            if outcome.timesteps == 0 and outcome.cells_moved == 0:
                self._stalled += 1  # nothing changed; bail before looping forever
                if self._stalled >= _STALL_LIMIT and not self.done:
                    self.terminal_reason = "no_action"
            else:
                self._stalled = 0
        if not self.done and self.state.b_r <= 0:
            self.terminal_reason = "budget"
        record["iou"] = self.iou
        record["b_r"] = self.state.b_r
        self.records.append(record)
        self.planning_steps += 1
        return record

    def step(self):
        """One full plan/decide/execute round; returns the record."""
        view = self.plan()
        decision = self.planner.decide(view)
        return self.execute(decision, view)

    def run(self):
        while not self.done:
            self.step()
        return self.result()

    def result(self):
        b_r = self.state.b_r
        return EpisodeResult(
            final_iou=self.iou,
            reward=training_reward(self.iou, b_r, True),
            study_reward=study_reward(self.iou, b_r),
            steps_used=self.config.budget - b_r,
            b_r=b_r,
            terminal_reason=self.terminal_reason or "running",
            records=self.records,
            trajectory=[[p.x, p.y] for p in self.state.trajectory],
        )


def run_episode(truth, start, ensemble, planner, config=None):
    return Episode(truth, start, ensemble, planner, config).run()


# ---- benchmark -------------------------------------------------------------


def sample_start(truth, rng, min_wall_m=1.0):
    """Uniform-random Free cell at least min_wall_m from any non-Free cell."""
    free = truth.cells == FREE
    margin = min_wall_m / truth.resolution
    clearance = ndimage.distance_transform_edt(free)
    ok = np.flatnonzero(free & (clearance >= margin))
    if len(ok) == 0:
        raise ValueError(f"no free cell at least {min_wall_m} m from walls")
    flat = ok[rng.integers(len(ok))]
    y, x = np.unravel_index(flat, truth.shape)
    return Pose(int(x), int(y))


def ci95(values):
    """Half-width of the normal-approximation 95% confidence interval."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size < 2:
        return 0.0
    return float(1.96 * vals.std(ddof=1) / math.sqrt(vals.size))


def default_runs_dir():
    return os.environ.get(RUNS_DIR_ENV, "runs")


def global_seed(explicit=None):
    if explicit is not None:
        return explicit
    return int(os.environ.get(SEED_ENV, "0"))


def _timestamp():
    return datetime.now(timezone.utc).strftime("%Y%m%d-%H%M%S-%f")


def render_episode_png(path, observed, trajectory, start):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(observed.cells, cmap="gray_r", vmin=0.0, vmax=1.0,
              interpolation="nearest")
    xs = [p[0] for p in trajectory]
    ys = [p[1] for p in trajectory]
    ax.plot(xs, ys, color="tab:orange", linewidth=1.2)
    ax.plot(start[0], start[1], "g^", markersize=7)
    ax.plot(xs[-1], ys[-1], "rs", markersize=6)
    ax.set_axis_off()
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def run_benchmark(maps, starts_per_map, planners, ensemble_factory,
                  seed=None, config=None, out_dir=None, render=False):
    """Paired-start evaluation of several planners over several maps.

    maps: list of (map_id, OccupancyGrid truth)
    planners: list of (name, factory); factory(seed_sequence) -> planner
    ensemble_factory: truth -> predictor list

    Start poses are drawn once per map and shared by every planner.
    Returns (rows, summary, run_dir); also writes episodes.jsonl and
    summary.csv under out_dir (defaults to $FRONTIER_LAB_RUNS_DIR or
    ./runs, in a fresh timestamped subdirectory).
    """
    if starts_per_map < 1:
        raise ValueError("starts_per_map must be >= 1")
    seed = global_seed(seed)
    config = config or EpisodeConfig()
    run_dir = os.path.join(out_dir or default_runs_dir(), _timestamp())
    os.makedirs(run_dir, exist_ok=True)

    rows = []
    for map_idx, (map_id, truth) in enumerate(maps):
        start_rng = np.random.default_rng([seed, map_idx])
        starts = [sample_start(truth, start_rng) for _ in range(starts_per_map)]
        ensemble = ensemble_factory(truth)
        for start_idx, start in enumerate(starts):
            for planner_idx, (name, factory) in enumerate(planners):
                row = {"map": map_id, "map_idx": map_idx,
                       "start_idx": start_idx, "start": [start.x, start.y],
                       "planner": name}
                try:
                    planner = factory([seed, map_idx, start_idx, planner_idx])
                    episode = Episode(truth, start, ensemble, planner, config)
                    result = episode.run()
                    row.update(iou=result.final_iou, reward=result.reward,
                               study_reward=result.study_reward,
                               b_r=result.b_r, steps_used=result.steps_used,
                               terminal=result.terminal_reason)
                    if render:
                        png = os.path.join(
                            run_dir, f"ep_{map_id}_{name}_{start_idx}.png")
                        render_episode_png(png, episode.state.observed,
                                           result.trajectory, [start.x, start.y])
                except Exception as exc:  # per-run failures stay in the table
                    row["error"] = f"{type(exc).__name__}: {exc}"
                rows.append(row)

    summary = summarize_benchmark(rows)
    with open(os.path.join(run_dir, "episodes.jsonl"), "w") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")
    write_summary_csv(os.path.join(run_dir, "summary.csv"), summary)
    return rows, summary, run_dir


def summarize_benchmark(rows):
    """Per (map, planner): n, mean and 95% CI for reward and IoU, mean b_r."""
    groups = {}
    for row in rows:
        if "error" in row:
            continue
        groups.setdefault((row["map"], row["planner"]), []).append(row)
    summary = []
    for (map_id, planner), group in sorted(groups.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
        rewards = [r["reward"] for r in group]
        ious = [r["iou"] for r in group]
        summary.append({
            "map": map_id,
            "planner": planner,
            "n": len(group),
            "reward_mean": float(np.mean(rewards)),
            "reward_ci95": ci95(rewards),
            "iou_mean": float(np.mean(ious)),
            "iou_ci95": ci95(ious),
            "b_r_mean": float(np.mean([r["b_r"] for r in group])),
        })
    return summary


def write_summary_csv(path, summary):
    cols = ["map", "planner", "n", "reward_mean", "reward_ci95",
            "iou_mean", "iou_ci95", "b_r_mean"]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=cols)
        writer.writeheader()
        for row in summary:
            writer.writerow(row)
