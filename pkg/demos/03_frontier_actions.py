"""
Frontier detection and the action slate
=======================================

Frontiers are Free cells bordering Unknown space.  After scoring and
deduplication the best N become the discrete action slate a planner
(or a human, or a policy network) chooses from.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from frontier_lab.frontiers import build_action_set, deduplicate, detect_frontiers
from frontier_lab.grids import Pose, generate_floorplan, unknown_grid
from frontier_lab.predictor import MorphologicalInpaintPredictor, predict
from frontier_lab.scoring import ScoringConfig, score_action_set, score_frontiers
from frontier_lab.sensor import Lidar

out = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out, exist_ok=True)

truth = generate_floorplan(seed=3, width=120, height=120, room_count=8)
observed = unknown_grid(truth.width, truth.height)
robot = Pose(60, 62)
lidar = Lidar(beam_count=900, range_m=4.0)
lidar.sense(truth, observed, robot)

# Two inpaint radii disagree about where walls continue, so the ensemble
# variance (and with it the prediction score) varies across frontiers.
bundle = predict(observed, [MorphologicalInpaintPredictor(radius=6),
                            MorphologicalInpaintPredictor(radius=14)])
cfg = ScoringConfig(lidar=lidar, tau=0.5, budget=100, step_cells=6)

detected = detect_frontiers(observed, min_size=5)
score_frontiers(detected, observed, bundle, robot, cfg)
kept = deduplicate(detected, dist_threshold_m=5.0, score_threshold=0.01,
                   resolution=observed.resolution)
print(f"{len(detected)} frontiers detected, {len(kept)} after deduplication")

action_set = build_action_set(kept, robot, window=1600, n=10)
features = score_action_set(action_set, observed, bundle, robot,
                            remaining_budget=100, cfg=cfg)

print(f"{'slot':>4} {'center':>10} {'size':>5} {'utility':>8} "
      f"{'prediction':>11} {'path_m':>7}")
for i, f in enumerate(action_set.slots):
    if not f.valid:
        continue
    print(f"{i:>4} ({f.center.x:>3},{f.center.y:>3}) {f.size:>5} "
          f"{f.utility_score:>8.3f} {f.prediction_score:>11.3f} "
          f"{f.path_length:>7.2f}")
print("flattened feature vector length:", features.flat().shape[0])

fig, ax = plt.subplots(figsize=(6, 6))
ax.imshow(observed.cells, cmap="gray_r", vmin=0, vmax=1)
ax.plot(robot.x, robot.y, "r^", markersize=9, label="robot")
for i, f in enumerate(action_set.slots):
    if not f.valid:
        continue
    ax.plot(f.center.x, f.center.y, "o", color="orange", markersize=7)
    ax.annotate(str(i), (f.center.x + 1.5, f.center.y - 1.5), color="orange")
ax.legend(loc="lower right")
ax.set_axis_off()
fig.tight_layout()
fig.savefig(os.path.join(out, "action_slate.png"), dpi=110)
print(f"wrote {out}/action_slate.png")
