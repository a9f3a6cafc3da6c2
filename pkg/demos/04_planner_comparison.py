"""
Classical planners side by side
===============================

Three baseline strategies explore the same map from the same start:

* nearest  — always walk to the closest frontier
* mapex    — utility/prediction trade-off with a travel discount
* random   — pick a valid slot uniformly

Each gets an identical budget; the traces below show how differently
they spend it.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from frontier_lab.episode import Episode, EpisodeConfig
from frontier_lab.grids import Pose, generate_floorplan
from frontier_lab.planners import (
    MapexPlanner,
    NearestFrontierPlanner,
    RandomPlanner,
)
from frontier_lab.predictor import MorphologicalInpaintPredictor

out = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out, exist_ok=True)

truth = generate_floorplan(seed=17, width=100, height=100, room_count=6)
start = Pose(50, 50)
# These floorplans connect rooms through 2-cell doorways; keep the frontier
# size floor below that so a half-seen door still counts as an opening.
cfg = EpisodeConfig(budget=40, step_cells=6, beam_count=600, range_m=4.5,
                    min_frontier_size=2)

planners = [
    ("nearest", NearestFrontierPlanner()),
    ("mapex", MapexPlanner()),
    ("random", RandomPlanner(seed=7)),
]

results = []
for name, planner in planners:
    # Fresh single-member ensemble per run; the inpaint predictor is
    # stateless, but sharing one across planners would still be bad manners.
    ensemble = [MorphologicalInpaintPredictor(radius=10)]
    episode = Episode(truth, start, ensemble, planner, cfg)
    r = episode.run()
    results.append((name, r, episode.state.observed))
    print(f"{name:>8}: iou={r.final_iou:.3f}  study_reward={r.study_reward:.1f}"
          f"  decisions={r.steps_used}  leftover_budget={r.b_r}"
          f"  end={r.terminal_reason}")

fig, axes = plt.subplots(1, 3, figsize=(15, 5.2))
for ax, (name, r, observed) in zip(axes, results):
    ax.imshow(observed.cells, cmap="gray_r", vmin=0, vmax=1)
    xs = [p[0] for p in r.trajectory]
    ys = [p[1] for p in r.trajectory]
    ax.plot(xs, ys, "-", color="tab:blue", linewidth=1.2)
    ax.plot(xs[0], ys[0], "g^", markersize=9)
    ax.plot(xs[-1], ys[-1], "rs", markersize=7)
    ax.set_title(f"{name}  iou={r.final_iou:.3f}")
    ax.set_axis_off()
fig.tight_layout()
fig.savefig(os.path.join(out, "planner_traces.png"), dpi=110)
print(f"wrote {out}/planner_traces.png")
