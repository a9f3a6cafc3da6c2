"""
Map prediction ensembles
========================

Predictors guess the full map from a partial observation.  An ensemble's
per-cell mean feeds planning and evaluation; its variance marks where the
members disagree.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from frontier_lab.grids import Pose, generate_floorplan, unknown_grid
from frontier_lab.predictor import (
    MorphologicalInpaintPredictor,
    OracleLeakPredictor,
    predict,
)
from frontier_lab.sensor import Lidar

out = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out, exist_ok=True)

truth = generate_floorplan(seed=12, width=100, height=100, room_count=6)
observed = unknown_grid(truth.width, truth.height)
Lidar(beam_count=900, range_m=4.5).sense(truth, observed, Pose(50, 52))

# two ensembles over the same observation:
#  - inpaint: morphology only, no access to the truth
#  - oracle leak: blurred truth + seeded noise, an upper-bound stand-in
inpaint = predict(observed, [MorphologicalInpaintPredictor(radius=10)])
leak = predict(observed, [
    OracleLeakPredictor(truth, blur_radius=3, noise_seed=s, noise_amplitude=0.1)
    for s in (0, 1, 2)
])

unknown = observed.cells == 0.5
for name, bundle in (("inpaint", inpaint), ("oracle-leak x3", leak)):
    err = np.abs(bundle.mean.cells - truth.cells)[unknown].mean()
    print(f"{name:14s} members={len(bundle.members)} "
          f"mean abs error on unknown cells = {err:.3f} "
          f"variance max = {bundle.variance.max():.3f}")

panels = [
    ("observed", observed.cells, "gray_r"),
    ("inpaint mean", inpaint.mean.cells, "gray_r"),
    ("ensemble mean", leak.mean.cells, "gray_r"),
    ("ensemble variance", leak.variance, "magma"),
]
fig, axes = plt.subplots(1, 4, figsize=(16, 4))
for ax, (title, img, cmap) in zip(axes, panels):
    ax.imshow(img, cmap=cmap)
    ax.set_title(title)
    ax.set_axis_off()
fig.tight_layout()
fig.savefig(os.path.join(out, "predictions.png"), dpi=110)
print(f"wrote {out}/predictions.png")
