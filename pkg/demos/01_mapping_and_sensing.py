"""
Occupancy maps and simulated lidar
==================================

Generate a procedural floorplan, drop a robot into it, and watch the
observed map fill in as the sensor scans from a few poses.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from frontier_lab.grids import FREE, Pose, generate_floorplan, save_map, unknown_grid
from frontier_lab.sensor import Lidar

out = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out, exist_ok=True)

# a 10 m x 10 m apartment-style map: corridor band plus rooms with doors
truth = generate_floorplan(seed=7, width=100, height=100, room_count=6)
save_map(truth, os.path.join(out, "floorplan.pgm"))
print(f"map {truth.width}x{truth.height} cells at {truth.resolution} m/cell")
print(f"free space: {(truth.cells == FREE).sum()} cells")

# everything starts Unknown; each scan carves out visible Free/Occupied cells
observed = unknown_grid(truth.width, truth.height)
lidar = Lidar(beam_count=720, range_m=4.0)

poses = [Pose(50, 52), Pose(30, 52), Pose(30, 20)]
fig, axes = plt.subplots(1, len(poses) + 1, figsize=(4 * (len(poses) + 1), 4))
axes[0].imshow(truth.cells, cmap="gray_r", vmin=0, vmax=1)
axes[0].set_title("ground truth")
for ax, pose in zip(axes[1:], poses):
    visible = lidar.sense(truth, observed, pose)
    known = (observed.cells != 0.5).sum()
    print(f"scan at ({pose.x},{pose.y}): {visible.sum()} cells visible, "
          f"{known} known so far")
    ax.imshow(observed.cells, cmap="gray_r", vmin=0, vmax=1)
    ax.plot(pose.x, pose.y, "r^")
    ax.set_title(f"after scan at ({pose.x},{pose.y})")
for ax in axes:
    ax.set_axis_off()
fig.tight_layout()
fig.savefig(os.path.join(out, "sensing.png"), dpi=110)
print(f"wrote {out}/floorplan.pgm and {out}/sensing.png")
