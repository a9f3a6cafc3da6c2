"""Simulated 360-degree range sensing on ternary and probabilistic grids.

Rays are precomputed integer offset templates shared by every pose: beam k of
B points along theta_k = 2*pi*k/B, is stepped so its dominant axis advances
one cell per step, and runs for floor(R * max(|cos|, |sin|)) steps where R is
the range in cells. Templates are cached per (beam_count, range_cells), so a
sense is a vectorised gather along all beams at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import OCCUPIED, OccupancyGrid, Pose, ProbabilityGrid

DEFAULT_BEAM_COUNT = 2500
DEFAULT_RANGE_M = 20.0
DEFAULT_TAU = 0.5

_PAD = 1 << 20  # off-map sentinel offset; ends the beam wherever it lands


@dataclass(frozen=True)
class RayTemplate:
    beam_count: int
    range_cells: int
    ys: np.ndarray  # (B, L) int32 row offsets, padded with _PAD past each beam's end
    xs: np.ndarray  # (B, L) int32 col offsets
    lengths: np.ndarray  # (B,) valid steps per beam


_templates: dict[tuple[int, int], RayTemplate] = {}


def ray_template(beam_count: int, range_cells: int) -> RayTemplate:
    key = (beam_count, range_cells)
    cached = _templates.get(key)
    if cached is not None:
        return cached
    if beam_count < 1 or range_cells < 1:
        raise ValueError("beam_count and range_cells must be positive")
    theta = 2.0 * np.pi * np.arange(beam_count) / beam_count
    dx, dy = np.cos(theta), np.sin(theta)
    m = np.maximum(np.abs(dx), np.abs(dy))  # >= sqrt(2)/2, never zero
    lengths = np.floor(range_cells * m).astype(np.int64)
    lmax = int(lengths.max())
    t = np.arange(1, lmax + 1)
    xs = np.rint(dx[:, None] / m[:, None] * t[None, :]).astype(np.int32)
    ys = np.rint(dy[:, None] / m[:, None] * t[None, :]).astype(np.int32)
    pad = t[None, :] > lengths[:, None]
    xs[pad] = _PAD
    ys[pad] = _PAD
    tpl = RayTemplate(beam_count, range_cells, ys, xs, lengths)
    _templates[key] = tpl
    return tpl


def _beam_coords(template: RayTemplate, pose: Pose, shape: tuple[int, int]):
    ys = template.ys + pose.y
    xs = template.xs + pose.x
    h, w = shape
    inb = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
    return ys, xs, inb


def visibility_mask(cells: np.ndarray, pose: Pose, template: RayTemplate) -> np.ndarray:
    """Cells visible from `pose` on a ternary grid.

    OCCUPIED blocks a beam but is itself visible; UNKNOWN and FREE are
    transparent. The pose cell is always visible. Leaving the map ends the
    beam without marking anything.
    """
    ys, xs, inb = _beam_coords(template, pose, cells.shape)
    yc = np.where(inb, ys, 0)
    xc = np.where(inb, xs, 0)
    occ = inb & (cells[yc, xc] == OCCUPIED)
    blocked = occ | ~inb
    lmax = ys.shape[1]
    first = np.where(blocked.any(axis=1), blocked.argmax(axis=1), lmax)
    t = np.arange(lmax)
    vis = (t[None, :] < first[:, None]) | (occ & (t[None, :] == first[:, None]))
    mask = np.zeros(cells.shape, dtype=bool)
    mask[ys[vis], xs[vis]] = True
    mask[pose.y, pose.x] = True
    return mask


def probabilistic_visibility(
    cells: np.ndarray, pose: Pose, template: RayTemplate, tau: float = DEFAULT_TAU
) -> np.ndarray:
    """Soft-occupancy visibility: a beam carries transmittance T starting at
    1.0 and multiplied by (1 - p) for every cell it crosses, the pose cell
    included; a cell is visible iff T on entering it is still >= tau.

    At uniform p and tau = 0.5 the visible depth is floor(ln tau / ln(1-p)).
    """
    ys, xs, inb = _beam_coords(template, pose, cells.shape)
    yc = np.where(inb, ys, 0)
    xc = np.where(inb, xs, 0)
    f = np.where(inb, 1.0 - cells[yc, xc], 0.0)
    f0 = 1.0 - float(cells[pose.y, pose.x])
    enter = np.cumprod(np.concatenate([np.full((f.shape[0], 1), f0), f[:, :-1]], axis=1), axis=1)
    vis = inb & (enter >= tau)
    mask = np.zeros(cells.shape, dtype=bool)
    mask[ys[vis], xs[vis]] = True
    mask[pose.y, pose.x] = True
    return mask


class Lidar:
    """Noise-free panoramic scanner used both for simulation and for the
    visible-area estimates in frontier scoring."""

    def __init__(self, beam_count: int = DEFAULT_BEAM_COUNT, range_m: float = DEFAULT_RANGE_M):
        if beam_count < 1:
            raise ValueError("beam_count must be positive")
        if range_m <= 0:
            raise ValueError("range_m must be positive")
        self.beam_count = beam_count
        self.range_m = range_m

    def range_cells(self, resolution: float) -> int:
        return max(1, int(round(self.range_m / resolution)))

    def template_for(self, resolution: float) -> RayTemplate:
        return ray_template(self.beam_count, self.range_cells(resolution))

    def visible_from(self, grid: OccupancyGrid, pose: Pose) -> np.ndarray:
        if not pose.inside(grid):
            raise ValueError(f"pose {pose} outside grid {grid.shape}")
        return visibility_mask(grid.cells, pose, self.template_for(grid.resolution))

    def probabilistic_visible_from(
        self, grid: ProbabilityGrid, pose: Pose, tau: float = DEFAULT_TAU
    ) -> np.ndarray:
        if not pose.inside(grid):
            raise ValueError(f"pose {pose} outside grid {grid.shape}")
        return probabilistic_visibility(grid.cells, pose, self.template_for(grid.resolution), tau)

    def sense(self, truth: OccupancyGrid, observed: OccupancyGrid, pose: Pose) -> np.ndarray:
        """Scan the truth map from `pose` and copy every visible cell into
        `observed` (in place). Returns the visibility mask."""
        if truth.shape != observed.shape:
            raise ValueError("truth and observed grids must share a shape")
        mask = self.visible_from(truth, pose)
        observed.cells[mask] = truth.cells[mask]
        return mask
