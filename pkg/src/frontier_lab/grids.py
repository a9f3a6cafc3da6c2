"""Occupancy-grid types, PGM map IO, and a procedural floorplan generator.

Grids are row-major float32 arrays indexed ``[y, x]`` with the ternary cell
encoding FREE=0.0, UNKNOWN=0.5, OCCUPIED=1.0. One cell is 10 cm by default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FREE = 0.0
UNKNOWN = 0.5
OCCUPIED = 1.0

DEFAULT_RESOLUTION_M = 0.10

# grayscale -> ternary thresholds (overridable via load_map arguments)
OCCUPIED_BELOW = 64
FREE_ABOVE = 192

# 8-bit raster encoding used by save_map and the external-predictor wire
GRAY_OCCUPIED = 0
GRAY_UNKNOWN = 128
GRAY_FREE = 255


@dataclass(frozen=True, order=True)
class Pose:
    """Discrete 2D cell position (x = column, y = row)."""

    x: int
    y: int

    def inside(self, grid: "OccupancyGrid | ProbabilityGrid") -> bool:
        return 0 <= self.x < grid.width and 0 <= self.y < grid.height


class _Grid2D:
    """Shared shape/resolution contract for occupancy and probability grids."""

    cells: np.ndarray
    resolution: float

    def _validate(self) -> None:
        if self.cells.ndim != 2 or self.cells.size == 0:
            raise ValueError("grid must be a non-empty 2D array")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape


@dataclass
class OccupancyGrid(_Grid2D):
    """Ternary raster map; values restricted to {FREE, UNKNOWN, OCCUPIED}."""

    cells: np.ndarray
    resolution: float = DEFAULT_RESOLUTION_M

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.float32)
        self._validate()

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.cells.copy(), self.resolution)

    def at(self, pose: Pose) -> float:
        return float(self.cells[pose.y, pose.x])

    def known_mask(self) -> np.ndarray:
        return self.cells != UNKNOWN

    def free_mask(self) -> np.ndarray:
        return self.cells == FREE

    def occupied_mask(self) -> np.ndarray:
        return self.cells == OCCUPIED

    def unknown_mask(self) -> np.ndarray:
        return self.cells == UNKNOWN


@dataclass
class ProbabilityGrid(_Grid2D):
    """Per-cell occupancy probability in [0, 1]."""

    cells: np.ndarray
    resolution: float = DEFAULT_RESOLUTION_M

    def __post_init__(self):
        self.cells = np.asarray(self.cells)
        if self.cells.dtype not in (np.float32, np.float64):
            self.cells = self.cells.astype(np.float64)
        self._validate()
        lo, hi = float(self.cells.min()), float(self.cells.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"probabilities out of [0,1]: min={lo}, max={hi}")

    def copy(self) -> "ProbabilityGrid":
        return ProbabilityGrid(self.cells.copy(), self.resolution)


def unknown_grid(width: int, height: int, resolution: float = DEFAULT_RESOLUTION_M) -> OccupancyGrid:
    """Fresh all-UNKNOWN observed map of the given size."""
    return OccupancyGrid(np.full((height, width), UNKNOWN, dtype=np.float32), resolution)


def to_grayscale(grid: OccupancyGrid) -> np.ndarray:
    """Ternary grid -> u8 raster (occupied 0, unknown 128, free 255)."""
    out = np.full(grid.shape, GRAY_UNKNOWN, dtype=np.uint8)
    out[grid.free_mask()] = GRAY_FREE
    out[grid.occupied_mask()] = GRAY_OCCUPIED
    return out


def from_grayscale(
    raster: np.ndarray,
    resolution: float = DEFAULT_RESOLUTION_M,
    occupied_below: int = OCCUPIED_BELOW,
    free_above: int = FREE_ABOVE,
) -> OccupancyGrid:
    """u8 raster -> ternary grid using the classification thresholds."""
    cells = np.full(raster.shape, UNKNOWN, dtype=np.float32)
    cells[raster < occupied_below] = OCCUPIED
    cells[raster > free_above] = FREE
    return OccupancyGrid(cells, resolution)


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json") if path.suffix == "" else path.with_suffix(path.suffix + ".meta.json")


def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    # header tokens: magic, width, height, maxval; '#' comments run to end of line
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < 4:
        if i >= len(data):
            raise ValueError(f"{path}: truncated PGM header")
        c = data[i : i + 1]
        if c == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace() and data[j : j + 1] != b"#":
                j += 1
            tokens.append(data[i:j])
            i = j
    i += 1  # single whitespace byte after maxval
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if width <= 0 or height <= 0:
        raise ValueError(f"{path}: zero-area image")
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM supported (maxval 255, got {maxval})")
    body = data[i : i + width * height]
    if len(body) != width * height:
        raise ValueError(f"{path}: PGM body truncated")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width)


def load_map(
    path: str | Path,
    occupied_below: int = OCCUPIED_BELOW,
    free_above: int = FREE_ABOVE,
) -> OccupancyGrid:
    """Load an 8-bit grayscale PGM map and classify pixels into the ternary grid.

    Resolution defaults to 0.10 m/cell unless a `<map>.meta.json` sidecar with
    a `resolution_m` key sits next to the file.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    raster = _read_pgm(path)
    resolution = DEFAULT_RESOLUTION_M
    meta = _meta_path(path)
    if meta.exists():
        resolution = float(json.loads(meta.read_text())["resolution_m"])
    return from_grayscale(raster, resolution, occupied_below, free_above)


def save_map(grid: OccupancyGrid, path: str | Path) -> None:
    """Write a binary PGM (P5) plus the resolution sidecar."""
    path = Path(path)
    raster = to_grayscale(grid)
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode()
    path.write_bytes(header + raster.tobytes())
    _meta_path(path).write_text(json.dumps({"resolution_m": grid.resolution}))


def crop_center_values(values: np.ndarray, center: Pose, side: int, pad: float = UNKNOWN) -> np.ndarray:
    """side x side window of `values` centered on `center`, padded with `pad`.

    Output (j, i) equals input (center.y - side//2 + j, center.x - side//2 + i);
    positions off the input are filled with the pad value.
    """
    if side <= 0:
        raise ValueError("side must be positive")
    h, w = values.shape
    out = np.full((side, side), pad, dtype=values.dtype)
    x0 = center.x - side // 2
    y0 = center.y - side // 2
    sx0, sy0 = max(0, x0), max(0, y0)
    sx1, sy1 = min(w, x0 + side), min(h, y0 + side)
    if sx0 < sx1 and sy0 < sy1:
        out[sy0 - y0 : sy1 - y0, sx0 - x0 : sx1 - x0] = values[sy0:sy1, sx0:sx1]
    return out


def crop_center(grid: ProbabilityGrid, center: Pose, side: int) -> ProbabilityGrid:
    return ProbabilityGrid(crop_center_values(grid.cells, center, side), grid.resolution)


def flood_fill_free(grid: OccupancyGrid, seed: Pose) -> np.ndarray:
    """4-connected reachable-free mask from `seed` (which must be free)."""
    from scipy import ndimage

    free = grid.free_mask()
    if not free[seed.y, seed.x]:
        raise ValueError("flood fill seed must be a free cell")
    labels, _ = ndimage.label(free, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
    return labels == labels[seed.y, seed.x]


def generate_floorplan(seed: int, width: int, height: int, room_count: int) -> OccupancyGrid:
    """Deterministic desk-scale floorplan: outer wall, a 3-cell corridor band,
    rooms on both sides separated by 1-cell walls, every room opening onto the
    corridor through a 2-cell door (plus occasional inter-room doors).

    Every free cell is 4-connected to every other free cell; infeasible
    parameters raise ValueError rather than producing a disconnected map.
    """
    if width < 50 or height < 50:
        raise ValueError("width and height must be at least 50 cells")
    if room_count < 1:
        raise ValueError("room_count must be at least 1")

    rng = np.random.default_rng(seed)
    cells = np.full((height, width), FREE, dtype=np.float32)
    cells[0, :] = cells[-1, :] = OCCUPIED
    cells[:, 0] = cells[:, -1] = OCCUPIED

    # corridor center row; both side regions keep >= 5 interior rows
    cy = int(rng.integers(8, height - 8))
    cells[cy - 2, 1:-1] = OCCUPIED
    cells[cy + 2, 1:-1] = OCCUPIED

    n_top = (room_count + 1) // 2
    n_bot = max(1, room_count - n_top)

    interior_w = width - 2
    for k in (n_top, n_bot):
        if k * 4 + (k - 1) > interior_w:
            raise ValueError(f"cannot fit {k} rooms of width >= 4 in {interior_w} interior columns")

    def split_region(y_lo: int, y_hi: int, wall_y: int, n_rooms: int) -> None:
        # choose n_rooms-1 separating wall columns, rooms at least 4 cells wide
        if n_rooms > 1:
            slack = interior_w - (n_rooms * 4 + (n_rooms - 1))
            extras = rng.multinomial(slack, np.full(n_rooms, 1.0 / n_rooms))
            walls = []
            x = 1
            for r in range(n_rooms - 1):
                x += 4 + int(extras[r])
                walls.append(x)
                x += 1
            spans = []
            prev = 1
            for wx in walls:
                cells[y_lo:y_hi, wx] = OCCUPIED
                spans.append((prev, wx))
                prev = wx + 1
            spans.append((prev, width - 1))
        else:
            walls = []
            spans = [(1, width - 1)]
        # one 2-cell door per room through the corridor wall
        for (x0, x1) in spans:
            door = int(rng.integers(x0, x1 - 1))
            cells[wall_y, door : door + 2] = FREE
        # occasional door between neighbouring rooms
        for wx in walls:
            if rng.random() < 0.5 and y_hi - y_lo >= 2:
                dy = int(rng.integers(y_lo, y_hi - 1))
                cells[dy : dy + 2, wx] = FREE

    split_region(1, cy - 2, cy - 2, n_top)
    split_region(cy + 3, height - 1, cy + 2, n_bot)

    grid = OccupancyGrid(cells, DEFAULT_RESOLUTION_M)
    free_ys, free_xs = np.nonzero(grid.free_mask())
    reachable = flood_fill_free(grid, Pose(int(free_xs[0]), int(free_ys[0])))
    if reachable.sum() != len(free_ys):
        raise RuntimeError("floorplan generator produced a disconnected map")
    return grid
