from __future__ import annotations

import numpy as np
import pytest

from frontier_lab.frontiers import (
    ActionSet,
    Frontier,
    build_action_set,
    deduplicate,
    detect_frontiers,
    frontier_cell_mask,
)
from frontier_lab.grids import FREE, OCCUPIED, UNKNOWN, OccupancyGrid, Pose, unknown_grid


def brute_force_frontier_cells(observed: OccupancyGrid) -> set[tuple[int, int]]:
    """Reference realization of the definition: Free cell with an Unknown
    8-neighbor, checked cell by cell."""
    h, w = observed.shape
    out = set()
    for y in range(h):
        for x in range(w):
            if observed.cells[y, x] != FREE:
                continue
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    if dy == dx == 0:
                        continue
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and observed.cells[ny, nx] == UNKNOWN:
                        out.add((y, x))
    return out


def random_observed(rng, n=64):
    cells = rng.choice([FREE, UNKNOWN, OCCUPIED], size=(n, n), p=[0.45, 0.35, 0.2])
    return OccupancyGrid(cells.astype(np.float32))


def frontier(x, y, size=6, u=0.0, p=0.0):
    return Frontier(
        center=Pose(x, y),
        members=[Pose(x, y)] * size,
        size=size,
        utility_score=u,
        prediction_score=p,
    )


class TestDetection:
    def test_fully_unknown_map_has_no_frontiers(self):
        assert detect_frontiers(unknown_grid(10, 10)) == []

    def test_fully_known_map_has_no_frontiers(self):
        g = OccupancyGrid(np.full((10, 10), FREE, dtype=np.float32))
        assert detect_frontiers(g) == []

    def test_half_free_half_unknown_fixture(self):
        cells = np.full((10, 10), UNKNOWN, dtype=np.float32)
        cells[:, :5] = FREE
        fs = detect_frontiers(OccupancyGrid(cells))
        assert len(fs) == 1
        f = fs[0]
        assert f.size == 10
        assert all(p.x == 4 for p in f.members)
        assert f.center == Pose(4, 4)  # centroid row 4.5, tie to lower y

    def test_mask_matches_brute_force_on_random_grids(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            obs = random_observed(rng)
            got = {(y, x) for y, x in zip(*np.nonzero(frontier_cell_mask(obs)))}
            assert got == brute_force_frontier_cells(obs)

    def test_min_size_filters_components(self):
        cells = np.full((12, 12), OCCUPIED, dtype=np.float32)
        cells[1, 1] = FREE
        cells[1, 2] = UNKNOWN  # lone frontier cell, component of size 1
        cells[6:11, 5] = FREE
        cells[6:11, 6] = UNKNOWN  # column of 5
        fs = detect_frontiers(OccupancyGrid(cells), min_size=5)
        assert len(fs) == 1 and fs[0].size == 5
        fs = detect_frontiers(OccupancyGrid(cells), min_size=1)
        assert len(fs) == 2

    def test_components_are_8_connected(self):
        cells = np.full((9, 9), OCCUPIED, dtype=np.float32)
        # diagonal chain of free cells each touching unknown
        for i in range(5):
            cells[i + 1, i + 1] = FREE
            cells[i + 1, i + 2] = UNKNOWN
        fs = detect_frontiers(OccupancyGrid(cells), min_size=5)
        assert len(fs) == 1 and fs[0].size == 5

    def test_center_is_member_and_frontier_cell(self):
        rng = np.random.default_rng(77)
        for _ in range(10):
            obs = random_observed(rng, 40)
            mask = frontier_cell_mask(obs)
            for f in detect_frontiers(obs, min_size=3):
                assert f.center in f.members
                assert mask[f.center.y, f.center.x]
                assert f.size == len(f.members) >= 3

    def test_min_size_validation(self):
        with pytest.raises(ValueError):
            detect_frontiers(unknown_grid(5, 5), min_size=0)


class TestDeduplicate:
    def test_close_identical_scores_collapse(self):
        a = frontier(10, 10, size=8, u=0.5, p=0.5)
        b = frontier(10, 20, size=6, u=0.5, p=0.5)  # 1 m apart at 0.1 m/cell
        out = deduplicate([a, b])
        assert out == [a]  # tie on scores: larger size survives

    def test_close_but_distinct_scores_survive(self):
        a = frontier(10, 10, u=0.5, p=0.9)
        b = frontier(10, 20, u=0.5, p=0.5)
        out = deduplicate([a, b])
        assert len(out) == 2

    def test_distance_guard(self):
        a = frontier(10, 10, u=0.5, p=0.5)
        b = frontier(10, 80, u=0.5, p=0.5)  # 7 m apart
        assert len(deduplicate([a, b])) == 2

    def test_both_score_axes_must_match(self):
        a = frontier(10, 10, u=0.9, p=0.5)
        b = frontier(10, 20, u=0.1, p=0.5)  # utility gap keeps both
        assert len(deduplicate([a, b])) == 2

    def test_single_frontier_identity(self):
        a = frontier(3, 3, u=0.2, p=0.7)
        assert deduplicate([a]) == [a]

    def test_idempotent(self):
        rng = np.random.default_rng(9)
        fs = [
            frontier(
                int(rng.integers(0, 60)),
                int(rng.integers(0, 60)),
                size=int(rng.integers(5, 12)),
                u=round(float(rng.random()), 2),
                p=round(float(rng.random()), 2),
            )
            for _ in range(30)
        ]
        once = deduplicate(fs)
        twice = deduplicate(once)
        assert once == twice

    def test_no_violating_pair_remains(self):
        rng = np.random.default_rng(31)
        fs = [
            frontier(
                int(rng.integers(0, 40)),
                int(rng.integers(0, 40)),
                u=float(rng.choice([0.3, 0.300001, 0.8])),
                p=float(rng.choice([0.5, 0.500001, 0.9])),
            )
            for _ in range(40)
        ]
        out = deduplicate(fs)
        for i, a in enumerate(out):
            for b in out[i + 1 :]:
                d = np.hypot(a.center.x - b.center.x, a.center.y - b.center.y) * 0.1
                close = d < 5.0
                same = (
                    abs(a.utility_score - b.utility_score) < 0.01
                    and abs(a.prediction_score - b.prediction_score) < 0.01
                )
                assert not (close and same)


class TestActionSet:
    def test_empty_input_gives_all_padding(self):
        s = build_action_set([], Pose(50, 50))
        assert len(s) == 10
        assert s.valid_slots == []
        for f in s.slots:
            assert not f.valid and f.size == 0
            assert f.utility_score == f.prediction_score == f.path_length == 0.0

    def test_top_n_by_prediction_score(self):
        fs = [frontier(i, i, p=i / 20.0) for i in range(15)]
        s = build_action_set(fs, Pose(7, 7), window=1600, n=10)
        assert len(s.valid_slots) == 10
        scores = [s.slots[i].prediction_score for i in s.valid_slots]
        assert scores == sorted(scores, reverse=True)
        assert scores[0] == pytest.approx(14 / 20)
        assert scores[-1] == pytest.approx(5 / 20)

    def test_window_excludes_far_frontiers(self):
        near = [frontier(10 + i, 10, p=0.5) for i in range(3)]
        far = [frontier(500 + i, 500, p=0.9) for i in range(3)]
        s = build_action_set(near + far, Pose(10, 10), window=100, n=10)
        assert len(s.valid_slots) == 3
        for i in s.valid_slots:
            assert s.slots[i].center.y == 10

    def test_window_boundary_is_inclusive_chebyshev(self):
        inside = frontier(60, 10, p=0.1)  # dx = 50 = window//2
        outside = frontier(61, 10, p=0.9)
        s = build_action_set([inside, outside], Pose(10, 10), window=100, n=4)
        assert len(s.valid_slots) == 1
        assert s.slots[0].center == Pose(60, 10)

    def test_valid_slots_precede_padding(self):
        fs = [frontier(5, 5, p=0.4), frontier(9, 9, p=0.6)]
        s = build_action_set(fs, Pose(0, 0), n=6)
        flags = [f.valid for f in s.slots]
        assert flags == [True, True, False, False, False, False]

    def test_tie_break_is_y_then_x(self):
        fs = [frontier(4, 9, p=0.5), frontier(2, 3, p=0.5), frontier(1, 3, p=0.5)]
        s = build_action_set(fs, Pose(5, 5), n=3)
        centers = [f.center for f in s.slots]
        assert centers == [Pose(1, 3), Pose(2, 3), Pose(4, 9)]

    def test_deterministic(self):
        fs = [frontier(i * 3, i, p=(i % 4) / 4) for i in range(12)]
        a = build_action_set(fs, Pose(6, 6))
        b = build_action_set(fs, Pose(6, 6))
        assert a == b
