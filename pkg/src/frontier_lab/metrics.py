"""Map-quality metric and reward functions.

The metric compares a binarized prediction against ground-truth walls with a
small dilation on both sides, so wall placement within two cells (one kernel
radius) counts as correct. Predictions outside the building footprint are
excluded from the false-positive count: the predictor cannot be penalized for
guessing in space the building does not contain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grids import OCCUPIED, UNKNOWN, OccupancyGrid, ProbabilityGrid

DEFAULT_OCC_THRESHOLD = 0.5
DEFAULT_KERNEL = 5  # 5x5 square structuring element = Chebyshev radius 2

REWARD_IOU_CLIP = 0.4  # terminal reward ignores IoU below this floor
REWARD_SCALE = 1000.0

_FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass
class IoUReport:
    iou: float
    tp: int
    fp: int
    fn: int
    masked_prediction: np.ndarray
    corrected_prediction: np.ndarray

    def to_dict(self) -> dict:
        return {"iou": self.iou, "tp": self.tp, "fp": self.fp, "fn": self.fn}


def dilate(mask: np.ndarray, kernel: int) -> np.ndarray:
    """Binary dilation with a kernel x kernel square of ones."""
    if kernel < 1:
        raise ValueError("kernel must be >= 1")
    if kernel == 1:
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=np.ones((kernel, kernel), dtype=bool))


def footprint(truth: OccupancyGrid) -> np.ndarray:
    """The filled building region: everything except the exterior non-wall
    area that connects to the grid border 4-connectedly."""
    not_wall = ~truth.occupied_mask()
    labels, _ = ndimage.label(not_wall, structure=_FOUR)
    border = np.unique(
        np.concatenate([labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]])
    )
    border = border[border != 0]
    exterior = np.isin(labels, border)
    return ~exterior


def masked_prediction(
    mean_map: ProbabilityGrid, observed: OccupancyGrid, occ_threshold: float = DEFAULT_OCC_THRESHOLD
) -> np.ndarray:
    """Binarize the mean map, but trust the observed map wherever it is known:
    only unknown space takes the prediction."""
    p = mean_map.cells >= occ_threshold
    unknown = observed.cells == UNKNOWN
    return np.where(unknown, p, observed.cells == OCCUPIED)


class IoUEvaluator:
    """Caches the truth-derived pieces (walls, their dilation, the footprint)
    so per-timestep evaluation during an episode costs one dilation."""

    def __init__(
        self,
        truth: OccupancyGrid,
        occ_threshold: float = DEFAULT_OCC_THRESHOLD,
        kernel: int = DEFAULT_KERNEL,
    ):
        if kernel < 1:
            raise ValueError("kernel must be >= 1")
        self.truth = truth
        self.occ_threshold = occ_threshold
        self.kernel = kernel
        self.g = truth.occupied_mask()
        self.g_d = dilate(self.g, kernel)
        self.footprint = footprint(truth)
        self._g_count = int(self.g.sum())

    def evaluate(self, mean_map: ProbabilityGrid, observed: OccupancyGrid) -> IoUReport:
        if mean_map.shape != self.truth.shape or observed.shape != self.truth.shape:
            raise ValueError("prediction/observed shape differs from truth")
        p_m = masked_prediction(mean_map, observed, self.occ_threshold)
        p_c = p_m & self.footprint
        p_d = dilate(p_m, self.kernel)
        tp = int((p_d & self.g).sum())
        fp = int((p_m & p_c & ~self.g_d).sum())
        fn = int((~p_d & self.g).sum())
        denom = tp + fp + fn
        iou = tp / denom if denom > 0 else (1.0 if self._g_count == 0 else 0.0)
        return IoUReport(iou=iou, tp=tp, fp=fp, fn=fn, masked_prediction=p_m, corrected_prediction=p_c)


def dilated_iou(
    mean_map: ProbabilityGrid,
    observed: OccupancyGrid,
    truth: OccupancyGrid,
    occ_threshold: float = DEFAULT_OCC_THRESHOLD,
    kernel: int = DEFAULT_KERNEL,
) -> IoUReport:
    return IoUEvaluator(truth, occ_threshold, kernel).evaluate(mean_map, observed)


def training_reward(iou: float, b_r: int, terminal: bool) -> float:
    """Sparse learning signal: zero until the episode ends, then the clipped
    IoU scaled up plus the unspent budget."""
    if not terminal:
        return 0.0
    # distributed form: iou*scale and clip*scale are exact for the decimal
    # inputs of interest, where (iou - clip)*scale picks up rounding error
    return max(0.0, iou * REWARD_SCALE - REWARD_IOU_CLIP * REWARD_SCALE) + b_r


def study_reward(iou: float, b_r: int) -> float:
    """End-of-session score shown to human participants."""
    return iou * REWARD_SCALE + b_r
