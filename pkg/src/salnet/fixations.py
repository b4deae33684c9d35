"""Gaze-density ground truth built from fixation points."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TRUNCATE_SIGMAS = 4.0


@dataclass
class FixationMap:
    values: np.ndarray  # H x W, normalized so the maximum is 1
    sigma_px: float
    source_fixation_count: int

    @property
    def empty(self) -> bool:
        return self.source_fixation_count == 0

    @property
    def shape(self):
        return self.values.shape


def default_sigma(width: int) -> float:
    return 0.02 * width


def _accumulate(fixations, width, height, sigma_px):
    acc = np.zeros((height, width))
    radius = int(np.ceil(TRUNCATE_SIGMAS * sigma_px))
    for x, y in fixations:
        x0, x1 = max(0, int(np.floor(x)) - radius), min(width, int(np.floor(x)) + radius + 1)
        y0, y1 = max(0, int(np.floor(y)) - radius), min(height, int(np.floor(y)) + radius + 1)
        if x0 >= x1 or y0 >= y1:
            continue
        gx = np.exp(-((np.arange(x0, x1) - x) ** 2) / (2 * sigma_px ** 2))
        gy = np.exp(-((np.arange(y0, y1) - y) ** 2) / (2 * sigma_px ** 2))
        acc[y0:y1, x0:x1] += np.outer(gy, gx)
    return acc


def unnormalized_density(fixations, width, height, sigma_px) -> np.ndarray:
    """Sum of unit-height Gaussians (truncated at 4 sigma) at each fixation."""
    return _accumulate(fixations, width, height, sigma_px)


def build_wooding_map(fixations, width: int, height: int, sigma_px: float | None = None) -> FixationMap:
    """Normalized multi-Gaussian fixation density.

    An empty fixation list yields an all-zero map with ``empty`` set, so that
    callers can skip the frame.
    """
    if sigma_px is None:
        sigma_px = default_sigma(width)
    if sigma_px <= 0:
        raise ValueError("sigma_px must be positive")
    fixations = list(fixations)
    acc = _accumulate(fixations, width, height, sigma_px)
    peak = acc.max() if acc.size else 0.0
    if not fixations or peak <= 0:
        return FixationMap(np.zeros((height, width)), sigma_px, 0)
    return FixationMap(acc / peak, sigma_px, len(fixations))


def map_value_at(fmap: FixationMap, x: int, y: int) -> float:
    h, w = fmap.values.shape
    if not (0 <= x < w and 0 <= y < h):
        raise IndexError(f"({x}, {y}) outside {w}x{h} map")
    return float(fmap.values[y, x])
