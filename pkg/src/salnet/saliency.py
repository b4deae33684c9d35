"""Dense saliency maps from patch-level classifier outputs.

Patches on a half-overlapping grid are classified, and each probability is
splatted as a Gaussian of width t/2 at the patch centre. The accumulated
surface is divided by its maximum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cnn.network import NetworkModel, predict_proba

PEAK_GAIN = 10.0


@dataclass
class SaliencyMap:
    values: np.ndarray
    patch_size: int
    stride: int

    @property
    def shape(self):
        return self.values.shape


def splat_peak(f_i: float, sigma: float) -> float:
    return PEAK_GAIN * f_i / (2.0 * np.pi * sigma ** 2)


def splat_gaussian(canvas: np.ndarray, center, f_i: float, sigma: float) -> np.ndarray:
    """Add (in place) a Gaussian with peak 10 f_i / (2 pi sigma^2) centred at ``center`` = (x, y)."""
    if not 0.0 <= f_i <= 1.0:
        raise ValueError(f"probability {f_i} outside [0, 1]")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    h, w = canvas.shape
    cx, cy = center
    if not (0 <= cx < w and 0 <= cy < h):
        raise ValueError(f"splat centre {center} outside a {w}x{h} frame")
    if f_i == 0.0:
        return canvas
    gx = np.exp(-((np.arange(w) - cx) ** 2) / (2.0 * sigma ** 2))
    gy = np.exp(-((np.arange(h) - cy) ** 2) / (2.0 * sigma ** 2))
    canvas += splat_peak(f_i, sigma) * np.outer(gy, gx)
    return canvas


def grid_starts(size: int, t: int) -> list[int]:
    """Top-left offsets along one axis: stride floor(t/2), last patch flush with the border."""
    if size < t:
        raise ValueError(f"frame extent {size} smaller than patch size {t}")
    stride = max(1, t // 2)
    starts = list(range(0, size - t + 1, stride))
    if starts[-1] != size - t:
        starts.append(size - t)
    return starts


def grid_centers(height: int, width: int, t: int) -> list[tuple[int, int]]:
    """Patch centres (x, y), row-major; a centre sits at offset + t // 2."""
    return [(x0 + t // 2, y0 + t // 2) for y0 in grid_starts(height, t) for x0 in grid_starts(width, t)]


def accumulate_splats(shape, centers, probs, t: int) -> np.ndarray:
    """Unnormalized map: sum of one splat per (centre, probability) with sigma = t / 2."""
    canvas = np.zeros(shape, dtype=np.float64)
    sigma = t / 2.0
    for c, p in zip(centers, probs):
        splat_gaussian(canvas, c, float(p), sigma)
    return canvas


def normalize(surface: np.ndarray) -> np.ndarray:
    peak = surface.max() if surface.size else 0.0
    return surface / peak if peak > 0 else np.zeros_like(surface)


def map_from_probabilities(shape, centers, probs, t: int) -> SaliencyMap:
    probs = np.asarray(probs, dtype=np.float64)
    if np.any(probs < 0):
        raise ValueError("negative classifier output")
    # the map is max-normalized, so rescaling outputs above 1 changes nothing
    top = probs.max(initial=0.0)
    if top > 1.0:
        probs = probs / top
    return SaliencyMap(normalize(accumulate_splats(shape, centers, probs, t)), t, max(1, t // 2))


def classify_grid(model: NetworkModel, features: np.ndarray, t: int | None = None, batch_size: int = 256):
    """Grid centres and salient-class probabilities for one H x W x C feature stack."""
    features = np.asarray(features, dtype=np.float64)
    t = model.patch_size if t is None else t
    if t != model.patch_size:
        raise ValueError(f"patch size {t} does not match the model's {model.patch_size}")
    h, w, c = features.shape
    if c != model.channels:
        raise ValueError(f"features have {c} channels, model expects {model.channels}")
    if h < t or w < t:
        raise ValueError(f"frame {w}x{h} smaller than patch size {t}")
    centers = grid_centers(h, w, t)
    half = t // 2
    batch = np.stack([features[y - half:y - half + t, x - half:x - half + t].transpose(2, 0, 1) for x, y in centers])
    return centers, predict_proba(model, batch, batch_size)


def predict_dense_map(model: NetworkModel, features: np.ndarray, t: int | None = None,
                      batch_size: int = 256) -> SaliencyMap:
    centers, probs = classify_grid(model, features, t, batch_size)
    return map_from_probabilities(features.shape[:2], centers, probs, model.patch_size)
