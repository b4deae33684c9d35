"""HSI conversion and the seven per-pixel colour contrast descriptors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

K_MIN = 0.21
WARM_HUE = 0.125  # 45 degrees as a wheel fraction
NEIGHBORS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
CHANNEL_NAMES = ["color", "hue", "opponent", "saturation", "intensity", "warm", "bright_saturated"]


@dataclass
class HsiImage:
    hue: np.ndarray  # wheel fraction in [0, 1)
    sat: np.ndarray
    int: np.ndarray

    def stack(self) -> np.ndarray:
        return np.dstack([self.hue, self.sat, self.int])


def rgb_to_hsi(frame: np.ndarray) -> HsiImage:
    """Geometric HSI conversion with hue as a fraction of the colour wheel.

    Achromatic pixels (saturation 0) get hue 0.
    """
    rgb = np.asarray(frame, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    intensity = (r + g + b) / 3.0
    low = np.minimum(np.minimum(r, g), b)
    chroma = np.maximum(np.maximum(r, g), b) > low
    with np.errstate(divide="ignore", invalid="ignore"):
        sat = np.where(chroma & (intensity > 0), 1.0 - low / intensity, 0.0)
    sat = np.clip(sat, 0.0, 1.0)
    num = 0.5 * ((r - g) + (r - b))
    den = np.sqrt((r - g) ** 2 + (r - b) * (g - b))
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.where(den > 0, num / den, 1.0)
    theta = np.arccos(np.clip(cos, -1.0, 1.0)) / (2 * np.pi)
    hue = np.where(b > g, 1.0 - theta, theta)
    hue = np.mod(hue, 1.0)
    hue = np.where(sat > 0, hue, 0.0)
    return HsiImage(hue, sat, intensity)


def hsv_planes(frame: np.ndarray) -> np.ndarray:
    """Hue and saturation from the HSI conversion with value = max(R, G, B), as H x W x 3."""
    hsi = rgb_to_hsi(frame)
    return np.dstack([hsi.hue, hsi.sat, np.asarray(frame, dtype=np.float64).max(axis=2)])


def interaction_factors(sat_i, sat_j, int_i, int_j, k_min: float = K_MIN):
    """Saturation and intensity interaction factors between a pixel i and its neighbour j."""
    f_sat = (sat_i + sat_j) / 2 * (k_min + (1 - k_min) * sat_i)
    f_int = (int_i + int_j) / 2 * (k_min + (1 - k_min) * int_i)
    return f_sat, f_int


def hue_difference(h_i, h_j):
    """Distance on the hue wheel, in [0, 0.5]."""
    d = np.abs(np.asarray(h_i) - np.asarray(h_j))
    return np.where(d <= 0.5, d, 1.0 - d)


def contrast_descriptors(hsi: HsiImage | np.ndarray) -> np.ndarray:
    """H x W x 7 stack of the contrast descriptors V1..V7.

    V1..V5 are sums over the 8-connected neighbours divided by the number of
    neighbours that exist (8 inside, 5 on edges, 3 at corners). V6 and V7 are
    pointwise.
    """
    if not isinstance(hsi, HsiImage):
        hsi = rgb_to_hsi(hsi)
    H, S, I = hsi.hue, hsi.sat, hsi.int
    h, w = H.shape
    pad = lambda a: np.pad(a, 1, mode="edge")  # noqa: E731
    Hp, Sp, Ip = pad(H), pad(S), pad(I)
    valid = np.pad(np.ones((h, w)), 1)

    X = np.zeros((5, h, w))
    count = np.zeros((h, w))
    active = H < 0.5
    for dy, dx in NEIGHBORS:
        sl = (slice(1 + dy, 1 + dy + h), slice(1 + dx, 1 + dx + w))
        Hj, Sj, Ij, vj = Hp[sl], Sp[sl], Ip[sl], valid[sl]
        f_sat, f_int = interaction_factors(S, Sj, I, Ij)
        wgt = f_sat * f_int * vj
        dhue = hue_difference(H, Hj)
        X[0] += wgt
        X[1] += wgt * dhue
        X[2] += wgt * dhue * (active & (Hj >= 0.5))
        X[3] += wgt * np.abs(S - Sj)
        X[4] += wgt * np.abs(I - Ij)
        count += vj

    out = np.empty((h, w, 7))
    avg = np.divide(X, count, out=np.zeros_like(X), where=count > 0)
    out[..., :5] = avg.transpose(1, 2, 0)
    bright = S * I
    out[..., 5] = np.where((H >= 0) & (H < WARM_HUE), bright, 0.0)
    out[..., 6] = bright
    return out
