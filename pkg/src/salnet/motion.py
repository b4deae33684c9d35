"""Residual motion: dense flow minus the fitted global affine (camera) motion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TUKEY_C = 4.685
MAD_TO_SIGMA = 1.4826
# Residual peaks below this many pixels are treated as no residual motion at all;
# otherwise max-normalization would blow round-off up to a full-scale map.
RESIDUAL_FLOOR_PX = 1e-6
# luminance difference at which the block-matching cost starts to saturate
MATCH_SCALE = 0.03


@dataclass
class FlowField:
    u: np.ndarray
    v: np.ndarray

    @property
    def shape(self):
        return self.u.shape


@dataclass
class AffineMotion:
    """``(x, y) -> (a1 + a2*x + a3*y, a4 + a5*x + a6*y)`` in pixel coordinates."""

    params: np.ndarray  # a1..a6

    def field(self, height: int, width: int) -> FlowField:
        a1, a2, a3, a4, a5, a6 = self.params
        y, x = np.mgrid[0:height, 0:width].astype(np.float64)
        return FlowField(a1 + a2 * x + a3 * y, a4 + a5 * x + a6 * y)


@dataclass
class ResidualMotionMap:
    magnitude: np.ndarray  # normalized to [0, 1]
    peak: float  # un-normalized maximum, pixels/frame


def luminance(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    return frame.mean(axis=2) if frame.ndim == 3 else frame


def _downsample(img):
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    img = img[:h, :w]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def _block_sum(err, block):
    """Sum ``err`` (..., H, W) over non-overlapping block x block tiles (partial tiles at the border)."""
    h, w = err.shape[-2:]
    nby, nbx = -(-h // block), -(-w // block)
    pad = [(0, 0)] * (err.ndim - 2) + [(0, nby * block - h), (0, nbx * block - w)]
    err = np.pad(err, pad)
    err = err.reshape(err.shape[:-2] + (nby, block, nbx, block))
    return err.sum(axis=(-3, -1))


def _robust(sq):
    # Lorentzian: exact matches cost nothing and gross mismatches (occlusions) saturate
    return np.log1p(sq / (2 * MATCH_SCALE ** 2))


def _block_costs(cur, prev, base, offsets, block):
    """Robust matching cost of each block of ``cur`` against ``prev`` displaced by ``base[block] + offset``.

    ``base`` is an (nby, nbx, 2) integer array of per-block (dx, dy); the
    result has shape (len(offsets), nby, nbx).
    """
    h, w = cur.shape
    yy, xx = np.mgrid[0:h, 0:w]
    by, bx = yy // block, xx // block
    bdx, bdy = base[by, bx, 0], base[by, bx, 1]
    costs = []
    for dx, dy in offsets:
        sy = np.clip(yy - bdy - dy, 0, h - 1)
        sx = np.clip(xx - bdx - dx, 0, w - 1)
        costs.append(_block_sum(_robust((cur - prev[sy, sx]) ** 2), block))
    return np.stack(costs)


def _offsets(radius):
    offs = [(dx, dy) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]
    offs.sort(key=lambda d: (d[0] ** 2 + d[1] ** 2, d[1], d[0]))
    return offs


def _search(cur, prev, base, radius, block, zero_radius=0):
    """Best integer vector per block among ``base + offset`` and, optionally, small absolute vectors."""
    offs = _offsets(radius)
    cand = base[None] + np.array(offs)[:, None, None, :]
    cost = _block_costs(cur, prev, base, offs, block)
    if zero_radius:
        zoffs = _offsets(zero_radius)
        zcand = np.broadcast_to(np.array(zoffs)[:, None, None, :], (len(zoffs),) + base.shape)
        cand = np.concatenate([cand, zcand])
        cost = np.concatenate([cost, _block_costs(cur, prev, np.zeros_like(base), zoffs, block)])
    # break exact ties (flat regions) toward the shortest displacement
    cost = cost + 1e-7 * (cand ** 2).sum(axis=-1)
    best = np.argmin(cost, axis=0)
    return np.take_along_axis(cand, best[None, ..., None], axis=0)[0]


def _parabolic(cur, prev, vec, block):
    """Per-block sub-pixel correction from a parabola through the SSD at +-1 px.

    Only pixels that match well at the integer vector take part, and blocks
    where fewer than 95% of pixels match (occlusion boundaries) keep their
    integer vector.
    """
    h, w = cur.shape
    yy, xx = np.mgrid[0:h, 0:w]
    bdx, bdy = vec[yy // block, xx // block, 0], vec[yy // block, xx // block, 1]

    def sq_err(dx, dy):
        sy = np.clip(yy - bdy - dy, 0, h - 1)
        sx = np.clip(xx - bdx - dx, 0, w - 1)
        return (cur - prev[sy, sx]) ** 2

    e0 = sq_err(0, 0)
    inlier = e0 < (3 * MATCH_SCALE) ** 2
    coherent = _block_sum(inlier.astype(np.float64), block) >= 0.95 * _block_sum(np.ones_like(e0), block)
    c0 = _block_sum(e0 * inlier, block)
    cxm, cxp, cym, cyp = (_block_sum(sq_err(dx, dy) * inlier, block)
                          for dx, dy in [(-1, 0), (1, 0), (0, -1), (0, 1)])
    # exact integer matches need no sub-pixel correction
    exact = (c0 <= 1e-12 * (1.0 + cxm + cxp + cym + cyp)) | ~coherent

    def offset(cm, cp):
        den = cm - 2 * c0 + cp
        with np.errstate(divide="ignore", invalid="ignore"):
            off = np.where((den > 0) & ~exact, (cm - cp) / (2 * den), 0.0)
        return np.clip(off, -0.5, 0.5)

    return vec[..., 0] + offset(cxm, cxp), vec[..., 1] + offset(cym, cyp)


def estimate_optical_flow(prev: np.ndarray, cur: np.ndarray, *, block: int = 8, levels: int = 3,
                          search: int = 4, refine: int = 2) -> FlowField:
    """Dense flow by pyramidal block matching with parabolic sub-pixel refinement.

    For each ``block x block`` tile of ``cur`` the displacement ``(u, v)`` that
    best explains it as ``prev(x - u, y - v)`` is found coarse to fine; the
    tile's vector is assigned to all of its pixels. Each finer level searches
    around the propagated coarse vector and also around zero, so small objects
    lost in the coarse levels are still matched.
    """
    prev_l, cur_l = luminance(prev), luminance(cur)
    if prev_l.shape != cur_l.shape:
        raise ValueError(f"frame sizes differ: {prev_l.shape} vs {cur_l.shape}")
    h, w = cur_l.shape
    pyr = [(prev_l, cur_l)]
    for _ in range(levels - 1):
        p, c = pyr[-1]
        if min(p.shape) < 2 * block:
            break
        pyr.append((_downsample(p), _downsample(c)))

    vec = None
    for level in range(len(pyr) - 1, -1, -1):
        p, c = pyr[level]
        nby, nbx = -(-c.shape[0] // block), -(-c.shape[1] // block)
        if vec is None:
            base = np.zeros((nby, nbx, 2), dtype=np.int64)
            vec = _search(c, p, base, search, block)
        else:
            iy = np.minimum(np.arange(nby) // 2, vec.shape[0] - 1)
            ix = np.minimum(np.arange(nbx) // 2, vec.shape[1] - 1)
            base = 2 * vec[iy][:, ix]
            vec = _search(c, p, base, refine, block, zero_radius=search)

    fu, fv = _parabolic(cur_l, prev_l, vec, block)
    yy, xx = np.mgrid[0:h, 0:w]
    return FlowField(fu[yy // block, xx // block], fv[yy // block, xx // block])


def _tukey(r, c):
    w = np.zeros_like(r)
    inside = r < c
    w[inside] = (1 - (r[inside] / c) ** 2) ** 2
    return w


def estimate_global_affine(flow: FlowField, *, max_iter: int = 10, tol: float = 1e-8) -> AffineMotion:
    """Robust six-parameter affine fit to a flow field (IRLS with Tukey biweights).

    The Tukey cutoff is 4.685 times a MAD-based scale of the residual
    magnitudes. When more than half the pixels fit exactly the scale is zero
    and only exactly-fitting pixels keep weight.
    """
    u = np.asarray(flow.u, dtype=np.float64).ravel()
    v = np.asarray(flow.v, dtype=np.float64).ravel()
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ValueError("flow contains non-finite values")
    h, w = flow.u.shape
    yy, xx = np.mgrid[0:h, 0:w]
    A = np.column_stack([np.ones(h * w), xx.ravel().astype(np.float64), yy.ravel().astype(np.float64)])
    weights = np.ones(h * w)
    params = None
    for _ in range(max_iter):
        support = weights > 0
        if np.linalg.matrix_rank(A[support]) < 3:
            raise ValueError("degenerate affine system: fewer than 3 independent support pixels")
        sw = np.sqrt(weights)[:, None]
        pu = np.linalg.lstsq(A * sw, u * sw[:, 0], rcond=None)[0]
        pv = np.linalg.lstsq(A * sw, v * sw[:, 0], rcond=None)[0]
        new = np.concatenate([pu, pv])
        r = np.hypot(u - A @ pu, v - A @ pv)
        scale = MAD_TO_SIGMA * np.median(r)
        if scale > 0:
            weights = _tukey(r, TUKEY_C * scale)
        else:
            weights = (r <= 1e-12 * (1.0 + np.abs(u).max() + np.abs(v).max())).astype(np.float64)
        converged = params is not None and np.max(np.abs(new - params)) < tol
        params = new
        if converged:
            break
    return AffineMotion(params)


def residual_motion(flow: FlowField, affine: AffineMotion) -> ResidualMotionMap:
    """Magnitude of (global model - measured flow), normalized by its frame maximum."""
    h, w = flow.u.shape
    model = affine.field(h, w)
    mag = np.hypot(model.u - flow.u, model.v - flow.v)
    peak = float(mag.max()) if mag.size else 0.0
    if peak <= RESIDUAL_FLOOR_PX:
        return ResidualMotionMap(np.zeros_like(mag), peak)
    return ResidualMotionMap(mag / peak, peak)


def residual_motion_channel(prev: np.ndarray | None, cur: np.ndarray) -> np.ndarray:
    """The normalized residual-motion feature plane for ``cur``; zero without a predecessor."""
    h, w = cur.shape[:2]
    if prev is None:
        return np.zeros((h, w))
    flow = estimate_optical_flow(prev, cur)
    try:
        affine = estimate_global_affine(flow)
    except ValueError:
        return np.zeros((h, w))
    return residual_motion(flow, affine).magnitude
