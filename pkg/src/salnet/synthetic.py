"""Synthetic videos with known salient objects and simulated gaze.

Two scenes are available:

``bright_blob``
    Bright warm-coloured discs drifting over a muted static texture; the
    object is visible in a single frame.
``motion_block``
    Square patches cut from the same texture family as the background,
    sliding over it. A single frame shows no object at all, only the motion
    between frames reveals it.

Simulated observers fixate each object's centre with a small Gaussian jitter.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from . import io

SCENES = ("bright_blob", "motion_block")


def texture(rng, shape, smooth=1.0, lo=0.15, hi=0.55, channels=3):
    """Smooth random colour texture with values in [lo, hi]."""
    t = gaussian_filter(rng.random(shape + (channels,)), sigma=(smooth, smooth, 0))
    t -= t.min(axis=(0, 1))
    t /= np.maximum(t.max(axis=(0, 1)), 1e-12)
    return lo + (hi - lo) * t


def _bounce(pos, vel, lo, hi):
    pos = pos + vel
    for k in range(2):
        if pos[k] < lo[k] or pos[k] > hi[k]:
            vel[k] = -vel[k]
            pos[k] = np.clip(pos[k], lo[k], hi[k])
    return pos, vel


def make_video(rng, scene="bright_blob", n_frames=12, size=64, n_objects=2, radius=4, speed=3,
               n_subjects=4, gaze_jitter=1.0, first_fixated_frame=1, margin=10):
    """Frames (H x W x 3 in [0, 1]) and per-frame fixation lists of (x, y, subject).

    Objects live in separate vertical bands so they never share a patch.
    """
    if scene not in SCENES:
        raise ValueError(f"unknown scene {scene!r}")
    bg = texture(rng, (size, size))
    band = size / n_objects
    objs = []
    for k in range(n_objects):
        lo = np.array([k * band + margin * (k == 0) + radius, margin], dtype=float)
        hi = np.array([(k + 1) * band - margin * (k == n_objects - 1) - radius, size - 1 - margin], dtype=float)
        lo[0] = max(lo[0], margin)
        hi[0] = min(hi[0], size - 1 - margin)
        pos = rng.uniform(lo, hi)
        ang = rng.uniform(0, 2 * np.pi)
        vel = np.round(speed * np.array([np.cos(ang), np.sin(ang)]))
        if not vel.any():
            vel[0] = speed
        sprite = texture(rng, (2 * radius + 2, 2 * radius + 2)) if scene == "motion_block" else None
        objs.append({"pos": pos, "vel": vel, "lo": lo, "hi": hi, "sprite": sprite})

    yy, xx = np.mgrid[0:size, 0:size]
    frames, fixations = [], []
    for f in range(n_frames):
        frame = bg.copy()
        fix = []
        for o in objs:
            cx, cy = np.round(o["pos"]).astype(int)
            if scene == "bright_blob":
                disc = (xx - cx) ** 2 + (yy - cy) ** 2 <= radius ** 2
                frame[disc] = (1.0, 0.85, 0.3)
            else:
                s = o["sprite"].shape[0]
                top, left = cy - s // 2, cx - s // 2
                frame[top:top + s, left:left + s] = o["sprite"]
            if f >= first_fixated_frame:
                for subj in range(n_subjects):
                    gx, gy = np.round(np.array([cx, cy]) + rng.normal(0, gaze_jitter, 2)).astype(int)
                    fix.append((int(np.clip(gx, 0, size - 1)), int(np.clip(gy, 0, size - 1)), f"s{subj}"))
            o["pos"], o["vel"] = _bounce(o["pos"], o["vel"], o["lo"], o["hi"])
        frames.append(frame)
        fixations.append(fix)
    return frames, fixations


def write_dataset(root, scene="bright_blob", n_videos=4, n_frames=12, seed=0, size=64, split="train",
                  prefix=None, **kwargs) -> Path:
    """Write frames, fixation CSVs and a manifest under ``root``; returns the manifest path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    prefix = prefix or scene
    entries = []
    for v in range(n_videos):
        vid = f"{prefix}{v:02d}"
        frames, fixations = make_video(rng, scene, n_frames, size, **kwargs)
        fdir = root / vid / "frames"
        fdir.mkdir(parents=True, exist_ok=True)
        for k, frame in enumerate(frames):
            io.save_frame(frame, fdir / f"{k:05d}.png")
        records = [io.Fixation(vid, k, x, y, s) for k, fix in enumerate(fixations) for x, y, s in fix]
        io.write_fixations(records, root / vid / "fixations.csv")
        entries.append(io.ManifestEntry(vid, fdir, root / vid / "fixations.csv", size, size))
    manifest = root / "manifest.tsv"
    io.write_manifest(io.DatasetManifest(entries, split), manifest)
    return manifest


def gray_texture(rng, shape, smooth=1.0):
    """Smooth gray texture stretched to [0, 1], replicated to three channels."""
    t = gaussian_filter(rng.random(shape), smooth)
    t = (t - t.min()) / max(t.max() - t.min(), 1e-12)
    return np.repeat(t[..., None], 3, axis=2)


def moving_block_pair(rng, shift, size=64, block=8, corner=None):
    """Two frames of static texture where one textured block moves by ``shift`` = (dx, dy).

    The block sits on the block grid in the second frame; returns ``(prev, cur, mask)``
    with ``mask`` marking the block in ``cur``.
    """
    dx, dy = shift
    if corner is None:
        corner = tuple(block * rng.integers(1, size // block - 2, 2))
    x, y = corner
    bg = gray_texture(rng, (size, size))
    obj = gray_texture(rng, (block, block), 0.7)
    prev, cur = bg.copy(), bg.copy()
    prev[y - dy:y - dy + block, x - dx:x - dx + block] = obj
    cur[y:y + block, x:x + block] = obj
    mask = np.zeros((size, size), dtype=bool)
    mask[y:y + block, x:x + block] = True
    return prev, cur, mask
