"""Labeled patch extraction driven by a relaxed threshold schedule over the fixation map."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import maximum_filter

from . import io
from .fixations import FixationMap, build_wooding_map

INDEX_NAME = "index.tsv"
INDEX_COLUMNS = ["file", "video_id", "frame", "x0", "y0", "label", "tau_level"]


@dataclass
class ThresholdSchedule:
    tau: np.ndarray
    epsilon: float

    @property
    def J(self) -> int:
        return len(self.tau) - 1

    @property
    def floor(self) -> float:
        """The most relaxed threshold, tau[J]."""
        return float(self.tau[-1])


@dataclass
class PatchRecord:
    data: np.ndarray  # t x t x C
    center: tuple[int, int]  # (x0, y0)
    label: int
    video_id: str = ""
    frame_index: int = 0
    tau_level: int | None = None


def build_threshold_schedule(fmap: FixationMap | np.ndarray, epsilon: float = 0.04, J: int = 5) -> ThresholdSchedule:
    values = fmap.values if isinstance(fmap, FixationMap) else np.asarray(fmap)
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if J < 0:
        raise ValueError("J must be non-negative")
    top = max(float(values.max()), 0.0) if values.size else 0.0
    if top <= 0:
        raise ValueError("empty map: no threshold schedule")
    tau = [top]
    for _ in range(J):
        tau.append(tau[-1] - epsilon * tau[-1])
    return ThresholdSchedule(np.array(tau), epsilon)


def center_range(size: int, t: int) -> tuple[int, int]:
    """Inclusive range of centers whose t-wide patch lies inside ``size`` pixels."""
    return t // 2, size - t + t // 2


def crop(stack: np.ndarray, center, t: int) -> np.ndarray:
    x0, y0 = center
    top, left = y0 - t // 2, x0 - t // 2
    return stack[top:top + t, left:left + t].copy()


def _check_sizes(stack, values, t):
    h, w = values.shape
    if stack.shape[:2] != (h, w):
        raise ValueError(f"feature stack {stack.shape[:2]} and map {(h, w)} differ in size")
    if t > min(h, w):
        raise ValueError(f"patch size {t} larger than frame {w}x{h}")


def _conflicts(a, b, t) -> bool:
    # overlapping, and by more than half a patch along at least one axis
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return dx < t and dy < t and (dx < t / 2 or dy < t / 2)


def salient_candidates(values: np.ndarray, t: int) -> list[tuple[float, int, int]]:
    """Local maxima of the map, clamped to admissible patch centers.

    Returns ``(value, x, y)`` triples where ``value`` is the map at the
    (possibly clamped) center.
    """
    h, w = values.shape
    peaks = (values == maximum_filter(values, size=3, mode="nearest")) & (values > 0)
    ys, xs = np.nonzero(peaks)
    xlo, xhi = center_range(w, t)
    ylo, yhi = center_range(h, t)
    seen = set()
    out = []
    for x, y in zip(np.clip(xs, xlo, xhi), np.clip(ys, ylo, yhi)):
        key = (int(x), int(y))
        if key not in seen:
            seen.add(key)
            out.append((float(values[key[1], key[0]]), key[0], key[1]))
    return out


def extract_salient_patches(stack, fmap, schedule: ThresholdSchedule, t: int,
                            max_per_frame: int = 10, video_id: str = "", frame_index: int = 0) -> list[PatchRecord]:
    values = fmap.values if isinstance(fmap, FixationMap) else np.asarray(fmap)
    _check_sizes(stack, values, t)
    cands = salient_candidates(values, t)
    taken: list[tuple[int, int]] = []
    done: set[tuple[int, int]] = set()
    out = []
    for level, tau in enumerate(schedule.tau):
        level_cands = sorted((c for c in cands if c[0] >= tau and (c[1], c[2]) not in done),
                             key=lambda c: (-c[0], c[1], c[2]))
        for value, x, y in level_cands:
            done.add((x, y))
            if len(out) >= max_per_frame:
                return out
            if any(_conflicts((x, y), other, t) for other in taken):
                continue
            taken.append((x, y))
            out.append(PatchRecord(crop(stack, (x, y), t), (x, y), 1, video_id, frame_index, level))
    return out


def extract_nonsalient_patches(stack, fmap, schedule: ThresholdSchedule, t: int, count: int,
                               rng_seed=0, video_id: str = "", frame_index: int = 0):
    """Draw ``count`` patches uniformly among centers below the relaxed threshold.

    Returns ``(patches, complete)``; ``complete`` is False when fewer admissible
    centers than requested exist.
    """
    values = fmap.values if isinstance(fmap, FixationMap) else np.asarray(fmap)
    _check_sizes(stack, values, t)
    if count < 0:
        raise ValueError("count must be non-negative")
    h, w = values.shape
    xlo, xhi = center_range(w, t)
    ylo, yhi = center_range(h, t)
    window = values[ylo:yhi + 1, xlo:xhi + 1]
    ys, xs = np.nonzero(window < schedule.floor)
    n = len(xs)
    rng = np.random.default_rng(rng_seed)
    k = min(count, n)
    pick = rng.choice(n, size=k, replace=False) if k else np.empty(0, dtype=int)
    out = []
    for i in pick:
        c = (int(xs[i]) + xlo, int(ys[i]) + ylo)
        out.append(PatchRecord(crop(stack, c, t), c, 0, video_id, frame_index, None))
    return out, k == count


def frame_patches(stack, fixations, t, *, epsilon=0.04, J=5, max_per_frame=10,
                  nonsalient_per_frame=None, sigma_px=None, rng_seed=0, video_id="", frame_index=0):
    """Salient and non-salient patches for one frame; empty when it has no fixations."""
    h, w = stack.shape[:2]
    fmap = build_wooding_map(fixations, w, h, sigma_px)
    if fmap.empty:
        return [], []
    schedule = build_threshold_schedule(fmap, epsilon, J)
    sal = extract_salient_patches(stack, fmap, schedule, t, max_per_frame, video_id, frame_index)
    n_neg = len(sal) if nonsalient_per_frame is None else nonsalient_per_frame
    neg, _ = extract_nonsalient_patches(stack, fmap, schedule, t, n_neg, rng_seed, video_id, frame_index)
    return sal, neg


def _frame_seed(rng_seed, video_index, frame_index):
    return np.random.SeedSequence([int(rng_seed), video_index, frame_index])


def assemble_patch_dataset(manifest, channel_config, t: int, balance: bool = True, rng_seed: int = 0, *,
                           epsilon=0.04, J=5, max_per_frame=10, nonsalient_per_frame=None,
                           sigma_px=None, features_dir=None) -> list[PatchRecord]:
    """Patches from every frame of every manifest video, optionally class-balanced, then shuffled.

    ``manifest`` may be a path or a loaded ``DatasetManifest``. Features come
    from ``features_dir`` (FMAP files written by the extract stage) when given,
    otherwise they are computed from the frames.
    """
    from .channels import get_channel_config, video_features

    if not isinstance(manifest, io.DatasetManifest):
        manifest = io.load_manifest(manifest)
    config = get_channel_config(channel_config)
    salient, nonsalient = [], []
    for vi, entry in enumerate(manifest.entries):
        seq, log = io.load_video(entry)
        if features_dir is not None:
            stacks = [io.read_plane_stack(Path(features_dir) / feature_file_name(entry.video_id, k))
                      for k in range(seq.frame_count)]
        else:
            stacks = video_features(seq.frames, config)
        per_frame = log.by_frame(entry.video_id)
        for k, stack in enumerate(stacks):
            if stack.shape[2] != config.channel_count:
                raise ValueError(f"{entry.video_id} frame {k}: {stack.shape[2]} channels, "
                                 f"expected {config.channel_count} for {config.name}")
            sal, neg = frame_patches(stack, per_frame.get(k, []), t, epsilon=epsilon, J=J,
                                     max_per_frame=max_per_frame, nonsalient_per_frame=nonsalient_per_frame,
                                     sigma_px=sigma_px, rng_seed=_frame_seed(rng_seed, vi, k),
                                     video_id=entry.video_id, frame_index=k)
            salient.extend(sal)
            nonsalient.extend(neg)
    return balance_and_shuffle(salient, nonsalient, balance, rng_seed)


def _order_key(p: PatchRecord):
    return (p.video_id, p.frame_index, p.center[1], p.center[0], p.label)


def balance_and_shuffle(salient, nonsalient, balance=True, rng_seed=0) -> list[PatchRecord]:
    salient = sorted(salient, key=_order_key)
    nonsalient = sorted(nonsalient, key=_order_key)
    rng = np.random.default_rng(np.random.SeedSequence([int(rng_seed), 0x5A17]))
    if balance:
        n = min(len(salient), len(nonsalient))
        if len(salient) > n:
            keep = np.sort(rng.choice(len(salient), size=n, replace=False))
            salient = [salient[i] for i in keep]
        elif len(nonsalient) > n:
            keep = np.sort(rng.choice(len(nonsalient), size=n, replace=False))
            nonsalient = [nonsalient[i] for i in keep]
    records = salient + nonsalient
    order = rng.permutation(len(records))
    return [records[i] for i in order]


def feature_file_name(video_id: str, frame: int) -> str:
    return f"{video_id}_{frame:05d}.fmap"


def as_arrays(records: list[PatchRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Stack patches as an (N, C, t, t) float64 batch and an int label vector."""
    if not records:
        raise ValueError("no patch records")
    x = np.stack([np.asarray(r.data, dtype=np.float64).transpose(2, 0, 1) for r in records])
    y = np.array([r.label for r in records], dtype=np.int64)
    return x, y


def save_patch_dataset(records: list[PatchRecord], directory: str | Path) -> Path:
    """Write FMAP blobs under ``patches/`` and a tab-separated index."""
    directory = Path(directory)
    (directory / "patches").mkdir(parents=True, exist_ok=True)
    lines = ["\t".join(INDEX_COLUMNS)]
    for i, r in enumerate(records):
        name = f"patches/{i:06d}.fmap"
        io.write_plane_stack(r.data, directory / name)
        level = "-" if r.tau_level is None else str(r.tau_level)
        lines.append("\t".join([name, r.video_id, str(r.frame_index), str(r.center[0]),
                                str(r.center[1]), str(r.label), level]))
    index = directory / INDEX_NAME
    index.write_text("\n".join(lines) + "\n")
    return index


def load_patch_dataset(directory: str | Path) -> list[PatchRecord]:
    directory = Path(directory)
    index = directory / INDEX_NAME
    if not index.is_file():
        raise FileNotFoundError(f"patch index not found: {index}")
    rows = index.read_text().splitlines()
    if not rows or rows[0].split("\t") != INDEX_COLUMNS:
        raise io.FormatError(f"{index}: bad header")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row.strip():
            continue
        parts = row.split("\t")
        if len(parts) != len(INDEX_COLUMNS):
            raise io.FormatError(f"{index}: malformed line {lineno}")
        name, vid, frame, x0, y0, label, level = parts
        out.append(PatchRecord(io.read_plane_stack(directory / name), (int(x0), int(y0)), int(label),
                               vid, int(frame), None if level == "-" else int(level)))
    return out
