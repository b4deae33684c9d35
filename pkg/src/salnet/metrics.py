"""Fixation-based map scores (AUC, NSS, PCC) and multi-model comparison reports."""
from __future__ import annotations

import csv
import io as _io
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

AUC_NAME = "AUC-fix"


class NoFixations(ValueError):
    """Raised when a frame has no in-bounds fixation to score against."""


def _values(m) -> np.ndarray:
    return np.asarray(getattr(m, "values", m), dtype=np.float64)


def fixation_mask(shape, fixations) -> np.ndarray:
    h, w = shape
    mask = np.zeros(shape, dtype=bool)
    for x, y in fixations:
        x, y = int(round(x)), int(round(y))
        if 0 <= x < w and 0 <= y < h:
            mask[y, x] = True
    return mask


def auc_fixations(smap, fixations) -> float:
    """ROC area separating fixated pixels from all other pixels; ties count one half.

    Each fixated pixel is one positive regardless of how many fixations hit it.
    """
    s = _values(smap)
    mask = fixation_mask(s.shape, fixations)
    pos, neg = s[mask], s[~mask]
    if pos.size == 0:
        raise NoFixations("no in-bounds fixations")
    if neg.size == 0:
        raise NoFixations("every pixel is fixated; no negatives")
    levels = np.unique(s)[::-1]  # thresholds from high to low
    tp = np.searchsorted(np.sort(pos), levels, side="left")
    fp = np.searchsorted(np.sort(neg), levels, side="left")
    tpr = np.concatenate([[0.0], (pos.size - tp) / pos.size])
    fpr = np.concatenate([[0.0], (neg.size - fp) / neg.size])
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))


def auc_pairs(smap, fixations) -> float:
    """Brute-force pair-counting AUC; quadratic, for checking only."""
    s = _values(smap)
    mask = fixation_mask(s.shape, fixations)
    pos, neg = s[mask], s[~mask]
    if pos.size == 0 or neg.size == 0:
        raise NoFixations("need both fixated and non-fixated pixels")
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / diff.size)


def nss(smap, fixations) -> float:
    """Mean standardized map value over the in-bounds fixations."""
    s = _values(smap)
    sd = s.std()
    if sd == 0:
        raise ValueError("NSS undefined for a map with zero variance")
    h, w = s.shape
    pts = [(int(round(x)), int(round(y))) for x, y in fixations]
    pts = [(x, y) for x, y in pts if 0 <= x < w and 0 <= y < h]
    if not pts:
        raise NoFixations("no in-bounds fixations")
    z = (s - s.mean()) / sd
    return float(np.mean([z[y, x] for x, y in pts]))


def pcc(a, b) -> float:
    a, b = _values(a), _values(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    da, db = a - a.mean(), b - b.mean()
    den = np.sqrt((da * da).sum() * (db * db).sum())
    if den == 0:
        raise ValueError("PCC undefined for a map with zero variance")
    return float((da * db).sum() / den)


@dataclass
class EvalResult:
    video_id: str
    metric: str
    values: list[float] = field(default_factory=list)
    skipped: list[int] = field(default_factory=list)
    model: str = ""

    @property
    def frames(self) -> int:
        return len(self.values)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if self.values else float("nan")

    @property
    def std(self) -> float:
        return float(np.std(self.values)) if self.values else float("nan")


def evaluate_video(maps, fixations_by_frame, video_id="", model="") -> EvalResult:
    """AUC for every frame of a video; frames without fixations are recorded as skipped."""
    res = EvalResult(video_id, AUC_NAME, model=model)
    for k, m in enumerate(maps):
        try:
            res.values.append(auc_fixations(m, fixations_by_frame.get(k, [])))
        except NoFixations:
            res.skipped.append(k)
    return res


@dataclass
class ComparisonReport:
    results: list[EvalResult]
    deltas: dict[tuple[str, str], float]

    def rows(self):
        for r in self.results:
            yield r.video_id, r.model, r.metric, r.mean, r.std, r.frames

    def to_csv(self) -> str:
        buf = _io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["video_id", "model", "metric", "mean", "std", "frames"])
        for vid, model, metric, mean, std, n in self.rows():
            wr.writerow([vid, model, metric, f"{mean:.6f}", f"{std:.6f}", n])
        return buf.getvalue()

    def deltas_csv(self) -> str:
        lines = ["model_a,model_b,delta"]
        lines += [f"{a},{b},{d:.6f}" for (a, b), d in self.deltas.items()]
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        out = [f"{'video':<16}{'model':<16}{'metric':<9}{'mean ± std':>20}{'frames':>8}{'skipped':>9}"]
        for r in self.results:
            cell = f"{r.mean:.5f} ± {r.std:.5f}"
            out.append(f"{r.video_id:<16}{r.model:<16}{r.metric:<9}{cell:>20}{r.frames:>8}{len(r.skipped):>9}")
        if self.deltas:
            out.append("")
            out.append("mean improvement (row model minus column model), averaged over videos")
            for (a, b), d in self.deltas.items():
                out.append(f"  {a} - {b}: {d:+.5f}")
        return "\n".join(out) + "\n"


def compare_models(map_sets: dict, fixations: dict) -> ComparisonReport:
    """Score several models on the same videos.

    ``map_sets`` maps model name -> {video_id: list of maps}; ``fixations``
    maps video_id -> {frame: [(x, y), ...]}. Every model must cover the same
    videos with the same number of frames.
    """
    names = list(map_sets)
    if not names:
        raise ValueError("no map sets given")
    videos = sorted(map_sets[names[0]])
    for name in names[1:]:
        if sorted(map_sets[name]) != videos:
            raise ValueError(f"model {name!r} covers different videos than {names[0]!r}")
        for v in videos:
            if len(map_sets[name][v]) != len(map_sets[names[0]][v]):
                raise ValueError(f"model {name!r}, video {v!r}: frame count differs from {names[0]!r}")
    results = []
    for v in videos:
        for name in names:
            results.append(evaluate_video(map_sets[name][v], fixations.get(v, {}), v, name))
    means = {(r.model, r.video_id): r.mean for r in results}
    deltas = {}
    for a, b in combinations(names, 2):
        diffs = [means[a, v] - means[b, v] for v in videos if np.isfinite(means[a, v] - means[b, v])]
        deltas[a, b] = float(np.mean(diffs)) if diffs else float("nan")
    return ComparisonReport(results, deltas)
