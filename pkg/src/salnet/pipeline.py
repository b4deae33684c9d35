"""The five pipeline stages. Each reads only files written by earlier stages."""
from __future__ import annotations

import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io, patches
from .channels import frame_features, get_channel_config
from .cnn.architectures import default_architecture, desk_architecture, sd_architecture
from .cnn.network import init_model
from .cnn.solver import SolverConfig, train
from .metrics import compare_models
from .saliency import predict_dense_map

log = logging.getLogger(__name__)

FEATURES_META = "features.json"
DATASET_META = "dataset.json"
MAP_NAME = re.compile(r"^(?P<video>.+)_(?P<frame>\d+)\.(?P<ext>fmap|pgm)$")


def _pool_map(fn, items, workers):
    # results come back in submission order, so output is independent of the worker count
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _manifest(manifest):
    return manifest if isinstance(manifest, io.DatasetManifest) else io.load_manifest(manifest)


def map_file_name(video_id, frame, ext="fmap"):
    return f"{video_id}_{frame:05d}.{ext}"


# ---------------------------------------------------------------------------

def cmd_extract(manifest, channel_config, out_dir, workers=1) -> list[Path]:
    """One FMAP feature stack per frame, named ``<video>_<frame>.fmap``."""
    manifest = _manifest(manifest)
    config = get_channel_config(channel_config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for entry in manifest.entries:
        seq = io.load_frame_sequence(entry.frame_dir, entry.video_id)
        frames = seq.frames

        def one(k):
            stack = frame_features(frames[k], frames[k - 1] if k else None, config)
            path = out_dir / patches.feature_file_name(entry.video_id, k)
            io.write_plane_stack(stack, path)
            return path

        written += _pool_map(one, range(seq.frame_count), workers)
    meta = {"channels": config.name, "channel_count": config.channel_count}
    (out_dir / FEATURES_META).write_text(json.dumps(meta, sort_keys=True) + "\n")
    return written


def _features_config(features_dir, channel_config=None):
    meta_path = Path(features_dir) / FEATURES_META
    if meta_path.is_file():
        name = json.loads(meta_path.read_text())["channels"]
        if channel_config is not None and get_channel_config(channel_config).name != name:
            raise ValueError(f"features in {features_dir} are {name}, not {channel_config}")
        return get_channel_config(name)
    if channel_config is None:
        raise ValueError(f"{features_dir} has no {FEATURES_META}; pass the channel configuration")
    return get_channel_config(channel_config)


def cmd_sample(manifest, features_dir, t, epsilon, J, seed, out, *, channel_config=None,
               max_per_frame=10, nonsalient_per_frame=None, sigma_px=None, balance=True) -> Path:
    """Sample a labelled patch dataset into directory ``out``; returns the index path."""
    manifest = _manifest(manifest)
    config = _features_config(features_dir, channel_config)
    for e in manifest.entries:
        if t > min(e.width, e.height):
            raise ValueError(f"patch size {t} exceeds the {e.width}x{e.height} frames of {e.video_id}")
    records = patches.assemble_patch_dataset(
        manifest, config, t, balance=balance, rng_seed=seed, epsilon=epsilon, J=J,
        max_per_frame=max_per_frame, nonsalient_per_frame=nonsalient_per_frame,
        sigma_px=sigma_px, features_dir=features_dir)
    if not records:
        raise ValueError("no patches sampled (no fixations, or frames too small)")
    out = Path(out)
    index = patches.save_patch_dataset(records, out)
    meta = {"channels": config.name, "t": t, "epsilon": epsilon, "J": J, "seed": seed,
            "patches": len(records), "salient": sum(r.label for r in records)}
    (out / DATASET_META).write_text(json.dumps(meta, sort_keys=True) + "\n")
    return index


def _dataset_arrays(directory):
    records = patches.load_patch_dataset(directory)
    if not records:
        raise ValueError(f"empty patch dataset: {directory}")
    meta_path = Path(directory) / DATASET_META
    meta = json.loads(meta_path.read_text()) if meta_path.is_file() else {}
    return records, meta


def split_validation(records, fraction, seed):
    """Hold out whole videos (about ``fraction`` of them) when there are several, else patches."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xA1]))
    videos = sorted({r.video_id for r in records})
    if len(videos) >= 2:
        n_val = min(len(videos) - 1, max(1, math.ceil(fraction * len(videos))))
        held = set(rng.permutation(videos)[:n_val].tolist())
        return [r for r in records if r.video_id not in held], [r for r in records if r.video_id in held]
    order = rng.permutation(len(records))
    n_val = max(1, int(round(fraction * len(records))))
    if n_val >= len(records):
        raise ValueError("too few patches to hold out a validation split")
    return [records[i] for i in order[n_val:]], [records[i] for i in order[:n_val]]


def build_layers(preset, channels, t):
    if preset == "default":
        return default_architecture(channels, t)
    if preset == "sd":
        return sd_architecture(channels, t)
    if preset == "desk":
        return desk_architecture(channels, t)
    raise ValueError(f"unknown architecture preset {preset!r}")


def cmd_train(dataset, out_model, *, arch=None, solver: SolverConfig | None = None, val_dataset=None,
              val_fraction=0.2, resume=None, report_path=None, stop_after=None):
    """Train on a patch dataset; writes the checkpoint and an ``iteration,accuracy`` CSV.

    Returns ``(model, report)``.
    """
    arch = dict(arch or {})
    solver = solver or SolverConfig()
    records, meta = _dataset_arrays(dataset)
    if val_dataset is not None:
        train_recs, val_recs = records, _dataset_arrays(val_dataset)[0]
    else:
        train_recs, val_recs = split_validation(records, val_fraction, solver.seed)
    tx, ty = patches.as_arrays(train_recs)
    vx, vy = patches.as_arrays(val_recs)
    c, t = tx.shape[1], tx.shape[2]
    state = None
    if resume is not None:
        model, state = io.load_model(resume, with_solver_state=True)
        if model.input_shape != (t, t, c):
            raise ValueError(f"checkpoint input {model.input_shape} does not match dataset patches {(t, t, c)}")
    else:
        layers = build_layers(arch.get("preset", "default"), c, t)
        model = init_model(layers, (t, t, c), seed=arch.get("seed", 0), weight_std=arch.get("weight_std", 0.01),
                           filler=arch.get("filler", "msra"),
                           meta={"channels": meta.get("channels"), "patch_size": t})
    model, report, state = train(model, tx, ty, vx, vy, solver, state=state, stop_after=stop_after)
    out_model = Path(out_model)
    io.save_model(model, out_model, solver_state=state)
    report_path = Path(report_path) if report_path else out_model.with_suffix(".report.csv")
    report_path.write_text(report.to_csv())
    log.info("best accuracy %.4f at iteration %d (%d updates)", report.best_accuracy,
             report.best_iteration, report.iterations_run)
    return model, report


def cmd_predict(model, manifest, out_dir, *, features_dir=None, workers=1, batch_size=256, pgm=False) -> list[Path]:
    """One saliency map per frame as ``<video>_<frame>.fmap`` (plus ``.pgm`` when asked)."""
    if isinstance(model, (str, Path)):
        model = io.load_model(model)
    manifest = _manifest(manifest)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = model.meta.get("channels")
    if features_dir is not None:
        config = _features_config(features_dir, name)
    elif name:
        config = get_channel_config(name)
    else:
        raise ValueError("model does not record its channel configuration; pass a features directory")
    if config.channel_count != model.channels:
        raise ValueError(f"{config.name} has {config.channel_count} channels, model expects {model.channels}")
    written = []
    for entry in manifest.entries:
        if features_dir is not None:
            n = io.load_frame_sequence(entry.frame_dir, entry.video_id).frame_count
            load = lambda k, v=entry.video_id: io.read_plane_stack(Path(features_dir) / patches.feature_file_name(v, k))  # noqa: E731
        else:
            frames = io.load_frame_sequence(entry.frame_dir, entry.video_id).frames
            n = len(frames)
            load = lambda k, fr=frames: frame_features(fr[k], fr[k - 1] if k else None, config)  # noqa: E731

        def one(k, vid=entry.video_id, load=load):
            smap = predict_dense_map(model, load(k), batch_size=batch_size)
            path = out_dir / map_file_name(vid, k)
            io.write_plane_stack(smap.values, path)
            if pgm:
                io.write_pgm(smap.values, path.with_suffix(".pgm"))
            return path

        written += _pool_map(one, range(n), workers)
    return written


def list_maps(directory, video_id):
    """Map files of one video in frame order, preferring FMAP over PGM."""
    found: dict[int, Path] = {}
    for p in Path(directory).iterdir():
        m = MAP_NAME.match(p.name)
        if m and m["video"] == video_id:
            k = int(m["frame"])
            if k not in found or p.suffix == ".fmap":
                found[k] = p
    frames = sorted(found)
    if frames != list(range(len(frames))):
        raise ValueError(f"{directory}: frames of {video_id} are not numbered 0..{len(frames) - 1}")
    return [found[k] for k in frames]


def cmd_evaluate(maps_dirs, manifest, out_report, workers=1):
    """Compare saliency-map directories (``name=dir`` or plain ``dir``) against the manifest fixations.

    Writes the CSV report, a ``.txt`` table and a ``.delta.csv`` with pairwise mean improvements.
    """
    manifest = _manifest(manifest)
    named = {}
    for spec in maps_dirs:
        spec = str(spec)
        name, _, path = spec.partition("=") if "=" in spec else (Path(spec).name, "", spec)
        if name in named:
            raise ValueError(f"duplicate model name {name!r}")
        named[name] = Path(path)
    for name, d in named.items():
        if not d.is_dir():
            raise FileNotFoundError(f"map directory not found for {name!r}: {d}")
    map_sets = {name: {} for name in named}
    fixations = {}
    for entry in manifest.entries:
        for name, d in named.items():
            files = list_maps(d, entry.video_id)
            maps = _pool_map(io.read_map, files, workers)
            for m in maps:
                if m.shape != (entry.height, entry.width):
                    raise ValueError(f"{name}/{entry.video_id}: map shape {m.shape} does not match the frame size")
            map_sets[name][entry.video_id] = maps
        flog = io.load_fixations(entry.fixation_file, frame_size=(entry.width, entry.height))
        fixations[entry.video_id] = flog.by_frame(entry.video_id)
    report = compare_models(map_sets, fixations)
    out_report = Path(out_report)
    out_report.write_text(report.to_csv())
    out_report.with_suffix(".txt").write_text(report.to_text())
    out_report.with_suffix(".delta.csv").write_text(report.deltas_csv())
    return report
