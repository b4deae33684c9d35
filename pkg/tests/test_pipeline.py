import json

import numpy as np
import pytest

from salnet import io, pipeline
from salnet.cnn import desk_architecture, init_model
from salnet.cnn.solver import SolverConfig
from salnet.motion import residual_motion_channel
from salnet.saliency import grid_centers, map_from_probabilities
from salnet.synthetic import write_dataset

ARCH = {"preset": "desk", "filler": "msra", "seed": 0}


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    manifest = write_dataset(root / "data", "bright_blob", n_videos=3, n_frames=4, seed=11, size=48)
    return root, manifest


def _files_bytes(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


@pytest.mark.parametrize("name,channels", [("3k", 3), ("4k", 4), ("8k", 8), ("rgb8k", 11), ("hsv8k", 11)])
def test_extract_counts(fixture_dir, tmp_path, name, channels):
    _, manifest = fixture_dir
    paths = pipeline.cmd_extract(manifest, name, tmp_path, workers=2)
    assert len(paths) == 12
    assert paths[0].name == "bright_blob00_00000.fmap"
    stack = io.read_plane_stack(paths[5])
    assert stack.shape == (48, 48, channels)


def test_extract_motion_channel(fixture_dir, tmp_path):
    _, manifest = fixture_dir
    pipeline.cmd_extract(manifest, "4k", tmp_path)
    entry = io.load_manifest(manifest).entries[1]
    frames = io.load_frame_sequence(entry.frame_dir).frames
    for k in range(4):
        stack = io.read_plane_stack(tmp_path / f"{entry.video_id}_{k:05d}.fmap")
        ref = residual_motion_channel(frames[k - 1] if k else None, frames[k])
        np.testing.assert_allclose(stack[..., 3], ref, atol=1e-6)
        np.testing.assert_allclose(stack[..., :3], frames[k], atol=1e-6)
    assert not io.read_plane_stack(tmp_path / f"{entry.video_id}_00000.fmap")[..., 3].any()


def test_extract_workers_identical(fixture_dir, tmp_path):
    _, manifest = fixture_dir
    pipeline.cmd_extract(manifest, "8k", tmp_path / "a", workers=1)
    pipeline.cmd_extract(manifest, "8k", tmp_path / "b", workers=3)
    assert _files_bytes(tmp_path / "a") == _files_bytes(tmp_path / "b")


@pytest.fixture(scope="module")
def features(fixture_dir):
    root, manifest = fixture_dir
    pipeline.cmd_extract(manifest, "4k", root / "feat")
    return root / "feat"


def test_sample_deterministic(fixture_dir, features, tmp_path):
    _, manifest = fixture_dir
    pipeline.cmd_sample(manifest, features, 16, 0.04, 5, 3, tmp_path / "a")
    pipeline.cmd_sample(manifest, features, 16, 0.04, 5, 3, tmp_path / "b")
    assert _files_bytes(tmp_path / "a") == _files_bytes(tmp_path / "b")
    pipeline.cmd_sample(manifest, features, 16, 0.04, 5, 4, tmp_path / "c")
    assert _files_bytes(tmp_path / "a") != _files_bytes(tmp_path / "c")


def test_sample_counts(fixture_dir, features, tmp_path):
    _, manifest = fixture_dir
    pipeline.cmd_sample(manifest, features, 16, 0.04, 5, 0, tmp_path / "d", max_per_frame=4)
    meta = json.loads((tmp_path / "d" / "dataset.json").read_text())
    assert meta["channels"] == "4k" and meta["t"] == 16
    # balanced: as many non-salient as salient; the first frame of every clip is unfixated
    assert meta["patches"] == 2 * meta["salient"]
    assert 0 < meta["salient"] <= 3 * 3 * 4


def test_sample_patch_too_large(fixture_dir, features, tmp_path):
    _, manifest = fixture_dir
    with pytest.raises(ValueError, match="exceeds"):
        pipeline.cmd_sample(manifest, features, 64, 0.04, 5, 0, tmp_path / "x")


def test_sample_channel_mismatch(fixture_dir, features, tmp_path):
    _, manifest = fixture_dir
    with pytest.raises(ValueError):
        pipeline.cmd_sample(manifest, features, 16, 0.04, 5, 0, tmp_path / "x", channel_config="8k")


@pytest.fixture(scope="module")
def dataset(fixture_dir, features):
    root, manifest = fixture_dir
    pipeline.cmd_sample(manifest, features, 16, 0.04, 5, 0, root / "patches")
    return root / "patches"


def _solver(**kw):
    base = dict(learning_rate=0.01, batch_size=8, epochs=3, seed=1)
    return SolverConfig(**{**base, **kw})


def test_train_writes_checkpoint_and_report(dataset, tmp_path):
    model, report = pipeline.cmd_train(dataset, tmp_path / "m.ckpt", arch=ARCH, solver=_solver())
    csv = (tmp_path / "m.report.csv").read_text().splitlines()
    assert csv[0] == "iteration,accuracy" and len(csv) == report.validations + 1
    loaded = io.load_model(tmp_path / "m.ckpt")
    assert loaded.meta["channels"] == "4k" and loaded.input_shape == (16, 16, 4)


def test_train_deterministic(dataset, tmp_path):
    pipeline.cmd_train(dataset, tmp_path / "a.ckpt", arch=ARCH, solver=_solver())
    pipeline.cmd_train(dataset, tmp_path / "b.ckpt", arch=ARCH, solver=_solver())
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert (tmp_path / "a.report.csv").read_bytes() == (tmp_path / "b.report.csv").read_bytes()


def test_train_zero_lr_flat(dataset, tmp_path):
    _, report = pipeline.cmd_train(dataset, tmp_path / "z.ckpt", arch=ARCH, solver=_solver(learning_rate=0.0))
    assert len({a for _, a in report.points}) == 1


def test_train_resume_identical(dataset, tmp_path):
    pipeline.cmd_train(dataset, tmp_path / "full.ckpt", arch=ARCH, solver=_solver())
    pipeline.cmd_train(dataset, tmp_path / "part.ckpt", arch=ARCH, solver=_solver(), stop_after=4)
    pipeline.cmd_train(dataset, tmp_path / "rest.ckpt", arch=ARCH, solver=_solver(), resume=tmp_path / "part.ckpt")
    assert (tmp_path / "rest.ckpt").read_bytes() == (tmp_path / "full.ckpt").read_bytes()


def test_split_validation_holds_out_videos(dataset):
    records = pipeline.patches.load_patch_dataset(dataset)
    tr, va = pipeline.split_validation(records, 0.2, 0)
    assert {r.video_id for r in tr}.isdisjoint({r.video_id for r in va})
    assert len(tr) + len(va) == len(records)


def test_predict_flat_for_constant_model(fixture_dir, tmp_path):
    _, manifest = fixture_dir
    model = init_model(desk_architecture(4, 16), (16, 16, 4), seed=0, symmetric_output=True,
                       meta={"channels": "4k", "patch_size": 16})
    paths = pipeline.cmd_predict(model, manifest, tmp_path, pgm=True)
    assert len(paths) == 12 and (tmp_path / "bright_blob00_00000.pgm").is_file()
    centers = grid_centers(48, 48, 16)
    flat = map_from_probabilities((48, 48), centers, [0.5] * len(centers), 16).values
    for p in paths:
        np.testing.assert_allclose(io.read_plane_stack(p)[..., 0], flat, atol=1e-6)


def test_predict_missing_model(fixture_dir, tmp_path):
    _, manifest = fixture_dir
    with pytest.raises(OSError):
        pipeline.cmd_predict(tmp_path / "nope.ckpt", manifest, tmp_path / "out")


def test_predict_and_evaluate(fixture_dir, features, dataset, tmp_path):
    _, manifest = fixture_dir
    pipeline.cmd_train(dataset, tmp_path / "m.ckpt", arch=ARCH, solver=_solver())
    a = pipeline.cmd_predict(tmp_path / "m.ckpt", manifest, tmp_path / "maps_a", features_dir=features, workers=2)
    b = pipeline.cmd_predict(tmp_path / "m.ckpt", manifest, tmp_path / "maps_b")
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]
    report = pipeline.cmd_evaluate([f"cnn={tmp_path / 'maps_a'}", f"again={tmp_path / 'maps_b'}"], manifest,
                                   tmp_path / "report.csv")
    assert report.deltas[("cnn", "again")] == 0.0
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0] == "video_id,model,metric,mean,std,frames" and len(lines) == 7
    # frame 0 carries no fixations and is skipped
    assert all(r.frames == 3 and r.skipped == [0] for r in report.results)
    assert (tmp_path / "report.txt").is_file() and (tmp_path / "report.delta.csv").is_file()


def test_evaluate_errors(fixture_dir, tmp_path):
    _, manifest = fixture_dir
    with pytest.raises(FileNotFoundError):
        pipeline.cmd_evaluate([tmp_path / "missing"], manifest, tmp_path / "r.csv")
    (tmp_path / "gap").mkdir()
    io.write_plane_stack(np.zeros((48, 48, 1), np.float32), tmp_path / "gap" / "bright_blob00_00001.fmap")
    with pytest.raises(ValueError):
        pipeline.cmd_evaluate([tmp_path / "gap"], manifest, tmp_path / "r.csv")
