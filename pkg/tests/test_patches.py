import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from salnet import io, patches
from salnet.fixations import build_wooding_map
from salnet.patches import (assemble_patch_dataset, balance_and_shuffle, build_threshold_schedule,
                            extract_nonsalient_patches, extract_salient_patches, PatchRecord)

EXPECTED_TAU = [1.0, 0.96, 0.9216, 0.884736, 0.84934656, 0.8153726976]


def test_schedule_default():
    s = build_threshold_schedule(np.array([[0.2, 1.0]]), 0.04, 5)
    np.testing.assert_allclose(s.tau, EXPECTED_TAU, atol=1e-12)
    assert s.J == 5 and s.floor == pytest.approx(0.8153726976)


def test_schedule_half():
    s = build_threshold_schedule(np.array([[0.5]]), 0.5, 1)
    np.testing.assert_allclose(s.tau, [0.5, 0.25])


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.1])
def test_schedule_rejects_epsilon(eps):
    with pytest.raises(ValueError):
        build_threshold_schedule(np.ones((2, 2)), eps, 5)


def test_schedule_rejects_empty_map():
    with pytest.raises(ValueError, match="empty"):
        build_threshold_schedule(np.zeros((4, 4)))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 10), st.floats(0.001, 0.99), st.integers(0, 12))
def test_schedule_geometry(top, eps, J):
    s = build_threshold_schedule(np.array([[top]]), eps, J)
    assert np.all(np.diff(s.tau) < 0)
    np.testing.assert_allclose(s.tau, top * (1 - eps) ** np.arange(J + 1), rtol=1e-12)


def _stack(h, w, c=3):
    return np.arange(h * w * c, dtype=np.float32).reshape(h, w, c)


def test_single_peak_one_patch():
    fmap = build_wooding_map([(8, 8)], 16, 16, 1.5)
    sched = build_threshold_schedule(fmap)
    out = extract_salient_patches(_stack(16, 16), fmap, sched, 8)
    assert len(out) == 1
    p = out[0]
    assert p.center == (8, 8) and p.tau_level == 0 and p.label == 1
    np.testing.assert_array_equal(p.data, _stack(16, 16)[4:12, 4:12])


def test_zero_map_no_salient_patches():
    sched = build_threshold_schedule(np.ones((1, 1)))
    assert extract_salient_patches(_stack(16, 16), np.zeros((16, 16)), sched, 8) == []


def test_equal_peaks_suppressed_to_smaller_center():
    t = 8
    fmap = build_wooding_map([(12, 12), (18, 12)], 32, 24, 1.0)  # 3t/4 apart
    sched = build_threshold_schedule(fmap)
    out = extract_salient_patches(_stack(24, 32), fmap, sched, t)
    assert [p.center for p in out] == [(12, 12)]


def test_distant_peaks_both_kept_and_capped():
    fmap = build_wooding_map([(8, 8), (40, 8), (24, 24)], 48, 32, 1.0)
    sched = build_threshold_schedule(fmap)
    assert len(extract_salient_patches(_stack(32, 48), fmap, sched, 8)) == 3
    assert len(extract_salient_patches(_stack(32, 48), fmap, sched, 8, max_per_frame=2)) == 2


def test_patch_larger_than_frame():
    sched = build_threshold_schedule(np.ones((1, 1)))
    with pytest.raises(ValueError):
        extract_salient_patches(_stack(8, 8), np.ones((8, 8)), sched, 9)


def test_nonsalient_all_ones():
    sched = build_threshold_schedule(np.ones((1, 1)))
    out, complete = extract_nonsalient_patches(_stack(16, 16), np.ones((16, 16)), sched, 8, 3, rng_seed=1)
    assert out == [] and not complete


def test_nonsalient_repeatable():
    sched = build_threshold_schedule(np.ones((1, 1)))
    a, ok = extract_nonsalient_patches(_stack(16, 16), np.zeros((16, 16)), sched, 8, 5, rng_seed=7)
    b, _ = extract_nonsalient_patches(_stack(16, 16), np.zeros((16, 16)), sched, 8, 5, rng_seed=7)
    assert ok and len(a) == 5
    assert [p.center for p in a] == [p.center for p in b]
    assert len({p.center for p in a}) == 5


def test_nonsalient_half_map():
    values = np.zeros((32, 32))
    values[:, 16:] = 1.0
    sched = build_threshold_schedule(values)
    out, _ = extract_nonsalient_patches(_stack(32, 32), values, sched, 8, 20, rng_seed=0)
    assert len(out) == 20
    assert all(p.center[0] < 16 and p.label == 0 for p in out)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 39), st.integers(0, 29)), min_size=1, max_size=6),
       st.integers(6, 16), st.integers(0, 10 ** 6))
def test_label_soundness_and_bounds(fix, t, seed):
    fmap = build_wooding_map(fix, 40, 30, 2.0)
    sched = build_threshold_schedule(fmap)
    stack = _stack(30, 40, 1)
    sal = extract_salient_patches(stack, fmap, sched, t)
    neg, _ = extract_nonsalient_patches(stack, fmap, sched, t, 10, rng_seed=seed)
    for p in sal + neg:
        x, y = p.center
        assert p.data.shape == (t, t, 1)
        assert 0 <= x - t // 2 and x - t // 2 + t <= 40 and 0 <= y - t // 2 and y - t // 2 + t <= 30
        if p.label:
            assert fmap.values[y, x] >= sched.tau[p.tau_level] >= sched.floor
        else:
            assert fmap.values[y, x] < sched.floor


def _rec(label, k):
    return PatchRecord(np.zeros((2, 2, 1)), (k, 0), label, "v", 0, 0 if label else None)


def test_balance_trims_larger_class():
    out = balance_and_shuffle([_rec(1, k) for k in range(10)], [_rec(0, k) for k in range(6)], True, 3)
    assert sum(r.label for r in out) == 6 and len(out) == 12
    out = balance_and_shuffle([_rec(1, k) for k in range(10)], [_rec(0, k) for k in range(6)], False, 3)
    assert len(out) == 16


def _fixture(tmp_path, frames=3):
    """One 32x32 video; every frame has two fixated spots far apart."""
    rng = np.random.default_rng(0)
    fdir = tmp_path / "v" / "frames"
    fdir.mkdir(parents=True)
    recs = []
    for k in range(frames):
        io.save_frame(rng.random((32, 32, 3)), fdir / f"{k:05d}.png")
        recs += [io.Fixation("v", k, 8, 8, "a"), io.Fixation("v", k, 24, 24, "b")]
    io.write_fixations(recs, tmp_path / "v" / "fix.csv")
    io.write_manifest(io.DatasetManifest([io.ManifestEntry("v", fdir, tmp_path / "v" / "fix.csv", 32, 32)]),
                      tmp_path / "m.tsv")
    return tmp_path / "m.tsv"


def test_assemble_counts_and_determinism(tmp_path):
    m = _fixture(tmp_path)
    a = assemble_patch_dataset(m, "3k", 8, balance=True, rng_seed=4)
    assert len(a) == 12 and sum(r.label for r in a) == 6
    b = assemble_patch_dataset(m, "3k", 8, balance=True, rng_seed=4)
    assert [(r.frame_index, r.center, r.label) for r in a] == [(r.frame_index, r.center, r.label) for r in b]
    assert all(x.data.tobytes() == y.data.tobytes() for x, y in zip(a, b))


def test_dataset_save_load(tmp_path):
    recs = assemble_patch_dataset(_fixture(tmp_path), "3k", 8, rng_seed=1)
    patches.save_patch_dataset(recs, tmp_path / "ds")
    back = patches.load_patch_dataset(tmp_path / "ds")
    assert [(r.video_id, r.frame_index, r.center, r.label, r.tau_level) for r in back] == \
        [(r.video_id, r.frame_index, r.center, r.label, r.tau_level) for r in recs]
    x, y = patches.as_arrays(back)
    assert x.shape == (12, 3, 8, 8) and y.dtype == np.int64
