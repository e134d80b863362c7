import numpy as np
import pytest

from connscale.dataset import (SegmentIndex, TrialInfo, cache_key, check_plan, connectivity_batch,
                               enumerate_segments, fold_test_starts, make_folds, make_split,
                               materialize, read_plans, upscale_batch, window_samples, write_plans)
from connscale.resample import UpscaleConfig
from connscale.signal_io import SyntheticSpec, decompose_bands, generate_synthetic

W, S = 384, 64


def trials(n, n_samples=7680):
    return [TrialInfo(i // 4, i % 4, n_samples, i % 3) for i in range(n)]


def test_window_arithmetic():
    assert window_samples(128.0) == 384 and window_samples(128.0, 0.5) == 64
    starts = enumerate_segments(7680, W, S)
    assert len(starts) == 115 and starts[-1] == 7296
    assert enumerate_segments(384, W, S) == [0]
    with pytest.raises(ValueError):
        enumerate_segments(383, W, S)


def test_interior_split_counts():
    tr = trials(3)
    plan = make_split(tr, [3648] * 3, fold_id=0, val_pick=[1280] * 3)
    c = plan.counts()
    assert c == {"train": 3 * 93, "validation": 3, "test": 3, "excluded": 3 * 20}
    check_plan(plan, tr)


def test_edge_test_excludes_fewer():
    plan = make_split(trials(1), [0], val_pick=[3648])
    # test at 0 blocks 5 later starts; val blocks 5 on each side
    assert plan.counts()["excluded"] == 5 + 10


def test_random_validation_is_seeded():
    tr = trials(5)
    a = make_split(tr, [3648] * 5, seed=9)
    b = make_split(tr, [3648] * 5, seed=9)
    c = make_split(tr, [3648] * 5, seed=10)
    assert a.validation == b.validation
    assert a.validation != c.validation
    for t, v in zip(a.test, a.validation):
        assert not t.overlaps(v)


def test_bad_picks():
    tr = trials(1)
    with pytest.raises(ValueError, match="not an enumerated"):
        make_split(tr, [10])
    with pytest.raises(ValueError, match="overlapping"):
        make_split(tr, [0], val_pick=[64])
    with pytest.raises(ValueError, match="avoids"):
        make_split([TrialInfo(0, 0, 700, 0)], [0])


def test_fold_grid():
    starts = fold_test_starts(7680, 4, W, S)
    assert starts == [0, 1856, 3648, 5504]
    assert [s / 128 for s in starts] == [0.0, 14.5, 28.5, 43.0]
    with pytest.raises(ValueError, match="cannot place"):
        fold_test_starts(2560, 4, W, S)
    assert fold_test_starts(2560, 4, W, S, distance_min=384) == [0, 576, 1088, 1664]
    with pytest.raises(ValueError):
        fold_test_starts(7680, 4, W, S, distance_min=100)


def test_folds_disjoint_tests():
    tr = trials(4)
    plans = make_folds(tr, 4, seed=1)
    assert [p.fold_id for p in plans] == [0, 1, 2, 3]
    for p in plans:
        check_plan(p, tr)
    tests = [s for p in plans for s in p.test]
    for i, a in enumerate(tests):
        for b in tests[i + 1:]:
            assert not a.overlaps(b)


def test_check_plan_detects_leak():
    tr = trials(1)
    plan = make_split(tr, [3648], val_pick=[0])
    plan.train.append(SegmentIndex(0, 0, 3648 + 64, W, 0))
    with pytest.raises(AssertionError, match="overlaps"):
        check_plan(plan)
    plan = make_split(tr, [3648], val_pick=[0])
    plan.excluded.pop()
    with pytest.raises(AssertionError, match="count identity"):
        check_plan(plan, tr)


def test_plan_file_round_trip(tmp_path):
    tr = trials(3)
    plans = make_folds(tr, 2, seed=4, distance_min=W)
    path = tmp_path / "plans.txt"
    write_plans(path, plans)
    back = read_plans(path)
    assert [p.counts() for p in back] == [p.counts() for p in plans]
    for a, b in zip(back, plans):
        assert a.train == b.train and a.test == b.test and a.validation == b.validation
    path.write_text("0 bogus 0 0 0 0\n")
    with pytest.raises(ValueError, match="malformed"):
        read_plans(path)


@pytest.fixture(scope="module")
def small_stacks():
    spec = SyntheticSpec(n_participants=1, n_trials_per_participant=2, n_classes=2, duration_s=8,
                         n_channels=4)
    return {s.key: decompose_bands(s) for s in generate_synthetic(spec)}


def test_materialize_cache(tmp_path, small_stacks):
    segs = [SegmentIndex(0, t, st, W, t) for t in (0, 1) for st in (0, 128)]
    up = UpscaleConfig(2.0, "bilinear")
    x0, y0 = materialize(segs, small_stacks, up)
    assert x0.shape == (4, 8, 8, 10) and x0.dtype == np.float32
    assert list(y0) == [0, 0, 1, 1]
    x1, _ = materialize(segs, small_stacks, up, cache_dir=tmp_path)
    files = sorted(tmp_path.glob("*.connt"))
    assert len(files) == 4
    np.testing.assert_array_equal(x0, x1)
    # corrupt one entry: it is recomputed, not trusted
    blob = bytearray(files[0].read_bytes())
    blob[-1] ^= 0xFF
    files[0].write_bytes(bytes(blob))
    x2, _ = materialize(segs, small_stacks, up, cache_dir=tmp_path)
    np.testing.assert_array_equal(x0, x2)
    with pytest.raises(ValueError, match="float32"):
        materialize(segs, small_stacks, up, cache_dir=tmp_path, dtype=np.float64)


def test_batch_path_matches_materialize(small_stacks):
    segs = [SegmentIndex(0, 1, 64, W, 1)]
    up = UpscaleConfig(1.5, "nearest")
    base, y = connectivity_batch(segs, small_stacks)
    np.testing.assert_array_equal(upscale_batch(base, up), materialize(segs, small_stacks, up)[0])
    with pytest.raises(KeyError, match="participant 5"):
        materialize([SegmentIndex(5, 0, 0, W, 0)], small_stacks, up)


def test_cache_key_sensitivity():
    seg = SegmentIndex(0, 0, 0, W, 0)
    k = cache_key(seg, "o", "b", UpscaleConfig(2.0))
    assert k != cache_key(seg, "o", "b", UpscaleConfig(2.0, "bilinear"))
    assert k != cache_key(seg, "o2", "b", UpscaleConfig(2.0))
    assert k != cache_key(SegmentIndex(0, 0, 64, W, 0), "o", "b", UpscaleConfig(2.0))
