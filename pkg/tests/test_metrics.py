import math

import numpy as np
import pytest

from rlaug import kernels, metrics
from rlaug.errors import ContractViolation

import oracles


def _points(*coords, shape=(8, 8)):
    m = np.zeros(shape, np.uint8)
    for r, c in coords:
        m[r, c] = 1
    return m


def test_confusion_identity():
    gt = np.zeros((8, 8), np.uint8)
    gt.flat[:10] = 1
    assert metrics.confusion_counts(gt, gt) == (10, 0, 0, 54)
    tp, fp, fn, tn = metrics.confusion_counts(1 - gt, gt)
    assert tp == tn == 0


def test_confusion_matches_loops(rng):
    for _ in range(20):
        p, g = rng.random((8, 8)) < 0.4, rng.random((8, 8)) < 0.4
        assert metrics.confusion_counts(p, g) == oracles.counts(p.tolist(), g.tolist())


def test_shape_mismatch():
    with pytest.raises(ContractViolation):
        metrics.confusion_counts(np.zeros((3, 3)), np.zeros((3, 4)))


def test_overlap_arithmetic():
    p = _points((0, 0), (0, 1), (0, 2), (0, 3))
    g = _points((0, 2), (0, 3), (0, 4), (0, 5))
    iou, dsc, ppv, sen = metrics.overlap_metrics(p, g)
    assert (dsc, ppv, sen) == (0.5, 0.5, 0.5)
    assert iou == pytest.approx(1 / 3, abs=1e-15)


def test_overlap_empty_rules():
    e = np.zeros((4, 4), np.uint8)
    f = _points((1, 1), shape=(4, 4))
    assert metrics.overlap_metrics(e, e) == (1.0, 1.0, 1.0, 1.0)
    assert metrics.overlap_metrics(f, e) == (0.0, 0.0, 0.0, 0.0)
    assert metrics.overlap_metrics(e, f) == (0.0, 0.0, 0.0, 0.0)
    assert metrics.overlap_metrics(f, f) == (1.0, 1.0, 1.0, 1.0)


def test_overlap_random_16(rng):
    for _ in range(20):
        p, g = rng.random((16, 16)) < 0.3, rng.random((16, 16)) < 0.3
        assert metrics.overlap_metrics(p, g) == oracles.overlap(p.tolist(), g.tolist())


def test_centroid_examples():
    m = _points((3, 3), (4, 5))
    assert metrics.centroid_distance(m, m) == 0.0
    assert metrics.centroid_distance(_points((0, 0)), _points((4, 3))) == 5.0


def test_centroid_translation(rng):
    base = (rng.random((10, 10)) < 0.5).astype(np.uint8)
    big = np.zeros((32, 32), np.uint8)
    big[2:12, 3:13] = base
    moved = np.zeros_like(big)
    moved[2 + 7:12 + 7, 3 + 4:13 + 4] = base
    assert metrics.centroid_distance(big, moved) == pytest.approx(math.hypot(4, 7), abs=1e-9)


def test_undefined_on_empty():
    e = np.zeros((5, 5), np.uint8)
    f = _points((1, 1), shape=(5, 5))
    rec = metrics.evaluate(f, e)
    assert all(math.isnan(rec[k]) for k in ("cd", "hd", "asd"))
    assert math.isnan(metrics.hausdorff(e, f)) and math.isnan(metrics.asd(e, e))


def test_hausdorff_examples():
    m = _points((2, 2), (2, 3))
    assert metrics.hausdorff(m, m) == 0.0
    assert metrics.hausdorff(_points((0, 0)), _points((4, 3))) == 5.0


def test_boundary_border_counts_as_background():
    full = np.ones((3, 3), np.uint8)
    b = {tuple(x) for x in metrics.boundary(full)}
    assert b == {(r, c) for r in range(3) for c in range(3)} - {(1, 1)}


def test_asd_concentric_squares():
    a = np.zeros((15, 15), np.uint8)
    b = np.zeros_like(a)
    a[7 - 3:7 + 4, 7 - 3:7 + 4] = 1
    b[7 - 4:7 + 5, 7 - 4:7 + 5] = 1
    assert metrics.asd(a, b) == pytest.approx(1.0, abs=0.15)
    assert metrics.asd(a, b) == pytest.approx(oracles.asd(a.tolist(), b.tolist()), abs=1e-12)
    assert metrics.asd(a, a) == 0.0


def test_random_blobs_against_oracle(rng):
    for _ in range(30):
        p, g = rng.random((12, 12)) < 0.35, rng.random((12, 12)) < 0.35
        rec, ref = metrics.evaluate(p, g), oracles.all_metrics(p, g)
        for k in metrics.METRIC_KEYS:
            assert rec[k] == pytest.approx(ref[k], abs=1e-9, nan_ok=True), k
        assert rec["asd"] <= rec["hd"] + 1e-12


def test_symmetry(rng):
    for _ in range(50):
        p, g = rng.random((6, 7)) < 0.5, rng.random((6, 7)) < 0.5
        a, b = metrics.evaluate(p, g), metrics.evaluate(g, p)
        for k in ("iou", "dsc", "cd", "hd", "asd"):
            assert a[k] == pytest.approx(b[k], abs=1e-12, nan_ok=True)
        assert a["ppv"] == pytest.approx(b["sen"], abs=1e-15)


def test_min_sq_dists_backends(rng):
    a = rng.integers(0, 50, (40, 2)).astype(np.int64)
    b = rng.integers(0, 50, (33, 2)).astype(np.int64)
    ref = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1).min(1)
    for mod in kernels.backends().values():
        assert np.array_equal(mod.min_sq_dists(a, b), ref)


def _rec(**kw):
    base = dict.fromkeys(metrics.METRIC_KEYS, 0.5)
    base.update(kw)
    return base


def test_aggregate_rules():
    recs = [_rec(cd=1.0, hd=4.0, asd=1.0), _rec(cd=2.0, hd=3.0, asd=2.0),
            _rec(cd=100.0, hd=2.0, asd=6.0)]
    agg, excl = metrics.aggregate(recs)
    assert agg["cd"] == 2.0 and agg["hd"] == 3.0 and agg["asd"] == 3.0
    assert metrics.lower_median([1, 2, 3, 4]) == 2
    assert excl == dict.fromkeys(metrics.METRIC_KEYS, 0)


def test_aggregate_single_and_excluded():
    r = _rec(cd=1.5)
    assert metrics.aggregate([r])[0] == r
    agg, excl = metrics.aggregate([r, _rec(cd=math.nan, hd=math.nan, asd=math.nan)])
    assert agg["cd"] == 1.5 and excl["cd"] == 1 and excl["iou"] == 0
    agg, excl = metrics.aggregate([_rec(hd=math.nan)])
    assert math.isnan(agg["hd"]) and excl["hd"] == 1
    with pytest.raises(ContractViolation):
        metrics.aggregate([])


def test_metrics_csv_roundtrip(tmp_path):
    recs = [_rec(cd=1.0), _rec(cd=math.nan, hd=math.nan, asd=math.nan)]
    path = tmp_path / "m.csv"
    metrics.write_metrics_csv(path, ["a", "b"], recs)
    header = path.read_text().splitlines()[0].split(",")
    assert header == ["id", "mIoU", "DSC", "PPV", "SEN", "CD", "HD", "ASD", "excluded"]
    ids, back, agg = metrics.read_metrics_csv(path)
    assert ids == ["a", "b"]
    assert back[0] == recs[0] and math.isnan(back[1]["hd"])
    assert agg["cd"] == 1.0
