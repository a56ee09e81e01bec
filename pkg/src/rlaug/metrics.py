"""Segmentation metrics: IoU, Dice, PPV, sensitivity, centroid distance,
Hausdorff distance and average symmetric surface distance.

Distances are in pixels (1 px = 1 mm-equivalent). Distance metrics are
undefined when either mask is empty; they come back as NaN and aggregation
skips and counts them.
"""
import csv
import math

import numpy as np

from . import kernels
from .errors import ContractViolation

UNDEFINED = math.nan
METRIC_KEYS = ("iou", "dsc", "ppv", "sen", "cd", "hd", "asd")
METRIC_NAMES = {"iou": "mIoU", "dsc": "DSC", "ppv": "PPV", "sen": "SEN",
                "cd": "CD", "hd": "HD", "asd": "ASD"}
MEDIAN_KEYS = ("cd", "hd")
DISTANCE_KEYS = ("cd", "hd", "asd")


def _pair(pred, gt):
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ContractViolation(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    return pred, gt


def confusion_counts(pred, gt):
    pred, gt = _pair(pred, gt)
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    tn = int(pred.size - tp - fp - fn)
    return tp, fp, fn, tn


def overlap_metrics(pred, gt):
    """(iou, dsc, ppv, sen). Both masks empty scores 1; a zero denominator otherwise scores 0."""
    tp, fp, fn, _ = confusion_counts(pred, gt)
    if tp + fp == 0 and tp + fn == 0:
        return 1.0, 1.0, 1.0, 1.0

    def ratio(num, den):
        return num / den if den else 0.0

    return (ratio(tp, tp + fp + fn), ratio(2 * tp, 2 * tp + fp + fn),
            ratio(tp, tp + fp), ratio(tp, tp + fn))


def dice(pred, gt):
    return overlap_metrics(pred, gt)[1]


def centroid(mask):
    """(x, y) mean of the foreground pixel coordinates."""
    rows, cols = np.nonzero(np.asarray(mask))
    if rows.size == 0:
        return None
    return float(cols.mean()), float(rows.mean())


def centroid_distance(pred, gt):
    pred, gt = _pair(pred, gt)
    a, b = centroid(pred), centroid(gt)
    if a is None or b is None:
        return UNDEFINED
    return math.hypot(a[0] - b[0], a[1] - b[1])


def boundary(mask):
    """(row, col) of foreground pixels with a background 4-neighbour; outside counts as background."""
    m = np.pad(np.asarray(mask).astype(bool), 1)
    core = m[1:-1, 1:-1]
    interior = m[:-2, 1:-1] & m[2:, 1:-1] & m[1:-1, :-2] & m[1:-1, 2:]
    return np.ascontiguousarray(np.argwhere(core & ~interior).astype(np.int64))


def _surface_sq_dists(pred, gt):
    pred, gt = _pair(pred, gt)
    bp, bg = boundary(pred), boundary(gt)
    if len(bp) == 0 or len(bg) == 0:
        return None
    return kernels.min_sq_dists(bp, bg), kernels.min_sq_dists(bg, bp)


def hausdorff(pred, gt):
    d = _surface_sq_dists(pred, gt)
    if d is None:
        return UNDEFINED
    return math.sqrt(max(int(d[0].max()), int(d[1].max())))


def asd(pred, gt):
    """Average symmetric surface distance: mean of the two directed mean distances."""
    d = _surface_sq_dists(pred, gt)
    if d is None:
        return UNDEFINED
    return 0.5 * (float(np.sqrt(d[0]).mean()) + float(np.sqrt(d[1]).mean()))


def evaluate(pred, gt):
    """All seven metrics for one image as a dict keyed by METRIC_KEYS."""
    iou, dsc, ppv, sen = overlap_metrics(pred, gt)
    rec = {"iou": iou, "dsc": dsc, "ppv": ppv, "sen": sen, "cd": centroid_distance(pred, gt)}
    d = _surface_sq_dists(pred, gt)
    if d is None:
        rec["hd"] = rec["asd"] = UNDEFINED
    else:
        rec["hd"] = math.sqrt(max(int(d[0].max()), int(d[1].max())))
        rec["asd"] = 0.5 * (float(np.sqrt(d[0]).mean()) + float(np.sqrt(d[1]).mean()))
    return rec


def lower_median(values):
    vals = sorted(values)
    return vals[(len(vals) - 1) // 2]


def aggregate(records):
    """Combine per-image records: mean for iou/dsc/ppv/sen/asd, lower median for cd/hd.

    Returns ``(aggregate, excluded)`` where ``excluded[key]`` counts the NaN
    records skipped; a metric with no valid record aggregates to NaN.
    """
    if not records:
        raise ContractViolation("aggregate needs at least one record")
    agg, excluded = {}, {}
    for key in METRIC_KEYS:
        vals = [r[key] for r in records if not math.isnan(r[key])]
        excluded[key] = len(records) - len(vals)
        if not vals:
            agg[key] = UNDEFINED
        elif key in MEDIAN_KEYS:
            agg[key] = lower_median(vals)
        else:
            agg[key] = math.fsum(vals) / len(vals)
    return agg, excluded


def _fmt(x):
    return "undefined" if math.isnan(x) else repr(float(x))


def write_metrics_csv(path, ids, records):
    """One row per image plus a final ``aggregate`` row."""
    agg, excluded = aggregate(records)
    header = ["id"] + [METRIC_NAMES[k] for k in METRIC_KEYS] + ["excluded"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for sid, rec in zip(ids, records):
            flags = ";".join(METRIC_NAMES[k] for k in DISTANCE_KEYS if math.isnan(rec[k]))
            w.writerow([sid] + [_fmt(rec[k]) for k in METRIC_KEYS] + [flags])
        flags = ";".join(f"{METRIC_NAMES[k]}:{excluded[k]}" for k in DISTANCE_KEYS)
        w.writerow(["aggregate"] + [_fmt(agg[k]) for k in METRIC_KEYS] + [flags])
    return agg, excluded


def read_metrics_csv(path):
    """Return (ids, per-image records, aggregate record) from write_metrics_csv output."""
    by_name = {v: k for k, v in METRIC_NAMES.items()}
    ids, records, agg = [], [], None
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rec = {by_name[n]: (UNDEFINED if row[n] == "undefined" else float(row[n]))
                   for n in by_name}
            if row["id"] == "aggregate":
                agg = rec
            else:
                ids.append(row["id"])
                records.append(rec)
    return ids, records, agg
