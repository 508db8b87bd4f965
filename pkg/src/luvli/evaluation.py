"""Dataset-level reports built from paired annotation and prediction files."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import metrics
from .calibration import (
    DEFAULT_CELLS,
    DEFAULT_EXTENT,
    MIN_KL_POINTS,
    bin_and_correlate,
    histogram2d,
    kl_from_counts,
    nme_vs_uncertainty_rank,
    reference_cell_mass,
    residual_records,
    standardize,
)
from .dataio import VisibilityClass, to_ground_truth
from .errors import EmptyAfterFilter, LuvliError

CLASSES = tuple(c.value for c in VisibilityClass)


def _record(face, preds):
    return metrics.FaceEvalRecord(to_ground_truth(face), preds,
                                  None if face.bbox is None else face.bbox.size)


def _try(fn, *args):
    try:
        return fn(*args)
    except LuvliError:
        return None


def _mean(values):
    return float(np.mean(values)) if values else None


@dataclass
class EvalReport:
    rows: list
    summary: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["id", "nme_box", "nme_interocular", "nme_diag", "nme_vis"]
        w.writerow(cols)
        for r in self.rows:
            w.writerow(["" if r[c] is None else (r[c] if c == "id" else repr(r[c])) for c in cols])
        return buf.getvalue()


def evaluate(pairs, normalizer="box", cutoff=7.0, threshold=10.0) -> EvalReport:
    """Per-image NME table plus AUC, failure rate, visibility accuracy and uncertainty by class.

    ``pairs`` are ``(AnnotatedFace, predictions)`` tuples, as returned by
    :func:`luvli.dataio.pair`. Images whose chosen normalizer is undefined are
    left out of AUC and FR and counted in ``skipped_images``.
    """
    rows, chosen = [], []
    vhat, labels, classes = [], [], []
    unc = {c: [] for c in CLASSES}
    unc_box = {c: [] for c in CLASSES}
    for face, preds in pairs:
        rec = _record(face, preds)
        row = {"id": face.image_id}
        for k in metrics.NORMALIZERS:
            row[f"nme_{k}"] = _try(metrics.nme, rec, k)
        row["nme_vis"] = _try(metrics.nme_vis, rec, normalizer)
        rows.append(row)
        if row[f"nme_{normalizer}"] is not None:
            chosen.append(row[f"nme_{normalizer}"])
        for lm, p in zip(face.landmarks, preds):
            vhat.append(p.visibility)
            labels.append(int(lm.cls.visible))
            classes.append(lm.cls.value)
            unc[lm.cls.value].append(metrics.uncertainty_scalar(p))
            if face.bbox is not None:
                unc_box[lm.cls.value].append(
                    metrics.uncertainty_scalar(p, face.bbox.size, normalized=True))

    acc = {"all": _try(metrics.visibility_accuracy, vhat, labels)}
    for c in CLASSES:
        try:
            acc[c] = metrics.visibility_accuracy(vhat, labels, classes, {c})
        except EmptyAfterFilter:
            acc[c] = None
    summary = {
        "normalizer": normalizer,
        "cutoff": cutoff,
        "threshold": threshold,
        "num_images": len(rows),
        "skipped_images": len(rows) - len(chosen),
        "mean_nme": _mean(chosen),
        "mean_nme_vis": _mean([r["nme_vis"] for r in rows if r["nme_vis"] is not None]),
        "auc": metrics.auc(chosen, cutoff) if chosen else None,
        "fr": metrics.failure_rate(chosen, threshold) if chosen else None,
        "visibility_accuracy": acc,
        "mean_uncertainty": {c: _mean(unc[c]) for c in CLASSES},
        "mean_uncertainty_box": {c: _mean(unc_box[c]) for c in CLASSES},
    }
    return EvalReport(rows, summary)


def calibration_report(pairs, n_per_bin=500, extent=DEFAULT_EXTENT, cells=DEFAULT_CELLS):
    """Binning, standardized-residual KL and NME-vs-uncertainty ranking for a paired dataset.

    Returns ``(report, histogram_csv, rank_csv)``.
    """
    pairs = list(pairs)
    records = residual_records((to_ground_truth(f), p) for f, p in pairs)
    report = bin_and_correlate(records, n_per_bin)

    z = standardize(records)
    counts, tail = histogram2d(z, extent, cells)
    ref, ref_tail = reference_cell_mass(extent, cells)
    report.kl = kl_from_counts(counts, tail, ref, ref_tail) if len(z) >= MIN_KL_POINTS else None

    nmes, uncs = [], []
    for face, preds in pairs:
        e = _try(metrics.nme, _record(face, preds), "box")
        if e is not None:
            nmes.append(e)
            uncs.append(float(np.mean([metrics.uncertainty_scalar(p) for p in preds])))
    rank = nme_vs_uncertainty_rank(nmes, uncs) if nmes else None
    report.extras = {
        "num_records": len(records),
        "grid": {"extent": extent, "cells": cells},
        "histogram_tail_count": int(tail),
        "rank": None if rank is None else {"spearman": rank.spearman,
                                           "degenerate": rank.degenerate},
    }

    edges = np.linspace(-extent, extent, cells + 1)
    centres = 0.5 * (edges[:-1] + edges[1:])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ix", "iy", "x", "y", "count", "reference_mass"])
    for ix in range(cells):
        for iy in range(cells):
            w.writerow([ix, iy, repr(float(centres[ix])), repr(float(centres[iy])),
                        int(counts[ix, iy]), repr(float(ref[ix, iy]))])
    w.writerow(["tail", "tail", "", "", int(tail), repr(float(ref_tail))])
    hist_csv = buf.getvalue()

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["uncertainty_rank", "nme"])
    if rank is not None:
        for r, e in zip(rank.ranks, rank.nmes):
            w.writerow([int(r), repr(float(e))])
    return report, hist_csv, buf.getvalue()
