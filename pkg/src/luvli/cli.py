"""Command-line entry point.

Exit codes: 0 success, 1 data or tolerance failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dataio
from .errors import (
    CountMismatch,
    DataSyntaxError,
    Degenerate,
    SchemaError,
    TooFewRecords,
)
from .evaluation import calibration_report, evaluate
from .fitting import fit_mle, generate, gradcheck
from .geometry import Point2
from .likelihood import (
    VIS_EPS,
    LandmarkPrediction,
    LikelihoodKind,
    cholesky_activation,
)

GRADCHECK_TOL = 1e-6


class UsageError(Exception):
    pass


def _sidecar(path: Path, suffix: str) -> Path:
    stem = path.name[: -len(path.suffix)] if path.suffix else path.name
    return path.with_name(stem + suffix)


def _read(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _write(path, data):
    if isinstance(data, str):
        data = data.encode("utf-8")
    Path(path).write_bytes(data)


def _json(obj) -> bytes:
    return (json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n").encode("utf-8")


def cmd_synth(args):
    scenario, bbox = dataio.parse_scenario(_read(args.config))
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    groups = generate(scenario)
    faces = dataio.scenario_faces(scenario, groups, bbox)
    out = Path(args.out)
    truth = Path(args.truth_out) if args.truth_out else _sidecar(out, ".truth.json")
    _write(out, dataio.write_annotations(faces, len(scenario.landmarks)))
    _write(truth, dataio.write_truth(scenario, bbox))
    print(f"wrote {len(faces)} faces x {len(scenario.landmarks)} landmarks to {out} "
          f"(truth: {truth})")
    return 0


def cmd_gradcheck(args):
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    worst = gradcheck(args.kind, args.trials, args.seed)
    ok = worst < GRADCHECK_TOL
    print(f"{args.kind}: max relative error {worst:.3e} over {args.trials} trials "
          f"({'ok' if ok else 'FAIL'}, tolerance {GRADCHECK_TOL:g})")
    return 0 if ok else 1


def cmd_fit(args):
    faces = dataio.parse_annotations(_read(args.annotations))
    if not faces:
        raise UsageError("annotation file has no faces")
    kind = LikelihoodKind(args.kind)
    n_lm = len(faces[0].landmarks)
    gts = [dataio.to_ground_truth(f) for f in faces]
    preds, failed = [], []
    for j in range(n_lm):
        group = [g[j] for g in gts]
        try:
            res = fit_mle(group, kind)
        except Degenerate as exc:
            failed.append(j)
            vis = [g for g in group if g.visible]
            rate = min(max(len(vis) / len(group), VIS_EPS), 1.0 - VIS_EPS)
            preds.append(LandmarkPrediction(vis[0].location if vis else Point2(0.0, 0.0),
                                            cholesky_activation((0.0, 0.0, 0.0)), rate))
            print(f"landmark {j}: DEGENERATE ({exc})")
            continue
        p = res.prediction
        c = p.covariance
        preds.append(p)
        print(f"landmark {j}: converged={res.converged} iters={res.n_iter} loss={res.loss:.6f} "
              f"mu=({p.mean.x:.4f}, {p.mean.y:.4f}) "
              f"sigma=({c.xx:.4f}, {c.xy:.4f}, {c.yy:.4f}) vis={p.visibility:.4g}")
    _write(args.out, dataio.write_predictions({f.image_id: preds for f in faces}))
    if failed:
        print(f"{len(failed)} degenerate landmark group(s): {failed}")
        return 1
    return 0


def _paired(args):
    faces = dataio.parse_annotations(_read(args.annotations))
    preds = dataio.parse_predictions(_read(args.predictions))
    return dataio.pair(faces, preds)


def cmd_eval(args):
    report = evaluate(_paired(args), args.normalizer, args.cutoff, args.threshold)
    out = Path(args.out)
    csv_path = Path(args.csv) if args.csv else out.with_suffix(".csv")
    _write(out, _json(report.summary))
    _write(csv_path, report.to_csv())
    s = report.summary

    def fmt(v):
        return "n/a" if v is None else f"{v:.4f}"

    print(f"images={s['num_images']} NME_{args.normalizer}={fmt(s['mean_nme'])} "
          f"NME_vis={fmt(s['mean_nme_vis'])} AUC@{args.cutoff:g}={fmt(s['auc'])} "
          f"FR@{args.threshold:g}={fmt(s['fr'])}")
    return 0


def _grid(text):
    try:
        extent, cells = text.split(",")
        extent, cells = float(extent), int(cells)
    except ValueError:
        raise argparse.ArgumentTypeError("expected EXTENT,CELLS such as 6,60") from None
    if extent <= 0 or cells < 1:
        raise argparse.ArgumentTypeError("extent and cells must be positive")
    return extent, cells


def cmd_calibrate(args):
    extent, cells = args.grid
    report, hist_csv, rank_csv = calibration_report(_paired(args), args.bin_size, extent, cells)
    out = Path(args.out)
    _write(out, _json(report.to_dict()))
    _write(_sidecar(out, ".bins.csv"), report.bins_csv())
    _write(_sidecar(out, ".hist.csv"), hist_csv)
    _write(_sidecar(out, ".rank.csv"), rank_csv)
    parts = []
    for name, comp in report.components.items():
        r = "undefined" if comp.pearson is None else f"{comp.pearson:.4f}"
        slope = "n/a" if comp.slope is None else f"{comp.slope:.3f}"
        parts.append(f"{name}: pearson={r} slope={slope}")
    kl = "n/a" if report.kl is None else f"{report.kl:.4f}"
    print("; ".join(parts) + f"; KL={kl}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="luvli",
                                     description="Landmark location/uncertainty/visibility tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic annotation file from a scenario")
    p.add_argument("--config", required=True, help="scenario JSON")
    p.add_argument("--out", required=True, help="annotation JSON to write")
    p.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    p.add_argument("--truth-out", default=None,
                   help="hidden-truth sidecar (default: <out>.truth.json)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    p.add_argument("--kind", choices=[k.value for k in LikelihoodKind], default="laplacian")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("fit", help="fit one distribution per landmark index")
    p.add_argument("--annotations", required=True)
    p.add_argument("--kind", choices=[k.value for k in LikelihoodKind], default="laplacian")
    p.add_argument("--out", required=True, help="prediction JSON to write")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="NME / AUC / FR / visibility report")
    p.add_argument("--annotations", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--normalizer", choices=["box", "interocular", "diag"], default="box")
    p.add_argument("--cutoff", type=float, default=7.0, help="AUC cutoff, NME percent")
    p.add_argument("--threshold", type=float, default=10.0, help="FR threshold, NME percent")
    p.add_argument("--out", required=True, help="summary JSON to write")
    p.add_argument("--csv", default=None, help="per-image CSV (default: <out>.csv)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("calibrate", help="uncertainty calibration report")
    p.add_argument("--annotations", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--bin-size", type=int, default=500)
    p.add_argument("--grid", type=_grid, default=(6.0, 60), help="EXTENT,CELLS (default 6,60)")
    p.add_argument("--out", required=True, help="report JSON to write")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "cutoff", 1.0) <= 0 or getattr(args, "threshold", 1.0) <= 0:
        parser.error("--cutoff and --threshold must be positive")
    if getattr(args, "bin_size", 1) < 1:
        parser.error("--bin-size must be positive")
    try:
        return args.func(args)
    except (UsageError, DataSyntaxError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CountMismatch, TooFewRecords) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    np.seterr(all="raise")
    sys.exit(main())
