"""JSON file formats for annotations, predictions, synthetic scenarios and fit results.

Annotation file::

    {"schema": "luvli-annot-1", "num_landmarks": 68,
     "faces": [{"id": "img0", "bbox": {"x": 0, "y": 0, "w": 100, "h": 120} | null,
                "landmarks": [{"class": "unoccluded", "x": 1.0, "y": 2.0},
                              {"class": "self_occluded"}, ...]}]}

Prediction file::

    {"schema": "luvli-pred-1",
     "faces": [{"id": "img0",
                "landmarks": [{"mu": [x, y], "chol": [l11, l21, l22], "vis": 0.97}, ...]}]}

Floats are written with ``repr`` so every value survives a round trip exactly.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import CountMismatch, DataSyntaxError, SchemaError
from .geometry import CholeskyCovariance, Point2, SymMatrix2
from .likelihood import GroundTruthLandmark, LandmarkPrediction, LikelihoodKind

ANNOT_SCHEMA = "luvli-annot-1"
PRED_SCHEMA = "luvli-pred-1"
SCENARIO_SCHEMA = "luvli-scenario-1"
TRUTH_SCHEMA = "luvli-truth-1"


class VisibilityClass(str, enum.Enum):
    UNOCCLUDED = "unoccluded"
    EXTERNALLY_OCCLUDED = "externally_occluded"
    SELF_OCCLUDED = "self_occluded"

    @property
    def visible(self):
        return self is not VisibilityClass.SELF_OCCLUDED


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    @property
    def size(self):
        return (self.w, self.h)


@dataclass(frozen=True)
class AnnotatedLandmark:
    cls: VisibilityClass
    location: Optional[Point2] = None


@dataclass(frozen=True)
class AnnotatedFace:
    image_id: str
    bbox: Optional[BBox]
    landmarks: tuple

    def visible_count(self):
        return sum(lm.cls.visible for lm in self.landmarks)

    def classes(self):
        return [lm.cls.value for lm in self.landmarks]


def to_ground_truth(face: AnnotatedFace) -> list[GroundTruthLandmark]:
    """Unoccluded and externally occluded landmarks are visible; self-occluded are not."""
    return [
        GroundTruthLandmark(lm.location, 1) if lm.cls.visible else GroundTruthLandmark.hidden()
        for lm in face.landmarks
    ]


def _load(data, what):
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    try:
        return json.loads(data)
    except json.JSONDecodeError as exc:
        raise DataSyntaxError(f"{what}: invalid JSON at line {exc.lineno} column {exc.colno}: "
                              f"{exc.msg}") from exc


def _dump(obj) -> bytes:
    return (json.dumps(obj, indent=1, allow_nan=False) + "\n").encode("utf-8")


def _number(value, ctx):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{ctx}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise SchemaError(f"{ctx}: value must be finite")
    return value


def _expect(obj, key, kind, ctx):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{ctx}: missing field {key!r}")
    if not isinstance(obj[key], kind):
        raise SchemaError(f"{ctx}: field {key!r} has the wrong type")
    return obj[key]


def _faces(doc, schema, what):
    if not isinstance(doc, dict):
        raise SchemaError(f"{what}: top level must be an object")
    if doc.get("schema") != schema:
        raise SchemaError(f"{what}: expected schema {schema!r}, got {doc.get('schema')!r}")
    faces = _expect(doc, "faces", list, what)
    seen = set()
    for i, f in enumerate(faces):
        fid = _expect(f, "id", str, f"{what} face #{i}")
        if fid in seen:
            raise SchemaError(f"{what}: duplicate face id {fid!r}")
        seen.add(fid)
    return faces


# ---------------------------------------------------------------------------
# Annotations


def parse_annotations(data) -> list[AnnotatedFace]:
    doc = _load(data, "annotations")
    faces = _faces(doc, ANNOT_SCHEMA, "annotations")
    n = doc.get("num_landmarks")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise SchemaError("annotations: num_landmarks must be a positive integer")
    out = []
    for f in faces:
        fid = f["id"]
        bbox = f.get("bbox")
        if bbox is not None:
            ctx = f"face {fid!r} bbox"
            vals = {k: _number(_expect(bbox, k, (int, float), ctx), ctx) for k in "xywh"}
            if not (vals["w"] > 0 and vals["h"] > 0):
                raise SchemaError(f"{ctx}: width and height must be positive")
            bbox = BBox(**vals)
        lms = _expect(f, "landmarks", list, f"face {fid!r}")
        if len(lms) != n:
            raise SchemaError(f"face {fid!r}: {len(lms)} landmarks, expected {n}")
        parsed = []
        for j, lm in enumerate(lms):
            ctx = f"face {fid!r} landmark {j}"
            raw = _expect(lm, "class", str, ctx)
            try:
                cls = VisibilityClass(raw)
            except ValueError:
                raise SchemaError(f"{ctx}: unknown class {raw!r}") from None
            has_xy = "x" in lm or "y" in lm
            if cls.visible:
                if not ("x" in lm and "y" in lm):
                    raise SchemaError(f"{ctx}: {cls.value} landmark needs x and y")
                loc = Point2(_number(lm["x"], ctx), _number(lm["y"], ctx))
            else:
                if has_xy:
                    raise SchemaError(f"{ctx}: self_occluded landmark must not carry coordinates")
                loc = None
            parsed.append(AnnotatedLandmark(cls, loc))
        out.append(AnnotatedFace(fid, bbox, tuple(parsed)))
    return out


def write_annotations(faces: Sequence[AnnotatedFace], num_landmarks: Optional[int] = None) -> bytes:
    if num_landmarks is None:
        num_landmarks = len(faces[0].landmarks) if faces else 68
    doc = {"schema": ANNOT_SCHEMA, "num_landmarks": num_landmarks, "faces": []}
    for f in faces:
        if len(f.landmarks) != num_landmarks:
            raise SchemaError(f"face {f.image_id!r}: {len(f.landmarks)} landmarks, "
                              f"expected {num_landmarks}")
        bbox = None if f.bbox is None else {"x": f.bbox.x, "y": f.bbox.y,
                                            "w": f.bbox.w, "h": f.bbox.h}
        lms = []
        for lm in f.landmarks:
            entry = {"class": lm.cls.value}
            if lm.location is not None:
                entry["x"] = lm.location.x
                entry["y"] = lm.location.y
            lms.append(entry)
        doc["faces"].append({"id": f.image_id, "bbox": bbox, "landmarks": lms})
    return _dump(doc)


# ---------------------------------------------------------------------------
# Predictions


def parse_predictions(data) -> dict[str, list[LandmarkPrediction]]:
    """Parse a prediction file into ``{image_id: [LandmarkPrediction, ...]}`` (file order)."""
    doc = _load(data, "predictions")
    faces = _faces(doc, PRED_SCHEMA, "predictions")
    out = {}
    for f in faces:
        fid = f["id"]
        preds = []
        for j, lm in enumerate(_expect(f, "landmarks", list, f"face {fid!r}")):
            ctx = f"face {fid!r} landmark {j}"
            mu = _expect(lm, "mu", list, ctx)
            chol = _expect(lm, "chol", list, ctx)
            if len(mu) != 2 or len(chol) != 3:
                raise SchemaError(f"{ctx}: mu needs 2 values and chol 3")
            mx, my = (_number(v, ctx) for v in mu)
            l11, l21, l22 = (_number(v, ctx) for v in chol)
            if not (l11 > 0 and l22 > 0):
                raise SchemaError(f"{ctx}: Cholesky diagonal must be positive")
            vis = _number(_expect(lm, "vis", (int, float), ctx), ctx)
            if not 0.0 < vis < 1.0:
                raise SchemaError(f"{ctx}: visibility must lie strictly inside (0, 1), got {vis}")
            preds.append(LandmarkPrediction(Point2(mx, my), CholeskyCovariance(l11, l21, l22), vis))
        out[fid] = preds
    return out


def write_predictions(preds: dict) -> bytes:
    doc = {"schema": PRED_SCHEMA, "faces": []}
    for fid, lms in preds.items():
        doc["faces"].append({
            "id": fid,
            "landmarks": [
                {"mu": [p.mean.x, p.mean.y], "chol": [p.chol.l11, p.chol.l21, p.chol.l22],
                 "vis": p.visibility}
                for p in lms
            ],
        })
    return _dump(doc)


def pair(faces: Sequence[AnnotatedFace], preds: dict) -> list[tuple]:
    """Match annotations to predictions by id; returns ``(face, predictions)`` sorted by id."""
    ids = {f.image_id for f in faces}
    missing = sorted(ids - preds.keys())
    if missing:
        raise CountMismatch(f"no predictions for image id {missing[0]!r}")
    extra = sorted(preds.keys() - ids)
    if extra:
        raise CountMismatch(f"predictions for unknown image id {extra[0]!r}")
    out = []
    for f in sorted(faces, key=lambda f: f.image_id):
        p = preds[f.image_id]
        if len(p) != len(f.landmarks):
            raise CountMismatch(f"image {f.image_id!r}: {len(p)} predictions for "
                                f"{len(f.landmarks)} landmarks")
        out.append((f, p))
    return out


# ---------------------------------------------------------------------------
# Scenarios and fit results


def _sym(values, ctx):
    if not isinstance(values, list) or len(values) != 3:
        raise SchemaError(f"{ctx}: cov must be [xx, xy, yy]")
    return SymMatrix2(*(_number(v, ctx) for v in values))


def parse_scenario(data):
    from .fitting import LandmarkTruth, SyntheticScenario

    doc = _load(data, "scenario")
    if not isinstance(doc, dict) or doc.get("schema") not in (SCENARIO_SCHEMA, TRUTH_SCHEMA):
        raise SchemaError(f"scenario: expected schema {SCENARIO_SCHEMA!r}")
    try:
        kind = LikelihoodKind(doc.get("kind", "laplacian"))
    except ValueError:
        raise SchemaError(f"scenario: unknown kind {doc.get('kind')!r}") from None
    n = doc.get("num_samples", 1000)
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise SchemaError("scenario: num_samples must be a positive integer")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise SchemaError("scenario: seed must be a non-negative integer")
    lms = _expect(doc, "landmarks", list, "scenario")
    if not lms:
        raise SchemaError("scenario: at least one landmark is required")
    truths = []
    for j, lm in enumerate(lms):
        ctx = f"scenario landmark {j}"
        mean = _expect(lm, "mean", list, ctx)
        if len(mean) != 2:
            raise SchemaError(f"{ctx}: mean must be [x, y]")
        try:
            truths.append(LandmarkTruth(
                Point2(*(_number(v, ctx) for v in mean)),
                _sym(_expect(lm, "cov", list, ctx), ctx),
                _number(lm.get("visibility_rate", 1.0), ctx),
                lm.get("visible_class", "unoccluded"),
            ))
        except SchemaError:
            raise
        except ValueError as exc:
            raise SchemaError(f"{ctx}: {exc}") from None
    bbox = doc.get("bbox")
    if bbox is not None:
        vals = {k: _number(_expect(bbox, k, (int, float), "scenario bbox"), "scenario bbox")
                for k in "xywh"}
        if not (vals["w"] > 0 and vals["h"] > 0):
            raise SchemaError("scenario bbox: width and height must be positive")
        bbox = BBox(**vals)
    return SyntheticScenario(tuple(truths), kind, n, seed), bbox


def scenario_to_dict(scenario, bbox: Optional[BBox] = None, schema=SCENARIO_SCHEMA) -> dict:
    doc = {
        "schema": schema,
        "kind": scenario.kind.value,
        "num_samples": scenario.num_samples,
        "seed": scenario.seed,
        "landmarks": [
            {"mean": [t.mean.x, t.mean.y], "cov": [t.cov.xx, t.cov.xy, t.cov.yy],
             "visibility_rate": t.visibility_rate, "visible_class": t.visible_class}
            for t in scenario.landmarks
        ],
    }
    if bbox is not None:
        doc["bbox"] = {"x": bbox.x, "y": bbox.y, "w": bbox.w, "h": bbox.h}
    return doc


def write_truth(scenario, bbox: Optional[BBox] = None) -> bytes:
    return _dump(scenario_to_dict(scenario, bbox, TRUTH_SCHEMA))


def scenario_faces(scenario, groups, bbox: Optional[BBox] = None) -> list[AnnotatedFace]:
    """Turn ``[landmark][sample]`` labels into one annotated face per sample."""
    faces = []
    width = max(6, len(str(scenario.num_samples - 1)))
    for i in range(scenario.num_samples):
        lms = []
        for truth, group in zip(scenario.landmarks, groups):
            g = group[i]
            if g.visible:
                lms.append(AnnotatedLandmark(VisibilityClass(truth.visible_class), g.location))
            else:
                lms.append(AnnotatedLandmark(VisibilityClass.SELF_OCCLUDED))
        faces.append(AnnotatedFace(f"synth-{i:0{width}d}", bbox, tuple(lms)))
    return faces


def fit_result_to_dict(result) -> dict:
    p = result.prediction
    return {
        "converged": bool(result.converged),
        "n_iter": int(result.n_iter),
        "loss": float(result.loss),
        "grad_norm": float(result.grad_norm),
        "prediction": {"mu": [p.mean.x, p.mean.y], "chol": [p.chol.l11, p.chol.l21, p.chol.l22],
                       "vis": p.visibility},
    }
