import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from luvli import dataio
from luvli.dataio import AnnotatedFace, AnnotatedLandmark, BBox, VisibilityClass
from luvli.errors import CountMismatch, DataSyntaxError, SchemaError
from luvli.fitting import LandmarkTruth, SyntheticScenario, fit_mle, generate
from luvli.geometry import CholeskyCovariance, Point2, SymMatrix2
from luvli.likelihood import LandmarkPrediction, LikelihoodKind

FIXTURES = Path(__file__).parent / "fixtures"
U, E, S = VisibilityClass


def doc(faces, n=2):
    return json.dumps({"schema": "luvli-annot-1", "num_landmarks": n, "faces": faces})


def face(lms, fid="f", bbox=None):
    return {"id": fid, "bbox": bbox, "landmarks": lms}


def test_minimal_68_point_face_round_trips():
    lms = [{"class": "unoccluded", "x": float(i), "y": 2.0 * i} for i in range(68)]
    text = doc([face(lms, bbox={"x": 0, "y": 0, "w": 10, "h": 20})], 68)
    faces = dataio.parse_annotations(text)
    assert len(faces) == 1 and faces[0].visible_count() == 68
    out = dataio.write_annotations(faces)
    assert json.loads(out) == json.loads(text)
    assert dataio.parse_annotations(out) == faces


def test_profile_fixture_visible_count():
    (f,) = dataio.parse_annotations((FIXTURES / "profile_face.json").read_bytes())
    assert f.classes().count("self_occluded") == 29
    assert f.visible_count() == 39


def test_self_occluded_with_coordinates_names_index():
    lms = [{"class": "unoccluded", "x": 1, "y": 1}, {"class": "self_occluded", "x": 3, "y": 4}]
    with pytest.raises(SchemaError, match=r"face 'f' landmark 1"):
        dataio.parse_annotations(doc([face(lms)]))


@pytest.mark.parametrize("bad, match", [
    (doc([face([{"class": "unoccluded", "x": 1, "y": 1}])]), "1 landmarks, expected 2"),
    (doc([face([{"class": "unoccluded", "x": 1}, {"class": "self_occluded"}])]), "landmark 0"),
    (doc([face([{"class": "hidden"}, {"class": "self_occluded"}])]), "unknown class"),
    (doc([face([{"class": "self_occluded"}] * 2, bbox={"x": 0, "y": 0, "w": -1, "h": 3})]), "bbox"),
    (doc([face([{"class": "self_occluded"}] * 2, "a"), face([{"class": "self_occluded"}] * 2, "a")]),
     "duplicate"),
    (json.dumps({"schema": "other", "faces": []}), "schema"),
    (doc([face([{"class": "unoccluded", "x": "1", "y": 1}, {"class": "self_occluded"}])]), "number"),
    (doc([face([{"class": "unoccluded", "x": True, "y": 1}, {"class": "self_occluded"}])]), "number"),
])
def test_annotation_schema_errors(bad, match):
    with pytest.raises(SchemaError, match=match):
        dataio.parse_annotations(bad)


def test_syntax_error_carries_position():
    with pytest.raises(DataSyntaxError, match="line 2 column"):
        dataio.parse_annotations('{"schema":\n ]')


def test_to_ground_truth_mapping():
    f = AnnotatedFace("x", None, (
        AnnotatedLandmark(U, Point2(1, 2)),
        AnnotatedLandmark(E, Point2(3, 4)),
        AnnotatedLandmark(S),
    ))
    gts = dataio.to_ground_truth(f)
    assert [g.visible for g in gts] == [1, 1, 0]
    assert gts[1].location == Point2(3, 4) and gts[2].location is None
    hidden = AnnotatedFace("y", None, (AnnotatedLandmark(S),) * 4)
    assert all(g.visible == 0 and g.location is None for g in dataio.to_ground_truth(hidden))


def _pred(vis=0.5, chol=(1.0, 0.0, 1.0)):
    return {"mu": [1.0, 2.0], "chol": list(chol), "vis": vis}


def pdoc(lms, fid="f"):
    return json.dumps({"schema": "luvli-pred-1", "faces": [{"id": fid, "landmarks": lms}]})


def test_predictions_round_trip_bitwise():
    rng = np.random.default_rng(0)
    preds = {f"img{i}": [LandmarkPrediction(Point2(*rng.normal(size=2) * 1e3),
                                            CholeskyCovariance(*np.abs(rng.normal(size=3)) + 1e-9),
                                            float(rng.uniform(1e-7, 1 - 1e-7))) for _ in range(5)]
             for i in range(4)}
    back = dataio.parse_predictions(dataio.write_predictions(preds))
    assert back == preds


@pytest.mark.parametrize("lm, match", [
    (_pred(vis=1.0), "visibility"),
    (_pred(vis=0.0), "visibility"),
    (_pred(chol=(0.0, 0.0, 1.0)), "Cholesky"),
    (_pred(chol=(1.0, 0.0, -2.0)), "Cholesky"),
    ({"mu": [1.0], "chol": [1, 0, 1], "vis": 0.5}, "mu"),
])
def test_prediction_schema_errors(lm, match):
    with pytest.raises(SchemaError, match=match) as info:
        dataio.parse_predictions(pdoc([_pred(), lm]))
    assert "landmark 1" in str(info.value) and "'f'" in str(info.value)


def test_pair_sorts_and_checks():
    faces = dataio.parse_annotations((FIXTURES / "eval_two_images_annotations.json").read_bytes())
    preds = dataio.parse_predictions((FIXTURES / "eval_two_images_predictions.json").read_bytes())
    pairs = dataio.pair(faces, preds)
    assert [f.image_id for f, _ in pairs] == ["a", "b"]
    with pytest.raises(CountMismatch, match="'b'"):
        dataio.pair(faces, {"a": preds["a"]})
    with pytest.raises(CountMismatch, match="'zz'"):
        dataio.pair(faces, {**preds, "zz": preds["a"]})
    with pytest.raises(CountMismatch, match="'a'"):
        dataio.pair(faces, {**preds, "a": preds["a"][:2]})


# --- generated datasets -------------------------------------------------------

coords = st.floats(-1e4, 1e4, allow_nan=False, allow_infinity=False)
landmarks = st.one_of(
    st.builds(AnnotatedLandmark, st.sampled_from([U, E]), st.builds(Point2, coords, coords)),
    st.just(AnnotatedLandmark(S)),
)
bboxes = st.one_of(st.none(), st.builds(BBox, coords, coords, st.floats(1e-3, 1e4), st.floats(1e-3, 1e4)))


@st.composite
def datasets(draw):
    n = draw(st.integers(1, 12))
    ids = draw(st.lists(st.text(min_size=1, max_size=8), min_size=0, max_size=6, unique=True))
    return [AnnotatedFace(i, draw(bboxes), tuple(draw(st.lists(landmarks, min_size=n, max_size=n))))
            for i in ids], n


@given(datasets())
def test_annotation_round_trip_property(data):
    faces, n = data
    blob = dataio.write_annotations(faces, n)
    back = dataio.parse_annotations(blob)
    assert back == faces
    assert dataio.write_annotations(back, n) == blob


# --- scenarios ----------------------------------------------------------------

def _scenario_doc(**kw):
    d = {"schema": "luvli-scenario-1", "kind": "gaussian", "num_samples": 20, "seed": 3,
         "landmarks": [{"mean": [1.0, 2.0], "cov": [2.0, 0.1, 1.0], "visibility_rate": 0.5,
                        "visible_class": "externally_occluded"}]}
    d.update(kw)
    return json.dumps(d)


def test_scenario_parse_and_truth_round_trip():
    sc, bbox = dataio.parse_scenario(_scenario_doc(bbox={"x": 0, "y": 0, "w": 64, "h": 64}))
    assert sc.kind is LikelihoodKind.GAUSSIAN and sc.seed == 3 and bbox.w == 64
    assert sc.landmarks[0].visible_class == "externally_occluded"
    again, bbox2 = dataio.parse_scenario(dataio.write_truth(sc, bbox))
    assert again == sc and bbox2 == bbox


@pytest.mark.parametrize("kw", [
    {"kind": "cauchy"},
    {"num_samples": 0},
    {"seed": -1},
    {"landmarks": []},
    {"landmarks": [{"mean": [0, 0], "cov": [1, 2, 1]}]},
    {"landmarks": [{"mean": [0, 0], "cov": [1, 0, 1], "visibility_rate": 2}]},
    {"schema": "luvli-annot-1"},
])
def test_scenario_errors(kw):
    with pytest.raises(SchemaError):
        dataio.parse_scenario(_scenario_doc(**kw))


def test_scenario_faces():
    sc, _ = dataio.parse_scenario(_scenario_doc())
    faces = dataio.scenario_faces(sc, generate(sc))
    assert [f.image_id for f in faces[:2]] == ["synth-000000", "synth-000001"]
    classes = {f.landmarks[0].cls for f in faces}
    assert classes <= {E, S}


def test_zero_rate_scenario_is_all_self_occluded():
    sc = SyntheticScenario((LandmarkTruth(Point2(0, 0), SymMatrix2.identity(), 0.0),) * 3,
                           LikelihoodKind.LAPLACIAN, 10, 0)
    faces = dataio.scenario_faces(sc, generate(sc))
    assert all(lm.cls is S for f in faces for lm in f.landmarks)


def test_fit_result_serializes():
    sc = SyntheticScenario((LandmarkTruth(Point2(0, 0), SymMatrix2.identity(), 0.5),),
                           LikelihoodKind.GAUSSIAN, 40, 1)
    d = dataio.fit_result_to_dict(fit_mle(generate(sc)[0], LikelihoodKind.GAUSSIAN))
    assert json.loads(json.dumps(d, allow_nan=False)) == d
    assert math.isfinite(d["loss"])
