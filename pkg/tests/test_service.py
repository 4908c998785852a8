import numpy as np
import pytest
from fastapi.testclient import TestClient

from setscene import inference as inf
from setscene import scenes as sc
from setscene.service import create_app

from test_training import small_params, toy_scenes


@pytest.fixture(scope="module")
def params():
    p = small_params(seed=11, dtype=np.float32)
    p.metadata["category_labels"] = ["table", "chair", "lamp"]
    p.metadata["room_type"] = "toy"
    inf.calibrate_anomaly_threshold(p, toy_scenes(5, seed=41))
    return p


@pytest.fixture(scope="module")
def client(params):
    return TestClient(create_app(params))


@pytest.fixture(scope="module")
def scene_doc():
    return sc.scene_to_json(toy_scenes(1, seed=31)[0])


SQUARE = [[-1.8, -1.8], [1.8, -1.8], [1.8, 1.8], [-1.8, 1.8]]


class TestMeta:
    def test_categories_and_config(self, client, params):
        r = client.get("/meta")
        assert r.status_code == 200
        body = r.json()
        assert body["categories"] == ["table", "chair", "lamp"]
        assert body["n_categories"] == 3
        assert body["config"]["ordering_mode"] == "permutation_invariant"
        assert body["likelihood_threshold"] == params.metadata["likelihood_p5"]


class TestSynthesize:
    def test_round_trip_and_replay(self, client):
        req = {"floor_polygon": SQUARE, "seed": 7, "max_objects": 6}
        a = client.post("/synthesize", json=req)
        b = client.post("/synthesize", json=req)
        assert a.status_code == 200
        assert a.json() == b.json()
        scene = sc.scene_from_json(a.json()["scene"])  # schema-valid
        assert scene.room_type == "toy"
        assert a.json()["seed"] == 7

    def test_server_seed_echoed(self, client):
        r = client.post("/synthesize",
                        json={"floor_polygon": SQUARE, "max_objects": 3})
        assert r.status_code == 200
        assert isinstance(r.json()["seed"], int)

    def test_missing_polygon_400_with_path(self, client):
        r = client.post("/synthesize", json={"seed": 1})
        assert r.status_code == 400
        assert "floor_polygon" in r.json()["error"]

    def test_bad_vertex_400_with_path(self, client):
        poly = [[0.0, 0.0], [1.0, "x"], [1.0, 1.0]]
        r = client.post("/synthesize", json={"floor_polygon": poly})
        assert r.status_code == 400
        assert "floor_polygon[1]" in r.json()["error"]

    def test_self_intersecting_polygon_422(self, client):
        bowtie = [[0.0, 0.0], [2.0, 2.0], [2.0, 0.0], [0.0, 2.0]]
        r = client.post("/synthesize", json={"floor_polygon": bowtie, "seed": 1})
        assert r.status_code == 422
        assert "self-intersecting" in r.json()["error"]

    def test_non_object_body_400(self, client):
        r = client.post("/synthesize", json=[1, 2, 3])
        assert r.status_code == 400

    def test_bad_temperature_422(self, client):
        r = client.post("/synthesize",
                        json={"floor_polygon": SQUARE, "temperature": -1.0})
        assert r.status_code == 422


class TestComplete:
    def test_preserves_input_objects(self, client, scene_doc):
        r = client.post("/complete",
                        json={"scene": scene_doc, "seed": 3, "max_objects": 8})
        assert r.status_code == 200
        out = r.json()["scene"]
        for got, src in zip(out["objects"], scene_doc["objects"]):
            assert got["category"] == src["category"]
            assert got["location"] == src["location"]

    def test_schema_error_path(self, client, scene_doc):
        bad = {**scene_doc, "objects": [{"category": -1, "size": [1, 1, 1],
                                         "location": [0, 0, 0],
                                         "orientation": 0}]}
        r = client.post("/complete", json={"scene": bad})
        assert r.status_code == 400
        assert "objects[0].category" in r.json()["error"]


class TestSuggest:
    def test_contract(self, client, scene_doc):
        box = {"min": [-5.0, -5.0, -5.0], "max": [5.0, 8.0, 5.0]}
        r = client.post("/suggest", json={"scene": scene_doc,
                                          "constraint_box": box, "seed": 5})
        assert r.status_code == 200
        body = r.json()
        s = body["suggestion"]
        if s is not None:
            for axis in range(3):
                assert box["min"][axis] <= s["location"][axis] <= box["max"][axis]

    def test_degenerate_box_422(self, client, scene_doc):
        box = {"min": [0.0, 0.0, 0.0], "max": [1.0, 0.0, 1.0]}
        r = client.post("/suggest", json={"scene": scene_doc,
                                          "constraint_box": box})
        assert r.status_code == 422

    def test_box_schema_path(self, client, scene_doc):
        box = {"min": [0.0, 0.0], "max": [1.0, 1.0, 1.0]}
        r = client.post("/suggest", json={"scene": scene_doc,
                                          "constraint_box": box})
        assert r.status_code == 400
        assert "constraint_box.min" in r.json()["error"]


class TestPlace:
    def test_forced_category(self, client, scene_doc):
        r = client.post("/place", json={"scene": scene_doc, "category": 2,
                                        "seed": 9})
        assert r.status_code == 200
        obj = r.json()["object"]
        assert obj["category"] == 2
        assert obj["category_name"] == "lamp"

    def test_end_class_422(self, client, scene_doc):
        r = client.post("/place", json={"scene": scene_doc, "category": 3})
        assert r.status_code == 422

    def test_missing_category_400(self, client, scene_doc):
        r = client.post("/place", json={"scene": scene_doc})
        assert r.status_code == 400
        assert "category" in r.json()["error"]


class TestDetectAndLikelihoods:
    def test_detect_report_shape(self, client, scene_doc):
        r = client.post("/detect", json={"scene": scene_doc, "seed": 1})
        assert r.status_code == 200
        body = r.json()
        n = len(scene_doc["objects"])
        assert len(body["report"]["scores"]) == n
        assert len(body["scene"]["objects"]) == n
        for c in body["report"]["corrections"]:
            assert c["index"] in body["report"]["flagged"]

    def test_detect_empty_scene_422(self, client, scene_doc):
        empty = {**scene_doc, "objects": []}
        r = client.post("/detect", json={"scene": empty})
        assert r.status_code == 422

    def test_likelihoods_deterministic(self, client, scene_doc):
        a = client.post("/likelihoods", json={"scene": scene_doc})
        b = client.post("/likelihoods", json={"scene": scene_doc})
        assert a.status_code == 200
        assert a.json()["scores"] == b.json()["scores"]
        assert len(a.json()["scores"]) == len(scene_doc["objects"])

    def test_likelihoods_round_trip_via_wire(self, client, params, scene_doc):
        wire = client.post("/likelihoods", json={"scene": scene_doc}).json()
        local = inf.object_log_likelihoods(sc.scene_from_json(scene_doc),
                                           params)
        np.testing.assert_allclose(wire["scores"], local, atol=1e-6)
