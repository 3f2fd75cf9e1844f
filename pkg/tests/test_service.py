import base64
import io

import numpy as np
import pytest
from fastapi.testclient import TestClient

from modalbench.dataset import normalize_conditioning
from modalbench.filterbank import render_recursive
from modalbench.modal_render import render_ir, unit_impulse, write_wav
from modalbench.elastodynamics import Material, modal_gains
from modalbench.predictor import encode, load_checkpoint, predict
from modalbench.service import create_app


@pytest.fixture(scope="module")
def client(shared_dataset, shared_checkpoint):
    app = create_app(shared_dataset.root, shared_checkpoint, fem_workers=1)
    with TestClient(app) as c:
        yield c


def body(source="oracle", shared_dataset=None, **overrides):
    base = {
        "shape_id": 0,
        "material": {"rho": 2000.0, "youngs": 2e10, "poisson": 0.3, "alpha": 4.0, "beta": 8e-7},
        "position": None,
        "source": source,
        "fit_steps": 10,
        "seed": 0,
    }
    base.update(overrides)
    return base


def inside_position(dataset, shape_id=0):
    mesh = dataset.mesh(shape_id)
    return [float(v) for v in mesh.V[len(mesh.V) // 2]]


class TestShapes:
    def test_list_shapes(self, client, shared_dataset):
        shapes = client.get("/shapes").json()
        assert len(shapes) == 4
        assert {"id", "n_vertices", "vertices"} <= set(shapes[0])

    def test_occupancy(self, client):
        doc = client.get("/shapes/1/occupancy").json()
        assert len(doc["cells"]) == 64 and len(doc["cells"][0]) == 64
        assert doc["resolution"] == pytest.approx(1 / 64)
        assert len(doc["vertices"]) >= 3

    def test_unknown_shape_404(self, client):
        assert client.get("/shapes/99/occupancy").status_code == 404

    def test_meta(self, client):
        meta = client.get("/meta").json()
        assert set(meta["material_ranges"]) == {"rho", "youngs", "poisson", "alpha", "beta"}
        assert "predictor" in meta["sources"]
        assert meta["sample_rate"] == 32000


class TestSynthesize:
    def test_oracle_modal_data(self, client, shared_dataset):
        pos = inside_position(shared_dataset)
        r = client.post("/synthesize", json=body("oracle", position=pos))
        assert r.status_code == 200
        doc = r.json()
        assert doc["source"] == "oracle"
        modal = doc["modal"]
        assert len(modal["freqs_hz"]) == len(modal["sigmas"]) == len(modal["gains"])
        assert all(f > 0 for f in modal["freqs_hz"])

    def test_predictor_sections(self, client, shared_dataset):
        pos = inside_position(shared_dataset)
        r = client.post("/synthesize", json=body("predictor", position=pos))
        assert r.status_code == 200
        doc = r.json()
        assert doc["L"] == 8 and doc["M"] == 2
        assert len(doc["sections"]) == 16
        assert all(len(row) == 5 for row in doc["sections"])
        # stability triangle on every section
        for b0, b1, b2, a1, a2 in doc["sections"]:
            assert a2 < 1.0 and abs(a1) < 1.0 + a2

    def test_fit_sections(self, client, shared_dataset):
        pos = inside_position(shared_dataset)
        r = client.post("/synthesize", json=body("fit", position=pos, topology="4x1"))
        assert r.status_code == 200
        assert len(r.json()["sections"]) == 4

    def test_deterministic_responses(self, client, shared_dataset):
        pos = inside_position(shared_dataset)
        payload = body("predictor", position=pos)
        a = client.post("/synthesize", json=payload)
        b = client.post("/synthesize", json=payload)
        assert a.json() == b.json()

    def test_material_out_of_range_422(self, client, shared_dataset):
        pos = inside_position(shared_dataset)
        bad = body("oracle", position=pos)
        bad["material"]["rho"] = 100.0  # below dataset range
        r = client.post("/synthesize", json=bad)
        assert r.status_code == 422
        assert "rho" in r.text

    def test_position_outside_422(self, client):
        r = client.post("/synthesize", json=body("oracle", position=[0.001, 0.001]))
        assert r.status_code == 422

    def test_unknown_shape_404(self, client, shared_dataset):
        pos = inside_position(shared_dataset)
        r = client.post("/synthesize", json=body("oracle", position=pos, shape_id=50))
        assert r.status_code == 404


class TestRender:
    def test_render_matches_local_library_bytes(self, client, shared_dataset, shared_checkpoint):
        pos = inside_position(shared_dataset)
        req = body("predictor", position=pos)
        req["excitation"] = "impulse"
        r = client.post("/render", json=req)
        assert r.status_code == 200
        assert r.headers["content-type"] == "audio/wav"

        weights = load_checkpoint(shared_checkpoint)
        material = Material(**req["material"])
        cond = normalize_conditioning(material, pos)
        emb = encode(shared_dataset.occupancy(0).cells, weights)
        params = predict(emb, cond, weights)
        local = render_recursive(params, unit_impulse(shared_dataset.spectral))
        payload = io.BytesIO()
        write_wav(payload, local)
        assert r.content == payload.getvalue()

    def test_render_oracle_matches_library(self, client, shared_dataset):
        pos = inside_position(shared_dataset)
        req = body("oracle", position=pos)
        r = client.post("/render", json=req)
        assert r.status_code == 200
        from modalbench.elastodynamics import assemble, solve_modes

        material = Material(**req["material"])
        mesh = shared_dataset.mesh(0)
        model = solve_modes(assemble(mesh, material), material, mesh=mesh,
                            n_modes=shared_dataset.config.n_modes)
        buf = render_ir(model, modal_gains(model, np.asarray(pos)), shared_dataset.spectral)
        payload = io.BytesIO()
        write_wav(payload, buf)
        assert r.content == payload.getvalue()

    def test_render_custom_excitation(self, client, shared_dataset):
        pos = inside_position(shared_dataset)
        rng = np.random.default_rng(0)
        burst = (0.1 * rng.standard_normal(256)).astype("<f4")
        req = body("predictor", position=pos)
        req["excitation"] = {"samples_b64": base64.b64encode(burst.tobytes()).decode()}
        r = client.post("/render", json=req)
        assert r.status_code == 200
        assert r.headers["content-type"] == "audio/wav"

    def test_oracle_rejects_custom_excitation(self, client, shared_dataset):
        pos = inside_position(shared_dataset)
        req = body("oracle", position=pos)
        req["excitation"] = {"samples_b64": base64.b64encode(b"\x00" * 40).decode()}
        assert client.post("/render", json=req).status_code == 422

    def test_render_deterministic(self, client, shared_dataset):
        pos = inside_position(shared_dataset)
        req = body("fit", position=pos, topology="2x1")
        a = client.post("/render", json=req)
        b = client.post("/render", json=req)
        assert a.content == b.content
