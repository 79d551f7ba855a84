import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient

from jointpost.catalog import make_library
from jointpost.engine import Engine
from jointpost.nets import NetConfig, build_net
from jointpost.service import MAX_SAMPLES, create_app
from jointpost.simulators import SymbolicTask

CFG = NetConfig(model_dim=32, encoder_layers=2, model_decoder_layers=2,
                param_decoder_layers=2)


@pytest.fixture(scope="module")
def task():
    lib = make_library(["Linear", "Quadratic", "NoiseObserver",
                        "NoiseIncreasing"])
    return SymbolicTask(library=tuple(lib))


@pytest.fixture(scope="module")
def client(task):
    net = build_net(CFG, task.layout, task.n_points, task.C, seed=0)
    with torch.no_grad():
        g = torch.Generator().manual_seed(31)
        for p in net.parameters():
            p.add_(0.05 * torch.randn(p.shape, generator=g))
    engine = Engine(net, task)
    return TestClient(create_app(engine, seed=0))


@pytest.fixture(scope="module")
def x_pairs(task):
    rng = np.random.default_rng(0)
    ys = rng.standard_normal(task.n_points)
    return [[float(g), float(y)] for g, y in zip(task.grid, ys)]


def body(x_pairs, **over):
    b = {"x": x_pairs, "lambda": 0.5, "n_samples": 8, "seed": 1}
    b.update(over)
    return b


class TestHealthAndMetadata:
    def test_healthz(self, client):
        r = client.get("/healthz")
        assert r.status_code == 200
        assert r.text == "ok"

    def test_metadata_contract(self, client, task):
        r = client.get("/v1/metadata")
        assert r.status_code == 200
        md = r.json()
        assert len(md["library"]) == task.C
        assert md["lambda_range"] == [0.0, 1.0]
        assert [e["token"] for e in md["library"]] == [
            s.token for s in task.library
        ]

    def test_metadata_byte_identical(self, client):
        a = client.get("/v1/metadata")
        b = client.get("/v1/metadata")
        assert a.content == b.content


class TestModelPosterior:
    def test_contract(self, client, task, x_pairs):
        r = client.post("/v1/model_posterior", json=body(x_pairs))
        assert r.status_code == 200
        out = r.json()
        assert len(out["masks"]) == 8
        assert len(out["log_probs"]) == 8
        assert isinstance(out["median_active"], int)

    def test_deterministic_with_seed(self, client, x_pairs):
        a = client.post("/v1/model_posterior", json=body(x_pairs, seed=7))
        b = client.post("/v1/model_posterior", json=body(x_pairs, seed=7))
        assert a.content == b.content

    def test_zero_samples(self, client, x_pairs):
        r = client.post("/v1/model_posterior",
                        json=body(x_pairs, n_samples=0))
        assert r.status_code == 200
        assert r.json() == {"masks": [], "log_probs": [], "median_active": 0}

    def test_lambda_out_of_range_is_422(self, client, x_pairs):
        r = client.post("/v1/model_posterior", json=body(x_pairs, **{
            "lambda": 2.0}))
        assert r.status_code == 422

    def test_malformed_body_is_400(self, client):
        r = client.post("/v1/model_posterior", json={"lambda": 0.5})
        assert r.status_code == 400

    def test_wrong_observation_length_is_400(self, client, x_pairs):
        r = client.post("/v1/model_posterior",
                        json=body(x_pairs[:-1]))
        assert r.status_code == 400

    def test_non_pair_entries_rejected(self, client, x_pairs):
        bad = [p[:1] for p in x_pairs]
        r = client.post("/v1/model_posterior", json=body(bad))
        assert r.status_code == 400

    def test_samples_cap(self, client, x_pairs):
        r = client.post("/v1/model_posterior",
                        json=body(x_pairs, n_samples=MAX_SAMPLES + 1))
        assert r.status_code == 400

    def test_negative_samples(self, client, x_pairs):
        r = client.post("/v1/model_posterior",
                        json=body(x_pairs, n_samples=-1))
        assert r.status_code == 400


class TestParamPosterior:
    def test_contract(self, client, task, x_pairs):
        r = client.post("/v1/param_posterior",
                        json=body(x_pairs, mask=[1, 0, 1, 0]))
        assert r.status_code == 200
        out = r.json()
        z = np.asarray(out["params_latent"])
        assert z.shape == (8, task.layout.d_max)
        assert out["layout"]["dims"] == list(task.layout.dims)

    def test_natural_params_within_bounds(self, client, task, x_pairs):
        r = client.post("/v1/param_posterior",
                        json=body(x_pairs, mask=[1, 1, 1, 0], n_samples=16))
        theta = np.asarray(r.json()["params_natural"])
        lo = np.array([b[0] for s in task.library for b in s.bounds])
        hi = np.array([b[1] for s in task.library for b in s.bounds])
        assert (theta >= lo).all() and (theta <= hi).all()

    def test_mask_length_mismatch_is_400(self, client, x_pairs):
        r = client.post("/v1/param_posterior",
                        json=body(x_pairs, mask=[1, 0]))
        assert r.status_code == 400

    def test_nonbinary_mask_is_400(self, client, x_pairs):
        r = client.post("/v1/param_posterior",
                        json=body(x_pairs, mask=[1, 2, 0, 0]))
        assert r.status_code == 400

    def test_deterministic_with_seed(self, client, x_pairs):
        a = client.post("/v1/param_posterior",
                        json=body(x_pairs, mask=[1, 0, 1, 0], seed=9))
        b = client.post("/v1/param_posterior",
                        json=body(x_pairs, mask=[1, 0, 1, 0], seed=9))
        assert a.content == b.content


class TestPredictive:
    def test_global_contract(self, client, task, x_pairs):
        r = client.post("/v1/predictive", json=body(x_pairs, mode="global"))
        assert r.status_code == 200
        out = r.json()
        assert len(out["curves"]) == 8
        assert len(out["quantile_band"]["lo"]) == task.n_points
        lo = np.asarray(out["quantile_band"]["lo"])
        hi = np.asarray(out["quantile_band"]["hi"])
        assert (lo <= hi).all()

    def test_single_draw_band_degenerates(self, client, x_pairs):
        r = client.post("/v1/predictive",
                        json=body(x_pairs, mode="global", n_samples=1))
        out = r.json()
        assert out["quantile_band"]["lo"] == out["curves"][0]
        assert out["quantile_band"]["hi"] == out["curves"][0]

    def test_local_requires_mask(self, client, x_pairs):
        r = client.post("/v1/predictive", json=body(x_pairs, mode="local"))
        assert r.status_code == 400

    def test_local_mode(self, client, x_pairs):
        r = client.post("/v1/predictive",
                        json=body(x_pairs, mode="local", mask=[0, 1, 1, 0]))
        assert r.status_code == 200
        assert all(m == [0, 1, 1, 0] for m in r.json()["masks"])

    def test_unknown_mode_is_400(self, client, x_pairs):
        r = client.post("/v1/predictive", json=body(x_pairs, mode="both"))
        assert r.status_code == 400

    def test_lambda_range_is_422(self, client, x_pairs):
        r = client.post("/v1/predictive", json=body(x_pairs, **{
            "lambda": -0.1}))
        assert r.status_code == 422


class TestNoEngine:
    def test_503_when_unloaded(self, x_pairs):
        client = TestClient(create_app(None))
        assert client.get("/v1/metadata").status_code == 503
        r = client.post("/v1/model_posterior", json=body(x_pairs))
        assert r.status_code == 503
        assert client.get("/healthz").status_code == 200


class TestServerSeedMode:
    def test_absent_seed_still_succeeds(self, client, x_pairs):
        b = body(x_pairs)
        del b["seed"]
        r = client.post("/v1/model_posterior", json=b)
        assert r.status_code == 200
