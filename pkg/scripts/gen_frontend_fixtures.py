"""Records service responses as JSON fixtures for the browser UI tests.

Writes frontend/public/demo.csv plus frontend/test/fixtures/*.json. The UI
test suite replays these so it never needs a live service. Requires the
trained toy checkpoint under artifacts/toy.
"""

import json
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from jointpost.engine import Engine
from jointpost.model_space import ModelMask
from jointpost.service import create_app

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "frontend" / "test" / "fixtures"
PUBLIC = ROOT / "frontend" / "public"

DEMO_TOKENS = ("lin", "sin", "n_obs")
N_SAMPLES = 256
SEED = 3


def demo_setup(task):
    bits = np.zeros(task.base_count + task.noise_count, dtype=np.int8)
    tokens = [spec.token for spec in task.library]
    for tok in DEMO_TOKENS:
        bits[tokens.index(tok)] = 1
    mask = ModelMask(bits, task.base_count, task.noise_count)
    rng = np.random.default_rng(7)
    z = rng.standard_normal(task.layout.d_max)
    return mask, z, rng


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    PUBLIC.mkdir(parents=True, exist_ok=True)
    engine = Engine.from_checkpoint(
        ROOT / "artifacts" / "toy" / "checkpoint.bin"
    )
    task = engine.task
    mask, z, rng = demo_setup(task)
    y = task.simulate(mask, z, rng)
    x = [[float(g), float(v)] for g, v in zip(task.grid, y)]

    PUBLIC.joinpath("demo.csv").write_text(
        "x,y\n" + "".join(f"{g},{v}\n" for g, v in x)
    )

    # fresh replicates from the generating model for the band coverage check
    replicates = [
        task.simulate(mask, z, rng).tolist() for _ in range(50)
    ]

    client = TestClient(create_app(engine, seed=0))

    def record(name: str, method: str, url: str, body=None):
        resp = client.get(url) if method == "GET" else client.post(url, json=body)
        assert resp.status_code == 200, (name, resp.status_code, resp.text)
        FIXTURES.joinpath(name).write_text(
            json.dumps(resp.json(), indent=None)
        )
        print(name)
        return resp.json()

    record("metadata.json", "GET", "/v1/metadata")
    for lam, tag in [(0.0, "lam000"), (1.0, "lam100")]:
        record(
            f"model_posterior_{tag}.json", "POST", "/v1/model_posterior",
            {"x": x, "lambda": lam, "n_samples": N_SAMPLES, "seed": SEED},
        )
    mask_bits = [int(b) for b in mask.bits]
    record(
        "param_posterior.json", "POST", "/v1/param_posterior",
        {"x": x, "lambda": 0.25, "mask": mask_bits,
         "n_samples": N_SAMPLES, "seed": SEED},
    )
    record(
        "predictive_global.json", "POST", "/v1/predictive",
        {"x": x, "lambda": 0.25, "mode": "global",
         "n_samples": N_SAMPLES, "seed": SEED},
    )
    record(
        "predictive_local.json", "POST", "/v1/predictive",
        {"x": x, "lambda": 0.25, "mode": "local", "mask": mask_bits,
         "n_samples": N_SAMPLES, "seed": SEED},
    )

    FIXTURES.joinpath("demo_truth.json").write_text(json.dumps({
        "mask": mask_bits,
        "observation": x,
        "replicates": replicates,
    }))
    print("demo_truth.json")


if __name__ == "__main__":
    main()
