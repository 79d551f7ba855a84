"""Regenerates the recorded HTTP fixtures under tests/golden/service.

Each fixture is {method, url, body, status, response_body}; 200 responses are
stored byte-exact so replay catches any drift in serialization or sampling.
Requires the trained toy checkpoint under artifacts/toy.
"""

import json
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from jointpost.engine import Engine
from jointpost.model_space import ModelMask
from jointpost.service import create_app

ROOT = Path(__file__).resolve().parents[1]
OUT = ROOT / "tests" / "golden" / "service"


def demo_observation(task) -> list[list[float]]:
    """Linear + Sinusoidal signal with flat observation noise."""
    bits = np.zeros(task.base_count + task.noise_count, dtype=np.int8)
    tokens = [spec.token for spec in task.library]
    for tok in ("lin", "sin", "n_obs"):
        bits[tokens.index(tok)] = 1
    mask = ModelMask(bits, task.base_count, task.noise_count)
    rng = np.random.default_rng(7)
    z = rng.standard_normal(task.layout.d_max)
    y = task.simulate(mask, z, rng)
    return [[float(x), float(v)] for x, v in zip(task.grid, y)]


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    engine = Engine.from_checkpoint(
        ROOT / "artifacts" / "toy" / "checkpoint.bin"
    )
    client = TestClient(create_app(engine, seed=0))
    x = demo_observation(engine.task)
    mask = [1, 0, 1, 0, 0, 0, 1, 0]

    cases = [
        ("GET", "/v1/metadata", None),
        ("POST", "/v1/model_posterior",
         {"x": x, "lambda": 0.25, "n_samples": 64, "seed": 3}),
        ("POST", "/v1/model_posterior",
         {"x": x, "lambda": 0.9, "n_samples": 64, "seed": 3}),
        ("POST", "/v1/param_posterior",
         {"x": x, "lambda": 0.25, "mask": mask, "n_samples": 32, "seed": 4}),
        ("POST", "/v1/predictive",
         {"x": x, "lambda": 0.25, "mode": "global", "n_samples": 16,
          "seed": 5}),
        ("POST", "/v1/predictive",
         {"x": x, "lambda": 0.25, "mode": "local", "mask": mask,
          "n_samples": 16, "seed": 5}),
        # lambda outside [0, 1] is the one 422 condition
        ("POST", "/v1/model_posterior",
         {"x": x, "lambda": 1.5, "n_samples": 8, "seed": 0}),
        # malformed body (missing lambda) is a 400
        ("POST", "/v1/model_posterior", {"x": x, "n_samples": 8}),
        # wrong observation length is a 400
        ("POST", "/v1/model_posterior",
         {"x": x[:3], "lambda": 0.5, "n_samples": 8, "seed": 0}),
    ]

    for i, (method, url, body) in enumerate(cases):
        if method == "GET":
            resp = client.get(url)
        else:
            resp = client.post(url, json=body)
        fixture = {
            "method": method,
            "url": url,
            "body": body,
            "status": resp.status_code,
            "response_body": resp.content.decode(),
        }
        name = f"{i:02d}_{url.rsplit('/', 1)[-1]}_{resp.status_code}.json"
        (OUT / name).write_text(json.dumps(fixture, indent=1))
        print(name, resp.status_code)


if __name__ == "__main__":
    main()
