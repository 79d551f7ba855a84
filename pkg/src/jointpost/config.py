"""Run configuration: one strict JSON file driving every CLI command.

Unknown fields are rejected and every violation produces a single-line
diagnostic naming the offending field path, so config parsing is total.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .catalog import full_library, k15_library
from .components import load_library
from .model_space import ComplexityPrior
from .nets import NetConfig
from .simulators import LinearGaussianTask, SymbolicTask
from .training import TrainConfig


class ConfigError(ValueError):
    """Invalid configuration; message is 'field.path: problem'."""


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _expect_dict(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        _fail(path, f"expected an object, got {type(obj).__name__}")
    return obj


def _check_known(obj: dict, known, path: str):
    for key in obj:
        if key not in known:
            _fail(f"{path}.{key}", "unknown field")


def _number(obj, key, path, default=None, lo=None, hi=None, integer=False):
    if key not in obj:
        if default is None:
            _fail(f"{path}.{key}", "required field missing")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(f"{path}.{key}", f"expected a number, got {type(v).__name__}")
    if integer and int(v) != v:
        _fail(f"{path}.{key}", "expected an integer")
    if lo is not None and v < lo:
        _fail(f"{path}.{key}", f"must be >= {lo}")
    if hi is not None and v > hi:
        _fail(f"{path}.{key}", f"must be <= {hi}")
    return int(v) if integer else float(v)


def _string(obj, key, path, default=None, choices=None):
    if key not in obj:
        if default is None:
            _fail(f"{path}.{key}", "required field missing")
        return default
    v = obj[key]
    if not isinstance(v, str):
        _fail(f"{path}.{key}", f"expected a string, got {type(v).__name__}")
    if choices and v not in choices:
        _fail(f"{path}.{key}", f"must be one of {sorted(choices)}")
    return v


def _boolean(obj, key, path, default):
    if key not in obj:
        return default
    v = obj[key]
    if not isinstance(v, bool):
        _fail(f"{path}.{key}", f"expected a boolean, got {type(v).__name__}")
    return v


@dataclass(frozen=True)
class RunConfig:
    task: object  # SymbolicTask | LinearGaussianTask
    prior: ComplexityPrior
    net: NetConfig
    train: TrainConfig
    seed: int
    eval_spec: dict
    serve_bind: str

    @property
    def lambda_fixed(self) -> float:
        return float(self.eval_spec.get("lambda", 0.5))


_TASK_FIELDS = {"kind", "library", "grid", "encoder_squash", "A", "sigma",
                "prior"}
_PRIOR_FIELDS = {"variant", "p0", "lambda_max"}
_GRID_FIELDS = {"lo", "hi", "n"}
_EVAL_FIELDS = {"metrics", "trials", "samples_per_trial", "lambda",
                "observations"}
_SERVE_FIELDS = {"bind"}
_TOP_FIELDS = {"task", "net", "train", "eval", "serve", "seed"}

_METRIC_NAMES = {"sbc", "rksd", "rrmse", "ess", "evidence", "tv", "topk"}


def _build_prior(obj, path) -> ComplexityPrior:
    obj = _expect_dict(obj, path)
    _check_known(obj, _PRIOR_FIELDS, path)
    variant = _string(obj, "variant", path,
                      choices={"bernoulli_lambda", "dim_penalized"})
    p0 = _number(obj, "p0", path, default=0.5, lo=0.0, hi=1.0)
    lambda_max = _number(obj, "lambda_max", path, default=4.0, lo=0.0)
    try:
        return ComplexityPrior(variant=variant, p0=p0, lambda_max=lambda_max)
    except ValueError as e:
        _fail(path, str(e))


def _build_grid(obj, path) -> np.ndarray:
    obj = _expect_dict(obj, path)
    _check_known(obj, _GRID_FIELDS, path)
    lo = _number(obj, "lo", path, default=0.0)
    hi = _number(obj, "hi", path, default=10.0)
    n = _number(obj, "n", path, default=100, lo=2, integer=True)
    if hi <= lo:
        _fail(f"{path}.hi", "must exceed lo")
    return np.linspace(lo, hi, n)


def _build_task(obj, path, base_dir: Path):
    obj = _expect_dict(obj, path)
    _check_known(obj, _TASK_FIELDS, path)
    kind = _string(obj, "kind", path, choices={"symbolic", "linear_gaussian"})
    prior = _build_prior(obj.get("prior", {"variant": "bernoulli_lambda"}),
                         f"{path}.prior")
    if kind == "linear_gaussian":
        if "A" not in obj:
            _fail(f"{path}.A", "required field missing")
        A = obj["A"]
        if not (isinstance(A, list) and A and all(isinstance(r, list) for r in A)):
            _fail(f"{path}.A", "expected a nested list matrix")
        sigma = _number(obj, "sigma", path, lo=1e-12)
        try:
            return LinearGaussianTask(A=np.asarray(A, dtype=np.float64),
                                      sigma=sigma), prior
        except ValueError as e:
            _fail(path, str(e))
    name = _string(obj, "library", path)
    grid = _build_grid(obj.get("grid", {}), f"{path}.grid")
    squash = _boolean(obj, "encoder_squash", path, True)
    if name == "k15":
        lib = k15_library()
    elif name == "full":
        lib = full_library()
    else:
        p = Path(name)
        if not p.is_absolute():
            p = base_dir / p
        if not p.exists():
            _fail(f"{path}.library", f"file not found: {p}")
        try:
            lib = load_library(p)
        except (ValueError, KeyError, json.JSONDecodeError) as e:
            _fail(f"{path}.library", f"invalid library file: {e}")
    try:
        return SymbolicTask(library=tuple(lib), grid=grid,
                            encoder_squash=squash), prior
    except ValueError as e:
        _fail(path, str(e))


def _build_dataclass(cls, obj, path):
    obj = _expect_dict(obj, path)
    known = {f.name for f in fields(cls)}
    _check_known(obj, known, path)
    kwargs = {}
    for f in fields(cls):
        if f.name not in obj:
            continue
        v = obj[f.name]
        if f.type in ("int", int) or isinstance(f.default, int) and not isinstance(f.default, bool):
            v = _number(obj, f.name, path, default=f.default,
                        integer=isinstance(f.default, int))
        elif isinstance(f.default, float):
            v = _number(obj, f.name, path, default=f.default)
        kwargs[f.name] = v
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as e:
        _fail(path, str(e))


def _build_eval(obj, path) -> dict:
    obj = _expect_dict(obj, path)
    _check_known(obj, _EVAL_FIELDS, path)
    metrics = obj.get("metrics", ["sbc", "rrmse", "ess", "rksd"])
    if not isinstance(metrics, list) or not all(
        isinstance(m, str) for m in metrics
    ):
        _fail(f"{path}.metrics", "expected a list of metric names")
    for m in metrics:
        if m not in _METRIC_NAMES:
            _fail(f"{path}.metrics", f"unknown metric {m!r}")
    return {
        "metrics": metrics,
        "trials": _number(obj, "trials", path, default=100, lo=1,
                          integer=True),
        "samples_per_trial": _number(obj, "samples_per_trial", path,
                                     default=100, lo=1, integer=True),
        "lambda": _number(obj, "lambda", path, default=0.5, lo=0.0, hi=1.0),
        "observations": _number(obj, "observations", path, default=50, lo=1,
                                integer=True),
    }


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config: file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: invalid JSON: {e}") from e
    return parse_config(raw, base_dir=p.parent)


def parse_config(raw: dict, base_dir=Path(".")) -> RunConfig:
    raw = _expect_dict(raw, "config")
    _check_known(raw, _TOP_FIELDS, "config")
    if "task" not in raw:
        _fail("config.task", "required field missing")
    task, prior = _build_task(raw["task"], "config.task", Path(base_dir))
    net = _build_dataclass(NetConfig, raw.get("net", {}), "config.net")
    train = _build_dataclass(TrainConfig, raw.get("train", {}), "config.train")
    seed = _number(raw, "seed", "config", default=0, integer=True)
    eval_spec = _build_eval(raw.get("eval", {}), "config.eval")
    serve = _expect_dict(raw.get("serve", {}), "config.serve")
    _check_known(serve, _SERVE_FIELDS, "config.serve")
    bind = _string(serve, "bind", "config.serve", default="127.0.0.1:8000")
    return RunConfig(task=task, prior=prior, net=net, train=train, seed=seed,
                     eval_spec=eval_spec, serve_bind=bind)
