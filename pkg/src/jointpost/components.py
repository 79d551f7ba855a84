"""Component catalogue for the additive symbolic-regression family.

Each entry is a closed-form function of the grid x and parameters c_1..c_d
with independent uniform priors per parameter. Expressions are implemented
as a fixed set of native functions keyed by token name; the JSON library
files only reference these keys, there is no runtime expression parsing.

Noise components all have the form eta(x) * g(x; c_2, ...) with
eta ~ N(0, c_1^2) drawn independently per grid point, so c_1 scales the
noise and g shapes it along the grid.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

BASE = "base"
NOISE = "noise"

DATA_DIR = Path(__file__).parent / "data"


def _is_torch(*vals) -> bool:
    return any(torch.is_tensor(v) for v in vals)


def _exp(v):
    return torch.exp(v) if torch.is_tensor(v) else np.exp(v)


def _log(v):
    return torch.log(v) if torch.is_tensor(v) else np.log(v)


def _sqrt(v):
    return torch.sqrt(v) if torch.is_tensor(v) else np.sqrt(v)


def _sin(v):
    return torch.sin(v) if torch.is_tensor(v) else np.sin(v)


def _cos(v):
    return torch.cos(v) if torch.is_tensor(v) else np.cos(v)


def _tanh(v):
    return torch.tanh(v) if torch.is_tensor(v) else np.tanh(v)


def _atan(v):
    return torch.atan(v) if torch.is_tensor(v) else np.arctan(v)


def _cosh(v):
    return torch.cosh(v) if torch.is_tensor(v) else np.cosh(v)


def _abs(v):
    return torch.abs(v) if torch.is_tensor(v) else np.abs(v)


def _where(cond, a, b):
    if _is_torch(cond, a, b):
        cond = cond if torch.is_tensor(cond) else torch.as_tensor(cond)
        a = a if torch.is_tensor(a) else torch.as_tensor(a, dtype=cond.dtype)
        b = b if torch.is_tensor(b) else torch.as_tensor(b)
        return torch.where(cond, a, b)
    return np.where(cond, a, b)


def _softplus(v):
    # overflow-safe log(1 + exp(v))
    if torch.is_tensor(v):
        return torch.nn.functional.softplus(v)
    return np.logaddexp(0.0, v)


# ---------------------------------------------------------------------------
# Base function expressions: f(x, c) -> values on the grid.
# ---------------------------------------------------------------------------

BASE_EXPRESSIONS = {
    "lin": lambda x, c: c[0] * x,
    "quad": lambda x, c: c[0] * x * x,
    "shift2": lambda x, c: (c[0] + x) * (c[0] + x),
    "cub": lambda x, c: c[0] * x * x * x,
    "sin": lambda x, c: c[0] * _sin(c[1] * x),
    "cos": lambda x, c: c[0] * _cos(c[1] * x),
    "const_w": lambda x, c: c[0] * (x * 0 + 1),
    "const_p": lambda x, c: c[0] * (x * 0 + 1),
    "tanh_r": lambda x, c: c[0] * _tanh(x - c[1]),
    "tanh_l": lambda x, c: c[0] * _tanh(-x + c[1]),
    "gauss_b": lambda x, c: c[0] * _exp(-(x - c[1]) * (x - c[1])),
    "gauss_w": lambda x, c: c[0] * _exp(-(x - c[1]) * (x - c[1]) / 8),
    "ramp_u": lambda x, c: c[0] * _where(x < c[1], x * 0.0, x),
    "ramp_d": lambda x, c: c[0] * _where(x > c[1], x * 0.0, -x + c[1]),
    "quart4": lambda x, c: c[0] * (x / 10) ** 4,
    "quint5": lambda x, c: c[0] * (x / 10) ** 5,
    "sin_ph": lambda x, c: c[0] * _sin(c[1] * x + c[2]),
    "cos_ph": lambda x, c: c[0] * _cos(c[1] * x + c[2]),
    "exp_dec": lambda x, c: c[0] * _exp(-c[1] * x),
    "exp_sat": lambda x, c: c[0] * (1 - _exp(-c[1] * x)),
    "log": lambda x, c: c[0] * _log(x + c[1]),
    "sqrt": lambda x, c: c[0] * _sqrt(x + c[1]),
    "recip": lambda x, c: c[0] / (x + c[1]),
    "abs": lambda x, c: c[0] * _abs(x - c[1]),
    "invquad": lambda x, c: c[0] / (1 + c[1] * (x - c[2]) * (x - c[2])),
    "lorentz": lambda x, c: c[0] / (1 + ((x - c[1]) / c[2]) ** 2),
    "sig": lambda x, c: c[0] / (1 + _exp(-c[1] * (x - c[2]))),
    "d_sin": lambda x, c: c[0] * _exp(-c[1] * x) * _sin(c[2] * x),
    "d_cos": lambda x, c: c[0] * _exp(-c[1] * x) * _cos(c[2] * x),
    "tanh_c": lambda x, c: c[0] * _tanh(c[1] * (x - c[2])),
    "exp_grow": lambda x, c: c[0] * _exp(c[1] * x),
    "pow_dec": lambda x, c: c[0] / (x + c[1]) ** c[2],
    "atan": lambda x, c: c[0] * _atan(c[1] * (x - c[2])),
    "sech": lambda x, c: c[0] / _cosh(c[1] * (x - c[2])),
    "sinc": lambda x, c: c[0] * _sin(c[1] * x) / (x + c[2]),
    "abs_sin": lambda x, c: c[0] * _abs(_sin(c[1] * x + c[2])),
    "relu": lambda x, c: c[0] * _where(x < c[1], x * 0.0, x - c[1]),
    "softplus": lambda x, c: c[0] * _softplus(c[1] * (x - c[2])) / c[1],
    "gomp": lambda x, c: c[0] * _exp(-c[1] * _exp(-c[2] * x)),
    "linfrac": lambda x, c: c[0] * x / (1 + c[1] * x),
    "sin2": lambda x, c: c[0] * _sin(c[1] * x) ** 2,
    "tri": lambda x, c: c[0]
    * _where(_abs((x - c[1]) / c[2]) >= 1, x * 0.0, 1 - _abs((x - c[1]) / c[2])),
}

# Noise shape g(x, c) multiplying the per-point N(0, c_1^2) draw; c excludes c_1.
NOISE_SHAPES = {
    "n_obs": lambda x, c: x * 0 + 1,
    "n_inc": lambda x, c: x + 1,
    "n_dec": lambda x, c: 11 - x,
    "n_quad": lambda x, c: x**2 + 1,
    "n_qdec": lambda x, c: 11 - x**2,
    "n_exp": lambda x, c: _exp(c[0] * x),
    "n_sig": lambda x, c: 1 / (1 + _exp(-c[0] * (x - c[1]))),
    "n_peak": lambda x, c: _exp(-((x - c[0]) ** 2) / (c[1] + 1e-3)),
}

# Human-readable implementation strings, used for rendered equations.
EXPRESSION_STRINGS = {
    "lin": "c_1*x",
    "quad": "c_1*x*x",
    "shift2": "(c_1+x)*(c_1+x)",
    "cub": "c_1*x*x*x",
    "sin": "c_1*sin(c_2*x)",
    "cos": "c_1*cos(c_2*x)",
    "const_w": "c_1",
    "const_p": "c_1",
    "tanh_r": "c_1*tanh(x-c_2)",
    "tanh_l": "c_1*tanh(-x+c_2)",
    "gauss_b": "c_1*exp(-(x-c_2)*(x-c_2))",
    "gauss_w": "c_1*exp(-(x-c_2)*(x-c_2)/8)",
    "ramp_u": "c_1*Piecewise((0.0,x<c_2),(x, x>=c_2))",
    "ramp_d": "c_1*Piecewise((0.0,x>c_2),(-x+c_2, x<=c_2))",
    "quart4": "c_1*(x/10)**4",
    "quint5": "c_1*(x/10)**5",
    "sin_ph": "c_1*sin(c_2*x + c_3)",
    "cos_ph": "c_1*cos(c_2*x + c_3)",
    "exp_dec": "c_1*exp(-c_2*x)",
    "exp_sat": "c_1*(1-exp(-c_2*x))",
    "log": "c_1*log(x+c_2)",
    "sqrt": "c_1*sqrt(x+c_2)",
    "recip": "c_1/(x+c_2)",
    "abs": "c_1*Abs(x-c_2)",
    "invquad": "c_1/(1 + c_2*(x-c_3)*(x-c_3))",
    "lorentz": "c_1/(1 + ((x-c_2)/c_3)**2)",
    "sig": "c_1/(1+exp(-c_2*(x-c_3)))",
    "d_sin": "c_1*exp(-c_2*x)*sin(c_3*x)",
    "d_cos": "c_1*exp(-c_2*x)*cos(c_3*x)",
    "tanh_c": "c_1*tanh(c_2*(x-c_3))",
    "exp_grow": "c_1*exp(c_2*x)",
    "pow_dec": "c_1/(x + c_2)**c_3",
    "atan": "c_1*atan(c_2*(x-c_3))",
    "sech": "c_1*sech(c_2*(x-c_3))",
    "sinc": "c_1*sin(c_2*x)/(x+c_3)",
    "abs_sin": "c_1*Abs(sin(c_2*x + c_3))",
    "relu": "c_1*Piecewise((0, x < c_2), (x - c_2, True))",
    "softplus": "c_1*log(1+exp(c_2*(x-c_3)))/c_2",
    "gomp": "c_1*exp(-c_2*exp(-c_3*x))",
    "linfrac": "c_1*x/(1 + c_2*x)",
    "sin2": "c_1*sin(c_2*x)**2",
    "tri": "c_1*Piecewise((0, Abs((x-c_2)/c_3) >= 1), (1 - Abs((x-c_2)/c_3), True))",
    "n_obs": "normal(c_1)",
    "n_inc": "normal(c_1) * (x+1)",
    "n_dec": "normal(c_1) * (11 - x)",
    "n_quad": "normal(c_1) *(x**2 + 1)",
    "n_qdec": "normal(c_1) * (11 - x**2)",
    "n_exp": "normal(c_1) * exp(c_2 * x)",
    "n_sig": "normal(c_1)/(1+exp(-c_2*(x-c_3)))",
    "n_peak": "normal(c_1) * exp(-((x-c_2)**2)/(c_3 + 1e-3))",
}

# Number of parameters each expression key consumes (including the noise c_1).
EXPRESSION_DIMS = {
    key: max((int(m) for m in re.findall(r"c_(\d+)", _s)), default=0)
    for key, _s in EXPRESSION_STRINGS.items()
}

REPARAM_UNIFORM = "uniform"
REPARAM_GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class ComponentSpec:
    """One library entry: expression key, kind, and per-parameter prior bounds."""

    id: int
    token: str
    kind: str
    expression_key: str
    bounds: tuple
    reparam: str = REPARAM_UNIFORM

    def __post_init__(self):
        if self.kind not in (BASE, NOISE):
            raise ValueError(f"kind must be base or noise, got {self.kind!r}")
        reg = BASE_EXPRESSIONS if self.kind == BASE else NOISE_SHAPES
        if self.expression_key not in reg:
            raise ValueError(f"unknown expression key {self.expression_key!r}")
        bounds = tuple(tuple(float(v) for v in ab) for ab in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if self.reparam == REPARAM_UNIFORM:
            for a, b in bounds:
                if not (math.isfinite(a) and math.isfinite(b) and a < b):
                    raise ValueError(f"invalid bounds {a, b} for {self.token}")
        declared = EXPRESSION_DIMS[self.expression_key]
        if len(bounds) != declared:
            raise ValueError(
                f"{self.token}: declared dim {len(bounds)} disagrees with "
                f"expression parameter count {declared}"
            )

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def expression_string(self) -> str:
        return EXPRESSION_STRINGS[self.expression_key]


def eval_component(spec: ComponentSpec, params, xgrid):
    """Deterministic base-component values on the grid."""
    if spec.kind != BASE:
        raise ValueError("eval_component expects a base component")
    params = np.asarray(params, dtype=np.float64) if not torch.is_tensor(params) else params
    if len(params) != spec.dim:
        raise ValueError(f"expected {spec.dim} params, got {len(params)}")
    if not torch.is_tensor(params):
        for v, (a, b) in zip(params, spec.bounds):
            if not a <= v <= b:
                raise ValueError(f"{spec.token}: parameter {v} outside [{a}, {b}]")
    return BASE_EXPRESSIONS[spec.expression_key](xgrid, list(params))


def noise_shape(spec: ComponentSpec, params, xgrid):
    """Grid multiplier g(x); the full noise draw is N(0, c_1^2) * g(x)."""
    if spec.kind != NOISE:
        raise ValueError("noise_shape expects a noise component")
    return NOISE_SHAPES[spec.expression_key](xgrid, list(params[1:]))


def noise_std(spec: ComponentSpec, params, xgrid):
    """Per-point standard deviation of the noise component."""
    g = noise_shape(spec, params, xgrid)
    return _abs(params[0] * g)


# ---------------------------------------------------------------------------
# Library IO
# ---------------------------------------------------------------------------


def load_library(path) -> list[ComponentSpec]:
    """Read a component library (UTF-8 JSON array of spec objects)."""
    with open(path, encoding="utf-8") as fh:
        entries = json.load(fh)
    specs = []
    for i, e in enumerate(entries):
        specs.append(
            ComponentSpec(
                id=int(e.get("id", i)),
                token=e["token"],
                kind=e["kind"],
                expression_key=e["expression_key"],
                bounds=tuple(tuple(ab) for ab in e["bounds"]),
                reparam=e.get("reparam", REPARAM_UNIFORM),
            )
        )
    noise = [s for s in specs if s.kind == NOISE]
    if not noise:
        raise ValueError("library must contain at least one noise component")
    base = [s for s in specs if s.kind == BASE]
    if specs[: len(base)] != base:
        raise ValueError("base components must precede noise components")
    return specs


def dump_library(specs, path) -> None:
    entries = [
        {
            "id": s.id,
            "token": s.token,
            "kind": s.kind,
            "expression_key": s.expression_key,
            "bounds": [list(ab) for ab in s.bounds],
        }
        for s in specs
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(entries, fh, indent=2)
        fh.write("\n")


def bundled_library_path(name: str) -> Path:
    return DATA_DIR / f"{name}.json"
