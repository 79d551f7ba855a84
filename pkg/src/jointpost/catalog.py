"""Master table behind the bundled component libraries.

``CATALOG`` lists every unique base function and noise model with its
expression key and per-parameter prior bounds; the bundled JSON files
(``library_k15.json``, ``library_full.json``) are generated from it.
"""

from __future__ import annotations

import math

from .components import BASE, NOISE, ComponentSpec

_PI = math.pi

# name -> (token, kind, bounds)
CATALOG = {
    "Linear": ("lin", BASE, [(-2, 2)]),
    "Quadratic": ("quad", BASE, [(-0.5, 0.5)]),
    "ShiftedSquare": ("shift2", BASE, [(-5, 0)]),
    "Cubic": ("cub", BASE, [(-0.1, 0.1)]),
    "Sinusoidal": ("sin", BASE, [(0, 5), (0.5, 5)]),
    "Cosinusoidal": ("cos", BASE, [(0, 5), (0.5, 5)]),
    "ConstantWide": ("const_w", BASE, [(-5, 5)]),
    "ConstantPositive": ("const_p", BASE, [(0, 10)]),
    "TanhRight": ("tanh_r", BASE, [(1, 10), (2, 8)]),
    "TanhLeft": ("tanh_l", BASE, [(1, 10), (2, 8)]),
    "TanhCentered": ("tanh_c", BASE, [(-10, 10), (0.1, 2), (2, 8)]),
    "GaussianBump": ("gauss_b", BASE, [(1, 10), (2, 8)]),
    "GaussianWide": ("gauss_w", BASE, [(1, 10), (2, 8)]),
    "RampUp": ("ramp_u", BASE, [(1, 5), (2, 8)]),
    "RampDown": ("ramp_d", BASE, [(1, 5), (2, 8)]),
    "QuarticScaled": ("quart4", BASE, [(-5, 5)]),
    "QuinticScaled": ("quint5", BASE, [(-5, 5)]),
    "SinusoidalPhase": ("sin_ph", BASE, [(0, 5), (0.5, 5), (-_PI, _PI)]),
    "CosinusoidalPhase": ("cos_ph", BASE, [(0, 5), (0.5, 5), (-_PI, _PI)]),
    "ExponentialDecay": ("exp_dec", BASE, [(0, 10), (0.1, 2)]),
    "SaturatingExponential": ("exp_sat", BASE, [(0, 10), (0.1, 2)]),
    "Logarithmic": ("log", BASE, [(-5, 5), (0.1, 2)]),
    "SquareRoot": ("sqrt", BASE, [(-5, 5), (0, 2)]),
    "Reciprocal": ("recip", BASE, [(-10, 10), (0.5, 3)]),
    "AbsoluteValue": ("abs", BASE, [(-5, 5), (0, 10)]),
    "InverseQuadratic": ("invquad", BASE, [(0, 10), (0.1, 2), (0, 10)]),
    "Lorentzian": ("lorentz", BASE, [(0, 10), (0, 10), (0.5, 5)]),
    "Sigmoid": ("sig", BASE, [(0, 10), (0.1, 5), (0, 10)]),
    "DampedSinusoidal": ("d_sin", BASE, [(0, 5), (0.05, 1), (0.5, 8)]),
    "DampedCosinusoidal": ("d_cos", BASE, [(0, 5), (0.05, 1), (0.5, 8)]),
    "ExponentialGrowth": ("exp_grow", BASE, [(0, 10), (0.05, 0.8)]),
    "PowerLawDecay": ("pow_dec", BASE, [(0, 10), (0.5, 5), (0.5, 3)]),
    "ArctangentStep": ("atan", BASE, [(0, 10), (0.1, 2), (0, 10)]),
    "HyperbolicSecant": ("sech", BASE, [(0, 8), (0.1, 2), (0, 10)]),
    "SincDecay": ("sinc", BASE, [(0, 5), (0.5, 5), (0.5, 5)]),
    "AbsoluteSinusoidal": ("abs_sin", BASE, [(0, 5), (0.5, 5), (-_PI, _PI)]),
    "RectifiedLinear": ("relu", BASE, [(0, 5), (0, 8)]),
    "Softplus": ("softplus", BASE, [(0, 5), (0.1, 5), (0, 10)]),
    "Gompertz": ("gomp", BASE, [(0, 10), (0.1, 3), (0.05, 1.5)]),
    "LinearFractional": ("linfrac", BASE, [(-5, 5), (0.1, 2)]),
    "SineSquared": ("sin2", BASE, [(0, 5), (0.5, 5)]),
    "TriangularBump": ("tri", BASE, [(0, 5), (0.5, 5), (0.5, 5)]),
    "NoiseObserver": ("n_obs", NOISE, [(0.1, 2)]),
    "NoiseIncreasing": ("n_inc", NOISE, [(0.5, 2)]),
    "NoiseDecreasing": ("n_dec", NOISE, [(0.5, 2)]),
    "NoiseQuadratic": ("n_quad", NOISE, [(0.2, 1)]),
    "NoiseQuadraticDecreasing": ("n_qdec", NOISE, [(0.2, 1)]),
    "NoiseExponential": ("n_exp", NOISE, [(0, 5), (0.05, 0.5)]),
    "NoiseSigmoid": ("n_sig", NOISE, [(0, 5), (0.1, 1), (0, 10)]),
    "NoisePeaked": ("n_peak", NOISE, [(0, 5), (0, 10), (0.5, 5)]),
}

K15_BASE = [
    "Linear", "Linear", "Quadratic", "ShiftedSquare", "Cubic",
    "Sinusoidal", "Cosinusoidal", "ConstantWide", "ConstantPositive",
    "TanhRight", "TanhLeft", "GaussianBump", "GaussianWide",
    "RampUp", "RampDown",
]

K15_NOISE = [
    "NoiseObserver", "NoiseIncreasing", "NoiseDecreasing",
    "NoiseQuadratic", "NoiseQuadraticDecreasing",
]


def make_library(names) -> list[ComponentSpec]:
    """Build an ordered library from catalogue names (repeats allowed)."""
    specs = []
    for i, name in enumerate(names):
        token, kind, bounds = CATALOG[name]
        specs.append(
            ComponentSpec(
                id=i, token=token, kind=kind,
                expression_key=token, bounds=tuple(tuple(b) for b in bounds),
            )
        )
    base = [s for s in specs if s.kind == BASE]
    if specs[: len(base)] != base:
        raise ValueError("base components must precede noise components")
    return specs


def k15_library() -> list[ComponentSpec]:
    return make_library(K15_BASE + K15_NOISE)


def full_library() -> list[ComponentSpec]:
    bases = [n for n, (_, kind, _) in CATALOG.items() if kind == BASE]
    noises = [n for n, (_, kind, _) in CATALOG.items() if kind == NOISE]
    return make_library(bases + noises)
