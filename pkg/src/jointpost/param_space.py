"""Global parameter vector layout and latent-to-natural reparameterizations.

The diffusion decoder works entirely in an unconstrained standard-normal
latent space; each constrained natural domain is reached through a bijection
(uniform interval, area-uniform upper hemisphere, Dirichlet stick-breaking).
Natural parameters appear only at the API boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betaincinv, ndtr, ndtri

# Phi(z) underflows to exactly 0/1 for |z| ~ 38; clamp so that bijections stay
# inside open domains even for extreme latents.
_U_EPS = 1e-12


@dataclass(frozen=True)
class ParamLayout:
    """Per-component slices of the flat parameter vector."""

    dims: tuple
    offsets: tuple

    @classmethod
    def from_dims(cls, dims) -> "ParamLayout":
        dims = tuple(int(d) for d in dims)
        offsets = tuple(int(o) for o in np.cumsum((0,) + dims)[:-1])
        return cls(dims, offsets)

    def __post_init__(self):
        if list(self.offsets) != sorted(set(self.offsets)) and len(self.offsets) > 1:
            # offsets of zero-dim components may repeat; require non-decreasing
            if any(b < a for a, b in zip(self.offsets, self.offsets[1:])):
                raise ValueError("offsets must be non-decreasing")
        if self.d_max != sum(self.dims):
            raise ValueError("d_max must equal sum of dims")

    @property
    def d_max(self) -> int:
        return self.offsets[-1] + self.dims[-1] if self.dims else 0

    @property
    def n_components(self) -> int:
        return len(self.dims)

    def block(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i] + self.dims[i])

    def active_indices(self, bits) -> np.ndarray:
        """Flat parameter indices covered by the active components."""
        bits = np.asarray(bits)
        idx = [
            np.arange(self.offsets[i], self.offsets[i] + self.dims[i])
            for i in range(self.n_components)
            if bits[i] == 1
        ]
        if not idx:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(idx)

    def active_coord_mask(self, bits) -> np.ndarray:
        out = np.zeros(self.d_max, dtype=bool)
        out[self.active_indices(bits)] = True
        return out


def _clamped_u(z):
    return np.clip(ndtr(z), _U_EPS, 1.0 - _U_EPS)


def interval_to_natural(z, a: float, b: float):
    """Map N(0,1) latents to Uniform(a, b): theta = a + (b - a) * Phi(z)."""
    if not a < b:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    return a + (b - a) * _clamped_u(np.asarray(z, dtype=np.float64))


def interval_to_latent(theta, a: float, b: float):
    """Inverse of interval_to_natural; defined on the open interval only."""
    if not a < b:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    theta = np.asarray(theta, dtype=np.float64)
    if (theta <= a).any() or (theta >= b).any():
        raise ValueError("theta must lie strictly inside (a, b)")
    return ndtri((theta - a) / (b - a))


def hemisphere_to_natural(z1, z2) -> np.ndarray:
    """Area-uniform point on the upper hemisphere from two N(0,1) latents."""
    u1 = _clamped_u(np.asarray(z1, dtype=np.float64))
    u2 = _clamped_u(np.asarray(z2, dtype=np.float64))
    phi = 2.0 * np.pi * u1
    theta = np.arccos(u2)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def hemisphere_to_latent(n) -> tuple:
    """Recover (z1, z2) from a unit vector with n_z > 0 (undefined at the pole)."""
    n = np.asarray(n, dtype=np.float64)
    phi = np.mod(np.arctan2(n[..., 1], n[..., 0]), 2.0 * np.pi)
    u1 = phi / (2.0 * np.pi)
    u2 = np.clip(n[..., 2], _U_EPS, 1.0 - _U_EPS)
    return ndtri(np.clip(u1, _U_EPS, 1.0 - _U_EPS)), ndtri(u2)


def simplex_to_natural(eps, alpha) -> np.ndarray:
    """Dirichlet(alpha) draw from Kf-1 N(0,1) latents via stick-breaking.

    v_i is the Beta(alpha_i, sum_{j>i} alpha_j) quantile of Phi(eps_i); the
    remaining stick lengths multiply out to a point on the simplex.
    """
    eps = np.atleast_1d(np.asarray(eps, dtype=np.float64))
    alpha = np.atleast_1d(np.asarray(alpha, dtype=np.float64))
    if (alpha <= 0).any():
        raise ValueError("alpha entries must be positive")
    kf = alpha.shape[0]
    if eps.shape[0] != kf - 1:
        raise ValueError(f"need {kf - 1} latents for a {kf}-simplex")
    u = _clamped_u(eps)
    pi = np.empty(kf, dtype=np.float64)
    remaining = 1.0
    for i in range(kf - 1):
        b = alpha[i + 1 :].sum()
        v = betaincinv(alpha[i], b, u[i])
        pi[i] = v * remaining
        remaining *= 1.0 - v
    pi[kf - 1] = remaining
    return pi


def sample_latent_prior(
    layout: ParamLayout, rng: np.random.Generator
) -> np.ndarray:
    """iid standard-normal latents covering the full layout."""
    return rng.standard_normal(layout.d_max)
