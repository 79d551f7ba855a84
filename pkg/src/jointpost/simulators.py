"""Data-generating tasks: the additive symbolic family and a conjugate oracle.

A task bundles a component library, the evaluation grid, and the parameter
layout; it simulates observations from (mask, latent params) and evaluates
the Gaussian log-likelihood needed by the score-based diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.stats import multivariate_normal

from .components import (
    BASE,
    NOISE,
    REPARAM_GAUSSIAN,
    REPARAM_UNIFORM,
    ComponentSpec,
    eval_component,
    load_library,
    noise_shape,
)
from .model_space import ComplexityPrior, ModelMask, sample_model_prior
from .param_space import ParamLayout, interval_to_latent, interval_to_natural

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class JointSample:
    """One draw from the generative process (lam, mask, latents, observation)."""

    lam: float
    mask: ModelMask
    z: np.ndarray
    x: np.ndarray


@dataclass(frozen=True)
class SymbolicTask:
    """Additive symbolic-regression family on an equidistant grid."""

    library: tuple
    grid: np.ndarray = field(
        default_factory=lambda: np.linspace(0.0, 10.0, 100)
    )
    encoder_squash: bool = True

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "library", tuple(self.library))
        if grid.ndim != 1 or (np.diff(grid) <= 0).any():
            raise ValueError("grid must be strictly increasing")
        if not any(s.kind == NOISE for s in self.library):
            raise ValueError("library must contain a noise component")

    @classmethod
    def from_file(cls, path, grid=None) -> "SymbolicTask":
        lib = load_library(path)
        if grid is None:
            return cls(library=tuple(lib))
        return cls(library=tuple(lib), grid=np.asarray(grid, dtype=np.float64))

    @property
    def n_points(self) -> int:
        return self.grid.shape[0]

    @property
    def base_count(self) -> int:
        return sum(1 for s in self.library if s.kind == BASE)

    @property
    def noise_count(self) -> int:
        return sum(1 for s in self.library if s.kind == NOISE)

    @property
    def C(self) -> int:
        return len(self.library)

    @property
    def dims(self) -> tuple:
        return tuple(s.dim for s in self.library)

    @property
    def layout(self) -> ParamLayout:
        return ParamLayout.from_dims(self.dims)

    def to_natural(self, z: np.ndarray) -> np.ndarray:
        """Apply the per-coordinate bijection latent -> natural domain."""
        z = np.asarray(z, dtype=np.float64)
        theta = np.empty_like(z)
        j = 0
        for spec in self.library:
            for a, b in spec.bounds:
                if spec.reparam == REPARAM_UNIFORM:
                    theta[..., j] = interval_to_natural(z[..., j], a, b)
                else:
                    theta[..., j] = z[..., j]
                j += 1
        return theta

    def to_latent(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        z = np.empty_like(theta)
        j = 0
        for spec in self.library:
            for a, b in spec.bounds:
                if spec.reparam == REPARAM_UNIFORM:
                    z[..., j] = interval_to_latent(theta[..., j], a, b)
                else:
                    z[..., j] = theta[..., j]
                j += 1
        return z

    def mean_curve(self, mask: ModelMask, theta: np.ndarray, grid=None):
        """Deterministic part: sum of active base components on the grid."""
        layout = self.layout
        xg = self.grid if grid is None else grid
        out = np.zeros_like(xg) if not torch.is_tensor(theta) else torch.zeros(
            len(xg), dtype=theta.dtype
        )
        if torch.is_tensor(theta):
            xg = torch.as_tensor(xg, dtype=theta.dtype)
        for i, spec in enumerate(self.library):
            if spec.kind == BASE and mask.bits[i] == 1:
                out = out + eval_component(spec, theta[layout.block(i)], xg)
        return out

    def active_noise(self, mask: ModelMask) -> int:
        noise_idx = [
            i for i, s in enumerate(self.library)
            if s.kind == NOISE and mask.bits[i] == 1
        ]
        if len(noise_idx) != 1:
            raise ValueError("mask must activate exactly one noise component")
        return noise_idx[0]

    def noise_scale(self, mask: ModelMask, theta, grid=None):
        """Signed per-point noise multiplier g(x) and the scale c_1."""
        i = self.active_noise(mask)
        spec = self.library[i]
        xg = self.grid if grid is None else grid
        if torch.is_tensor(theta):
            xg = torch.as_tensor(xg, dtype=theta.dtype)
        block = theta[self.layout.block(i)]
        return block[0], noise_shape(spec, block, xg)

    def simulate(self, mask: ModelMask, z: np.ndarray, rng: np.random.Generator,
                 grid=None) -> np.ndarray:
        """One observation: active base sum plus one noise draw per grid point."""
        theta = self.to_natural(z)
        mean = self.mean_curve(mask, theta, grid=grid)
        c1, g = self.noise_scale(mask, theta, grid=grid)
        eta = rng.standard_normal(mean.shape[0]) * c1
        return mean + eta * g

    def log_likelihood(self, theta, mask: ModelMask, y) -> torch.Tensor:
        """Gaussian log p(y | theta, mask); torch for autodiff scores."""
        theta = theta if torch.is_tensor(theta) else torch.as_tensor(
            theta, dtype=torch.float64
        )
        y = y if torch.is_tensor(y) else torch.as_tensor(y, dtype=theta.dtype)
        mean = self.mean_curve(mask, theta)
        c1, g = self.noise_scale(mask, theta)
        var = (c1 * g) ** 2
        return -0.5 * ((y - mean) ** 2 / var + torch.log(var) + _LOG_2PI).sum()

    def log_prior_natural(self, theta, mask: ModelMask) -> float:
        """log p(theta | mask) over active coordinates in the natural domain."""
        layout = self.layout
        total = 0.0
        for i, spec in enumerate(self.library):
            if mask.bits[i] != 1:
                continue
            block = theta[layout.block(i)]
            for v, (a, b) in zip(block, spec.bounds):
                if spec.reparam == REPARAM_UNIFORM:
                    if not a <= v <= b:
                        return -np.inf
                    total -= np.log(b - a)
                else:
                    total += -0.5 * (float(v) ** 2 + _LOG_2PI)
        return float(total)

    def equation_string(self, mask: ModelMask, theta=None) -> str:
        """Active base tokens joined with '+'; values substituted if given."""
        parts = []
        layout = self.layout
        for i, spec in enumerate(self.library):
            if spec.kind != BASE or mask.bits[i] != 1:
                continue
            expr = spec.expression_string
            if theta is not None:
                block = theta[layout.block(i)]
                for j in range(spec.dim, 0, -1):
                    expr = expr.replace(f"c_{j}", f"{block[j - 1]:.4g}")
            parts.append(expr)
        return " + ".join(parts)


def sample_joint(
    task: SymbolicTask, prior: ComplexityPrior, rng: np.random.Generator
) -> JointSample:
    """Draw (lam, mask, latents, observation) from the generative process."""
    lam = float(rng.random())
    mask = sample_model_prior(prior, lam, task.dims, task.noise_count, rng)
    z = rng.standard_normal(task.layout.d_max)
    x = task.simulate(mask, z, rng)
    return JointSample(lam=lam, mask=mask, z=z, x=x)


def linear_gaussian_oracle(A: np.ndarray, sigma: float, x_o: np.ndarray):
    """Exact Gaussian posterior and evidence for x = A theta + sigma eps.

    Under theta ~ N(0, I): posterior N(m, S) with S = (I + A^T A / s^2)^{-1},
    m = S A^T x_o / s^2, and log p(x_o) = log N(x_o; 0, A A^T + s^2 I).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    A = np.asarray(A, dtype=np.float64)
    x_o = np.asarray(x_o, dtype=np.float64)
    d = A.shape[1]
    S = np.linalg.inv(np.eye(d) + A.T @ A / sigma**2)
    m = S @ A.T @ x_o / sigma**2
    cov_x = A @ A.T + sigma**2 * np.eye(A.shape[0])
    log_ev = multivariate_normal.logpdf(x_o, mean=np.zeros(A.shape[0]), cov=cov_x)
    return m, S, float(log_ev)


@dataclass(frozen=True)
class LinearGaussianTask:
    """Conjugate test task: x = A theta + sigma eps with theta ~ N(0, I).

    Structurally a single always-active noise component carrying all d
    parameters with the identity (gaussian) reparameterization, so the same
    networks and training loop apply; the exact posterior and evidence come
    from linear_gaussian_oracle.
    """

    A: np.ndarray
    sigma: float
    encoder_squash: bool = False

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        object.__setattr__(self, "A", A)
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def library(self) -> tuple:
        d = self.A.shape[1]
        return (
            ComponentSpec(
                id=0, token="n_obs", kind=NOISE, expression_key="n_obs",
                bounds=tuple((0.0, 1.0) for _ in range(d)),
                reparam=REPARAM_GAUSSIAN,
            ),
        )

    @property
    def n_points(self) -> int:
        return self.A.shape[0]

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.A.shape[0], dtype=np.float64)

    @property
    def base_count(self) -> int:
        return 0

    @property
    def noise_count(self) -> int:
        return 1

    @property
    def C(self) -> int:
        return 1

    @property
    def dims(self) -> tuple:
        return (self.A.shape[1],)

    @property
    def layout(self) -> ParamLayout:
        return ParamLayout.from_dims(self.dims)

    def full_mask(self) -> ModelMask:
        return ModelMask(np.array([1], dtype=np.int8), 0, 1)

    def to_natural(self, z):
        return np.asarray(z, dtype=np.float64)

    def to_latent(self, theta):
        return np.asarray(theta, dtype=np.float64)

    def simulate(self, mask: ModelMask, z, rng: np.random.Generator):
        z = np.asarray(z, dtype=np.float64)
        return self.A @ z + self.sigma * rng.standard_normal(self.A.shape[0])

    def log_likelihood(self, theta, mask: ModelMask, y) -> torch.Tensor:
        theta = theta if torch.is_tensor(theta) else torch.as_tensor(
            theta, dtype=torch.float64
        )
        y = y if torch.is_tensor(y) else torch.as_tensor(y, dtype=theta.dtype)
        A = torch.as_tensor(self.A, dtype=theta.dtype)
        resid = y - A @ theta
        n = self.A.shape[0]
        return -0.5 * (
            (resid**2).sum() / self.sigma**2
            + n * (_LOG_2PI + 2.0 * np.log(self.sigma))
        )

    def log_prior_natural(self, theta, mask: ModelMask) -> float:
        theta = np.asarray(theta, dtype=np.float64)
        return float(-0.5 * (theta**2 + _LOG_2PI).sum())

    def posterior(self, x_o):
        return linear_gaussian_oracle(self.A, self.sigma, x_o)

    def equation_string(self, mask: ModelMask, theta=None) -> str:
        return ""
