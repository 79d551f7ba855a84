"""Combinatorial model family: binary masks, complexity priors, enumeration.

A model is a binary inclusion vector over C = K + Mn library components
(K base components followed by Mn noise components). The hierarchical
prior makes every base bit an independent Bernoulli whose probability is
controlled by the complexity knob ``lam`` in [0, 1]; the noise block is a
one-hot uniform categorical.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

BERNOULLI_LAMBDA = "bernoulli_lambda"
DIM_PENALIZED = "dim_penalized"


@dataclass(frozen=True)
class ModelMask:
    """Binary component-inclusion vector over K base + Mn noise slots."""

    bits: np.ndarray
    base_count: int
    noise_count: int

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.int8)
        object.__setattr__(self, "bits", bits)
        if bits.ndim != 1 or bits.shape[0] != self.base_count + self.noise_count:
            raise ValueError(
                f"mask length {bits.shape[0]} != K+Mn = "
                f"{self.base_count + self.noise_count}"
            )
        if not np.isin(bits, (0, 1)).all():
            raise ValueError("mask bits must be 0 or 1")

    @property
    def C(self) -> int:
        return self.base_count + self.noise_count

    @property
    def base_bits(self) -> np.ndarray:
        return self.bits[: self.base_count]

    @property
    def noise_bits(self) -> np.ndarray:
        return self.bits[self.base_count :]

    def has_unique_noise(self) -> bool:
        return int(self.noise_bits.sum()) == 1

    def key(self) -> tuple:
        return tuple(int(b) for b in self.bits)


@dataclass(frozen=True)
class ComplexityPrior:
    """Hierarchical prior over masks, tunable via the complexity knob."""

    variant: str = BERNOULLI_LAMBDA
    p0: float = 0.5
    lambda_max: float = 4.0

    def __post_init__(self):
        if self.variant not in (BERNOULLI_LAMBDA, DIM_PENALIZED):
            raise ValueError(f"unknown prior variant: {self.variant!r}")
        if not 0.0 < self.p0 < 1.0:
            raise ValueError("p0 must lie in (0, 1)")
        if self.lambda_max <= 0.0:
            raise ValueError("lambda_max must be positive")


def dim_penalized_prob(dim, lam, p0: float = 0.5, lambda_max: float = 4.0):
    """Per-bit inclusion probability penalized by parameter count.

    logit(p) = logit(p0) - (1 - lam) * lambda_max * dim, so higher-dimensional
    components are switched on less often, with the penalty vanishing at
    lam = 1.
    """
    dim = np.asarray(dim, dtype=np.float64)
    if (dim < 0).any():
        raise ValueError("dim must be nonnegative")
    logit_p0 = np.log(p0) - np.log1p(-p0)
    logit = logit_p0 - (1.0 - lam) * lambda_max * dim
    # numerically stable logistic
    return np.where(
        logit >= 0,
        1.0 / (1.0 + np.exp(-logit)),
        np.exp(logit) / (1.0 + np.exp(logit)),
    )


def base_bit_probs(prior: ComplexityPrior, lam: float, base_dims) -> np.ndarray:
    """Per-bit inclusion probabilities for the K base components."""
    base_dims = np.asarray(base_dims, dtype=np.float64)
    if prior.variant == BERNOULLI_LAMBDA:
        return np.full(base_dims.shape, float(lam))
    return dim_penalized_prob(base_dims, lam, prior.p0, prior.lambda_max)


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return lam


def sample_model_prior(
    prior: ComplexityPrior,
    lam: float,
    dims,
    noise_count: int,
    rng: np.random.Generator,
) -> ModelMask:
    """Draw a mask from p(M | lam).

    ``dims`` lists the parameter count of every component (length C); base
    bits are independent Bernoulli draws, the noise block is one-hot uniform.
    """
    lam = _check_lambda(lam)
    dims = np.asarray(dims)
    C = dims.shape[0]
    K = C - noise_count
    if K < 0:
        raise ValueError("noise_count exceeds number of components")
    probs = base_bit_probs(prior, lam, dims[:K])
    base = (rng.random(K) < probs).astype(np.int8)
    noise = np.zeros(noise_count, dtype=np.int8)
    noise[rng.integers(noise_count)] = 1
    return ModelMask(np.concatenate([base, noise]), K, noise_count)


def mask_log_prior(
    mask: ModelMask, prior: ComplexityPrior, lam: float, dims
) -> float:
    """log p(M | lam); -inf for masks outside the prior's support."""
    lam = _check_lambda(lam)
    if not mask.has_unique_noise():
        return -np.inf
    dims = np.asarray(dims)
    probs = base_bit_probs(prior, lam, dims[: mask.base_count])
    bits = mask.base_bits.astype(np.float64)
    with np.errstate(divide="ignore"):
        logp = np.where(bits == 1, np.log(probs), np.log1p(-probs))
    total = logp.sum()
    if not np.isfinite(total):
        return -np.inf
    return float(total - np.log(mask.noise_count))


def enumerate_masks(K: int, Mn: int) -> list[ModelMask]:
    """All valid masks (unique noise bit), base patterns in lexicographic order."""
    if K > 20:
        raise ValueError(f"enumeration limited to K <= 20, got {K}")
    if Mn < 1:
        raise ValueError("need at least one noise component")
    masks = []
    for base in itertools.product((0, 1), repeat=K):
        for m in range(Mn):
            noise = [0] * Mn
            noise[m] = 1
            masks.append(ModelMask(np.array(base + tuple(noise)), K, Mn))
    return masks
