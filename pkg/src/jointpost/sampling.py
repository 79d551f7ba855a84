"""Test-time inference: autoregressive mask sampling and scoring, the noise
schedule, the probability-flow ODE parameter sampler, and posterior
predictives.

Everything here is pure over immutable network parameters, so concurrent
queries are safe. Randomness comes from a numpy Generator split into an
init-noise stream and a per-step stream per query.
"""

from __future__ import annotations

import numpy as np
import torch

from .model_space import ModelMask
from .nets import InferenceNet, theta_hat_from_v
from .training import active_coord_matrix

DEFAULT_T = 64
DEFAULT_SIGMA_MIN = 1e-4
DEFAULT_SIGMA_MAX = 80.0
DEFAULT_RHO = 7.0


class SamplerDivergence(RuntimeError):
    """ODE state became non-finite; carries the offending step index."""

    def __init__(self, step: int):
        super().__init__(f"non-finite ODE state at step {step}")
        self.step = step


def edm_schedule(T: int = DEFAULT_T, sigma_min: float = DEFAULT_SIGMA_MIN,
                 sigma_max: float = DEFAULT_SIGMA_MAX,
                 rho: float = DEFAULT_RHO) -> np.ndarray:
    """Strictly decreasing noise levels from sigma_max down to sigma_min,
    spaced uniformly in sigma^(1/rho)."""
    if T < 2:
        raise ValueError("schedule needs at least 2 steps")
    if not 0 < sigma_min < sigma_max:
        raise ValueError("need 0 < sigma_min < sigma_max")
    i = np.arange(T, dtype=np.float64)
    inv = sigma_max ** (1.0 / rho) + i / (T - 1) * (
        sigma_min ** (1.0 / rho) - sigma_max ** (1.0 / rho)
    )
    return inv**rho


def _as_lam(lam, batch: int) -> torch.Tensor:
    t = torch.as_tensor(lam, dtype=torch.float32)
    if t.ndim == 0:
        t = t.repeat(batch)
    return t


def _expand_context(context: torch.Tensor, n: int) -> torch.Tensor:
    if context.shape[0] == n:
        return context
    if context.shape[0] != 1:
        raise ValueError("context batch must be 1 or n")
    return context.expand(n, -1, -1)


def _noise_candidates(bits: torch.Tensor, base_count: int,
                      noise_count: int) -> torch.Tensor:
    """(B*Mn, C) copies of each row with every one-hot noise block."""
    B, C = bits.shape
    cand = bits.repeat_interleave(noise_count, dim=0).clone()
    cand[:, base_count:] = 0
    eye = torch.arange(noise_count).repeat(B)
    cand[torch.arange(B * noise_count), base_count + eye] = 1
    return cand


def _noise_block_log_probs(net: InferenceNet, context, bits, lam,
                           base_count: int, noise_count: int) -> torch.Tensor:
    """(B, Mn) log AR probability of each one-hot noise completion."""
    B = bits.shape[0]
    cand = _noise_candidates(bits, base_count, noise_count)
    ctx = context.repeat_interleave(noise_count, dim=0)
    lam_r = _as_lam(lam, B).repeat_interleave(noise_count)
    probs = net.all_bit_probs(ctx, cand, lam_r)
    p = probs[:, base_count:]
    b = cand[:, base_count:].to(p.dtype)
    logs = torch.log(p.clamp_min(1e-30)) * b + torch.log(
        (1 - p).clamp_min(1e-30)
    ) * (1 - b)
    return logs.sum(dim=1).reshape(B, noise_count)


@torch.no_grad()
def sample_mask(net: InferenceNet, context, lam, base_count: int,
                noise_count: int, rng: np.random.Generator,
                constrained: bool = True, n: int = 1) -> np.ndarray:
    """n masks drawn autoregressively; (n, C) int8 array.

    Constrained mode samples the base bits autoregressively, then draws the
    noise block from the AR probabilities renormalized over the one-hot
    completions, so masks always carry exactly one noise component.
    """
    C = net.C
    context = _expand_context(context, n)
    lam_t = _as_lam(lam, n)
    bits = torch.zeros(n, C, dtype=torch.long)
    stop = C if not constrained else base_count
    for i in range(stop):
        probs = net.model_bit_probs(context, bits[:, :i], lam_t)[:, i]
        u = torch.from_numpy(rng.random(n)).to(probs.dtype)
        bits[:, i] = (u < probs).long()
    if constrained:
        if noise_count == 1:
            bits[:, base_count] = 1
        else:
            logw = _noise_block_log_probs(
                net, context, bits, lam_t, base_count, noise_count
            )
            w = torch.softmax(logw, dim=1).numpy()
            cum = np.cumsum(w, axis=1)
            u = rng.random((n, 1))
            slot = (u > cum).sum(axis=1)
            bits[:, base_count:] = 0
            bits[np.arange(n), base_count + slot] = 1
    return bits.numpy().astype(np.int8)


@torch.no_grad()
def mask_log_prob(net: InferenceNet, bits, context, lam, base_count: int,
                  noise_count: int, constrained: bool = True) -> np.ndarray:
    """log q(M | x, lam) from a single causal pass per mask; (B,) array.

    Constrained scoring replaces the noise-block AR factor with its value
    renormalized over the one-hot completions, matching sample_mask, so the
    scores sum to one over enumerate_masks.
    """
    bits_t = torch.as_tensor(np.asarray(bits), dtype=torch.long)
    if bits_t.ndim == 1:
        bits_t = bits_t[None]
    B, C = bits_t.shape
    if C != net.C:
        raise ValueError(f"mask length {C} != component count {net.C}")
    context = _expand_context(context, B)
    lam_t = _as_lam(lam, B)
    probs = net.all_bit_probs(context, bits_t, lam_t)
    b = bits_t.to(probs.dtype)
    logs = torch.log(probs.clamp_min(1e-30)) * b + torch.log(
        (1 - probs).clamp_min(1e-30)
    ) * (1 - b)
    if not constrained:
        return logs.sum(dim=1).numpy()
    base_lp = logs[:, :base_count].sum(dim=1)
    noise_lp = logs[:, base_count:].sum(dim=1)
    denom = torch.logsumexp(
        _noise_block_log_probs(net, context, bits_t, lam_t, base_count,
                               noise_count),
        dim=1,
    )
    return (base_lp + noise_lp - denom).numpy()


@torch.no_grad()
def sample_params(net: InferenceNet, context, mask_bits, lam,
                  rng: np.random.Generator, schedule: np.ndarray | None = None,
                  solver: str = "ab2", n: int = 1) -> np.ndarray:
    """n latent parameter vectors by integrating the probability-flow ODE.

    Active coordinates start at sigma_max-scaled Gaussian noise and follow
    the exponential integrator down the schedule; inactive coordinates never
    enter the ODE and are returned as fresh standard-normal draws.
    """
    if solver not in ("ab2", "euler"):
        raise ValueError(f"unknown solver {solver!r}")
    if schedule is None:
        schedule = edm_schedule()
    sig = np.asarray(schedule, dtype=np.float64)
    layout = net.layout
    context = _expand_context(context, n)
    lam_t = _as_lam(lam, n)
    bits_t = torch.as_tensor(np.asarray(mask_bits), dtype=torch.long)
    if bits_t.ndim == 1:
        bits_t = bits_t[None].expand(n, -1)
    active = (bits_t.float() @ active_coord_matrix(layout)).numpy() > 0

    init_rng, tail_rng = rng.spawn(2)
    z = init_rng.standard_normal((n, layout.d_max)) * sig[0]
    z = torch.from_numpy(z).float()

    def denoise(state: torch.Tensor, t: float) -> torch.Tensor:
        tv = torch.full((n,), t, dtype=state.dtype)
        v = net.v_predict(context, state, tv, bits_t, lam_t)
        th, _ = theta_hat_from_v(v, state, tv)
        return th

    th_prev = None
    t_prev = None
    for i in range(len(sig) - 1):
        t_i, t_next = float(sig[i]), float(sig[i + 1])
        th = denoise(z, t_i)
        if not torch.isfinite(th).all() or not torch.isfinite(z).all():
            raise SamplerDivergence(i)
        if solver == "euler" or th_prev is None:
            # exponential Euler: exact for piecewise-constant theta_hat
            z = (t_next / t_i) * z + th * (1.0 - t_next / t_i)
        else:
            # AB2 on d(z/t)/dt = -theta_hat/t^2 with linear extrapolation
            i0 = 1.0 / t_i - 1.0 / t_next
            i1 = np.log(t_next / t_i) + t_i * (1.0 / t_next - 1.0 / t_i)
            slope = (th - th_prev) / (t_i - t_prev)
            z = t_next * (z / t_i - (th * i0 + slope * i1))
        th_prev, t_prev = th, t_i
    if not torch.isfinite(z).all():
        raise SamplerDivergence(len(sig) - 1)
    out = z.numpy().astype(np.float64)
    fresh = tail_rng.standard_normal(out.shape)
    out[~active] = fresh[~active]
    return out


@torch.no_grad()
def posterior_predictive(task, net: InferenceNet, x_o: np.ndarray, lam: float,
                         mode: str, rng: np.random.Generator,
                         mask: ModelMask | None = None, n_draws: int = 100,
                         schedule: np.ndarray | None = None,
                         solver: str = "ab2"):
    """Simulated observations under the amortized posterior.

    local: parameters drawn for the fixed mask; global: (mask, params) drawn
    jointly. Returns (draws (n_draws, n_points), masks (n_draws, C) int8).
    """
    if mode not in ("local", "global"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "local" and mask is None:
        raise ValueError("local mode requires a mask")
    context = encode_observation(task, net, x_o)
    if n_draws == 0:
        return (np.empty((0, task.n_points)), np.empty((0, task.C), np.int8))
    if mode == "local":
        bits = np.tile(np.asarray(mask.bits, dtype=np.int8), (n_draws, 1))
    else:
        bits = sample_mask(net, context, lam, task.base_count,
                           task.noise_count, rng, constrained=True,
                           n=n_draws)
    z = sample_params(net, context, bits, lam, rng, schedule=schedule,
                      solver=solver, n=n_draws)
    draws = np.empty((n_draws, task.n_points))
    for i in range(n_draws):
        m = ModelMask(bits[i], task.base_count, task.noise_count)
        draws[i] = task.simulate(m, z[i], rng)
    return draws, bits


@torch.no_grad()
def encode_observation(task, net: InferenceNet, x_o: np.ndarray):
    """Context tokens for one observation, applying the task's input squash."""
    x = np.asarray(x_o, dtype=np.float32)
    if getattr(task, "encoder_squash", False):
        x = np.arcsinh(x)
    return net.encode(torch.from_numpy(x)[None])


def quantile_band(draws: np.ndarray, lo: float = 0.025, hi: float = 0.975):
    """Pointwise credible band over predictive draws."""
    if draws.shape[0] == 0:
        raise ValueError("no draws")
    return np.quantile(draws, lo, axis=0), np.quantile(draws, hi, axis=0)
