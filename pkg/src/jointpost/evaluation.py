"""Evaluation harnesses tying the metrics to a trained engine.

SBC runs the full generative loop (truth from the prior, posterior from the
network); KSD is computed in latent space where the posterior density is
smooth and unbounded, using autograd scores of
log p(x | theta(z), M) + log N(z; 0, I).
"""

from __future__ import annotations

import numpy as np
import torch

from .components import REPARAM_UNIFORM
from .engine import Engine
from .metrics import (
    EvidenceEstimate,
    MetricReport,
    calibration_error,
    ess,
    evidence_is,
    fit_kde_proposal,
    fit_pmc_proposal,
    ksd,
    mask_subset_hash,
    rrmse,
    sbc_model_pit,
    sbc_param_pit,
)
from .model_space import ComplexityPrior, mask_log_prior, sample_model_prior
from .simulators import SymbolicTask

_LOG_2PI = float(np.log(2.0 * np.pi))


def _interval_coords(task):
    """Per-flat-coordinate (is_interval, a, b) derived from the library."""
    rows = []
    for spec in task.library:
        for a, b in spec.bounds:
            rows.append((spec.reparam == REPARAM_UNIFORM, float(a), float(b)))
    return rows


def latent_log_posterior(task, mask, x_o, coords=None):
    """Differentiable unnormalized log p(z | x_o, M) on active coordinates.

    The pushforward of N(0, 1) through the interval bijection is exactly
    U(a, b), so the prior-times-jacobian factor collapses to the standard
    normal density: log p(z | x) = log p(x | theta(z), M) + log N(z) + const.
    Inactive coordinates keep their standard-normal prior so scores stay
    well-defined on the whole space.
    """
    if coords is None:
        coords = _interval_coords(task)
    y = torch.as_tensor(np.asarray(x_o), dtype=torch.float64)

    def log_post(z: torch.Tensor) -> torch.Tensor:
        theta = torch.empty_like(z)
        for j, (is_interval, a, b) in enumerate(coords):
            if is_interval:
                u = torch.special.ndtr(z[j]).clamp(1e-12, 1 - 1e-12)
                theta[j] = a + (b - a) * u
            else:
                theta[j] = z[j]
        lp_z = -0.5 * (z**2 + _LOG_2PI).sum()
        return task.log_likelihood(theta, mask, y) + lp_z

    return log_post


def latent_scores(task, mask, x_o, z_samples: np.ndarray) -> np.ndarray:
    """Autograd scores of the latent posterior at each sample row."""
    coords = _interval_coords(task)
    log_post = latent_log_posterior(task, mask, x_o, coords)
    out = np.empty_like(z_samples, dtype=np.float64)
    for i, row in enumerate(z_samples):
        z = torch.tensor(row, dtype=torch.float64, requires_grad=True)
        lp = log_post(z)
        (g,) = torch.autograd.grad(lp, z)
        out[i] = g.numpy()
    return out


def generative_draws(task, prior: ComplexityPrior, lam: float, n: int,
                     rng: np.random.Generator):
    """n (mask, z, x) triples from the generative process at fixed lambda."""
    draws = []
    for _ in range(n):
        mask = sample_model_prior(prior, lam, task.dims, task.noise_count, rng)
        z = rng.standard_normal(task.layout.d_max)
        x = task.simulate(mask, z, rng)
        draws.append((mask, z, x))
    return draws


def run_sbc(engine: Engine, prior: ComplexityPrior, lam: float, trials: int,
            S: int, rng: np.random.Generator, constrained: bool = True):
    """Model-level and pooled parameter-level PIT values.

    Model PIT compares the truth's posterior log-probability against S
    sampled masks' log-probabilities; parameter PIT pools active-coordinate
    ranks in latent space (rank-invariant under the monotone bijections).
    """
    task = engine.task
    layout = task.layout
    model_us = []
    param_us = []
    for (mask, z, x) in generative_draws(task, prior, lam, trials, rng):
        mp = engine.model_posterior(x, lam, S, constrained=constrained,
                                    seed=int(rng.integers(2**31)))
        true_lp = float(
            engine.score_masks(x, [mask.bits], lam, constrained=constrained)[0]
        )
        model_us.append(sbc_model_pit(true_lp, mp["log_probs"], rng))
        pp = engine.param_posterior(x, mask.bits, lam, S,
                                    seed=int(rng.integers(2**31)))
        samples = np.asarray(pp["params_latent"])
        active_idx = layout.active_indices(mask.bits)
        param_us.extend(sbc_param_pit(z, samples, active_idx))
    return np.asarray(model_us), np.asarray(param_us)


def run_rrmse(engine: Engine, prior: ComplexityPrior, lam: float, n_obs: int,
              replicates: int, rng: np.random.Generator, mode: str = "global"):
    """(RMSE, RMSE_min, rRMSE) over n_obs fresh observations."""
    task = engine.task
    preds = np.empty((n_obs, task.n_points))
    obs = np.empty((n_obs, task.n_points))
    reps = np.empty((n_obs, replicates, task.n_points))
    for i, (mask, z, x) in enumerate(
        generative_draws(task, prior, lam, n_obs, rng)
    ):
        obs[i] = x
        kw = {"bits": mask.bits} if mode == "local" else {}
        pr = engine.predictive(x, lam, mode, 1,
                               seed=int(rng.integers(2**31)), **kw)
        preds[i] = np.asarray(pr["curves"][0])
        for r in range(replicates):
            reps[i, r] = task.simulate(mask, z, rng)
    return rrmse(preds, obs, reps)


def run_rksd(engine: Engine, prior: ComplexityPrior, lam: float, n_obs: int,
             S: int, rng: np.random.Generator):
    """Per-observation rKSD values (posterior KSD / prior-baseline KSD)."""
    task = engine.task
    layout = task.layout
    values = []
    for (mask, _z, x) in generative_draws(task, prior, lam, n_obs, rng):
        pp = engine.param_posterior(x, mask.bits, lam, S,
                                    seed=int(rng.integers(2**31)))
        post = np.asarray(pp["params_latent"])
        prior_z = rng.standard_normal((S, layout.d_max))
        idx = layout.active_indices(mask.bits)
        s_post = latent_scores(task, mask, x, post)
        s_prior = latent_scores(task, mask, x, prior_z)
        k_post, _ = ksd(post, s_post, idx)
        k_prior, _ = ksd(prior_z, s_prior, idx)
        if k_prior > 0:
            values.append(k_post / k_prior)
    return np.asarray(values)


def run_importance(engine: Engine, task, mask, x_o, lam: float, S: int,
                   rng: np.random.Generator, pmc_rounds: int = 2,
                   final_draws: int | None = None):
    """Evidence estimate plus a KDE self-consistency diagnostic.

    The evidence uses a PMC-adapted Gaussian proposal seeded from the
    posterior draws; the returned ESS is the self-importance ESS of the
    draws under a KDE surrogate, a proposal-free check of how well the
    amortized posterior matches the exact one. Returns
    (normalized ESS, EvidenceEstimate) for one (observation, mask).
    """
    pp = engine.param_posterior(x_o, mask.bits, lam, S,
                                seed=int(rng.integers(2**31)))
    post = np.asarray(pp["params_latent"])
    idx = np.asarray(task.layout.active_indices(mask.bits), dtype=np.intp)
    coords = _interval_coords(task)
    log_post = latent_log_posterior(task, mask, x_o, coords)

    def embed(z_active):
        full = np.zeros(task.layout.d_max)
        full[idx] = z_active
        return full

    def ll(z_active):
        z = torch.tensor(embed(z_active), dtype=torch.float64)
        # latent-space likelihood including the bijection jacobian; the
        # latent prior is subtracted back out below
        theta = torch.empty_like(z)
        lj = 0.0
        for j, (is_interval, a, b) in enumerate(coords):
            if is_interval:
                u = torch.special.ndtr(z[j]).clamp(1e-12, 1 - 1e-12)
                theta[j] = a + (b - a) * u
            else:
                theta[j] = z[j]
        return float(task.log_likelihood(theta, mask,
                                         torch.as_tensor(x_o, dtype=z.dtype)))

    def lp(z_active):
        return float(-0.5 * (np.asarray(z_active) ** 2 + _LOG_2PI).sum())

    pmc_sample, pmc_logpdf = fit_pmc_proposal(
        post[:, idx], lambda z: ll(z) + lp(z), S, rng, rounds=pmc_rounds
    )
    est = evidence_is(ll, lp, pmc_sample, pmc_logpdf,
                      final_draws if final_draws is not None else S, rng)
    # weights of the posterior draws themselves under a KDE surrogate
    sample_fn, logpdf_fn = fit_kde_proposal(post[:, idx])
    lq = logpdf_fn(post[:, idx])
    lw = np.array(
        [ll(row) + lp(row) for row in post[:, idx]], dtype=np.float64
    ) - lq
    lw = lw[np.isfinite(lw)]
    w = np.exp(lw - lw.max()) if lw.size else np.array([1.0])
    return ess(w), est


def evidence_proxy_log(engine: Engine, prior: ComplexityPrior, x_o, mask,
                       lam: float) -> float:
    """log q(M | x, lam) - log p(M | lam), defined up to log p(x)."""
    lq = float(engine.score_masks(x_o, [mask.bits], lam)[0])
    lp = mask_log_prior(mask, prior, lam, engine.task.dims)
    if not np.isfinite(lp):
        raise ValueError("mask has zero prior mass")
    return lq - lp


def evaluate(engine: Engine, prior: ComplexityPrior, spec: dict,
             seed: int) -> list[MetricReport]:
    """Run the metrics enabled in the eval section; one report per scalar."""
    rng = np.random.default_rng(seed)
    lam = float(spec.get("lambda", 0.5))
    trials = int(spec.get("trials", 100))
    S = int(spec.get("samples_per_trial", 100))
    n_obs = int(spec.get("observations", 50))
    reports = []
    enabled = spec.get("metrics", ["sbc", "rrmse", "ess", "rksd"])
    if "sbc" in enabled:
        mu, pu = run_sbc(engine, prior, lam, trials, S, rng)
        reports.append(MetricReport("sbc_model_ce", calibration_error(mu),
                                    n=trials, lam=lam, seed=seed))
        reports.append(MetricReport("sbc_param_ce", calibration_error(pu),
                                    n=int(pu.size), lam=lam, seed=seed))
    if "rrmse" in enabled:
        r, rmin, rr = run_rrmse(engine, prior, lam, n_obs, 10, rng)
        reports.append(MetricReport("rmse", r, n=n_obs, lam=lam, seed=seed))
        reports.append(MetricReport("rmse_min", rmin, n=n_obs, lam=lam,
                                    seed=seed))
        reports.append(MetricReport("rrmse", rr, n=n_obs, lam=lam, seed=seed))
    if "rksd" in enabled:
        vals = run_rksd(engine, prior, lam, n_obs, S, rng)
        reports.append(MetricReport("rksd_median", float(np.median(vals)),
                                    n=int(vals.size), lam=lam, seed=seed))
    if "ess" in enabled:
        task = engine.task
        vals = []
        for (mask, _z, x) in generative_draws(task, prior, lam,
                                              min(n_obs, 20), rng):
            e, _ = run_importance(engine, task, mask, x, lam, S, rng)
            vals.append(e)
        reports.append(MetricReport("ess_median", float(np.median(vals)),
                                    n=len(vals), lam=lam, seed=seed))
    return reports
