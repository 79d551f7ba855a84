"""Diagnostic suite: simulation-based calibration, calibration error,
noise-floor-adjusted RMSE, preconditioned multi-scale kernel Stein
discrepancy, effective sample size, evidence estimators, total variation,
and top-k classifier summaries.

All computations run in double precision regardless of network precision.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import gaussian_kde, multivariate_normal

KSD_BANDWIDTHS = (0.1, 0.5, 1.0, 10.0)
CE_GRID = np.linspace(0.0, 1.0, 100)


@dataclass
class MetricReport:
    """One named scalar with the context needed to reproduce it."""

    name: str
    value: float
    n: int
    lam: float | None = None
    mask_subset_hash: str | None = None
    seed: int | None = None
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = {
            "name": self.name,
            "value": self.value,
            "n": self.n,
            "lambda": self.lam,
            "mask_subset_hash": self.mask_subset_hash,
            "seed": self.seed,
        }
        d.update(self.extras)
        return json.dumps(d)


def mask_subset_hash(bit_rows) -> str:
    """Stable identifier for a model subspace."""
    h = hashlib.sha256()
    for row in bit_rows:
        h.update(bytes(int(b) for b in row))
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Simulation-based calibration
# ---------------------------------------------------------------------------


def sbc_model_pit(true_score: float, sample_scores, rng) -> float:
    """Randomized PIT of the truth's posterior score among S sampled scores.

    u = (n_< + K + V)/(S + 1) with K ~ Unif{0..n_=} and V ~ Unif(0,1), which
    is exactly Uniform(0,1) under the generative process even with ties.
    """
    scores = np.asarray(sample_scores, dtype=np.float64)
    S = scores.size
    if S < 1:
        raise ValueError("need at least one posterior sample")
    n_less = int((scores < true_score).sum())
    n_eq = int((scores == true_score).sum())
    K = int(rng.integers(0, n_eq + 1))
    V = float(rng.random())
    return (n_less + K + V) / (S + 1)


def sbc_param_pit(true_theta, samples, active_idx) -> np.ndarray:
    """PIT value per active coordinate: u = (r - 0.5)/(S + 1), r = 1 + n_<."""
    samples = np.asarray(samples, dtype=np.float64)
    true_theta = np.asarray(true_theta, dtype=np.float64)
    S = samples.shape[0]
    if S < 1:
        raise ValueError("need at least one posterior sample")
    idx = np.asarray(active_idx, dtype=np.intp)
    r = 1 + (samples[:, idx] < true_theta[idx]).sum(axis=0)
    return (r - 0.5) / (S + 1)


def calibration_error(u) -> float:
    """Mean absolute ECDF deviation from uniform over a 100-vertex grid."""
    u = np.asarray(u, dtype=np.float64)
    if u.size == 0:
        raise ValueError("empty PIT set")
    ecdf = (u[None, :] <= CE_GRID[:, None]).mean(axis=1)
    return float(np.abs(ecdf - CE_GRID).mean())


# ---------------------------------------------------------------------------
# Predictive error
# ---------------------------------------------------------------------------


def rrmse(predictions, observations, replicates):
    """(RMSE, RMSE_min, rRMSE) with the floor from re-simulated replicates.

    predictions, observations: (N, D); replicates: (N, R, D) draws from the
    simulator at the true (mask, params) of each observation. rRMSE can be
    slightly negative by sampling noise and is reported as-is.
    """
    pred = np.asarray(predictions, dtype=np.float64)
    obs = np.asarray(observations, dtype=np.float64)
    rep = np.asarray(replicates, dtype=np.float64)
    if rep.ndim != 3 or rep.shape[1] < 2:
        raise ValueError("need at least R=2 replicates per observation")
    rmse = float(np.sqrt(((pred - obs) ** 2).mean(axis=1).mean()))
    rmse_min = float(np.sqrt(((rep - obs[:, None, :]) ** 2).mean(axis=2).mean()))
    return rmse, rmse_min, rmse - rmse_min


# ---------------------------------------------------------------------------
# Kernel Stein discrepancy
# ---------------------------------------------------------------------------


def _whitening_factor(samples: np.ndarray):
    """Lower Cholesky of the sample covariance; ridge fallback is flagged."""
    cov = np.cov(samples, rowvar=False)
    cov = np.atleast_2d(cov)
    try:
        L = np.linalg.cholesky(cov)
        return L, False
    except np.linalg.LinAlgError:
        L = np.linalg.cholesky(cov + 1e-8 * np.eye(cov.shape[0]))
        return L, True


def _stein_kernel_sum(z: np.ndarray, sz: np.ndarray, h: float) -> np.ndarray:
    """Pairwise Stein kernel matrix for the RBF kernel exp(-r^2 / 2h^2)."""
    d = z.shape[1]
    diff = z[:, None, :] - z[None, :, :]
    r2 = (diff**2).sum(axis=2)
    k = np.exp(-r2 / (2.0 * h**2))
    s_dot = sz @ sz.T
    cross = ((sz[:, None, :] - sz[None, :, :]) * diff).sum(axis=2) / h**2
    return k * (s_dot + cross + d / h**2 - r2 / h**4)


def ksd(samples, scores, active_idx=None, bandwidths=KSD_BANDWIDTHS):
    """Preconditioned multi-scale kernel Stein discrepancy (U-statistic).

    Samples are whitened in the active subspace with P = L^{-1} from the
    Cholesky factor of their covariance; scores transform as s_z = L^T s.
    Stein kernels for each bandwidth are averaged uniformly. Returns
    (value, ridge_flagged).
    """
    x = np.asarray(samples, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    if active_idx is not None:
        idx = np.asarray(active_idx, dtype=np.intp)
        x = x[:, idx]
        s = s[:, idx]
    S = x.shape[0]
    if S < 2:
        raise ValueError("need at least two samples")
    if not np.isfinite(s).all():
        raise ValueError("scores must be finite at all samples")
    L, flagged = _whitening_factor(x)
    z = np.linalg.solve(L, x.T).T
    sz = s @ L  # (L^T s)^T rows
    H = np.zeros((S, S))
    for h in bandwidths:
        H += _stein_kernel_sum(z, sz, h)
    H /= len(bandwidths)
    np.fill_diagonal(H, 0.0)
    ksd2 = H.sum() / (S * (S - 1))
    return float(np.sqrt(max(ksd2, 0.0))), flagged


def rksd(samples, scores, prior_samples, prior_scores, active_idx=None,
         bandwidths=KSD_BANDWIDTHS):
    """KSD of the posterior samples relative to the prior baseline."""
    num, f1 = ksd(samples, scores, active_idx, bandwidths)
    den, f2 = ksd(prior_samples, prior_scores, active_idx, bandwidths)
    if den == 0.0:
        raise ZeroDivisionError("prior KSD is zero; ratio undefined")
    return num / den, f1 or f2


# ---------------------------------------------------------------------------
# Importance weights and evidence
# ---------------------------------------------------------------------------


def ess(weights) -> float:
    """Normalized effective sample size (sum w)^2 / (N sum w^2) in (0, 1]."""
    w = np.asarray(weights, dtype=np.float64)
    if (w < 0).any():
        raise ValueError("weights must be nonnegative")
    total2 = (w**2).sum()
    if total2 == 0.0:
        raise ValueError("all weights zero")
    return float(w.sum() ** 2 / (w.size * total2))


@dataclass(frozen=True)
class EvidenceEstimate:
    log_evidence: float
    ess: float
    n_used: int
    n_excluded: int


def fit_kde_proposal(samples: np.ndarray):
    """Gaussian KDE (Scott's rule) over posterior draws; exact log-density.

    Returns (sample_fn(n, rng) -> (n, d), log_pdf_fn(theta (n, d)) -> (n,)).
    """
    samples = np.asarray(samples, dtype=np.float64)
    kde = gaussian_kde(samples.T, bw_method="scott")

    def sample_fn(n, rng):
        return kde.resample(n, seed=rng).T

    def log_pdf_fn(theta):
        return kde.logpdf(np.asarray(theta, dtype=np.float64).T)

    return sample_fn, log_pdf_fn


def fit_pmc_proposal(samples: np.ndarray, log_target_fn, S: int, rng,
                     rounds: int = 2, inflate: float = 1.15):
    """Gaussian proposal adapted by population Monte Carlo.

    Starts from the (slightly inflated) moment-matched Gaussian of the
    draws, then performs `rounds` importance-weighted refits using S fresh
    proposal points scored by `log_target_fn` (unnormalized log posterior,
    one point per call). A refit is kept only when the raw ESS exceeds 3d
    and the updated covariance stays positive definite, so a bad round can
    never make the proposal worse. Returns (sample_fn, log_pdf_fn) with the
    same contract as fit_kde_proposal. Unlike the KDE, the Gaussian has only
    d + d^2 free parameters, which keeps the fit stable when the effective
    number of adaptation points is small.
    """
    samples = np.asarray(samples, dtype=np.float64)
    d = samples.shape[1]
    ridge = 1e-10 * np.eye(d)
    mu = samples.mean(axis=0)
    cov = np.cov(samples, rowvar=False).reshape(d, d) * inflate**2 + ridge
    for _ in range(rounds):
        L = np.linalg.cholesky(cov)
        theta = mu + rng.standard_normal((S, d)) @ L.T
        lq = multivariate_normal(mu, cov, allow_singular=True).logpdf(theta)
        lt = np.array([log_target_fn(th) for th in theta], dtype=np.float64)
        logw = lt - np.atleast_1d(lq)
        logw = np.where(np.isfinite(logw), logw, -np.inf)
        if not np.isfinite(logw.max()):
            continue
        w = np.exp(logw - logw.max())
        if (w.sum() ** 2) / (w**2).sum() <= 3 * d:
            continue
        wn = w / w.sum()
        mu_new = wn @ theta
        diff = theta - mu_new
        cov_new = (wn[:, None] * diff).T @ diff * inflate**2 + ridge
        try:
            np.linalg.cholesky(cov_new)
        except np.linalg.LinAlgError:
            continue
        mu, cov = mu_new, cov_new
    L = np.linalg.cholesky(cov)
    frozen = multivariate_normal(mu, cov, allow_singular=True)

    def sample_fn(n, rng):
        return mu + rng.standard_normal((n, d)) @ L.T

    def log_pdf_fn(theta):
        return np.atleast_1d(frozen.logpdf(np.asarray(theta,
                                                      dtype=np.float64)))

    return sample_fn, log_pdf_fn


def evidence_is(log_likelihood_fn, log_prior_fn, proposal_sample_fn,
                proposal_logpdf_fn, N: int, rng) -> EvidenceEstimate:
    """Unbiased importance-sampling evidence estimate.

    log p(x) approximated by log mean_i exp(ll_i + lp_i - lq_i) with theta_i
    from the proposal. Samples where the proposal density degenerates
    (non-finite log weight) are excluded and counted.
    """
    theta = np.asarray(proposal_sample_fn(N, rng), dtype=np.float64)
    lq = np.asarray(proposal_logpdf_fn(theta), dtype=np.float64)
    ll = np.array([log_likelihood_fn(th) for th in theta], dtype=np.float64)
    lp = np.array([log_prior_fn(th) for th in theta], dtype=np.float64)
    logw = ll + lp - lq
    ok = np.isfinite(logw)
    n_excluded = int((~ok).sum())
    logw = logw[ok]
    if logw.size == 0:
        raise ValueError("all importance weights degenerate")
    m = logw.max()
    w = np.exp(logw - m)
    log_ev = m + np.log(w.sum()) - np.log(N)
    return EvidenceEstimate(float(log_ev), ess(w), int(logw.size), n_excluded)


def evidence_proxy(mask_log_q: float, mask_log_prior: float) -> float:
    """log of the unnormalized evidence proxy q(M|x,lam)/p(M|lam)."""
    if not np.isfinite(mask_log_prior):
        raise ValueError("mask has zero prior mass; proxy undefined")
    return float(mask_log_q - mask_log_prior)


# ---------------------------------------------------------------------------
# Distributional summaries over mask subspaces
# ---------------------------------------------------------------------------


def tv_distance(q, p) -> float:
    """Total variation between two distributions over the same subspace."""
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if q.shape != p.shape:
        raise ValueError("distributions must share the subspace")
    q = q / q.sum()
    p = p / p.sum()
    return float(0.5 * np.abs(q - p).sum())


@dataclass(frozen=True)
class ConfusionSummary:
    confusion: np.ndarray
    top1: float
    top5: float
    macro_precision: float
    macro_recall: float
    macro_f1: float


def topk_confusion(true_idx, probs, k: int = 5) -> ConfusionSummary:
    """Classifier view of the model posterior over a small subspace.

    true_idx: (T,) index of the true mask per trial; probs: (T, n) posterior
    mass per candidate. Argmax ties break toward the lowest index.
    """
    true_idx = np.asarray(true_idx, dtype=np.intp)
    probs = np.asarray(probs, dtype=np.float64)
    T, n = probs.shape
    if n == 0 or T == 0:
        raise ValueError("empty subspace or no trials")
    pred = probs.argmax(axis=1)
    conf = np.zeros((n, n), dtype=np.int64)
    np.add.at(conf, (true_idx, pred), 1)
    order = np.argsort(-probs, axis=1, kind="stable")
    topk_hit = (order[:, :k] == true_idx[:, None]).any(axis=1)
    top1 = float((pred == true_idx).mean())
    prec = np.zeros(n)
    rec = np.zeros(n)
    for c in range(n):
        tp = conf[c, c]
        predicted = conf[:, c].sum()
        actual = conf[c, :].sum()
        prec[c] = tp / predicted if predicted else 0.0
        rec[c] = tp / actual if actual else 0.0
    denom = prec + rec
    f1 = np.where(denom > 0, 2 * prec * rec / np.where(denom > 0, denom, 1), 0.0)
    return ConfusionSummary(
        confusion=conf,
        top1=top1,
        top5=float(topk_hit.mean()),
        macro_precision=float(prec.mean()),
        macro_recall=float(rec.mean()),
        macro_f1=float(f1.mean()),
    )
