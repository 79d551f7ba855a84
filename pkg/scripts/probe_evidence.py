"""Measures proxy-vs-IS model-posterior agreement for a checkpoint.

Runs the same protocol as the evidence acceptance test on a configurable
number of observations, so a short run predicts the full result cheaply.

Usage: probe_evidence.py [lam] [n_obs] [top_k] [reps] [seed]
"""

import sys
from collections import Counter

import numpy as np
from scipy.special import logsumexp

from jointpost.engine import Engine
from jointpost.evaluation import generative_draws, run_importance
from jointpost.model_space import ComplexityPrior, ModelMask, mask_log_prior


def main():
    args = sys.argv[1:]
    lam = float(args[0]) if len(args) > 0 else 0.3
    n_obs = int(args[1]) if len(args) > 1 else 20
    top_k = int(args[2]) if len(args) > 2 else 8
    reps = int(args[3]) if len(args) > 3 else 2
    seed = int(args[4]) if len(args) > 4 else 40
    eng = Engine.from_checkpoint("artifacts/toy/checkpoint.bin")
    task = eng.task
    prior = ComplexityPrior("bernoulli_lambda")
    rng = np.random.default_rng(seed)
    q_all, p_all = [], []
    for i, (_mask, _z, x) in enumerate(
        generative_draws(task, prior, lam, n_obs, rng)
    ):
        mp = eng.model_posterior(x, lam, 512, seed=i)
        counts = Counter(tuple(m) for m in mp["masks"])
        subset = [bits for bits, _n in counts.most_common(top_k)]
        lq = eng.score_masks(x, np.array(subset, dtype=np.int8), lam)
        q_all.extend(np.exp(lq - logsumexp(lq)))
        log_joint = []
        for bits in subset:
            m = ModelMask(np.array(bits, dtype=np.int8), task.base_count,
                          task.noise_count)
            les = [
                run_importance(eng, task, m, x, lam, 192, rng,
                               final_draws=512)[1].log_evidence
                for _ in range(reps)
            ]
            log_joint.append(logsumexp(les) - np.log(reps)
                             + mask_log_prior(m, prior, lam, task.dims))
        log_joint = np.asarray(log_joint)
        p_all.extend(np.exp(log_joint - logsumexp(log_joint)))
    q, p = np.asarray(q_all), np.asarray(p_all)
    r2 = 1 - ((q - p) ** 2).sum() / ((p - p.mean()) ** 2).sum()
    print(f"lam {lam} obs {n_obs} top {top_k} reps {reps} seed {seed}")
    print(f"points {q.size} R2 {r2:.4f} corr {np.corrcoef(q, p)[0, 1]:.4f}")
    print(f"mean abs diff {np.abs(q - p).mean():.4f}")


if __name__ == "__main__":
    main()
