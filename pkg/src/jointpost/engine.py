"""High-level query interface over a loaded checkpoint.

An Engine owns the task, the EMA-weighted network in eval mode, and a small
LRU cache of encoded observation contexts; the CLI and the HTTP service are
thin layers over it. All query methods are deterministic given a seed.
"""

from __future__ import annotations

import threading
from collections import OrderedDict

import numpy as np
import torch

from .model_space import ModelMask
from .sampling import (
    edm_schedule,
    mask_log_prob,
    posterior_predictive,
    quantile_band,
    sample_mask,
    sample_params,
)
from .training import checkpoint_load, net_with_ema

CONTEXT_CACHE_SIZE = 256


class Engine:
    def __init__(self, net, task, step: int = 0, checkpoint_path=None,
                 use_ema_net=None, cache_size: int = CONTEXT_CACHE_SIZE):
        self.task = task
        self.net = (use_ema_net if use_ema_net is not None else net).eval()
        self.step = step
        self.checkpoint_path = str(checkpoint_path) if checkpoint_path else None
        self.schedule = edm_schedule()
        self._cache: OrderedDict[bytes, torch.Tensor] = OrderedDict()
        self._cache_size = cache_size
        self._cache_lock = threading.Lock()

    @classmethod
    def from_checkpoint(cls, path, use_ema: bool = True) -> "Engine":
        net, ema, task, step, _ = checkpoint_load(path)
        ema_net = net_with_ema(net, ema) if use_ema else None
        return cls(net, task, step=step, checkpoint_path=path,
                   use_ema_net=ema_net)

    # -- context ------------------------------------------------------------

    def encode(self, x_o: np.ndarray) -> torch.Tensor:
        """Context tokens for one observation, through the LRU cache."""
        x = np.asarray(x_o, dtype=np.float64)
        if x.shape != (self.task.n_points,):
            raise ValueError(
                f"observation must have {self.task.n_points} values, "
                f"got {x.shape}"
            )
        key = x.tobytes()
        with self._cache_lock:
            if key in self._cache:
                self._cache.move_to_end(key)
                return self._cache[key]
        xin = x.astype(np.float32)
        if getattr(self.task, "encoder_squash", False):
            xin = np.arcsinh(xin)
        with torch.no_grad():
            ctx = self.net.encode(torch.from_numpy(xin)[None])
        with self._cache_lock:
            self._cache[key] = ctx
            self._cache.move_to_end(key)
            while len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return ctx

    def _check_lambda(self, lam: float) -> float:
        lam = float(lam)
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {lam}")
        return lam

    def _mask_from_bits(self, bits) -> ModelMask:
        arr = np.asarray(bits, dtype=np.int8)
        return ModelMask(arr, self.task.base_count, self.task.noise_count)

    # -- queries ------------------------------------------------------------

    def model_posterior(self, x_o, lam: float, n_samples: int,
                        constrained: bool = True, seed=None) -> dict:
        lam = self._check_lambda(lam)
        rng = np.random.default_rng(seed)
        ctx = self.encode(x_o)
        if n_samples == 0:
            return {"masks": [], "log_probs": [], "median_active": 0}
        bits = sample_mask(self.net, ctx, lam, self.task.base_count,
                           self.task.noise_count, rng,
                           constrained=constrained, n=n_samples)
        lp = mask_log_prob(self.net, bits, ctx, lam, self.task.base_count,
                           self.task.noise_count, constrained=constrained)
        active = bits[:, : self.task.base_count].sum(axis=1)
        return {
            "masks": bits.tolist(),
            "log_probs": [float(v) for v in lp],
            "median_active": int(np.median(active)),
        }

    def score_masks(self, x_o, bits_rows, lam: float,
                    constrained: bool = True) -> np.ndarray:
        lam = self._check_lambda(lam)
        ctx = self.encode(x_o)
        return mask_log_prob(self.net, np.asarray(bits_rows), ctx, lam,
                             self.task.base_count, self.task.noise_count,
                             constrained=constrained)

    def param_posterior(self, x_o, bits, lam: float, n_samples: int,
                        seed=None) -> dict:
        lam = self._check_lambda(lam)
        mask = self._mask_from_bits(bits)
        rng = np.random.default_rng(seed)
        ctx = self.encode(x_o)
        layout = self.task.layout
        if n_samples == 0:
            z = np.empty((0, layout.d_max))
        else:
            z = sample_params(self.net, ctx, mask.bits, lam, rng,
                              schedule=self.schedule, n=n_samples)
        theta = self.task.to_natural(z) if n_samples else z
        return {
            "params_latent": z.tolist(),
            "params_natural": theta.tolist(),
            "layout": {
                "dims": list(layout.dims),
                "offsets": list(layout.offsets),
            },
        }

    def predictive(self, x_o, lam: float, mode: str, n_samples: int,
                   bits=None, seed=None) -> dict:
        lam = self._check_lambda(lam)
        rng = np.random.default_rng(seed)
        mask = self._mask_from_bits(bits) if bits is not None else None
        # encode first so the cache is shared with the other queries
        self.encode(x_o)
        draws, used = posterior_predictive(
            self.task, self.net, np.asarray(x_o, dtype=np.float64), lam,
            mode, rng, mask=mask, n_draws=n_samples,
            schedule=self.schedule,
        )
        out = {"curves": draws.tolist(), "masks": used.tolist()}
        if draws.shape[0] > 0:
            lo, hi = quantile_band(draws)
            out["quantile_band"] = {"lo": lo.tolist(), "hi": hi.tolist()}
        else:
            out["quantile_band"] = {"lo": [], "hi": []}
        return out

    def sample_records(self, x_o, lam: float, n_samples: int,
                       mode: str = "global", bits=None, seed=None) -> list:
        """Joint draws with natural parameters and rendered equations."""
        lam = self._check_lambda(lam)
        rng = np.random.default_rng(seed)
        ctx = self.encode(x_o)
        if mode == "local":
            if bits is None:
                raise ValueError("local mode requires a mask")
            rows = np.tile(np.asarray(bits, dtype=np.int8), (n_samples, 1))
        else:
            rows = sample_mask(self.net, ctx, lam, self.task.base_count,
                               self.task.noise_count, rng, n=n_samples)
        if n_samples == 0:
            return []
        z = sample_params(self.net, ctx, rows, lam, rng,
                          schedule=self.schedule, n=n_samples)
        theta = self.task.to_natural(z)
        lp = mask_log_prob(self.net, rows, ctx, lam, self.task.base_count,
                           self.task.noise_count)
        records = []
        for i in range(n_samples):
            m = self._mask_from_bits(rows[i])
            records.append(
                {
                    "mask": rows[i].tolist(),
                    "log_prob": float(lp[i]),
                    "params_natural": theta[i].tolist(),
                    "params_latent": z[i].tolist(),
                    "equation": self.task.equation_string(m, theta[i]),
                }
            )
        return records

    def metadata(self) -> dict:
        lib = []
        for s in self.task.library:
            lib.append(
                {
                    "id": s.id,
                    "token": s.token,
                    "kind": s.kind,
                    "expression": s.expression_string,
                    "dim": s.dim,
                    "bounds": [list(b) for b in s.bounds],
                }
            )
        return {
            "library": lib,
            "lambda_range": [0.0, 1.0],
            "n_points": self.task.n_points,
            "grid": np.asarray(self.task.grid, dtype=float).tolist(),
            "checkpoint_info": {
                "path": self.checkpoint_path,
                "step": self.step,
                "base_count": self.task.base_count,
                "noise_count": self.task.noise_count,
            },
        }
