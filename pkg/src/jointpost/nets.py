"""Encoder-decoder networks: observation encoder, autoregressive Bernoulli
mask decoder, and the diffusion v-prediction parameter decoder.

Conditioning conventions:
  * observations enter both decoders through cross-attention to encoder tokens;
  * the complexity knob ``lam`` (and for the parameter decoder the diffusion
    time t) are injected through adaptive layer normalization (scale/shift
    predicted from random-Fourier embeddings, no gating);
  * the mask conditions the parameter decoder through a block attention
    pattern: parameter tokens of inactive components are excluded from
    attention in both directions, so active outputs are exactly invariant to
    inactive inputs (attention-based marginalization).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .param_space import ParamLayout

T_MIN_DEFAULT = 1e-4
T_MAX_DEFAULT = 80.0

# Mask-value vocabulary for the AR decoder input: 0, 1, and begin-of-sequence.
_VAL_BOS = 2


@dataclass(frozen=True)
class NetConfig:
    model_dim: int = 64
    num_heads: int = 4
    attention_size: int = 16
    widening_factor: int = 4
    encoder_layers: int = 2
    model_decoder_layers: int = 4
    param_decoder_layers: int = 4
    datapoints_per_token: int = 10
    rff_frequencies: int = 0  # 0 -> model_dim // 2
    rff_scale: float = 2.0
    t_min: float = T_MIN_DEFAULT
    t_max: float = T_MAX_DEFAULT

    def __post_init__(self):
        for name in ("encoder_layers", "model_decoder_layers",
                     "param_decoder_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.model_dim < 2 or self.model_dim % 2:
            raise ValueError("model_dim must be a positive even integer")

    @property
    def n_freqs(self) -> int:
        return self.rff_frequencies or self.model_dim // 2


def alpha_beta(t: torch.Tensor):
    """Normalized SNR factors: alpha = 1/sqrt(1+t^2), beta = t/sqrt(1+t^2)."""
    denom = torch.sqrt(1.0 + t * t)
    return 1.0 / denom, t / denom


def theta_hat_from_v(v, z_t, t):
    """Solve {v = a*eps - b*theta, z_t = theta + t*eps} for (theta_hat, eps_hat).

    Closed form: theta_hat = a^2 z_t - a t v, eps_hat = (z_t - theta_hat)/t.
    """
    v = torch.as_tensor(v)
    z_t = torch.as_tensor(z_t, dtype=v.dtype)
    t = torch.as_tensor(t, dtype=v.dtype)
    if (t <= 0).any():
        raise ValueError("t must be positive")
    while t.ndim < v.ndim:
        t = t.unsqueeze(-1)
    a, _ = alpha_beta(t)
    theta_hat = a * a * z_t - a * t * v
    eps_hat = (z_t - theta_hat) / t
    return theta_hat, eps_hat


class RandomFourierEmbedding(nn.Module):
    """sin/cos features of s * f with frequencies frozen at initialization."""

    def __init__(self, n_freqs: int, scale: float, generator=None):
        super().__init__()
        freqs = torch.randn(n_freqs, generator=generator) * scale
        self.register_buffer("freqs", freqs)

    @property
    def out_dim(self) -> int:
        return 2 * self.freqs.shape[0]

    def forward(self, s: torch.Tensor) -> torch.Tensor:
        prod = s[:, None] * self.freqs[None, :]
        return torch.cat([torch.sin(prod), torch.cos(prod)], dim=-1)


class AdaLN(nn.Module):
    """LayerNorm whose scale/shift are predicted from a conditioning vector.

    out = normalize(h) * (1 + scale) + shift; the projection is zero-init so
    the block starts as a plain layer norm.
    """

    def __init__(self, dim: int, cond_dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(dim, elementwise_affine=False)
        self.proj = nn.Linear(cond_dim, 2 * dim)
        nn.init.zeros_(self.proj.weight)
        nn.init.zeros_(self.proj.bias)

    def forward(self, h: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        scale, shift = self.proj(cond).chunk(2, dim=-1)
        return self.norm(h) * (1.0 + scale[:, None, :]) + shift[:, None, :]


class MultiheadAttention(nn.Module):
    """Per-head dim fixed by config (independent of model_dim)."""

    def __init__(self, dim: int, num_heads: int, head_dim: int):
        super().__init__()
        inner = num_heads * head_dim
        self.num_heads = num_heads
        self.head_dim = head_dim
        self.q = nn.Linear(dim, inner)
        self.k = nn.Linear(dim, inner)
        self.v = nn.Linear(dim, inner)
        self.out = nn.Linear(inner, dim)

    def forward(self, q_in, kv_in, attn_mask=None):
        """attn_mask: bool (B, Lq, Lk), True = attention allowed.

        Every query row must keep at least one allowed key.
        """
        B, Lq, _ = q_in.shape
        Lk = kv_in.shape[1]
        h, hd = self.num_heads, self.head_dim
        q = self.q(q_in).view(B, Lq, h, hd).transpose(1, 2)
        k = self.k(kv_in).view(B, Lk, h, hd).transpose(1, 2)
        v = self.v(kv_in).view(B, Lk, h, hd).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(hd)
        if attn_mask is not None:
            scores = scores.masked_fill(~attn_mask[:, None, :, :],
                                        torch.finfo(scores.dtype).min)
        attn = torch.softmax(scores, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(B, Lq, h * hd)
        return self.out(out)


def _mlp(dim: int, widening: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(dim, widening * dim),
        nn.GELU(),
        nn.Linear(widening * dim, dim),
    )


class EncoderLayer(nn.Module):
    def __init__(self, cfg: NetConfig):
        super().__init__()
        d = cfg.model_dim
        self.ln1 = nn.LayerNorm(d)
        self.attn = MultiheadAttention(d, cfg.num_heads, cfg.attention_size)
        self.ln2 = nn.LayerNorm(d)
        self.mlp = _mlp(d, cfg.widening_factor)

    def forward(self, h):
        hn = self.ln1(h)
        h = h + self.attn(hn, hn)
        return h + self.mlp(self.ln2(h))


class DecoderLayer(nn.Module):
    """Self-attention + cross-attention to context + MLP, all AdaLN-modulated."""

    def __init__(self, cfg: NetConfig, cond_dim: int):
        super().__init__()
        d = cfg.model_dim
        self.adaln1 = AdaLN(d, cond_dim)
        self.self_attn = MultiheadAttention(d, cfg.num_heads, cfg.attention_size)
        self.adaln2 = AdaLN(d, cond_dim)
        self.cross_attn = MultiheadAttention(d, cfg.num_heads, cfg.attention_size)
        self.adaln3 = AdaLN(d, cond_dim)
        self.mlp = _mlp(d, cfg.widening_factor)

    def forward(self, h, context, cond, self_mask=None):
        hn = self.adaln1(h, cond)
        h = h + self.self_attn(hn, hn, attn_mask=self_mask)
        h = h + self.cross_attn(self.adaln2(h, cond), context)
        return h + self.mlp(self.adaln3(h, cond))


class ObservationEncoder(nn.Module):
    """Groups datapoints into tokens, adds positional embeddings, self-attends."""

    def __init__(self, cfg: NetConfig, n_points: int):
        super().__init__()
        g = cfg.datapoints_per_token
        self.group = g
        self.n_points = n_points
        self.n_tokens = -(-n_points // g)
        self.in_proj = nn.Linear(g, cfg.model_dim)
        self.pos = nn.Parameter(torch.randn(self.n_tokens, cfg.model_dim) * 0.02)
        self.layers = nn.ModuleList(
            EncoderLayer(cfg) for _ in range(cfg.encoder_layers)
        )
        self.final_ln = nn.LayerNorm(cfg.model_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 2 or x.shape[1] == 0:
            raise ValueError("expected a nonempty (batch, n_points) observation")
        if x.shape[1] != self.n_points:
            raise ValueError(
                f"expected {self.n_points} points per observation, got {x.shape[1]}"
            )
        B = x.shape[0]
        pad = self.n_tokens * self.group - x.shape[1]
        if pad:
            x = torch.cat([x, x.new_zeros(B, pad)], dim=1)
        h = self.in_proj(x.view(B, self.n_tokens, self.group)) + self.pos[None]
        for layer in self.layers:
            h = layer(h)
        return self.final_ln(h)


class MaskDecoder(nn.Module):
    """Autoregressive Bernoulli decoder over the C component bits.

    Position i's input token is the component-ID embedding plus an embedding
    of the previous bit value (begin-of-sequence for i = 0); a causal mask
    makes the logit at position i depend only on bits with index < i.
    """

    def __init__(self, cfg: NetConfig, C: int, id_tokens: nn.Parameter):
        super().__init__()
        self.C = C
        self.id_tokens = id_tokens
        self.val_emb = nn.Embedding(3, cfg.model_dim)
        self.cond_rff = RandomFourierEmbedding(cfg.n_freqs, cfg.rff_scale)
        self.cond_mlp = nn.Sequential(
            nn.Linear(2 * cfg.n_freqs, cfg.model_dim),
            nn.SiLU(),
            nn.Linear(cfg.model_dim, cfg.model_dim),
        )
        self.layers = nn.ModuleList(
            DecoderLayer(cfg, cfg.model_dim)
            for _ in range(cfg.model_decoder_layers)
        )
        self.final_adaln = AdaLN(cfg.model_dim, cfg.model_dim)
        self.head = nn.Linear(cfg.model_dim, 1)
        causal = torch.tril(torch.ones(C, C, dtype=torch.bool))
        self.register_buffer("causal", causal)

    def forward(self, context, prev_bits, lam) -> torch.Tensor:
        """Logits (B, C); prev_bits[:, i] = M_{i-1} with BOS=2 at i=0."""
        if prev_bits.shape[1] != self.C:
            raise ValueError(f"expected {self.C} positions")
        B = prev_bits.shape[0]
        cond = self.cond_mlp(self.cond_rff(lam))
        h = self.id_tokens[None, :, :] + self.val_emb(prev_bits)
        mask = self.causal[None].expand(B, -1, -1)
        for layer in self.layers:
            h = layer(h, context, cond, self_mask=mask)
        return self.head(self.final_adaln(h, cond)).squeeze(-1)


class ParamDecoder(nn.Module):
    """Diffusion v-prediction decoder over per-component parameter tokens."""

    def __init__(self, cfg: NetConfig, layout: ParamLayout,
                 id_tokens: nn.Parameter):
        super().__init__()
        self.cfg = cfg
        self.layout = layout
        self.id_tokens = id_tokens
        # components carrying parameter tokens (d_i > 0), in layout order
        self.token_comps = [
            i for i, d in enumerate(layout.dims) if d > 0
        ]
        self.in_proj = nn.ModuleList(
            nn.Linear(layout.dims[i], cfg.model_dim) for i in self.token_comps
        )
        self.out_proj = nn.ModuleList()
        for i in self.token_comps:
            lin = nn.Linear(cfg.model_dim, layout.dims[i])
            nn.init.zeros_(lin.weight)
            nn.init.zeros_(lin.bias)
            self.out_proj.append(lin)
        self.lam_rff = RandomFourierEmbedding(cfg.n_freqs, cfg.rff_scale)
        self.t_rff = RandomFourierEmbedding(cfg.n_freqs, cfg.rff_scale)
        self.cond_mlp = nn.Sequential(
            nn.Linear(4 * cfg.n_freqs, cfg.model_dim),
            nn.SiLU(),
            nn.Linear(cfg.model_dim, cfg.model_dim),
        )
        self.layers = nn.ModuleList(
            DecoderLayer(cfg, cfg.model_dim)
            for _ in range(cfg.param_decoder_layers)
        )
        self.final_adaln = AdaLN(cfg.model_dim, cfg.model_dim)

    def forward(self, context, z_t, t, mask_bits, lam) -> torch.Tensor:
        """v (B, d_max); zero at coordinates of inactive components.

        mask_bits: (B, C) 0/1 float or int tensor. Inactive parameter tokens
        are excluded from attention in both directions (they may still attend
        to themselves, which cannot influence active outputs).
        """
        if ((t < self.cfg.t_min) | (t > self.cfg.t_max)).any():
            raise ValueError(
                f"t outside [{self.cfg.t_min}, {self.cfg.t_max}]"
            )
        B = z_t.shape[0]
        P = len(self.token_comps)
        v = z_t.new_zeros(B, self.layout.d_max)
        if P == 0:
            return v
        a, _ = alpha_beta(t)
        cond = self.cond_mlp(
            torch.cat(
                [self.lam_rff(lam), self.t_rff(torch.log(t) / 4.0)], dim=-1
            )
        )
        tokens = []
        for j, i in enumerate(self.token_comps):
            blk = z_t[:, self.layout.block(i)] * a[:, None]
            tokens.append(self.id_tokens[i][None] + self.in_proj[j](blk))
        h = torch.stack(tokens, dim=1)
        active = mask_bits[:, self.token_comps].bool()
        allowed = active[:, None, :].expand(B, P, P).clone()
        eye = torch.eye(P, dtype=torch.bool, device=z_t.device)
        allowed |= eye[None]
        for layer in self.layers:
            h = layer(h, context, cond, self_mask=allowed)
        h = self.final_adaln(h, cond)
        for j, i in enumerate(self.token_comps):
            blk = self.out_proj[j](h[:, j, :])
            v[:, self.layout.block(i)] = blk * active[:, j : j + 1]
        return v


class InferenceNet(nn.Module):
    """Full encoder + both decoders over a fixed library layout."""

    def __init__(self, cfg: NetConfig, layout: ParamLayout, n_points: int,
                 C: int):
        super().__init__()
        self.cfg = cfg
        self.layout = layout
        self.C = C
        self.n_points = n_points
        self.id_tokens = nn.Parameter(torch.randn(C, cfg.model_dim) * 0.02)
        self.encoder = ObservationEncoder(cfg, n_points)
        self.mask_decoder = MaskDecoder(cfg, C, self.id_tokens)
        self.param_decoder = ParamDecoder(cfg, layout, self.id_tokens)

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        return self.encoder(x)

    def mask_logits(self, context, prev_bits, lam):
        return self.mask_decoder(context, prev_bits, lam)

    def model_bit_probs(self, context, bits_prefix, lam) -> torch.Tensor:
        """Bernoulli probabilities at positions 0..len(prefix).

        bits_prefix: (B, L) with L < C; positions beyond the prefix are
        unreachable and are not returned.
        """
        B, L = bits_prefix.shape
        if L >= self.C:
            raise ValueError("prefix must be shorter than C")
        prev = torch.full((B, self.C), 0, dtype=torch.long,
                          device=bits_prefix.device)
        prev[:, 0] = _VAL_BOS
        if L:
            prev[:, 1 : L + 1] = bits_prefix.long()
        logits = self.mask_logits(context, prev, lam)
        return torch.sigmoid(logits[:, : L + 1])

    def all_bit_probs(self, context, bits, lam) -> torch.Tensor:
        """Per-position probabilities for a full mask in one causal pass."""
        B = bits.shape[0]
        prev = torch.empty(B, self.C, dtype=torch.long, device=bits.device)
        prev[:, 0] = _VAL_BOS
        prev[:, 1:] = bits[:, :-1].long()
        return torch.sigmoid(self.mask_logits(context, prev, lam))

    def v_predict(self, context, z_t, t, mask_bits, lam) -> torch.Tensor:
        return self.param_decoder(context, z_t, t, mask_bits, lam)


def build_net(cfg: NetConfig, layout: ParamLayout, n_points: int, C: int,
              seed: int | None = None) -> InferenceNet:
    if seed is not None:
        torch.manual_seed(seed)
    return InferenceNet(cfg, layout, n_points, C)
