"""Dense neural building blocks on float64 tensors.

Everything here is deterministic: parameter initialization draws from an
explicit seeded generator, forward passes contain no dropout or other
stochastic ops, and training runs single-threaded per model instance.
Attention supports an optional rotary position encoding (base 10000,
consecutive dimension pairs per head) so scores depend only on relative
positions.
"""
from __future__ import annotations

import math
from typing import Iterable, Optional

import torch
from torch import Tensor, nn

DTYPE = torch.float64

ParamDict = dict[str, Tensor]


def seeded_generator(seed: int) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(int(seed))
    return gen


def linear(
    in_dim: int, out_dim: int, generator: torch.Generator, zero: bool = False, bias: bool = True
) -> nn.Linear:
    """Linear layer with seeded Xavier-normal weights and zero bias.

    Key projections use bias=False: softmax ignores per-query constant logit
    shifts, so a key bias would be an exactly-zero-gradient parameter.
    """
    layer = nn.Linear(in_dim, out_dim, bias=bias, dtype=DTYPE)
    with torch.no_grad():
        if zero:
            layer.weight.zero_()
        else:
            std = math.sqrt(2.0 / (in_dim + out_dim))
            layer.weight.copy_(torch.randn(out_dim, in_dim, generator=generator, dtype=DTYPE) * std)
        if bias:
            layer.bias.zero_()
    return layer


def module_params(module: nn.Module, trainable_only: bool = False) -> ParamDict:
    """Named parameter tensors; names are unique by nn.Module contract."""
    return {
        name: p for name, p in module.named_parameters() if p.requires_grad or not trainable_only
    }


def freeze_module(module: nn.Module) -> None:
    for p in module.parameters():
        p.requires_grad_(False)


def rope_rotate(x: Tensor, positions: Tensor, base: float = 10000.0) -> Tensor:
    """Rotate consecutive dimension pairs of x by position-dependent angles.

    x: (..., T, d) with d even; positions: integer tensor broadcastable to
    (..., T). Returns the rotated tensor; gradients flow through x.
    """
    d = x.shape[-1]
    if d % 2 != 0:
        raise ValueError(f"rotary dimension must be even, got {d}")
    freqs = base ** (-torch.arange(0, d, 2, dtype=DTYPE) / d)
    angles = positions.to(DTYPE)[..., None] * freqs  # (..., T, d/2)
    cos, sin = angles.cos(), angles.sin()
    x_even, x_odd = x[..., 0::2], x[..., 1::2]
    rotated = torch.stack([x_even * cos - x_odd * sin, x_even * sin + x_odd * cos], dim=-1)
    return rotated.reshape(x.shape)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, t, d = x.shape
    return x.reshape(*lead, t, heads, d // heads).transpose(-3, -2)  # (..., H, T, hd)


def attention_scores(
    queries: Tensor,
    keys: Tensor,
    heads: int,
    rope_positions: Optional[tuple[Tensor, Tensor]] = None,
) -> Tensor:
    """Per-head scaled dot-product logits, shape (..., H, q_len, k_len)."""
    d = queries.shape[-1]
    if d % heads != 0:
        raise ValueError(f"model dim {d} not divisible by {heads} heads")
    if keys.shape[-1] != d:
        raise ValueError(f"query dim {d} != key dim {keys.shape[-1]}")
    qh = _split_heads(queries, heads)
    kh = _split_heads(keys, heads)
    if rope_positions is not None:
        q_pos, k_pos = rope_positions
        qh = rope_rotate(qh, q_pos.unsqueeze(-2) if q_pos.dim() == qh.dim() - 2 else q_pos)
        kh = rope_rotate(kh, k_pos.unsqueeze(-2) if k_pos.dim() == kh.dim() - 2 else k_pos)
    return qh @ kh.transpose(-1, -2) / math.sqrt(d // heads)


def attention(
    queries: Tensor,
    keys: Tensor,
    values: Tensor,
    heads: int,
    rope_positions: Optional[tuple[Tensor, Tensor]] = None,
    key_mask: Optional[Tensor] = None,
) -> Tensor:
    """Multi-head scaled dot-product attention.

    queries (..., q_len, d), keys/values (..., k_len, d) -> (..., q_len, d).
    rope_positions, when given, is an integer (q_positions, k_positions) pair;
    key_mask is a boolean (..., k_len) tensor, False = padding.
    """
    if values.shape[:-1] != keys.shape[:-1]:
        raise ValueError("keys and values must agree on leading shape")
    logits = attention_scores(queries, keys, heads, rope_positions)
    if key_mask is not None:
        mask = key_mask[..., None, None, :] if key_mask.dim() == logits.dim() - 2 else key_mask
        logits = logits.masked_fill(~mask, float("-inf"))
    weights = torch.softmax(logits, dim=-1)
    vh = _split_heads(values, heads)
    out = weights @ vh  # (..., H, q_len, hd)
    *lead, h, t, hd = out.shape
    return out.transpose(-3, -2).reshape(*lead, t, h * hd)


class MLP(nn.Module):
    """Affine stack with GELU hidden activations and a task-specific output."""

    def __init__(
        self,
        widths: Iterable[int],
        generator: torch.Generator,
        out_activation: str = "identity",
    ):
        super().__init__()
        widths = list(widths)
        if len(widths) < 2:
            raise ValueError("MLP needs at least input and output widths")
        self.layers = nn.ModuleList(
            linear(a, b, generator) for a, b in zip(widths[:-1], widths[1:])
        )
        if out_activation not in ("identity", "sigmoid"):
            raise ValueError(f"unknown output activation {out_activation!r}")
        self.out_activation = out_activation

    def forward(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = torch.nn.functional.gelu(x)
        if self.out_activation == "sigmoid":
            x = torch.sigmoid(x)
        return x


class SelfAttentionBlock(nn.Module):
    """Pre-norm transformer block: rotary self-attention plus a 4x feed-forward."""

    def __init__(self, dim: int, heads: int, generator: torch.Generator, ff_mult: int = 4):
        super().__init__()
        self.heads = heads
        self.norm_attn = nn.LayerNorm(dim, dtype=DTYPE)
        self.norm_ff = nn.LayerNorm(dim, dtype=DTYPE)
        self.q = linear(dim, dim, generator)
        self.k = linear(dim, dim, generator, bias=False)
        self.v = linear(dim, dim, generator)
        self.out = linear(dim, dim, generator)
        self.ff1 = linear(dim, dim * ff_mult, generator)
        self.ff2 = linear(dim * ff_mult, dim, generator)

    def forward(self, x: Tensor, positions: Tensor, key_mask: Optional[Tensor] = None) -> Tensor:
        h = self.norm_attn(x)
        attended = attention(
            self.q(h), self.k(h), self.v(h), self.heads,
            rope_positions=(positions, positions), key_mask=key_mask,
        )
        x = x + self.out(attended)
        h = self.norm_ff(x)
        x = x + self.ff2(torch.nn.functional.gelu(self.ff1(h)))
        return x
