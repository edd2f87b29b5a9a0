"""
Attribute-conditioned causal transformer. The attribute embedding is added to the
token and position embeddings at every input position.
"""
from __future__ import annotations

from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from emotune.errors import ShapeMismatch

from .config import ModelConfig

__all__ = ('CausalAttention', 'Block', 'AttributeEncoder', 'EmotionTransformer', 'build_model')

def phi(x: torch.Tensor) -> torch.Tensor:
    return F.elu(x) + 1

class CausalAttention(nn.Module):
    """
    Multi-head causal self attention.

    With ``mode='linear'`` position ``i`` computes
    ``phi(q_i) . sum_j phi(k_j) v_j^T / phi(q_i) . sum_j phi(k_j)`` over ``j <= i`` with
    ``phi(x) = elu(x) + 1``; ``mode='softmax'`` is ordinary masked softmax attention.
    """
    def __init__(self, d_model: int, n_heads: int, dropout: float = 0.0, mode: str = 'linear') -> None:
        super().__init__()

        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.mode = mode

        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.proj = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        B, T, C = x.size()

        q, k, v = self.qkv(x).split(C, dim=2)
        q = q.view(B, T, self.n_heads, self.head_dim).transpose(1, 2)  # (B, nh, T, hs)
        k = k.view(B, T, self.n_heads, self.head_dim).transpose(1, 2)
        v = v.view(B, T, self.n_heads, self.head_dim).transpose(1, 2)

        if self.mode == 'linear':
            y = self._linear(q, k, v)
        else:
            y = self._softmax(q, k, v)

        y = y.transpose(1, 2).contiguous().view(B, T, C)
        return self.dropout(self.proj(y))

    @staticmethod
    def _linear(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
        q, k = phi(q), phi(k)

        # phi > 0, so the denominator is strictly positive.
        k_cum = torch.cumsum(k, dim=2)
        kv_cum = torch.cumsum(k.unsqueeze(-1) * v.unsqueeze(-2), dim=2)  # (B, nh, T, hs, hs)

        numerator = torch.einsum('bntd,bntdh->bnth', q, kv_cum)
        denominator = torch.einsum('bntd,bntd->bnt', q, k_cum).unsqueeze(-1)

        return numerator / denominator

    @staticmethod
    def _softmax(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
        T = q.size(2)

        scores = q @ k.transpose(-2, -1) / (q.size(-1) ** 0.5)
        mask = torch.ones(T, T, dtype=torch.bool, device=q.device).triu(1)

        return scores.masked_fill(mask, float('-inf')).softmax(dim=-1) @ v

class Block(nn.Module):
    def __init__(self, config: ModelConfig) -> None:
        super().__init__()

        self.ln_attn = nn.LayerNorm(config.d_model)
        self.attn = CausalAttention(config.d_model, config.n_heads, config.dropout, config.attention)
        self.ln_ffn = nn.LayerNorm(config.d_model)
        self.ffn = nn.Sequential(
            nn.Linear(config.d_model, config.d_ffn),
            nn.GELU(),
            nn.Linear(config.d_ffn, config.d_model),
            nn.Dropout(config.dropout),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln_attn(x))
        return x + self.ffn(self.ln_ffn(x))

class AttributeEncoder(nn.Module):
    """Two-layer feed-forward network from the binarized attribute vector to ``d_model``."""

    def __init__(self, attr_dim: int, d_model: int) -> None:
        super().__init__()

        self.net = nn.Sequential(nn.Linear(attr_dim, d_model), nn.ReLU(), nn.Linear(d_model, d_model))

    def forward(self, bits: torch.Tensor) -> torch.Tensor:
        return self.net(bits)

class EmotionTransformer(nn.Module):
    """
    Parameters
    ----------
    config: :class:`ModelConfig`
        The model configuration. ``attr_dim = 0`` builds an unconditioned backbone.
    """
    def __init__(self, config: ModelConfig) -> None:
        super().__init__()

        self.config = config

        self.token_embedding = nn.Embedding(config.vocab_size, config.d_model)
        self.position_embedding = nn.Embedding(config.max_len, config.d_model)
        self.attributes = AttributeEncoder(config.attr_dim, config.d_model) if config.attr_dim else None
        self.drop = nn.Dropout(config.dropout)
        self.blocks = nn.ModuleList([Block(config) for _ in range(config.n_layers)])
        self.ln_f = nn.LayerNorm(config.d_model)

        self.apply(self._init_weights)

    @staticmethod
    def _init_weights(module: nn.Module) -> None:
        if isinstance(module, nn.Linear):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)
            nn.init.zeros_(module.bias)
        elif isinstance(module, nn.Embedding):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)

    def _check(self, tokens: torch.Tensor, bits: Optional[torch.Tensor]) -> None:
        if tokens.dim() != 2 or tokens.size(1) == 0:
            raise ShapeMismatch(f'expected a (batch, length) token tensor, got {tuple(tokens.shape)}')

        if tokens.size(1) > self.config.max_len:
            raise ShapeMismatch(f'sequence of length {tokens.size(1)} exceeds max_len={self.config.max_len}')

        if self.attributes is None:
            return

        if bits is None or bits.shape != (tokens.size(0), self.config.attr_dim):
            shape = None if bits is None else tuple(bits.shape)
            raise ShapeMismatch(f'expected attribute bits of shape {(tokens.size(0), self.config.attr_dim)}, got {shape}')

    def hidden(self, tokens: torch.Tensor, bits: Optional[torch.Tensor] = None) -> torch.Tensor:
        self._check(tokens, bits)

        positions = torch.arange(tokens.size(1), device=tokens.device)
        x = self.token_embedding(tokens) + self.position_embedding(positions)[None]

        if self.attributes is not None:
            x = x + self.attributes(bits.to(x.dtype))[:, None, :]

        x = self.drop(x)
        for block in self.blocks:
            x = block(x)

        return self.ln_f(x)

    def forward(self, tokens: torch.Tensor, bits: Optional[torch.Tensor] = None) -> torch.Tensor:
        """
        Returns next-token logits.

        Parameters
        ----------
        tokens: :class:`torch.Tensor`
            ``(batch, length)`` or ``(length,)`` token ids.
        bits: Optional[:class:`torch.Tensor`]
            ``(batch, attr_dim)`` or ``(attr_dim,)`` binarized attributes.

        Returns
        -------
        :class:`torch.Tensor`
            ``(batch, length, vocab_size)`` logits, unbatched if ``tokens`` was.
        """
        unbatched = tokens.dim() == 1
        if unbatched:
            tokens = tokens[None]
            bits = None if bits is None else bits[None]

        # Output projection is tied to the token embedding.
        logits = self.hidden(tokens, bits) @ self.token_embedding.weight.T
        return logits[0] if unbatched else logits

def build_model(config: ModelConfig, seed: int = 0) -> EmotionTransformer:
    torch.manual_seed(seed)
    return EmotionTransformer(config)
