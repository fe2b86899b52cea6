"""Bidirectional coupling of the URL token sequence and the subgraph sequence.

Each hybrid layer updates both modalities symmetrically: a self-attention
sublayer per modality, then a cross-attention sublayer in which each modality
queries the other's post-self-attention representation, then a position-wise
feed-forward. The attention sublayers carry residual connections and layer
norm; the feed-forward carries only a residual. Attention is single-head with
1/sqrt(dim) scaling.

Neither sequence gets a positional signal here. The subgraph side is an
unordered set, so permuting its rows permutes the outputs correspondingly and
leaves the other modality untouched.
"""
from __future__ import annotations

import numpy as np

from .errors import InputError
from .nn import Dropout, LayerNorm, Linear, Module, Tensor, ops


class _AttentionSublayer(Module):
    """Residual + layer-norm attention where queries and keys may differ."""

    def __init__(self, dim: int, rng: np.random.Generator, drop: Dropout):
        super().__init__()
        self.wq = Linear(dim, dim, rng, bias=False)
        self.wk = Linear(dim, dim, rng, bias=False)
        self.wv = Linear(dim, dim, rng, bias=False)
        self.norm = LayerNorm(dim)
        self.drop = drop
        self.dim = dim

    def __call__(self, queries: Tensor, keys: Tensor) -> Tensor:
        q, k, v = self.wq(queries), self.wk(keys), self.wv(keys)
        scores = ops.scale(ops.matmul(q, ops.permute(k, (1, 0))), 1.0 / np.sqrt(self.dim))
        att = ops.matmul(ops.softmax_rows(scores), v)
        return self.norm(ops.add(queries, self.drop(att)))


class _FeedForward(Module):
    """Residual two-layer feed-forward; no normalization afterwards."""

    def __init__(self, dim: int, multiplier: int, rng: np.random.Generator, drop: Dropout):
        super().__init__()
        self.lin1 = Linear(dim, multiplier * dim, rng)
        self.lin2 = Linear(multiplier * dim, dim, rng)
        self.drop = drop

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add(x, self.drop(self.lin2(ops.relu(self.lin1(x)))))


class HybridLayer(Module):
    def __init__(self, dim: int, multiplier: int, rng: np.random.Generator, drop_rng: np.random.Generator, dropout_rate: float):
        super().__init__()
        drop = lambda: Dropout(dropout_rate, drop_rng)
        self.self_url = _AttentionSublayer(dim, rng, drop())
        self.self_html = _AttentionSublayer(dim, rng, drop())
        self.cross_url = _AttentionSublayer(dim, rng, drop())
        self.cross_html = _AttentionSublayer(dim, rng, drop())
        self.ffn_url = _FeedForward(dim, multiplier, rng, drop())
        self.ffn_html = _FeedForward(dim, multiplier, rng, drop())

    def __call__(self, url_seq: Tensor, html_seq: Tensor) -> tuple[Tensor, Tensor]:
        u = self.self_url(url_seq, url_seq)
        h = self.self_html(html_seq, html_seq)
        # Both cross updates read the same post-self representations, so the
        # exchange is simultaneous rather than one side feeding the other.
        u2 = self.cross_url(u, h)
        h2 = self.cross_html(h, u)
        return self.ffn_url(u2), self.ffn_html(h2)


class CrossModalFusion(Module):
    def __init__(
        self,
        rng: np.random.Generator,
        dim: int = 64,
        depth: int = 2,
        ffn_multiplier: int = 2,
        dropout_rate: float = 0.1,
        dropout_rng: np.random.Generator | None = None,
    ):
        super().__init__()
        if depth < 1:
            raise InputError(f"fusion depth must be >= 1, got {depth}")
        drop_rng = dropout_rng if dropout_rng is not None else np.random.default_rng(0)
        self.layers = [
            HybridLayer(dim, ffn_multiplier, rng, drop_rng, dropout_rate) for _ in range(depth)
        ]
        self.dim = dim

    def fuse(self, url_seq: Tensor, html_seq: Tensor) -> tuple[Tensor, Tensor]:
        if url_seq.shape[1] != self.dim or html_seq.shape[1] != self.dim:
            raise InputError(
                f"fusion expects width-{self.dim} sequences, got {url_seq.shape} and {html_seq.shape}"
            )
        for layer in self.layers:
            url_seq, html_seq = layer(url_seq, html_seq)
        return url_seq, html_seq

    def fused_vector(self, url_seq: Tensor, html_seq: Tensor) -> Tensor:
        """(1, 2*dim): mean-pooled URL side next to mean-pooled subgraph side."""
        u, h = self.fuse(url_seq, html_seq)
        u_mean = ops.segment_mean(u, [(0, u.shape[0])])
        h_mean = ops.segment_mean(h, [(0, h.shape[0])])
        return ops.concat([u_mean, h_mean], axis=1)
