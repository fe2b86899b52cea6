"""Character-level URL encoder with local/global mixing and a multi-scale
pyramid fuser over the stacked layer outputs.

URLs are tokenized as raw UTF-8 bytes (no case folding, so visually confusable
characters stay distinct), with a leading classification token and optional
tail padding. Each encoder block runs two branches over the sequence: masked
self-attention for global interactions and a per-channel 1-D convolution for
local neighborhoods; their concatenation is projected back down and combined
with the input through a residual and layer norm.

Padding must be inert end to end: pad embeddings are zeroed before the conv
branch sees them, attention never attends to pad keys, pad rows are re-zeroed
after every block, and the pyramid crops the stacked feature map to the
content width before pooling. Encoding a URL therefore gives identical results
(to float tolerance) whatever the padded length.
"""
from __future__ import annotations

import numpy as np

from .errors import InputError
from .nn import DSConv2d, Dropout, LayerNorm, Linear, Module, Parameter, Tensor, ops

PAD_TOKEN = 256
CLS_TOKEN = 257
VOCAB_SIZE = 258

DEFAULT_MAX_LEN = 200


def tokenize(url: str, max_len: int = DEFAULT_MAX_LEN, pad_to: int | None = None) -> np.ndarray:
    """Byte-level token ids: [CLS, byte0, byte1, ...], truncated to max_len.

    `pad_to` appends PAD tokens up to the requested length; it may not exceed
    max_len. The natural (unpadded) form is preferred for single sequences
    since shorter inputs encode faster.
    """
    if max_len < 1:
        raise InputError(f"max_len must be >= 1, got {max_len}")
    ids = [CLS_TOKEN]
    ids.extend(url.encode("utf-8"))
    ids = ids[:max_len]
    if pad_to is not None:
        if pad_to > max_len:
            raise InputError(f"pad_to {pad_to} exceeds max_len {max_len}")
        if pad_to > len(ids):
            ids.extend([PAD_TOKEN] * (pad_to - len(ids)))
    return np.array(ids, dtype=np.int64)


class _MixedBlock(Module):
    """Self-attention branch plus depthwise-conv branch, concatenated,
    projected, and merged with the input via residual + layer norm."""

    def __init__(self, dim: int, kernel: int, rng: np.random.Generator, drop: Dropout):
        super().__init__()
        self.wq = Linear(dim, dim, rng, bias=False)
        self.wk = Linear(dim, dim, rng, bias=False)
        self.wv = Linear(dim, dim, rng, bias=False)
        self.conv = Parameter(
            np.sqrt(6.0 / (2 * kernel)) * rng.uniform(-1.0, 1.0, size=(dim, kernel))
        )
        self.proj = Linear(2 * dim, dim, rng)
        self.norm = LayerNorm(dim)
        self.drop = drop
        self.dim = dim

    def __call__(self, x: Tensor, key_bias: Tensor, mask_col: Tensor) -> Tensor:
        q, k, v = self.wq(x), self.wk(x), self.wv(x)
        scores = ops.scale(ops.matmul(q, ops.permute(k, (1, 0))), 1.0 / np.sqrt(self.dim))
        att = ops.matmul(ops.softmax_rows(ops.add(scores, key_bias)), v)
        local = ops.depthwise_conv1d(x, self.conv)
        h = self.drop(self.proj(ops.concat([att, local], axis=1)))
        return ops.mul(self.norm(ops.add(x, h)), mask_col)


class PyramidFuser(Module):
    """Multi-scale refinement and channel attention over the layer stack.

    The (layers, positions, dim) stack is treated as a dim-channel image:
    a stem conv produces the base map, parallel dilated convs refine it at
    growing receptive fields, and their sum is pooled at several grid sizes
    into a per-channel descriptor. A two-layer bottleneck turns the descriptor
    into a sigmoid gate that scales the summed map, a residual adds the raw
    stack back, and the fused URL vector is the mean over content positions of
    the top layer's row.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        dim: int,
        dilations: tuple[int, ...] = (1, 2, 4, 8),
        pool_sizes: tuple[int, ...] = (1, 2, 4),
    ):
        super().__init__()
        self.stem = DSConv2d(dim, dim, dilation=1, rng=rng)
        self.branches = [DSConv2d(dim, dim, dilation=d, rng=rng) for d in dilations]
        descriptor = sum(k * k for k in pool_sizes)
        self.fc1 = Linear(descriptor * dim, max(1, dim // 2), rng)
        self.fc2 = Linear(max(1, dim // 2), dim, rng)
        self.pool_sizes = tuple(pool_sizes)
        self.dim = dim

    def __call__(self, stack: Tensor, content_len: int) -> Tensor:
        num_layers, seq_len, dim = stack.shape
        min_extent = max(self.pool_sizes)
        # Crop away tail padding, then pad both extents with zeros up to the
        # largest pool size; either way the map never depends on how much tail
        # padding the caller supplied.
        width = max(content_len, min_extent)
        cropped = ops.narrow(stack, 1, 0, min(width, seq_len))
        if width > seq_len:
            pad = Tensor(np.zeros((num_layers, width - seq_len, dim)))
            cropped = ops.concat([cropped, pad], axis=1)
        if num_layers < min_extent:
            pad = Tensor(np.zeros((min_extent - num_layers, width, dim)))
            cropped = ops.concat([cropped, pad], axis=0)
        base = ops.permute(cropped, (2, 0, 1))

        x = self.stem(base)
        summed = x
        for branch in self.branches:
            summed = ops.add(summed, branch(x))

        pooled = [
            ops.reshape(ops.adaptive_avg_pool2d(summed, k), (dim, k * k))
            for k in self.pool_sizes
        ]
        descriptor = ops.reshape(ops.concat(pooled, axis=1), (1, -1))
        gate = ops.sigmoid(self.fc2(ops.relu(self.fc1(descriptor))))
        fused = ops.add(ops.mul(summed, ops.reshape(gate, (dim, 1, 1))), base)

        top = ops.reshape(ops.narrow(fused, 1, num_layers - 1, 1), (dim, width))
        content = ops.narrow(top, 1, 0, min(content_len, width))
        return ops.reshape(ops.segment_mean(ops.permute(content, (1, 0)), [(0, content.shape[1])]), (dim,))


class UrlEncoder(Module):
    """Stack of mixed local/global blocks plus the pyramid fuser.

    `encode_layers` returns the (num_layers, S, dim) stack of block outputs;
    `fusion_tokens` reduces it to the (num_layers + 1, dim) token sequence
    handed to the cross-modal stage: one masked mean per layer, then the
    pyramid-fused vector.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        dim: int = 64,
        num_layers: int = 4,
        max_len: int = DEFAULT_MAX_LEN,
        kernel: int = 9,
        dilations: tuple[int, ...] = (1, 2, 4, 8),
        pool_sizes: tuple[int, ...] = (1, 2, 4),
        dropout_rate: float = 0.1,
        dropout_rng: np.random.Generator | None = None,
    ):
        super().__init__()
        if num_layers < 1:
            raise InputError(f"num_layers must be >= 1, got {num_layers}")
        drop_rng = dropout_rng if dropout_rng is not None else np.random.default_rng(0)
        self.embedding = Parameter(rng.standard_normal((VOCAB_SIZE, dim)))
        self.positional = Parameter(0.1 * rng.standard_normal((max_len, dim)))
        self.blocks = [
            _MixedBlock(dim, kernel, rng, Dropout(dropout_rate, drop_rng))
            for _ in range(num_layers)
        ]
        self.pyramid = PyramidFuser(rng, dim, dilations=dilations, pool_sizes=pool_sizes)
        self.dim = dim
        self.num_layers = num_layers
        self.max_len = max_len

    def encode_layers(self, tokens: np.ndarray) -> tuple[Tensor, np.ndarray]:
        seq_len = len(tokens)
        if seq_len == 0:
            raise InputError("cannot encode an empty token sequence")
        if seq_len > self.max_len:
            raise InputError(f"token sequence of length {seq_len} exceeds max_len {self.max_len}")
        mask = tokens != PAD_TOKEN
        mask_col = Tensor(mask.astype(np.float64).reshape(seq_len, 1))
        key_bias = Tensor(np.where(mask, 0.0, -1e9))

        x = ops.add(ops.gather_rows(self.embedding, tokens), ops.narrow(self.positional, 0, 0, seq_len))
        x = ops.mul(x, mask_col)
        outputs = []
        for block in self.blocks:
            x = block(x, key_bias, mask_col)
            outputs.append(ops.reshape(x, (1, seq_len, self.dim)))
        return ops.concat(outputs, axis=0), mask

    def fusion_tokens(self, tokens: np.ndarray) -> Tensor:
        stack, mask = self.encode_layers(tokens)
        content_len = int(mask.sum())
        if not mask[:content_len].all():
            raise InputError("padding must be a contiguous tail of the token sequence")
        seq_len = stack.shape[1]
        rows = []
        for i in range(self.num_layers):
            layer = ops.reshape(ops.narrow(stack, 0, i, 1), (seq_len, self.dim))
            rows.append(ops.segment_mean(layer, [(0, content_len)]))
        rows.append(ops.reshape(self.pyramid(stack, content_len), (1, self.dim)))
        return ops.concat(rows, axis=0)
