"""Structural encoder: sum-aggregation message passing over batched subgraphs.

Subgraphs are packed into one block-diagonal adjacency with self-loops and
both edge directions, so disconnected subgraphs influence each other only
through batch normalization (and not at all in eval mode, hence eval-time
batch invariance). An empty subgraph is represented by a single zero-feature
isolated node, which keeps every block non-empty and pooling well defined.

The encoder keeps the node representations of every depth: the final
per-subgraph embedding is the concatenation of the mean-pooled layer outputs
0..L, giving a (B, (L+1)*dim) matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .nn import BatchNorm1d, Linear, Module, Tensor, ops
from .partition import SubGraph


@dataclass
class SubgraphBatch:
    features: Tensor
    adjacency: Tensor
    ranges: list[tuple[int, int]]
    sizes: list[int]

    @property
    def num_blocks(self) -> int:
        return len(self.ranges)


def build_batch(subgraphs: list[SubGraph], features: Tensor | None = None) -> SubgraphBatch:
    """Pack subgraphs in list order; `features` overrides the stored rows.

    When `features` is given it must already contain one row per packed node,
    including the zero rows standing in for empty subgraphs (the training path
    produces these by embedding an empty token list).
    """
    if not subgraphs:
        raise InputError("cannot batch an empty subgraph list")
    sizes = [max(1, sg.num_nodes) for sg in subgraphs]
    total = sum(sizes)

    ranges: list[tuple[int, int]] = []
    offset = 0
    adjacency = np.eye(total, dtype=np.float64)
    for sg, size in zip(subgraphs, sizes):
        ranges.append((offset, offset + size))
        for a, b in sg.edges:
            adjacency[offset + a, offset + b] = 1.0
            adjacency[offset + b, offset + a] = 1.0
        offset += size

    if features is None:
        dim = None
        for sg in subgraphs:
            if sg.num_nodes and sg.features is not None:
                dim = sg.features.shape[1]
                break
        if dim is None:
            raise InputError("no featurized subgraph in batch; featurize the graph first")
        rows = []
        for sg in subgraphs:
            if sg.num_nodes == 0:
                rows.append(np.zeros((1, dim)))
            elif sg.features is None:
                raise InputError(f"group {sg.group_id} has nodes but no features")
            else:
                rows.append(sg.features.data)
        features = Tensor(np.concatenate(rows, axis=0))
    elif features.shape[0] != total:
        raise InputError(
            f"feature matrix has {features.shape[0]} rows, packed batch needs {total}"
        )
    return SubgraphBatch(
        features=features, adjacency=Tensor(adjacency), ranges=ranges, sizes=sizes
    )


class _NodeBlock(Module):
    """Two-layer MLP with batch norm and ReLU applied to node rows."""

    def __init__(self, in_dim: int, dim: int, rng: np.random.Generator):
        super().__init__()
        self.lin1 = Linear(in_dim, dim, rng)
        self.lin2 = Linear(dim, dim, rng)
        self.norm = BatchNorm1d(dim)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.relu(self.norm(self.lin2(ops.relu(self.lin1(x)))))


class GraphEncoder(Module):
    """Message-passing encoder over a SubgraphBatch.

    Layer 0 lifts raw node features to the working width without looking at
    neighbors; each further layer sums the representations of a node's
    neighborhood (self included, via the self-loop) and transforms the result.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        in_dim: int = 100,
        dim: int = 64,
        num_layers: int = 2,
    ):
        super().__init__()
        if num_layers < 1:
            raise InputError(f"num_layers must be >= 1, got {num_layers}")
        self.input_block = _NodeBlock(in_dim, dim, rng)
        self.conv_blocks = [_NodeBlock(dim, dim, rng) for _ in range(num_layers)]
        self.dim = dim
        self.num_layers = num_layers

    def node_layers(self, batch: SubgraphBatch) -> list[Tensor]:
        """Node representations at every depth, shallow to deep."""
        h = self.input_block(batch.features)
        outputs = [h]
        for block in self.conv_blocks:
            h = block(ops.matmul(batch.adjacency, h))
            outputs.append(h)
        return outputs

    def encode(self, batch: SubgraphBatch) -> Tensor:
        """(B, (num_layers+1)*dim): per-block mean of every layer, concatenated."""
        pooled = [
            ops.segment_mean(layer, batch.ranges) for layer in self.node_layers(batch)
        ]
        return ops.concat(pooled, axis=1)
