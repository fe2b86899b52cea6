"""Deterministic node grouping, round sampling, and coverage probabilities.

Nodes are assigned to groups purely by hashing their path identity, so the
grouping is reproducible across processes and machines and survives edge
perturbation (node paths do not change). Groups are 1-based; empty groups are
kept so group ids always run 1..num_groups.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np

from .errors import InputError
from .hashing import fnv1a_64
from .html_graph import DomGraph
from .nn import Tensor


@dataclass
class SubGraph:
    group_id: int
    node_indices: list[int]
    node_ids: list[str]
    edges: list[tuple[int, int]]
    features: Tensor | None = None
    token_ids: list[np.ndarray] | None = None
    tags: list[str] = field(default_factory=list)
    texts: list[str] = field(default_factory=list)

    @property
    def num_nodes(self) -> int:
        return len(self.node_indices)

    def to_dict(self) -> dict:
        return {
            "group_id": self.group_id,
            "node_ids": list(self.node_ids),
            "edges": [[a, b] for a, b in self.edges],
        }


def group_of(node_id: str, num_groups: int) -> int:
    """1-based group for a node path; a pure function of the string."""
    return fnv1a_64(node_id) % num_groups + 1


def partition(graph: DomGraph, num_groups: int) -> list[SubGraph]:
    """Split a graph into num_groups induced subgraphs by hashed node identity.

    Every node lands in exactly one group; an edge survives into a group only
    when both endpoints are members. Member features are value copies of the
    graph's current feature rows (when the graph has been featurized), so a
    subgraph is self-contained.
    """
    if num_groups < 1:
        raise InputError(f"num_groups must be >= 1, got {num_groups}")
    members: list[list[int]] = [[] for _ in range(num_groups)]
    for node in graph.nodes:
        members[group_of(node.node_id, num_groups) - 1].append(node.dfs_index)

    subgraphs = []
    for gid, idx in enumerate(members, start=1):
        local = {dfs: pos for pos, dfs in enumerate(idx)}
        edges = [
            (local[p], local[c]) for p, c in graph.edges if p in local and c in local
        ]
        features = None
        if graph.features is not None and idx:
            features = Tensor(graph.features.data[idx].copy())
        token_ids = None
        if graph.node_token_ids is not None:
            token_ids = [graph.node_token_ids[i] for i in idx]
        subgraphs.append(
            SubGraph(
                group_id=gid,
                node_indices=idx,
                node_ids=[graph.nodes[i].node_id for i in idx],
                edges=edges,
                features=features,
                token_ids=token_ids,
                tags=[graph.nodes[i].tag for i in idx],
            )
        )
    return subgraphs


def partition_report(graph: DomGraph, num_groups: int) -> dict:
    """JSON-friendly summary of the grouping, used by the dump interface."""
    return {
        "num_groups": num_groups,
        "num_nodes": graph.num_nodes,
        "groups": [sg.to_dict() for sg in partition(graph, num_groups)],
    }


def sample_subgraphs(
    subgraphs: list[SubGraph], iter_num: int, rng: np.random.Generator
) -> list[SubGraph]:
    """Uniform sample of iter_num distinct groups, in draw order."""
    if iter_num < 1:
        raise InputError(f"iter_num must be >= 1, got {iter_num}")
    if iter_num > len(subgraphs):
        raise InputError(
            f"cannot sample {iter_num} distinct groups from {len(subgraphs)}"
        )
    chosen = rng.choice(len(subgraphs), size=iter_num, replace=False)
    return [subgraphs[i] for i in chosen]


def coverage_probability(
    num_groups: int, iter_num: int, iter_per: int, target_groups: int = 1
) -> tuple[float, float]:
    """Chance of touching a target group per round, and of missing it all rounds.

    A round samples iter_num of num_groups groups without replacement, and
    iter_per rounds run independently. With m target groups the per-round hit
    probability is 1 - C(n-m, k)/C(n, k); the all-rounds miss probability is
    its complement raised to iter_per. Computed in exact rational arithmetic
    and rounded once at the end.
    """
    n, k, m = num_groups, iter_num, target_groups
    if not (1 <= k <= n):
        raise InputError(f"iter_num must be in [1, {n}], got {k}")
    if not (1 <= m <= n):
        raise InputError(f"target_groups must be in [1, {n}], got {m}")
    if iter_per < 1:
        raise InputError(f"iter_per must be >= 1, got {iter_per}")
    miss_round = Fraction(comb(n - m, k), comb(n, k))
    p_round = 1 - miss_round
    p_all_miss = miss_round**iter_per
    return float(p_round), float(p_all_miss)
