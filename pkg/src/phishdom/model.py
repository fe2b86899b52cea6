"""Full detector: URL encoder, node embedder, graph encoder, fusion, head.

All submodules are initialized from generators spawned off the configured
seed, so two detectors built from equal configurations start bit-identical.
A detector classifies one *round*: a sampled set of subgraphs together with
the URL. Round sampling, vote aggregation and localization live in `voting`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .errors import InputError
from .fusion import CrossModalFusion
from .graph_encoder import GraphEncoder, build_batch
from .html_graph import NodeEmbedder
from .nn import Linear, Module, Tensor, ops
from .partition import SubGraph

# Scale on the classifier head weights at init. See the comment where it
# is applied in Detector.__init__.
HEAD_INIT_SCALE = 0.05


def _round_token_lists(subgraphs: list[SubGraph]) -> list[np.ndarray]:
    """Token bucket lists for every packed node row, empties included."""
    token_lists: list[np.ndarray] = []
    for sg in subgraphs:
        if sg.token_ids is None:
            raise InputError(
                f"group {sg.group_id} has no cached token buckets; featurize the graph before partitioning"
            )
        if sg.num_nodes == 0:
            token_lists.append(np.array([], dtype=np.int64))
        else:
            token_lists.extend(sg.token_ids)
    return token_lists


@dataclass
class RoundResult:
    logits: Tensor
    malicious_prob: float
    pred: int
    url_vec: Tensor
    html_vec: Tensor


class Detector(Module):
    def __init__(self, config: RunConfig):
        super().__init__()
        self.config = config
        root = np.random.SeedSequence(config.seed)
        init_ss, drop_ss = root.spawn(2)
        init_rng = np.random.default_rng(init_ss)
        self.dropout_rng = np.random.default_rng(drop_ss)

        c = config
        from .url_encoder import UrlEncoder  # local import to avoid a cycle in docs tooling

        self.url_encoder = UrlEncoder(
            init_rng,
            dim=c.url.dim,
            num_layers=c.url.num_layers,
            max_len=c.url.max_len,
            kernel=c.url.kernel,
            dilations=c.url.dilations,
            pool_sizes=c.url.pool_sizes,
            dropout_rate=c.train.dropout,
            dropout_rng=self.dropout_rng,
        )
        self.embedder = NodeEmbedder(init_rng, num_buckets=c.graph.num_buckets, dim=c.graph.feature_dim)
        self.graph_encoder = GraphEncoder(
            init_rng, in_dim=c.graph.feature_dim, dim=c.graph.dim, num_layers=c.graph.num_layers
        )
        self.url_proj = Linear(c.url.dim, c.fusion.dim, init_rng)
        self.html_proj = Linear((c.graph.num_layers + 1) * c.graph.dim, c.fusion.dim, init_rng)
        self.fusion = CrossModalFusion(
            init_rng,
            dim=c.fusion.dim,
            depth=c.fusion.depth,
            ffn_multiplier=c.fusion.ffn_multiplier,
            dropout_rate=c.train.dropout,
            dropout_rng=self.dropout_rng,
        )
        self.head = Linear(2 * c.fusion.dim, 2, init_rng)
        # Near-zero readout: initial verdicts sit at p=0.5 instead of random
        # confidence, so every early optimizer step moves on signal rather
        # than unwinding init noise. Matters at the pinned tiny learning rate.
        self.head.weight.data *= HEAD_INIT_SCALE

    def classify_round(self, url_tokens: np.ndarray, subgraphs: list[SubGraph]) -> RoundResult:
        """Score one sampled subgraph set against the URL.

        Node features are re-embedded from cached token buckets on every call
        so training gradients reach the embedding table; empty subgraphs
        contribute their zero-feature stand-in node through an empty token
        list, keeping feature rows aligned with the packed batch.
        """
        if not subgraphs:
            raise InputError("classify_round needs at least one subgraph")
        features = self.embedder.embed_token_lists(_round_token_lists(subgraphs))
        batch = build_batch(subgraphs, features=features)
        html_seq = self.html_proj(self.graph_encoder.encode(batch))
        return self._fuse_and_read(url_tokens, html_seq)

    def classify_batch(
        self, items: list[tuple[np.ndarray, list[SubGraph]]]
    ) -> list[RoundResult]:
        """Score several rounds through one packed graph forward.

        All rounds' subgraphs share a single block-diagonal encoder pass, so
        in training mode the batch normalization statistics span every
        document in the optimizer batch instead of one document at a time.
        Statistics computed from a lone document's nodes carry the document
        label into every row, and a classifier trained on that leak falls
        apart under eval-mode frozen stats; cross-document batches keep the
        two modes exchangeable. Fusion and readout never mix rows across
        samples, and the eval path stays per-round.
        """
        if not items:
            raise InputError("classify_batch needs at least one item")
        token_lists: list[np.ndarray] = []
        all_subgraphs: list[SubGraph] = []
        counts: list[int] = []
        for _, subgraphs in items:
            if not subgraphs:
                raise InputError("classify_batch needs at least one subgraph per item")
            token_lists.extend(_round_token_lists(subgraphs))
            all_subgraphs.extend(subgraphs)
            counts.append(len(subgraphs))
        features = self.embedder.embed_token_lists(token_lists)
        batch = build_batch(all_subgraphs, features=features)
        encoded = self.html_proj(self.graph_encoder.encode(batch))

        results = []
        offset = 0
        for (url_tokens, _), k in zip(items, counts):
            # One-hot row selection keeps the slice differentiable.
            select = np.zeros((k, encoded.shape[0]))
            select[np.arange(k), offset + np.arange(k)] = 1.0
            html_seq = ops.matmul(Tensor(select), encoded)
            results.append(self._fuse_and_read(url_tokens, html_seq))
            offset += k
        return results

    def _fuse_and_read(self, url_tokens: np.ndarray, html_seq: Tensor) -> RoundResult:
        url_seq = self.url_proj(self.url_encoder.fusion_tokens(url_tokens))
        u, h = self.fusion.fuse(url_seq, html_seq)
        url_vec = ops.segment_mean(u, [(0, u.shape[0])])
        html_vec = ops.segment_mean(h, [(0, h.shape[0])])
        logits = self.head(ops.concat([url_vec, html_vec], axis=1))

        z = logits.data[0] - logits.data[0].max()
        e = np.exp(z)
        p_malicious = float(e[1] / e.sum())
        return RoundResult(
            logits=logits,
            malicious_prob=p_malicious,
            pred=1 if p_malicious > 0.5 else 0,
            url_vec=url_vec,
            html_vec=html_vec,
        )
