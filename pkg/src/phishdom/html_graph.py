"""Lenient HTML parsing into a DOM graph, plus hashed-token node features.

The parser is built on the stdlib event parser and never raises on malformed
markup: unknown tags nest normally, stray end tags are dropped, unclosed
elements are closed at end of input, and a small table of HTML5 auto-closing
rules handles the common implied-end-tag cases (sibling ``<p>``, list items,
table cells and rows, options, definition terms). Void elements never take
children. Comments, doctypes and processing instructions are skipped;
``<script>`` and ``<style>`` bodies are kept as the element's text.

Every node gets a stable identity independent of parse order: ``node_id`` is
the slash-joined child-position path from the root ("0" for the root, "0/1/3"
for the fourth child of the second child of the root). Nodes are listed in
depth-first preorder.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from html.parser import HTMLParser

import numpy as np

from .errors import InputError
from .hashing import fnv1a_64
from .nn import Module, Parameter, Tensor, ops

VOID_ELEMENTS = frozenset(
    "area base br col embed hr img input link meta param source track wbr".split()
)

# While the innermost open element's tag is a key here and the incoming start
# tag is in its set, the open element is implicitly closed first.
_IMPLIED_END = {
    "p": frozenset(
        "address article aside blockquote details div dl fieldset figcaption figure "
        "footer form h1 h2 h3 h4 h5 h6 header hr main menu nav ol p pre section table ul".split()
    ),
    "li": frozenset({"li"}),
    "dt": frozenset({"dt", "dd"}),
    "dd": frozenset({"dt", "dd"}),
    "tr": frozenset({"tr"}),
    "td": frozenset({"td", "th", "tr"}),
    "th": frozenset({"td", "th", "tr"}),
    "option": frozenset({"option", "optgroup"}),
    "thead": frozenset({"tbody", "tfoot"}),
    "tbody": frozenset({"tbody", "tfoot"}),
}

MAX_ATTR_VALUE_CHARS = 256


@dataclass
class DomNode:
    dfs_index: int
    node_id: str
    tag: str
    attrs: dict[str, str]
    text: str
    parent: int | None
    children: list[int] = field(default_factory=list)


@dataclass
class DomGraph:
    nodes: list[DomNode]
    edges: list[tuple[int, int]]

    def __post_init__(self):
        self.node_token_ids: list[np.ndarray] | None = None
        self.features: Tensor | None = None

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def neighbor_lists(self) -> list[list[int]]:
        """Undirected adjacency built from the surviving edges."""
        adj: list[list[int]] = [[] for _ in self.nodes]
        for p, c in self.edges:
            adj[p].append(c)
            adj[c].append(p)
        return adj

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"id": n.node_id, "tag": n.tag, "attrs": n.attrs, "text": n.text}
                for n in self.nodes
            ],
            "edges": [[p, c] for p, c in self.edges],
        }

    @staticmethod
    def from_dict(payload: dict) -> "DomGraph":
        nodes = [
            DomNode(
                dfs_index=i,
                node_id=row["id"],
                tag=row["tag"],
                attrs=dict(row["attrs"]),
                text=row["text"],
                parent=None,
            )
            for i, row in enumerate(payload["nodes"])
        ]
        edges = [(int(p), int(c)) for p, c in payload["edges"]]
        for p, c in edges:
            nodes[c].parent = p
            nodes[p].children.append(c)
        return DomGraph(nodes=nodes, edges=edges)


class _TempNode:
    __slots__ = ("tag", "attrs", "text_parts", "children")

    def __init__(self, tag: str, attrs: dict[str, str]):
        self.tag = tag
        self.attrs = attrs
        self.text_parts: list[str] = []
        self.children: list[_TempNode] = []


class _TreeBuilder(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.roots: list[_TempNode] = []
        self.stack: list[_TempNode] = []
        self.stray_text: list[str] = []

    def _attach(self, node: _TempNode) -> None:
        if self.stack:
            self.stack[-1].children.append(node)
        else:
            self.roots.append(node)

    def handle_starttag(self, tag, attrs):
        while self.stack and tag in _IMPLIED_END.get(self.stack[-1].tag, ()):
            self.stack.pop()
        clean: dict[str, str] = {}
        for key, value in attrs:
            clean.setdefault(key, value if value is not None else "")
        node = _TempNode(tag, clean)
        self._attach(node)
        if tag not in VOID_ELEMENTS:
            self.stack.append(node)

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)
        if self.stack and self.stack[-1].tag == tag and tag not in VOID_ELEMENTS:
            self.stack.pop()

    def handle_endtag(self, tag):
        for i in range(len(self.stack) - 1, -1, -1):
            if self.stack[i].tag == tag:
                del self.stack[i:]
                return
        # Stray end tag with no matching open element: ignored.

    def handle_data(self, data):
        if self.stack:
            self.stack[-1].text_parts.append(data)
        else:
            self.stray_text.append(data)


def _collapse(parts: list[str]) -> str:
    return " ".join("".join(parts).split())


def parse_html(document: bytes | str) -> DomGraph:
    """Parse an HTML document into a DOM graph; only empty input is an error."""
    if isinstance(document, bytes):
        document = document.decode("utf-8", errors="replace")
    if not document:
        raise InputError("cannot parse an empty document")

    builder = _TreeBuilder()
    builder.feed(document)
    builder.close()

    if len(builder.roots) == 1:
        root = builder.roots[0]
        root.text_parts.extend(builder.stray_text)
    else:
        root = _TempNode("html", {})
        root.children = builder.roots
        root.text_parts = builder.stray_text

    nodes: list[DomNode] = []
    edges: list[tuple[int, int]] = []
    work: list[tuple[_TempNode, str, int | None]] = [(root, "0", None)]
    while work:
        temp, path, parent = work.pop()
        index = len(nodes)
        nodes.append(
            DomNode(
                dfs_index=index,
                node_id=path,
                tag=temp.tag,
                attrs=temp.attrs,
                text=_collapse(temp.text_parts),
                parent=parent,
            )
        )
        if parent is not None:
            edges.append((parent, index))
            nodes[parent].children.append(index)
        # Reversed push keeps document order under the LIFO walk (preorder).
        for pos in range(len(temp.children) - 1, -1, -1):
            work.append((temp.children[pos], f"{path}/{pos}", index))
    return DomGraph(nodes=nodes, edges=edges)


def node_tokens(node: DomNode) -> list[str]:
    """Token stream hashed into feature buckets: tag, sorted attribute keys,
    attribute values in sorted-key order (truncated, whitespace-split), then
    the node's text tokens."""
    keys = sorted(node.attrs)
    tokens = [node.tag]
    tokens.extend(keys)
    for key in keys:
        tokens.extend(node.attrs[key][:MAX_ATTR_VALUE_CHARS].split())
    tokens.extend(node.text.split())
    return tokens


class NodeEmbedder(Module):
    """Trainable bucket-embedding table; a node's feature is the mean of its
    token embeddings, or the zero vector for an empty token stream."""

    def __init__(self, rng: np.random.Generator, num_buckets: int = 2**14, dim: int = 100):
        super().__init__()
        self.table = Parameter(rng.standard_normal((num_buckets, dim)))
        self.num_buckets = num_buckets
        self.dim = dim

    def token_buckets(self, node: DomNode) -> np.ndarray:
        return np.array(
            [fnv1a_64(tok) % self.num_buckets for tok in node_tokens(node)], dtype=np.int64
        )

    def embed_token_lists(self, token_ids: list[np.ndarray]) -> Tensor:
        """Mean-of-embeddings per list, zero row for an empty list, stacked (N, dim)."""
        pieces: list[Tensor] = []
        run_ids: list[np.ndarray] = []
        run_ranges: list[tuple[int, int]] = []
        offset = 0

        def flush_run():
            nonlocal offset
            if run_ids:
                gathered = ops.gather_rows(self.table, np.concatenate(run_ids))
                pieces.append(ops.segment_mean(gathered, run_ranges))
                run_ids.clear()
                run_ranges.clear()
                offset = 0

        for ids in token_ids:
            if len(ids) == 0:
                flush_run()
                pieces.append(Tensor(np.zeros((1, self.dim))))
            else:
                run_ids.append(ids)
                run_ranges.append((offset, offset + len(ids)))
                offset += len(ids)
        flush_run()
        if not pieces:
            return Tensor(np.zeros((0, self.dim)))
        return pieces[0] if len(pieces) == 1 else ops.concat(pieces, axis=0)


def featurize_nodes(graph: DomGraph, embedder: NodeEmbedder) -> Tensor:
    """Attach (and return) an (N, dim) feature matrix for the graph's nodes.

    Bucket ids are cached on the graph; the embedding rows are recomputed from
    the table on every call so training always sees the current weights.
    """
    if graph.node_token_ids is None:
        graph.node_token_ids = [embedder.token_buckets(n) for n in graph.nodes]
    graph.features = embedder.embed_token_lists(graph.node_token_ids)
    return graph.features


def perturb_edges(graph: DomGraph, p: float, seed: int) -> DomGraph:
    """Delete each edge independently with probability p; nodes are untouched.

    Node identities, order and cached bucket ids survive, so a perturbed graph
    partitions exactly like the original. p=0 keeps every edge.
    """
    if not 0.0 <= p <= 1.0:
        raise InputError(f"deletion probability must be in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    draws = rng.random(len(graph.edges))
    kept = [e for e, u in zip(graph.edges, draws) if u >= p]

    nodes = [
        DomNode(
            dfs_index=n.dfs_index,
            node_id=n.node_id,
            tag=n.tag,
            attrs=dict(n.attrs),
            text=n.text,
            parent=None,
        )
        for n in graph.nodes
    ]
    for parent, child in kept:
        nodes[child].parent = parent
        nodes[parent].children.append(child)
    out = DomGraph(nodes=nodes, edges=kept)
    out.node_token_ids = graph.node_token_ids
    return out
