"""Dataset plumbing: manifests, eager ingestion, synthesis, and fold splits.

A manifest is JSONL: one `{"id", "url", "html_path", "label"}` object per
line, html paths resolved against the manifest's directory. Ingestion parses
and featurizes everything up front, collecting every per-sample failure before
aborting so a bad corpus surfaces all at once instead of one file per run.

The synthetic corpus is the package's acceptance vehicle. Benign documents are
nested boilerplate (navigation, sections, lists, sometimes a harmless search
form). Malicious documents take a benign skeleton and attach a five-node
hidden subtree: div[style=display:none] > form[action=off-domain] >
input[type=password], plus a span-wrapped obfuscated script. The attachment
point is searched so that the four signal nodes (div, form, input, script)
all hash into the SAME partition group; sibling nodes whose paths differ only
in the final digit can never share a group (the hash is byte-sequential and
its prime is 1 mod 5), which is why the subtree chains through neutral
wrappers instead of putting two signal nodes side by side.
"""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import InputError
from .html_graph import DomGraph, NodeEmbedder, parse_html
from .partition import SubGraph, group_of, partition
from .url_encoder import tokenize


@dataclass
class Sample:
    sample_id: str
    url: str
    label: int
    url_tokens: np.ndarray
    graph: DomGraph
    subgraphs: list[SubGraph]


@dataclass
class Dataset:
    samples: list[Sample] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i) -> Sample:
        return self.samples[i]

    @property
    def labels(self) -> list[int]:
        return [s.label for s in self.samples]

    def require_both_classes(self) -> None:
        present = set(self.labels)
        if present != {0, 1}:
            raise InputError(
                f"dataset must contain both classes, found labels {sorted(present)}"
            )


def load_manifest(path: str | Path) -> list[dict]:
    """Read and validate a JSONL manifest; error messages name the lines."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise InputError(f"cannot read manifest {path}: {e}") from None
    rows, problems, seen = [], [], {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as e:
            problems.append(f"line {lineno}: invalid JSON ({e.msg})")
            continue
        if not isinstance(row, dict):
            problems.append(f"line {lineno}: row must be an object")
            continue
        missing = [k for k in ("id", "url", "html_path", "label") if k not in row]
        if missing:
            problems.append(f"line {lineno}: missing field(s) {', '.join(missing)}")
            continue
        if row["label"] not in (0, 1):
            problems.append(
                f"line {lineno} (id {row['id']!r}): label must be 0 or 1, got {row['label']!r}"
            )
            continue
        if row["id"] in seen:
            problems.append(
                f"line {lineno}: duplicate id {row['id']!r} (first seen on line {seen[row['id']]})"
            )
            continue
        seen[row["id"]] = lineno
        rows.append(row)
    if problems:
        raise InputError("manifest validation failed:\n  " + "\n  ".join(problems))
    if not rows:
        raise InputError(f"manifest {path} contains no samples")
    return rows


def _parse_worker(html_bytes: bytes) -> dict:
    return parse_html(html_bytes).to_dict()


def ingest(
    manifest_path: str | Path,
    config: RunConfig,
    workers: int = 1,
    cache_dir: str | Path | None = None,
) -> tuple[Dataset, dict]:
    """Parse, bucket-hash and partition every manifest row eagerly.

    Returns the dataset plus per-sample parse statistics. Any number of
    per-sample failures (unreadable html, unparsable document) are collected
    and reported together. Parsing is a pure per-document function, so
    `workers > 1` fans it out across processes without changing any output.
    """
    manifest_path = Path(manifest_path)
    rows = load_manifest(manifest_path)
    base = manifest_path.parent
    cache = Path(cache_dir) if cache_dir else None
    if cache:
        cache.mkdir(parents=True, exist_ok=True)

    blobs: list[bytes | None] = []
    problems: list[str] = []
    for row in rows:
        target = base / row["html_path"]
        try:
            blob = target.read_bytes()
        except OSError as e:
            problems.append(f"id {row['id']!r}: cannot read {target}: {e}")
            blobs.append(None)
            continue
        if not blob.strip():
            # The parser's only hard failure; rejecting here keeps the worker
            # pool free of per-item exceptions.
            problems.append(f"id {row['id']!r}: {target} is empty")
            blobs.append(None)
            continue
        blobs.append(blob)

    graphs: list[DomGraph | None] = [None] * len(rows)
    pending: list[int] = []
    for i, blob in enumerate(blobs):
        if blob is None:
            continue
        if cache:
            key = hashlib.sha256(blob).hexdigest()
            hit = cache / f"{key}.json"
            if hit.exists():
                graphs[i] = DomGraph.from_dict(json.loads(hit.read_text()))
                continue
        pending.append(i)

    def store(i: int, payload: dict) -> None:
        graphs[i] = DomGraph.from_dict(payload)
        if cache:
            key = hashlib.sha256(blobs[i]).hexdigest()
            (cache / f"{key}.json").write_text(json.dumps(payload, sort_keys=True))

    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, payload in zip(
                pending, pool.map(_parse_worker, [blobs[i] for i in pending], chunksize=8)
            ):
                store(i, payload)
    else:
        for i in pending:
            try:
                store(i, _parse_worker(blobs[i]))
            except InputError as e:
                problems.append(f"id {rows[i]['id']!r}: {e}")

    if problems:
        raise InputError("ingest failed:\n  " + "\n  ".join(problems))

    # Used only for its bucket hashing; the throwaway 1-wide table is never read.
    embedder_probe = NodeEmbedder(
        np.random.default_rng(0), num_buckets=config.graph.num_buckets, dim=1
    )
    samples, per_sample = [], []
    for row, graph in zip(rows, graphs):
        # Cache bucket ids now; feature rows are model-owned and recomputed
        # from these ids at every round.
        graph.node_token_ids = [embedder_probe.token_buckets(n) for n in graph.nodes]
        subgraphs = partition(graph, config.partition.num_groups)
        samples.append(
            Sample(
                sample_id=row["id"],
                url=row["url"],
                label=int(row["label"]),
                url_tokens=tokenize(row["url"], max_len=config.url.max_len),
                graph=graph,
                subgraphs=subgraphs,
            )
        )
        per_sample.append(
            {
                "id": row["id"],
                "nodes": graph.num_nodes,
                "edges": len(graph.edges),
                "nonempty_groups": sum(1 for sg in subgraphs if sg.num_nodes > 0),
            }
        )
    labels = [s.label for s in samples]
    stats = {
        "num_samples": len(samples),
        "num_malicious": sum(labels),
        "num_benign": len(labels) - sum(labels),
        "mean_nodes": float(np.mean([p["nodes"] for p in per_sample])),
        "mean_edges": float(np.mean([p["edges"] for p in per_sample])),
        "per_sample": per_sample,
    }
    return Dataset(samples), stats


def prepare_sample(
    url: str,
    html: bytes | str,
    config: RunConfig,
    sample_id: str = "sample",
    label: int = 0,
) -> Sample:
    """Parse and featurize one document for direct prediction.

    The label field tags dataset rows; prediction callers leave the default
    and ignore it.
    """
    graph = parse_html(html)
    probe = NodeEmbedder(
        np.random.default_rng(0), num_buckets=config.graph.num_buckets, dim=1
    )
    graph.node_token_ids = [probe.token_buckets(n) for n in graph.nodes]
    return Sample(
        sample_id=sample_id,
        url=url,
        label=int(label),
        url_tokens=tokenize(url, max_len=config.url.max_len),
        graph=graph,
        subgraphs=partition(graph, config.partition.num_groups),
    )


def fold_assignments(num_samples: int, folds: int, seed: int) -> np.ndarray:
    """Balanced fold ids, an exact partition, stable under (n, folds, seed)."""
    if folds < 2 or folds > num_samples:
        raise InputError(f"folds must be in [2, {num_samples}], got {folds}")
    out = np.empty(num_samples, dtype=np.int64)
    perm = np.random.default_rng(seed).permutation(num_samples)
    for pos, idx in enumerate(perm):
        out[idx] = pos % folds
    return out


# --- synthetic corpus -------------------------------------------------------

_WORDS = (
    "report update garden coffee ticket window stream letter market bridge "
    "silver planet quiet yellow branch record folder summer winter orange "
    "copper meadow harbor sketch violet timber carpet museum granite lantern "
    "saddle willow velvet anchor barrel candle drawer engine fabric goblet"
).split()

_BRANDS = ("securebank", "paynow", "webmail", "cloudbox")

# Unofficial-but-honest brand satellites (fan pages, reviews, status mirrors)
# versus the affixes a lure would pick. Same "brand-word" shape either way.
_BENIGN_AFFIXES = ("reviews", "forum", "tips", "status", "news", "fans", "guide", "blog")
_PHISH_AFFIXES = ("verify", "secure", "alert", "login", "update", "support", "id", "check")

_STD_TLDS = ("com", "net", "org")
_CHEAP_TLDS = ("top", "win", "icu", "click")

_LEET = {"o": "0", "e": "3", "i": "1", "l": "1", "a": "4", "s": "5"}

# Fixed signature strings: identical across every malicious document.
_EVIL_ACTION = "http://update-center.win/collect.php"
_OBFUSCATED_JS = "var _0x=['Y3JlZHM','c3RlYWw='];eval(atob(_0x[0]+_0x[1]))"

_VOID_TAGS = frozenset({"meta", "link", "img", "input", "br", "hr"})


@dataclass
class _El:
    tag: str
    attrs: dict = field(default_factory=dict)
    text: str = ""
    children: list = field(default_factory=list)

    def render(self, out: list) -> None:
        attrs = "".join(f' {k}="{v}"' for k, v in self.attrs.items())
        out.append(f"<{self.tag}{attrs}>")
        if self.tag in _VOID_TAGS:
            return
        if self.text:
            out.append(self.text)
        for child in self.children:
            child.render(out)
        out.append(f"</{self.tag}>")


def _words(rng, low, high) -> str:
    k = int(rng.integers(low, high + 1))
    return " ".join(rng.choice(_WORDS) for _ in range(k))


def _leet(rng, word: str) -> str:
    """Digit-substituted spelling with at least one character changed."""
    slots = [i for i, ch in enumerate(word) if ch in _LEET]
    if not slots:
        return word + "24"
    chars = list(word)
    hit = False
    for i in slots:
        if rng.random() < 0.5:
            chars[i] = _LEET[chars[i]]
            hit = True
    if not hit:
        i = slots[int(rng.integers(len(slots)))]
        chars[i] = _LEET[chars[i]]
    return "".join(chars)


def _url_path(rng, accountish: float) -> str:
    if rng.random() < accountish:
        stem = rng.choice(("login", "signin", "account/verify", "session/renew"))
        return f"/{stem}?session={int(rng.integers(10**6, 10**7))}"
    return f"/{rng.choice(_WORDS)}/{rng.choice(_WORDS)}"


def _benign_url(rng) -> str:
    # Every surface feature here (digit spellings, brand stems, cheap TLDs,
    # http, login-looking paths) also occurs benign, at a lower rate, so no
    # single URL cue is enough to condemn a page by itself.
    roll = rng.random()
    if roll < 0.40:
        host = f"{rng.choice(_WORDS)}-{rng.choice(_WORDS)}"
    elif roll < 0.55:
        brand = rng.choice(_BRANDS)
        if rng.random() < 0.4:
            host = brand
        else:
            stem = _leet(rng, brand) if rng.random() < 0.3 else brand
            host = f"{stem}-{rng.choice(_BENIGN_AFFIXES)}"
    elif roll < 0.80:
        host = _leet(rng, str(rng.choice(_WORDS)))
    else:
        host = f"{rng.choice(_WORDS)}{rng.choice(('24', '365', '4you', '2go'))}"
    tld = rng.choice(_CHEAP_TLDS) if rng.random() < 0.35 else rng.choice(_STD_TLDS)
    scheme = "http" if rng.random() < 0.35 else "https"
    return f"{scheme}://{host}.{tld}{_url_path(rng, 0.40)}"


def _malicious_url(rng) -> str:
    if rng.random() < 0.35:
        # Deliberately unremarkable: some phishing hides behind a clean URL,
        # keeping the URL modality ambiguous on its own.
        return _benign_url(rng)
    brand = rng.choice(_BRANDS)
    if rng.random() < 0.5:
        host = _leet(rng, brand)
    else:
        stem = _leet(rng, brand) if rng.random() < 0.3 else brand
        host = f"{stem}-{rng.choice(_PHISH_AFFIXES)}"
    tld = rng.choice(_CHEAP_TLDS) if rng.random() < 0.45 else rng.choice(_STD_TLDS)
    scheme = "http" if rng.random() < 0.45 else "https"
    return f"{scheme}://{host}.{tld}{_url_path(rng, 0.50)}"


def _benign_form(rng) -> _El:
    return _El("form", {"action": "/search", "method": "get"}, children=[
        _El("input", {"type": "text", "name": "q"}),
        _El("input", {"type": "submit"}),
    ])


def _section(rng) -> _El:
    items = [
        _El("li", children=[_El("a", {"href": f"/{rng.choice(_WORDS)}"}, text=_words(rng, 1, 3))])
        if rng.random() < 0.5
        else _El("li", text=_words(rng, 2, 5))
        for _ in range(int(rng.integers(4, 9)))
    ]
    block = _El("div", {"class": "section"}, children=[
        _El("h2", text=_words(rng, 1, 3)),
        _El("p", text=_words(rng, 8, 18)),
        _El("ul", children=items),
    ])
    if rng.random() < 0.5:
        block.children.append(_El("div", {"class": "row"}, children=[
            _El("span", {"class": "w"}, text=_words(rng, 1, 2))
            for _ in range(int(rng.integers(3, 7)))
        ]))
    if rng.random() < 0.3:
        block.children.append(_El("img", {"src": f"/{rng.choice(_WORDS)}.png", "alt": _words(rng, 1, 2)}))
    return block


# Keeps every five-node plant under 5% of the document.
_MIN_NODES = 110


def _skeleton(rng) -> _El:
    head = _El("head", children=[
        _El("title", text=_words(rng, 2, 4)),
        _El("meta", {"charset": "utf-8"}),
        _El("link", {"rel": "stylesheet", "href": "/site.css"}),
    ])
    header = _El("div", {"class": "header"}, children=[
        _El("h1", text=_words(rng, 1, 3)),
        _El("div", {"class": "nav"}, children=[
            _El("a", {"href": f"/{rng.choice(_WORDS)}"}, text=_words(rng, 1, 2))
            for _ in range(int(rng.integers(3, 6)))
        ]),
    ])
    main = _El("div", {"class": "content"}, children=[
        _section(rng) for _ in range(int(rng.integers(3, 6)))
    ])
    if rng.random() < 0.4:
        main.children.append(_benign_form(rng))
    footer = _El("div", {"class": "footer"}, children=[
        _El("p", text=_words(rng, 4, 8)),
        *[
            _El("a", {"href": f"/{rng.choice(_WORDS)}"}, text=_words(rng, 1, 2))
            for _ in range(int(rng.integers(1, 4)))
        ],
    ])
    body = _El("body", children=[header, main, footer])
    root = _El("html", children=[head, body])
    while _count_nodes(root) < _MIN_NODES:
        main.children.append(_section(rng))
    return root


def _count_nodes(el: _El) -> int:
    return 1 + sum(_count_nodes(c) for c in el.children)


def _iter_paths(el: _El, path: str = "0"):
    yield path, el
    for i, child in enumerate(el.children):
        yield from _iter_paths(child, f"{path}/{i}")


def _make_cluster(script_first: bool) -> tuple[_El, list[str]]:
    """The planted subtree plus its signal paths relative to the div at {Q}."""
    form = _El("form", {"action": _EVIL_ACTION, "method": "post"}, children=[
        _El("input", {"type": "password", "name": "passwd"}),
    ])
    holder = _El("span", children=[_El("script", text=_OBFUSCATED_JS)])
    div = _El("div", {"style": "display:none"})
    if script_first:
        div.children = [holder, form]
        rel = ["{Q}", "{Q}/1", "{Q}/1/0", "{Q}/0/0"]
    else:
        div.children = [form, holder]
        rel = ["{Q}", "{Q}/0", "{Q}/0/0", "{Q}/1/0"]
    return div, rel


def _find_attachment(root: _El, num_groups: int, rng) -> tuple[_El, int, bool, int] | None:
    """(parent, pad count, script_first, group) making all signal paths one group."""
    containers = [
        (path, el)
        for path, el in _iter_paths(root)
        if el.tag == "div" and path.startswith("0/1")
    ]
    hits = []
    for path, el in containers:
        base = len(el.children)
        for pad in range(10):
            q = f"{path}/{base + pad}"
            for script_first in (False, True):
                _, rel = _make_cluster(script_first)
                groups = {group_of(r.format(Q=q), num_groups) for r in rel}
                if len(groups) == 1:
                    hits.append((el, pad, script_first, groups.pop()))
    if not hits:
        return None
    return hits[int(rng.integers(0, len(hits)))]


def _render_doc(root: _El) -> str:
    out: list = []
    root.render(out)
    return "".join(out)


def make_synthetic(
    out_dir: str | Path,
    n: int,
    malicious_fraction: float = 0.5,
    seed: int = 0,
    num_groups: int = 5,
) -> Path:
    """Write n samples under out_dir; returns the manifest path.

    Alongside the manifest, plants.jsonl records each malicious document's
    signal group and node paths as localization ground truth.
    """
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    if not 0.0 <= malicious_fraction <= 1.0:
        raise InputError(f"malicious_fraction must be in [0, 1], got {malicious_fraction}")
    out_dir = Path(out_dir)
    (out_dir / "html").mkdir(parents=True, exist_ok=True)

    num_mal = int(round(n * malicious_fraction))
    order_rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC0)))
    labels = np.zeros(n, dtype=np.int64)
    labels[order_rng.permutation(n)[:num_mal]] = 1

    manifest_rows, plant_rows = [], []
    for i in range(n):
        sample_id = f"s{i:04d}"
        label = int(labels[i])
        for attempt in range(32):
            rng = np.random.default_rng(np.random.SeedSequence((seed, i, attempt)))
            root = _skeleton(rng)
            if label == 0:
                url = _benign_url(rng)
                plant = None
                break
            found = _find_attachment(root, num_groups, rng)
            if found is None:
                continue  # regenerate the skeleton and search again
            parent, pad, script_first, group = found
            parent.children.extend(
                _El("span", {"class": "w"}) for _ in range(pad)
            )
            cluster, rel = _make_cluster(script_first)
            parent.children.append(cluster)
            q = next(p for p, el in _iter_paths(root) if el is cluster)
            signal_paths = [r.format(Q=q) for r in rel]
            url = _malicious_url(rng)
            plant = {"id": sample_id, "group_id": group, "node_ids": signal_paths}
            break
        else:
            raise InputError(f"could not place a cluster for sample {sample_id}")

        html = _render_doc(root)
        _check_rendering(html, plant, num_groups, sample_id)
        (out_dir / "html" / f"{sample_id}.html").write_text(html)
        manifest_rows.append(
            {"id": sample_id, "url": url, "html_path": f"html/{sample_id}.html", "label": label}
        )
        if plant:
            plant_rows.append(plant)

    manifest = out_dir / "manifest.jsonl"
    manifest.write_text("".join(json.dumps(r) + "\n" for r in manifest_rows))
    (out_dir / "plants.jsonl").write_text("".join(json.dumps(r) + "\n" for r in plant_rows))
    return manifest


def _check_rendering(html: str, plant: dict | None, num_groups: int, sample_id: str) -> None:
    """The emitted markup must parse back to exactly the predicted paths."""
    graph = parse_html(html)
    if plant is None:
        return
    by_id = {node.node_id: node for node in graph.nodes}
    # Both layouts list signal paths in the same role order.
    for path, tag in zip(plant["node_ids"], ("div", "form", "input", "script")):
        node = by_id.get(path)
        if node is None:
            raise InputError(f"sample {sample_id}: planted path {path} missing after parse")
        if node.tag != tag:
            raise InputError(
                f"sample {sample_id}: planted path {path} parsed as <{node.tag}>, expected <{tag}>"
            )
        if group_of(path, num_groups) != plant["group_id"]:
            raise InputError(f"sample {sample_id}: planted path {path} left its group")


def load_plants(manifest_path: str | Path) -> dict[str, dict]:
    """Localization ground truth keyed by sample id; empty if absent."""
    path = Path(manifest_path).parent / "plants.jsonl"
    if not path.exists():
        return {}
    out = {}
    for line in path.read_text().splitlines():
        if line.strip():
            row = json.loads(line)
            out[row["id"]] = row
    return out
