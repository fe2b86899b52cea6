"""System acceptance gates, one printed verdict line per criterion.

Each test checks one falsifiable claim about the assembled detector and
records a single [PASS]/[FAIL] line; conftest reprints the collected lines
after the run. The planted-corpus criteria (6-9) share one full-scale
training run through the module fixture; everything else is small and fast.
"""
import inspect
import json
import subprocess
import sys
import zlib
from pathlib import Path
from time import perf_counter
from types import SimpleNamespace

import numpy as np
import pytest

from phishdom import data, metrics
from phishdom.config import RunConfig
from phishdom.graph_encoder import build_batch
from phishdom.html_graph import parse_html
from phishdom.model import Detector
from phishdom.nn import Tensor, gradcheck, no_grad, ops
from phishdom.partition import coverage_probability, group_of, partition, partition_report, sample_subgraphs
from phishdom.training import evaluate, perturb_eval, train, write_eval_artifacts
from phishdom.url_encoder import PyramidFuser
from phishdom.voting import localize, vote

from gradcheck_cases import CASES
from metrics_oracle import oracle_pr_auc, oracle_roc_auc, oracle_scalars, oracle_tpr_at_fpr
from partition_runner import GROUP_LADDER
from pyramid_oracle import straight_line_pyramid

CRITERION_LINES: list[str] = []

SMALL = {
    "seed": 11,
    "url": {"dim": 16, "num_layers": 1, "max_len": 60, "kernel": 3, "dilations": [1], "pool_sizes": [1]},
    "graph": {"feature_dim": 12, "num_buckets": 128, "dim": 10, "num_layers": 1},
    "fusion": {"dim": 12, "depth": 1, "ffn_multiplier": 2},
    "train": {"epochs": 1, "batch_size": 4},
}


def _verdict(num: int, ok: bool, detail: str) -> None:
    line = f"criterion {num:2d} [{'PASS' if ok else 'FAIL'}]: {detail}"
    CRITERION_LINES.append(line)
    print(line, flush=True)
    assert ok, line


# --- criterion 1: analytic gradients ----------------------------------------

def test_criterion_01_gradients_match_finite_differences():
    t0 = perf_counter()
    public = {
        name
        for name, obj in vars(ops).items()
        if inspect.isfunction(obj) and not name.startswith("_")
    }
    to_cover = public - {"set_finite_checks"}
    covered = {
        op
        for op in to_cover
        for case_name, _ in CASES
        if case_name == op or case_name.startswith(op + "_")
    }
    uncovered = to_cover - covered

    worst = 0.0
    failures = []
    for name, factory in CASES:
        rng = np.random.default_rng(zlib.crc32(name.encode()))
        for _ in range(20):
            f, inputs = factory(rng)
            err = gradcheck(f, inputs, rng)
            worst = max(worst, err)
            if err > 1e-4:
                failures.append((name, err))
                break
    elapsed = perf_counter() - t0
    ok = not uncovered and not failures and elapsed < 60.0
    _verdict(
        1,
        ok,
        f"{len(CASES)} op cases x 20 instances, worst rel err {worst:.1e}, "
        f"{elapsed:.1f}s"
        + (f"; uncovered ops: {sorted(uncovered)}" if uncovered else "")
        + (f"; failing: {failures}" if failures else ""),
    )


# --- criterion 2: partition laws --------------------------------------------

_TAGS = ["div", "p", "span", "ul", "li", "a", "section", "table", "tr", "td", "form", "h1"]
_VOID = ["input", "img", "br"]


def _random_element(rng, budget: list, depth: int) -> str:
    budget[0] -= 1
    if rng.random() < 0.15:
        tag = _VOID[rng.integers(len(_VOID))]
        return f"<{tag}>"
    tag = _TAGS[rng.integers(len(_TAGS))]
    attrs = ""
    if rng.random() < 0.3:
        attrs += f' class="c{int(rng.integers(10))}"'
    if rng.random() < 0.2:
        attrs += f' id="n{int(rng.integers(1000))}"'
    text = f"t{int(rng.integers(100))}" if rng.random() < 0.5 else ""
    children = []
    while budget[0] > 0 and depth < 6 and rng.random() < 0.65:
        children.append(_random_element(rng, budget, depth + 1))
    return f"<{tag}{attrs}>{text}{''.join(children)}</{tag}>"


def _random_documents(n: int, seed: int) -> list[str]:
    rng = np.random.default_rng(seed)
    docs = [
        "<html></html>",
        "<html><body>" + "<div>" * 45 + "x" + "</div>" * 45 + "</body></html>",
        "<html><body>" + "<p>s</p>" * 60 + "</body></html>",
    ]
    while len(docs) < n:
        budget = [int(rng.integers(1, 120))]
        docs.append(f"<html><body>{_random_element(rng, budget, 0)}</body></html>")
    return docs


def _check_partition_laws(graph, num_groups: int) -> None:
    subgraphs = partition(graph, num_groups)
    assert [sg.group_id for sg in subgraphs] == list(range(1, num_groups + 1))

    all_ids = [node.node_id for node in graph.nodes]
    assert len(set(all_ids)) == graph.num_nodes
    seen: set[str] = set()
    for sg in subgraphs:
        ids = set(sg.node_ids)
        assert len(ids) == sg.num_nodes, "duplicate node in group"
        assert not ids & seen, "groups overlap"
        seen |= ids
        for nid in sg.node_ids:
            assert group_of(nid, num_groups) == sg.group_id
    assert seen == set(all_ids), "groups do not cover the graph"

    id_of = {node.dfs_index: node.node_id for node in graph.nodes}
    gid_of = {nid: group_of(nid, num_groups) for nid in all_ids}
    for sg in subgraphs:
        actual = {(sg.node_ids[a], sg.node_ids[b]) for a, b in sg.edges}
        expected = {
            (id_of[p], id_of[c])
            for p, c in graph.edges
            if gid_of[id_of[p]] == sg.group_id and gid_of[id_of[c]] == sg.group_id
        }
        assert actual == expected, "group edges are not the induced edges"


def test_criterion_02_partition_laws_and_process_stability(tmp_path):
    docs = _random_documents(200, seed=20260822)
    doc_dir = tmp_path / "docs"
    doc_dir.mkdir()
    for i, doc in enumerate(docs):
        (doc_dir / f"doc_{i:03d}.html").write_text(doc)

    reports = {}
    for i, path in enumerate(sorted(doc_dir.glob("*.html"))):
        k = GROUP_LADDER[i % len(GROUP_LADDER)]
        graph = parse_html(path.read_bytes())
        _check_partition_laws(graph, k)
        assert partition_report(graph, k) == partition_report(graph, k)
        reports[path.name] = partition_report(graph, k)
    in_process = json.dumps(reports, sort_keys=True)

    runner = Path(__file__).parent / "partition_runner.py"
    outs = [
        subprocess.run(
            [sys.executable, str(runner), str(doc_dir)],
            capture_output=True, check=True,
        ).stdout
        for _ in range(2)
    ]
    stable = outs[0] == outs[1] and outs[0].decode() == in_process
    _verdict(
        2,
        stable,
        f"200 documents, group counts {GROUP_LADDER}: disjoint cover, induced "
        f"edges only, dumps byte-identical across two processes",
    )


# --- criterion 3: coverage probability --------------------------------------

def test_criterion_03_coverage_probability_exact_and_sampled():
    exact = coverage_probability(5, 4, 5, 1)
    exact_ok = exact == (0.8, 0.00032)

    subgraphs = partition(parse_html("<html><body>" + "<p>x</p>" * 40 + "</body></html>"), 5)
    assert all(sg.num_nodes > 0 for sg in subgraphs)
    rng = np.random.default_rng(20260822)
    n = 100_000
    first_round_hits = 0
    all_miss = 0
    for _ in range(n):
        missed_every_round = True
        for round_idx in range(5):
            chosen = sample_subgraphs(subgraphs, 4, rng)
            hit = any(sg.group_id == 1 for sg in chosen)
            if round_idx == 0:
                first_round_hits += hit
            missed_every_round &= not hit
        all_miss += missed_every_round

    freq_hit = first_round_hits / n
    freq_miss = all_miss / n
    sigma_hit = (0.8 * 0.2 / n) ** 0.5
    sigma_miss = (0.00032 * (1 - 0.00032) / n) ** 0.5
    mc_ok = abs(freq_hit - 0.8) <= 3 * sigma_hit and abs(freq_miss - 0.00032) <= 3 * sigma_miss
    _verdict(
        3,
        exact_ok and mc_ok,
        f"exact {exact}, sampled hit {freq_hit:.4f} (target 0.8 +- {3 * sigma_hit:.4f}), "
        f"sampled all-miss {freq_miss:.5f} (target 0.00032 +- {3 * sigma_miss:.5f})",
    )


# --- criterion 4: voting agrees with a scripted replay ----------------------

class _ScriptedModel:
    """Returns a fixed (pred, prob) sequence regardless of the input round."""

    def __init__(self, preds, probs):
        self.preds = list(preds)
        self.probs = list(probs)
        self.calls = 0

    def classify_round(self, url_tokens, chosen):
        i = self.calls
        self.calls += 1
        return SimpleNamespace(pred=self.preds[i], malicious_prob=self.probs[i])


def _replay(preds, probs, threshold=2):
    malicious = [p for bit, p in zip(preds, probs) if bit == 1]
    benign = [p for bit, p in zip(preds, probs) if bit == 0]
    if len(malicious) >= threshold:
        return 1, max(malicious)
    return 0, min(benign if benign else probs)


def test_criterion_04_voting_matches_independent_replay():
    subgraphs = partition(parse_html("<html><body>" + "<li>x</li>" * 30 + "</body></html>"), 5)
    agree = 0
    for pattern in range(32):
        preds = [(pattern >> i) & 1 for i in range(5)]
        probs = [0.6 + 0.05 * i if bit else 0.4 - 0.05 * i for i, bit in enumerate(preds)]
        model = _ScriptedModel(preds, probs)
        outcome = vote(model, None, subgraphs, iter_num=4, iter_per=5, threshold=2, seed=pattern)
        verdict, score = _replay(preds, probs)
        agree += (
            model.calls == 5
            and outcome.verdict == verdict
            and outcome.score == score
            and [r.pred for r in outcome.rounds] == preds
        )
    _verdict(4, agree == 32, f"all 32 round-outcome patterns: {agree}/32 agree with the replay")


# --- criterion 5: metrics against the exact-rational oracle -----------------

def test_criterion_05_metrics_match_rational_oracle():
    labels = [1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 0, 1, 0, 0, 1, 0, 1, 0, 0, 1]
    scores = [0.9, 0.9, 0.8, 0.8, 0.8, 0.7, 0.6, 0.6, 0.5, 0.5,
              0.5, 0.5, 0.4, 0.4, 0.3, 0.3, 0.2, 0.2, 0.1, 0.05]
    preds = [1 if s > 0.5 else 0 for s in scores]
    report = metrics.compute(labels, scores)

    expected = oracle_scalars(labels, preds)
    expected["roc_auc"] = oracle_roc_auc(labels, scores)
    expected["pr_auc"] = oracle_pr_auc(labels, scores)
    got = {
        "accuracy": report.acc,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "mcc": report.mcc,
        "weighted_f1": report.weighted_f1,
        "roc_auc": report.roc_auc,
        "pr_auc": report.pr_auc,
    }
    gaps = {name: abs(got[name] - expected[name]) for name in expected}
    for name, level in metrics.TPR_AT_FPR_LEVELS:
        gaps[f"tpr@{name}"] = abs(
            report.tpr_at_fpr[name] - oracle_tpr_at_fpr(labels, scores, level)
        )
    worst = max(gaps.values())

    zero_rule = (
        metrics.mcc([1, 0], [1, 1]) == 0.0
        and metrics.mcc([1, 0], [0, 0]) == 0.0
        and metrics.mcc([1, 1], [1, 0]) == 0.0
        and metrics.mcc([0, 0], [0, 1]) == 0.0
    )
    _verdict(
        5,
        worst <= 1e-9 and zero_rule,
        f"{len(gaps)} fields vs exact-rational oracle, worst gap {worst:.1e}; "
        f"zero-denominator MCC returns 0: {zero_rule}",
    )


# --- criteria 6-9: one full-scale planted-corpus run ------------------------

@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("planted")
    config = RunConfig()
    t0 = perf_counter()
    train_manifest = data.make_synthetic(root / "train", n=400, seed=1)
    test_manifest = data.make_synthetic(root / "test", n=100, seed=2)
    train_set, _ = data.ingest(train_manifest, config)
    test_set, _ = data.ingest(test_manifest, config)
    model, _ = train(config, train_set)
    clean = evaluate(model, test_set, config, use_voting=True, eval_seed=0)
    elapsed = perf_counter() - t0
    return {
        "config": config,
        "model": model,
        "test_set": test_set,
        "test_manifest": test_manifest,
        "clean": clean,
        "elapsed": elapsed,
    }


def test_criterion_06_planted_corpus_detection(full_run):
    report = full_run["clean"].report
    auc = report.roc_auc
    tpr = report.tpr_at_fpr["1e-1"]
    minutes = full_run["elapsed"] / 60.0
    ok = auc >= 0.95 and tpr >= 0.9 and minutes <= 15.0
    _verdict(
        6,
        ok,
        f"400 train / 100 test, 10 epochs: ROC-AUC {auc:.4f} (>= 0.95), "
        f"TPR@FPR=0.1 {tpr:.4f} (>= 0.9), {minutes:.1f} min (<= 15)",
    )


def test_criterion_07_voting_no_worse_at_low_fpr(full_run):
    single = evaluate(
        full_run["model"], full_run["test_set"], full_run["config"],
        use_voting=False, eval_seed=0,
    )
    voted_tpr = full_run["clean"].report.tpr_at_fpr["1e-2"]
    single_tpr = single.report.tpr_at_fpr["1e-2"]
    _verdict(
        7,
        voted_tpr >= single_tpr,
        f"TPR@FPR=0.01 voting {voted_tpr:.4f} >= single round {single_tpr:.4f}",
    )


def test_criterion_08_localization_finds_planted_nodes(full_run):
    config = full_run["config"]
    model = full_run["model"]
    plants = data.load_plants(full_run["test_manifest"])
    malicious = [s for s in full_run["test_set"] if s.label == 1]
    assert malicious and all(s.sample_id in plants for s in malicious)

    trials = successes = 0
    for seed in range(100):
        for sample in malicious:
            trials += 1
            outcome = vote(
                model, sample.url_tokens, sample.subgraphs,
                iter_num=config.partition.iter_num,
                iter_per=config.partition.iter_per,
                threshold=config.partition.vote_threshold,
                seed=seed,
            )
            if outcome.verdict != 1:
                continue
            flagged = set(localize(outcome, sample.subgraphs).flagged_node_ids)
            successes += bool(flagged & set(plants[sample.sample_id]["node_ids"]))
    rate = successes / trials
    _verdict(
        8,
        rate >= 0.95,
        f"flagged region contains a planted node in {successes}/{trials} "
        f"(sample x seed) trials = {rate:.4f} (>= 0.95)",
    )


def test_criterion_09_edge_deletion_degrades_bounded(full_run):
    perturbed = perturb_eval(
        full_run["model"], full_run["test_set"], full_run["config"],
        p=0.5, seed=0, eval_seed=0,
    )
    clean_acc = full_run["clean"].report.acc
    drop = clean_acc - perturbed.report.acc
    _verdict(
        9,
        drop <= 0.10,
        f"50% edge deletion: ACC {clean_acc:.4f} -> {perturbed.report.acc:.4f}, "
        f"degradation {drop:+.4f} (<= 0.10)",
    )


# --- criterion 10: bitwise reproducibility ----------------------------------

def test_criterion_10_training_runs_are_reproducible(tmp_path):
    config = RunConfig.from_dict({**SMALL, "seed": 13, "train": {"epochs": 2, "batch_size": 4}})
    outputs = []
    for run_name in ("a", "b"):
        run_dir = tmp_path / run_name
        manifest = data.make_synthetic(run_dir / "corpus", n=16, seed=5)
        dataset, _ = data.ingest(manifest, config)
        model, _ = train(config, dataset, out_dir=run_dir / "model")
        result = evaluate(model, dataset, config, eval_seed=3)
        write_eval_artifacts(run_dir / "out", result)
        outputs.append({
            "metrics": (run_dir / "out" / "eval_metrics.json").read_bytes(),
            "checkpoint": (run_dir / "model" / "detector.ckpt").read_bytes(),
        })
    same_metrics = outputs[0]["metrics"] == outputs[1]["metrics"]
    same_ckpt = outputs[0]["checkpoint"] == outputs[1]["checkpoint"]
    _verdict(
        10,
        same_metrics and same_ckpt,
        f"two train+eval runs: metrics JSON byte-identical {same_metrics}, "
        f"checkpoint byte-identical {same_ckpt}",
    )


# --- criterion 11: eval-mode batching is inert ------------------------------

def _token_lists(subgraphs):
    out = []
    for sg in subgraphs:
        if sg.num_nodes == 0:
            out.append(np.array([], dtype=np.int64))
        else:
            out.extend(sg.token_ids)
    return out


def test_criterion_11_subgraph_embedding_batch_invariant():
    config = RunConfig.from_dict(SMALL)
    detector = Detector(config)
    detector.eval()
    doc_a = "<html><body>" + "".join(f"<p id='a{i}'>alpha</p>" for i in range(18)) + "</body></html>"
    doc_b = "<html><body><form><input></form>" + "<div>beta</div>" * 14 + "</body></html>"
    own = data.prepare_sample("http://a.test/x", doc_a, config).subgraphs
    strangers = data.prepare_sample("http://b.test/y", doc_b, config).subgraphs

    worst = 0.0
    with no_grad():
        for position in (0, 2, len(strangers)):
            for target in own:
                alone = detector.graph_encoder.encode(
                    build_batch([target], detector.embedder.embed_token_lists(_token_lists([target])))
                ).data[0]
                packed = strangers[:position] + [target] + strangers[position:]
                together = detector.graph_encoder.encode(
                    build_batch(packed, detector.embedder.embed_token_lists(_token_lists(packed)))
                ).data[position]
                worst = max(worst, float(np.max(np.abs(alone - together))))
    _verdict(
        11,
        worst <= 1e-9,
        f"{3 * len(own)} co-batching arrangements: max embedding shift {worst:.1e} (<= 1e-9)",
    )


# --- criterion 12: pyramid fuser against a straight-line spelling -----------

def test_criterion_12_pyramid_matches_straight_line():
    rng = np.random.default_rng(77)
    worst = 0.0
    instances = 0
    for dim in (4, 5, 6):
        pyramid = PyramidFuser(np.random.default_rng(100 + dim), dim=dim)
        for _ in range(8):
            layers = int(rng.integers(1, 5))
            seq = int(rng.integers(1, 16))
            content = int(rng.integers(1, seq + 1))
            stack = rng.standard_normal((layers, seq, dim))
            with no_grad():
                out = pyramid(Tensor(stack), content_len=content).data
            ref = straight_line_pyramid(pyramid, stack, content)
            worst = max(worst, float(np.max(np.abs(out - ref))))
            instances += 1
    _verdict(
        12,
        worst <= 1e-12,
        f"{instances} random stacks across dims 4-6: max gap {worst:.1e} (<= 1e-12)",
    )
