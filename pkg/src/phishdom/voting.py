"""Biased multi-round voting over sampled subgraphs, plus region localization.

Each round draws `iter_num` of the document's groups and asks the model for a
verdict on that sample with the URL. The aggregate is biased toward catching
maliciousness: the document is flagged as soon as `vote_threshold` rounds say
malicious, regardless of how many say benign.

The reported document score is the malicious-class probability of the round
that decided the outcome: the most confident malicious round when flagged,
otherwise the least malicious benign round. When nothing is flagged and no
benign round exists (possible only when iter_per is below the threshold), the
least malicious round overall stands in.

Localization counts, per group, how many malicious rounds sampled it; groups
tied at the maximum count form the flagged region.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .partition import SubGraph, sample_subgraphs


@dataclass
class RoundRecord:
    group_ids: list[int]
    pred: int
    malicious_prob: float


@dataclass
class VoteOutcome:
    verdict: int
    score: float
    rounds: list[RoundRecord]
    threshold: int

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "score": self.score,
            "threshold": self.threshold,
            "rounds": [
                {"group_ids": r.group_ids, "pred": r.pred, "malicious_prob": r.malicious_prob}
                for r in self.rounds
            ],
        }


@dataclass
class LocalizationReport:
    ranked: list[tuple[int, int]]
    flagged_group_ids: list[int]
    flagged_node_ids: list[str]

    def to_dict(self) -> dict:
        return {
            "ranked": [[gid, count] for gid, count in self.ranked],
            "flagged_group_ids": self.flagged_group_ids,
            "flagged_node_ids": self.flagged_node_ids,
        }


def run_round(model, url_tokens, subgraphs: list[SubGraph], iter_num: int, rng: np.random.Generator) -> RoundRecord:
    chosen = sample_subgraphs(subgraphs, iter_num, rng)
    result = model.classify_round(url_tokens, chosen)
    return RoundRecord(
        group_ids=[sg.group_id for sg in chosen],
        pred=int(result.pred),
        malicious_prob=float(result.malicious_prob),
    )


def vote(
    model,
    url_tokens,
    subgraphs: list[SubGraph],
    iter_num: int,
    iter_per: int,
    threshold: int = 2,
    seed: int = 0,
) -> VoteOutcome:
    """Run iter_per independent rounds and aggregate with the biased rule."""
    if iter_per < 1:
        raise InputError(f"iter_per must be >= 1, got {iter_per}")
    if threshold < 1:
        raise InputError(f"vote threshold must be >= 1, got {threshold}")
    rng = np.random.default_rng(seed)
    rounds = [run_round(model, url_tokens, subgraphs, iter_num, rng) for _ in range(iter_per)]

    malicious = [r for r in rounds if r.pred == 1]
    benign = [r for r in rounds if r.pred == 0]
    if len(malicious) >= threshold:
        verdict = 1
        score = max(r.malicious_prob for r in malicious)
    else:
        verdict = 0
        pool = benign if benign else rounds
        score = min(r.malicious_prob for r in pool)
    return VoteOutcome(verdict=verdict, score=score, rounds=rounds, threshold=threshold)


def localize(outcome: VoteOutcome, subgraphs: list[SubGraph]) -> LocalizationReport:
    """Rank groups by malicious-round participation; only valid for verdict 1."""
    if outcome.verdict != 1:
        raise InputError("localization is only defined for a malicious verdict")
    counts: Counter[int] = Counter()
    for record in outcome.rounds:
        if record.pred == 1:
            counts.update(record.group_ids)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    top = ranked[0][1]
    flagged = [gid for gid, count in ranked if count == top]
    by_id = {sg.group_id: sg for sg in subgraphs}
    node_ids = [nid for gid in flagged for nid in by_id[gid].node_ids]
    return LocalizationReport(ranked=ranked, flagged_group_ids=flagged, flagged_node_ids=node_ids)


def single_round(model, url_tokens, subgraphs: list[SubGraph], iter_num: int, seed: int = 0) -> RoundRecord:
    """One uniform sample, no aggregation: the unvoted baseline."""
    return run_round(model, url_tokens, subgraphs, iter_num, np.random.default_rng(seed))
