"""Training loop, evaluation drivers, robustness runs, and artifact output.

Each training step scores a small batch of samples, one freshly sampled
voting-style round per sample (the per-round group draw is seeded by (master
seed, epoch, sample position), so a full run is a pure function of config and
data). The loss is cross-entropy of the round logits against the document
label; an optional symmetric InfoNCE term over the batch's URL/subgraph
vectors can be switched on to pull the two modalities together.

Evaluation runs either the full biased vote or a single round per sample; all
artifacts (metrics JSON, per-sample verdicts, curve points) serialize with
sorted keys so identical runs produce identical bytes.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .config import RunConfig
from .data import Dataset, Sample
from .errors import InputError
from .html_graph import perturb_edges
from .model import Detector
from .nn import ops
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.optim import Adam
from .partition import partition, sample_subgraphs
from .voting import single_round, vote

CHECKPOINT_NAME = "detector.ckpt"


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float
    seconds: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "loss": self.loss,
            "accuracy": self.accuracy,
            "seconds": round(self.seconds, 3),
        }


def _child_seed(*entropy: int) -> int:
    """Stable derived seed for one (run, item) slot."""
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def _contrastive_loss(url_vecs, html_vecs, temperature: float):
    """Symmetric InfoNCE on raw dot products; rows of each stack are pairs."""
    u = ops.concat(url_vecs, axis=0)
    h = ops.concat(html_vecs, axis=0)
    sims = ops.scale(ops.matmul(u, ops.permute(h, (1, 0))), 1.0 / temperature)
    targets = np.arange(u.shape[0])
    forward = ops.cross_entropy_logits(sims, targets)
    backward = ops.cross_entropy_logits(ops.permute(sims, (1, 0)), targets)
    return ops.scale(ops.add(forward, backward), 0.5)


def train(
    config: RunConfig,
    dataset: Dataset,
    out_dir: str | Path | None = None,
    progress=None,
) -> tuple[Detector, list[EpochStats]]:
    """Fit a fresh detector on the dataset; returns it plus per-epoch stats.

    With out_dir set, writes the checkpoint (tagged with the config hash) and
    a history.json training log there.
    """
    dataset.require_both_classes()
    model = Detector(config)
    model.train()
    params = [p for _, p in model.named_parameters()]
    opt = Adam(params, lr=config.train.lr, weight_decay=config.train.weight_decay)

    history: list[EpochStats] = []
    for epoch in range(config.train.epochs):
        started = time.monotonic()
        order = np.random.default_rng(
            np.random.SeedSequence((config.seed, 0xEC, epoch))
        ).permutation(len(dataset))
        total_loss, correct = 0.0, 0
        for start in range(0, len(order), config.train.batch_size):
            batch = [int(i) for i in order[start : start + config.train.batch_size]]
            items, labels = [], []
            for idx in batch:
                sample = dataset[idx]
                rng = np.random.default_rng(
                    np.random.SeedSequence((config.seed, epoch, idx))
                )
                chosen = sample_subgraphs(sample.subgraphs, config.partition.iter_num, rng)
                items.append((sample.url_tokens, chosen))
                labels.append(sample.label)
            # One packed forward per step: batch-norm statistics must span
            # the whole batch, not one document (see Detector.classify_batch).
            logit_rows, url_vecs, html_vecs = [], [], []
            for result, label in zip(model.classify_batch(items), labels):
                logit_rows.append(result.logits)
                url_vecs.append(result.url_vec)
                html_vecs.append(result.html_vec)
                correct += int(result.pred == label)
            logits = logit_rows[0] if len(logit_rows) == 1 else ops.concat(logit_rows, axis=0)
            loss = ops.cross_entropy_logits(logits, np.array(labels))
            if config.train.contrastive and len(batch) > 1:
                extra = _contrastive_loss(url_vecs, html_vecs, config.train.contrastive_temperature)
                loss = ops.add(loss, ops.scale(extra, config.train.contrastive_weight))
            opt.zero_grad()
            loss.backward()
            opt.step()
            total_loss += float(loss.data) * len(batch)
        stats = EpochStats(
            epoch=epoch,
            loss=total_loss / len(dataset),
            accuracy=correct / len(dataset),
            seconds=time.monotonic() - started,
        )
        history.append(stats)
        if progress:
            progress(stats)

    model.eval()
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out_dir / CHECKPOINT_NAME, model, config.hash())
        (out_dir / "history.json").write_text(
            json.dumps([h.to_dict() for h in history], indent=2, sort_keys=True) + "\n"
        )
    return model, history


def load_detector(checkpoint_path: str | Path, config: RunConfig) -> Detector:
    """Rebuild a detector from config and restore its checkpoint strictly."""
    model = Detector(config)
    load_checkpoint(checkpoint_path, model, config.hash())
    model.eval()
    return model


@dataclass
class EvalResult:
    report: metrics.MetricReport
    rows: list[dict]

    def to_dict(self) -> dict:
        return {"metrics": self.report.to_dict(), "per_sample": self.rows}


def evaluate(
    model: Detector,
    dataset: Dataset,
    config: RunConfig,
    use_voting: bool = True,
    eval_seed: int = 0,
) -> EvalResult:
    """Score every sample; voting mode runs the full biased aggregation."""
    if len(dataset) == 0:
        raise InputError("cannot evaluate an empty dataset")
    model.eval()
    rows = []
    for idx, sample in enumerate(dataset):
        seed = _child_seed(eval_seed, idx)
        if use_voting:
            outcome = vote(
                model,
                sample.url_tokens,
                sample.subgraphs,
                iter_num=config.partition.iter_num,
                iter_per=config.partition.iter_per,
                threshold=config.partition.vote_threshold,
                seed=seed,
            )
            pred, score = outcome.verdict, outcome.score
        else:
            record = single_round(
                model, sample.url_tokens, sample.subgraphs, config.partition.iter_num, seed=seed
            )
            pred, score = record.pred, record.malicious_prob
        rows.append(
            {"id": sample.sample_id, "label": sample.label, "pred": int(pred), "score": float(score)}
        )
    labels = [r["label"] for r in rows]
    scores = [r["score"] for r in rows]
    preds = [r["pred"] for r in rows]
    report = metrics.compute(labels, scores, preds=preds)
    return EvalResult(report=report, rows=rows)


def perturbed_dataset(dataset: Dataset, config: RunConfig, p: float, seed: int) -> Dataset:
    """Copy of the dataset with each document's edges deleted at rate p."""
    out = []
    for idx, sample in enumerate(dataset):
        graph = perturb_edges(sample.graph, p, seed=_child_seed(seed, 0xED, idx))
        out.append(
            Sample(
                sample_id=sample.sample_id,
                url=sample.url,
                label=sample.label,
                url_tokens=sample.url_tokens,
                graph=graph,
                subgraphs=partition(graph, config.partition.num_groups),
            )
        )
    return Dataset(out)


def perturb_eval(
    model: Detector,
    dataset: Dataset,
    config: RunConfig,
    p: float = 0.5,
    seed: int = 0,
    use_voting: bool = True,
    eval_seed: int = 0,
) -> EvalResult:
    """Evaluate on edge-deleted copies; p=0 reproduces evaluate exactly."""
    if not 0.0 <= p <= 1.0:
        raise InputError(f"deletion probability must be in [0, 1], got {p}")
    return evaluate(
        model, perturbed_dataset(dataset, config, p, seed), config, use_voting, eval_seed
    )


def write_eval_artifacts(out_dir: str | Path, result: EvalResult, prefix: str = "eval") -> dict:
    """Emit metrics JSON, per-sample CSV, and ROC/PR point CSVs; returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = [r["label"] for r in result.rows]
    scores = [r["score"] for r in result.rows]

    paths = {
        "metrics": out_dir / f"{prefix}_metrics.json",
        "per_sample": out_dir / f"{prefix}_per_sample.csv",
        "roc": out_dir / f"{prefix}_roc_points.csv",
        "pr": out_dir / f"{prefix}_pr_points.csv",
    }
    paths["metrics"].write_text(
        json.dumps(result.report.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    with paths["per_sample"].open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["id", "label", "pred", "score"])
        writer.writeheader()
        writer.writerows(result.rows)
    with paths["roc"].open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["fpr", "tpr", "threshold"])
        writer.writerows(metrics.roc_points(labels, scores))
    with paths["pr"].open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["recall", "precision", "threshold"])
        writer.writerows(metrics.pr_points(labels, scores))
    return {k: str(v) for k, v in paths.items()}
