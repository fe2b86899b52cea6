"""Command-line interface: corpus tooling, training, evaluation, prediction.

Every command resolves its configuration the same way: package defaults,
then an optional YAML file (--config), then any number of --set KEY=VALUE
overrides. Package errors exit with code 1; `predict` exits 3 on a
malicious verdict so shell pipelines can branch on it.
"""
from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import data as data_mod
from . import training as training_mod
from .config import RunConfig
from .errors import PhishdomError
from .html_graph import parse_html
from .partition import partition
from .voting import localize, vote

EXIT_MALICIOUS = 3


def _config_from(config_path: str | None, overrides: tuple[str, ...]) -> RunConfig:
    config = RunConfig.from_yaml(config_path) if config_path else RunConfig()
    if overrides:
        config = config.with_overrides(list(overrides))
    return config


def with_config(f):
    f = click.option(
        "--set",
        "overrides",
        multiple=True,
        metavar="KEY=VALUE",
        help="Override one config value (dotted key), e.g. --set train.epochs=3.",
    )(f)
    return click.option(
        "--config",
        "config_path",
        metavar="PATH",
        default=None,
        help="YAML config file; omitted sections keep package defaults.",
    )(f)


def guarded(f):
    """Map package and I/O errors to exit code 1 with a stderr diagnostic."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except (PhishdomError, OSError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(1)

    return wrapper


def _emit(payload: dict, out_path: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out_path:
        Path(out_path).write_text(text)
    else:
        click.echo(text, nl=False)


@click.group()
@click.version_option(package_name="phishdom")
def main() -> None:
    """Malicious URL detection from URL text plus page DOM structure."""


@main.command()
@click.argument("manifest")
@with_config
@click.option("--workers", default=1, show_default=True, help="Parallel parse processes.")
@click.option("--cache-dir", default=None, metavar="DIR", help="On-disk DOM graph cache.")
@click.option("--out", "out_path", default=None, metavar="PATH", help="Write stats JSON here instead of stdout.")
@guarded
def ingest(manifest, config_path, overrides, workers, cache_dir, out_path):
    """Parse and featurize every sample in a JSONL manifest."""
    config = _config_from(config_path, overrides)
    _, stats = data_mod.ingest(manifest, config, workers=workers, cache_dir=cache_dir)
    _emit(stats, out_path)


@main.command()
@click.argument("manifest")
@click.argument("out_dir")
@with_config
@click.option("--workers", default=1, show_default=True, help="Parallel parse processes.")
@click.option("--cache-dir", default=None, metavar="DIR", help="On-disk DOM graph cache.")
@guarded
def train(manifest, out_dir, config_path, overrides, workers, cache_dir):
    """Fit a detector and write checkpoint plus training history."""
    config = _config_from(config_path, overrides)
    dataset, _ = data_mod.ingest(manifest, config, workers=workers, cache_dir=cache_dir)

    def progress(stats):
        click.echo(
            f"epoch {stats.epoch}: loss {stats.loss:.4f} "
            f"acc {stats.accuracy:.4f} ({stats.seconds:.1f}s)"
        )

    training_mod.train(config, dataset, out_dir=out_dir, progress=progress)
    click.echo(f"checkpoint: {Path(out_dir) / training_mod.CHECKPOINT_NAME}")


def eval_options(f):
    f = click.option("--eval-seed", default=0, show_default=True, help="Root seed for round sampling.")(f)
    f = click.option(
        "--single-round",
        "single",
        is_flag=True,
        help="Score one uniform round per sample instead of the full vote.",
    )(f)
    f = click.option("--workers", default=1, show_default=True, help="Parallel parse processes.")(f)
    return f


@main.command(name="eval")
@click.argument("manifest")
@click.argument("checkpoint")
@click.argument("out_dir")
@with_config
@eval_options
@click.option("--prefix", default="eval", show_default=True, help="Artifact filename prefix.")
@guarded
def eval_cmd(manifest, checkpoint, out_dir, config_path, overrides, workers, single, eval_seed, prefix):
    """Evaluate a checkpoint on a labeled manifest and write artifacts."""
    config = _config_from(config_path, overrides)
    dataset, _ = data_mod.ingest(manifest, config, workers=workers)
    model = training_mod.load_detector(checkpoint, config)
    result = training_mod.evaluate(
        model, dataset, config, use_voting=not single, eval_seed=eval_seed
    )
    training_mod.write_eval_artifacts(out_dir, result, prefix=prefix)
    _emit(result.report.to_dict(), None)


@main.command(name="perturb-eval")
@click.argument("manifest")
@click.argument("checkpoint")
@click.argument("out_dir")
@with_config
@eval_options
@click.option("--p", default=0.5, show_default=True, help="Per-edge deletion probability.")
@click.option("--seed", default=0, show_default=True, help="Seed for the edge deletions.")
@click.option("--prefix", default="robust", show_default=True, help="Artifact filename prefix.")
@guarded
def perturb_eval_cmd(
    manifest, checkpoint, out_dir, config_path, overrides, workers, single, eval_seed, p, seed, prefix
):
    """Evaluate on edge-deleted copies of every document."""
    config = _config_from(config_path, overrides)
    dataset, _ = data_mod.ingest(manifest, config, workers=workers)
    model = training_mod.load_detector(checkpoint, config)
    result = training_mod.perturb_eval(
        model, dataset, config, p=p, seed=seed, use_voting=not single, eval_seed=eval_seed
    )
    training_mod.write_eval_artifacts(out_dir, result, prefix=prefix)
    _emit(result.report.to_dict(), None)


@main.command()
@click.argument("checkpoint")
@click.argument("url")
@click.argument("html_path")
@with_config
@click.option("--localize", "want_localization", is_flag=True, help="Report suspicious regions on a malicious verdict.")
@click.option("--eval-seed", default=0, show_default=True, help="Root seed for round sampling.")
@guarded
def predict(checkpoint, url, html_path, config_path, overrides, want_localization, eval_seed):
    """Classify one URL + document; exits 3 when the verdict is malicious."""
    config = _config_from(config_path, overrides)
    model = training_mod.load_detector(checkpoint, config)
    sample = data_mod.prepare_sample(url, Path(html_path).read_bytes(), config)
    outcome = vote(
        model,
        sample.url_tokens,
        sample.subgraphs,
        iter_num=config.partition.iter_num,
        iter_per=config.partition.iter_per,
        threshold=config.partition.vote_threshold,
        seed=eval_seed,
    )
    payload = {
        "verdict": "malicious" if outcome.verdict == 1 else "benign",
        "score": outcome.score,
        "rounds": outcome.to_dict()["rounds"],
    }
    if want_localization and outcome.verdict == 1:
        payload["localization"] = localize(outcome, sample.subgraphs).to_dict()
    _emit(payload, None)
    if outcome.verdict == 1:
        sys.exit(EXIT_MALICIOUS)


@main.command()
@click.argument("out_dir")
@click.option("--n", required=True, type=int, help="Number of documents to generate.")
@click.option("--malicious-fraction", default=0.5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--num-groups", default=5, show_default=True, help="Partition groups the plants must respect.")
@guarded
def synth(out_dir, n, malicious_fraction, seed, num_groups):
    """Generate a labeled synthetic corpus with planted malicious regions."""
    manifest = data_mod.make_synthetic(
        out_dir, n, malicious_fraction=malicious_fraction, seed=seed, num_groups=num_groups
    )
    click.echo(str(manifest))


@main.command(name="partition-dump")
@click.argument("html_path")
@with_config
@click.option("--out", "out_path", default=None, metavar="PATH", help="Write the JSON here instead of stdout.")
@guarded
def partition_dump(html_path, config_path, overrides, out_path):
    """Parse a document and dump its hash partition deterministically."""
    config = _config_from(config_path, overrides)
    graph = parse_html(Path(html_path).read_bytes())
    subgraphs = partition(graph, config.partition.num_groups)
    payload = {
        "num_groups": config.partition.num_groups,
        "num_nodes": graph.num_nodes,
        "groups": [
            {
                "group_id": sg.group_id,
                "node_ids": sg.node_ids,
                "edges": [[a, b] for a, b in sg.edges],
            }
            for sg in subgraphs
        ],
    }
    _emit(payload, out_path)


@main.command()
@click.argument("checkpoint")
@with_config
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@guarded
def serve(checkpoint, config_path, overrides, host, port):
    """Serve the detector over HTTP."""
    import uvicorn

    from .service import create_app

    config = _config_from(config_path, overrides)
    app = create_app(checkpoint, config)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
