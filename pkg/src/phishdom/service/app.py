"""HTTP wrapper around one trained detector.

The app owns a single model restored at startup; inference is read-only
(eval mode touches no buffers), so concurrent requests need no locking and
equal seeds give equal responses.
"""
from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import RunConfig
from ..data import prepare_sample
from ..errors import PhishdomError
from ..training import load_detector
from ..voting import localize, vote
from .schemas import (
    HealthResponse,
    InfoResponse,
    Localization,
    PredictRequest,
    PredictResponse,
    RoundInfo,
)


def create_app(checkpoint_path: str | Path, config: RunConfig) -> FastAPI:
    """Build the service around the checkpoint; config must match training."""
    model = load_detector(checkpoint_path, config)
    num_parameters = sum(p.data.size for _, p in model.named_parameters())
    app = FastAPI(title="phishdom", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok")

    @app.get("/info", response_model=InfoResponse)
    def info() -> InfoResponse:
        return InfoResponse(
            version=__version__,
            config_hash=config.hash(),
            num_parameters=num_parameters,
        )

    @app.post("/predict", response_model=PredictResponse)
    def predict(request: PredictRequest) -> PredictResponse:
        try:
            sample = prepare_sample(request.url, request.html, config)
            outcome = vote(
                model,
                sample.url_tokens,
                sample.subgraphs,
                iter_num=config.partition.iter_num,
                iter_per=config.partition.iter_per,
                threshold=config.partition.vote_threshold,
                seed=request.eval_seed,
            )
        except PhishdomError as e:
            raise HTTPException(status_code=422, detail=str(e)) from None
        report = None
        if request.localize and outcome.verdict == 1:
            found = localize(outcome, sample.subgraphs)
            report = Localization(
                ranked=[(gid, count) for gid, count in found.ranked],
                flagged_group_ids=found.flagged_group_ids,
                flagged_node_ids=found.flagged_node_ids,
            )
        return PredictResponse(
            verdict="malicious" if outcome.verdict == 1 else "benign",
            score=outcome.score,
            rounds=[
                RoundInfo(group_ids=r.group_ids, pred=r.pred, malicious_prob=r.malicious_prob)
                for r in outcome.rounds
            ],
            localization=report,
        )

    return app
