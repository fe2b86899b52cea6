"""Request and response shapes for the HTTP service."""
from __future__ import annotations

from pydantic import BaseModel, Field, field_validator


class PredictRequest(BaseModel):
    url: str
    html: str = Field(min_length=1)
    localize: bool = False
    eval_seed: int = 0

    @field_validator("html")
    @classmethod
    def _not_blank(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("html must not be blank")
        return v


class RoundInfo(BaseModel):
    group_ids: list[int]
    pred: int
    malicious_prob: float


class Localization(BaseModel):
    # [group_id, malicious_round_count] pairs, most-voted first
    ranked: list[tuple[int, int]]
    flagged_group_ids: list[int]
    flagged_node_ids: list[str]


class PredictResponse(BaseModel):
    verdict: str
    score: float
    rounds: list[RoundInfo]
    localization: Localization | None = None


class HealthResponse(BaseModel):
    status: str


class InfoResponse(BaseModel):
    version: str
    config_hash: str
    num_parameters: int
