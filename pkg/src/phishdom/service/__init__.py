"""HTTP service exposing a trained detector."""
from .app import create_app
from .schemas import (
    HealthResponse,
    InfoResponse,
    Localization,
    PredictRequest,
    PredictResponse,
    RoundInfo,
)

__all__ = [
    "create_app",
    "HealthResponse",
    "InfoResponse",
    "Localization",
    "PredictRequest",
    "PredictResponse",
    "RoundInfo",
]
