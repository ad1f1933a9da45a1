"""The common return type of every embedding method."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = ["EmbeddingResult", "config_digest"]


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def config_digest(config) -> str:
    """sha256 of the canonical JSON form of a config (dataclass or mapping)."""
    text = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class EmbeddingResult:
    embedding: np.ndarray
    method: str
    config_digest: str
    seed: int
    loss_trace: list = field(default_factory=list)
    wall_seconds: float = 0.0
