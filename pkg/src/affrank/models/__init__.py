"""The three ranker families and their JSON serialization."""

from __future__ import annotations

import json
import os
from pathlib import Path

from .gbdt import GbdtConfig, GbdtModel, feature_importance, gbdt_fit, gbdt_predict
from .mixed import MixedModel, backward_eliminate, mixed_fit
from .prob import ProbModel, prob_fit

FORMAT_VERSION = 1

_FAMILIES = {"gbdt": GbdtModel, "mixed": MixedModel, "prob": ProbModel}


def save_model(model, path: os.PathLike | str) -> Path:
    family = next(name for name, cls in _FAMILIES.items() if isinstance(model, cls))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"format_version": FORMAT_VERSION, "family": family, "model": model.to_dict()}
    with open(path, "w", encoding="utf-8") as out:
        json.dump(payload, out, indent=1)
    return path


def load_model(path: os.PathLike | str):
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    if payload.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format {payload.get('format_version')}")
    return _FAMILIES[payload["family"]].from_dict(payload["model"])


__all__ = [
    "GbdtConfig", "GbdtModel", "MixedModel", "ProbModel",
    "backward_eliminate", "feature_importance", "gbdt_fit", "gbdt_predict",
    "load_model", "mixed_fit", "prob_fit", "save_model",
]
