"""DCG / NDCG@k and ranked affiliation lists."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

DEFAULT_K = 20


@dataclass(frozen=True)
class RankedList:
    """Affiliations in rank order with their predicted scores."""

    items: tuple[tuple[str, float], ...]
    conference: Optional[str] = None
    year: Optional[int] = None

    def __post_init__(self):
        ids = [a for a, _ in self.items]
        if len(set(ids)) != len(ids):
            dup = sorted({a for a in ids if ids.count(a) > 1})
            raise ValueError(f"duplicate affiliations in ranking: {dup}")

    @property
    def affiliations(self) -> list[str]:
        return [a for a, _ in self.items]


@dataclass(frozen=True)
class NdcgReport:
    conference: Optional[str]
    year: Optional[int]
    k: int
    dcg: float
    idcg: float
    ndcg: float
    all_zero_truth: bool = False


def rank_affiliations(
    affiliations: Sequence[str],
    scores: Sequence[float],
    recent: Optional[Sequence[float]] = None,
    conference: Optional[str] = None,
    year: Optional[int] = None,
) -> RankedList:
    """Sort by descending score, then descending recent relevance, then id."""
    scores = np.asarray(scores, dtype=float)
    recent = np.zeros(len(affiliations)) if recent is None else np.asarray(recent, dtype=float)
    order = sorted(range(len(affiliations)), key=lambda i: (-scores[i], -recent[i], affiliations[i]))
    return RankedList(tuple((affiliations[i], float(scores[i])) for i in order), conference, year)


def dcg(relevances: Sequence[float], k: int = DEFAULT_K) -> float:
    """Sum of rel_i / log2(i + 1) over the first ``k`` positions."""
    if k < 1:
        raise ValueError("k must be >= 1")
    total = 0.0
    for i, rel in enumerate(relevances[:k], 1):
        if rel < 0:
            raise ValueError(f"negative relevance {rel}")
        total += rel / math.log2(i + 1)
    return total


def ndcg_at_k(
    predicted: Union[RankedList, Sequence[str]],
    truth: Mapping[str, float],
    k: int = DEFAULT_K,
) -> NdcgReport:
    """NDCG of a predicted order against true relevances.

    Affiliations missing from ``truth`` contribute zero gain.  When every
    true relevance is zero the score is reported as 0 with
    ``all_zero_truth`` set.
    """
    if not truth:
        raise ValueError("truth is empty")
    if isinstance(predicted, RankedList):
        ids, conf, year = predicted.affiliations, predicted.conference, predicted.year
    else:
        ids, conf, year = list(predicted), None, None
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate affiliations in predicted list")
    gains = [float(truth.get(a, 0.0)) for a in ids]
    actual = dcg(gains, k)
    ideal = dcg(sorted((float(v) for v in truth.values()), reverse=True), k)
    if ideal <= 0:
        return NdcgReport(conf, year, k, actual, ideal, 0.0, True)
    return NdcgReport(conf, year, k, actual, ideal, actual / ideal)
