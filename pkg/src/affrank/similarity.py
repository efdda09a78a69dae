"""Conference neighbours by Jaccard overlap of authors or keywords."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .ingest import CorpusSnapshot

BASES = ("authors", "keywords", "fusion")


@dataclass(frozen=True)
class ConferenceProfile:
    conference_series_id: str
    author_set: frozenset[str]
    keyword_set: frozenset[str]

    def basis_set(self, basis: str) -> frozenset[str]:
        if basis == "authors":
            return self.author_set
        if basis == "keywords":
            return self.keyword_set
        raise ValueError(f"unknown basis {basis!r}")


def jaccard(a: Iterable, b: Iterable) -> float:
    a, b = set(a), set(b)
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def build_profiles(
    snapshot: CorpusSnapshot, years: Optional[tuple[int, int]] = None
) -> dict[str, ConferenceProfile]:
    """Author and keyword sets of every conference series in the snapshot."""
    conf_of = {}
    for p in snapshot.papers:
        if p.conference_series_id is None:
            continue
        if years is not None and not years[0] <= p.year <= years[1]:
            continue
        conf_of[p.paper_id] = p.conference_series_id
    authors: dict[str, set[str]] = defaultdict(set)
    keywords: dict[str, set[str]] = defaultdict(set)
    for link in snapshot.authorships:
        if link.paper_id in conf_of:
            authors[conf_of[link.paper_id]].add(link.author_id)
    for kw in snapshot.keywords:
        if kw.paper_id in conf_of:
            keywords[conf_of[kw.paper_id]].add(kw.keyword)
    return {
        c: ConferenceProfile(c, frozenset(authors[c]), frozenset(keywords[c]))
        for c in sorted(set(conf_of.values()))
    }


def _ranked(target: ConferenceProfile, profiles, basis: str, min_profile_size: int):
    mine = target.basis_set(basis)
    rows = []
    for cid, prof in profiles.items():
        if cid == target.conference_series_id:
            continue
        other = prof.basis_set(basis)
        if len(other) < min_profile_size:
            continue
        rows.append((cid, jaccard(mine, other), len(mine | other)))
    rows.sort(key=lambda r: (-r[1], -r[2], r[0]))
    return rows


def related_conferences(
    target: str,
    profiles: Mapping[str, ConferenceProfile],
    k: int,
    basis: str = "authors",
    min_profile_size: int = 0,
) -> list[tuple[str, float]]:
    """Top ``k`` conferences most similar to ``target``, target excluded.

    Ties fall to the larger union, then the smaller id.  ``basis="fusion"``
    orders by the mean reciprocal rank over the author and keyword lists
    and reports that mean as the score.
    """
    if target not in profiles:
        raise KeyError(f"no profile for conference {target!r}")
    if k < 0:
        raise ValueError("k must be >= 0")
    if basis not in BASES:
        raise ValueError(f"basis must be one of {BASES}")
    if k == 0:
        return []
    prof = profiles[target]
    if basis != "fusion":
        return [(cid, score) for cid, score, _ in _ranked(prof, profiles, basis, min_profile_size)[:k]]
    mrr: dict[str, float] = defaultdict(float)
    for b in ("authors", "keywords"):
        for rank, (cid, _, _) in enumerate(_ranked(prof, profiles, b, min_profile_size), 1):
            mrr[cid] += 0.5 / rank
    ordered = sorted(mrr.items(), key=lambda kv: (-kv[1], kv[0]))
    return ordered[:k]


def similarity_report(
    target: str, profiles: Mapping[str, ConferenceProfile], k: int, basis: str = "authors"
) -> list[tuple[str, str, str, float, int]]:
    """Rows of (target, neighbour, basis, score, rank)."""
    return [
        (target, cid, basis, score, rank)
        for rank, (cid, score) in enumerate(related_conferences(target, profiles, k, basis), 1)
    ]
