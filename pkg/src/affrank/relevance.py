"""Fractional relevance scores and the dense (conference, affiliation, year) panel."""

from __future__ import annotations

import json
import logging
import os
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .ingest import AuthorshipLink, CorpusSnapshot, PaperRecord

logger = logging.getLogger(__name__)

FULL_RESEARCH_ONLY = "full_research_only"
ALL_PAPERS = "all_papers"
PAPER_FILTERS = (FULL_RESEARCH_ONLY, ALL_PAPERS)


class UnattributablePaper(ValueError):
    pass


def _author_affiliations(links: Iterable[AuthorshipLink]) -> dict[str, set[str]]:
    by_author: dict[str, set[str]] = {}
    for link in links:
        affs = by_author.setdefault(link.author_id, set())
        if link.affiliation_id is not None:
            affs.add(link.affiliation_id)
    return by_author


def paper_affiliation_shares(links: Sequence[AuthorshipLink]) -> dict[str, float]:
    """Split one paper's unit score over its affiliations.

    Every distinct author gets an equal part, which is then divided equally
    between that author's distinct affiliations on the paper.  Authors with
    no affiliation keep their part, so the shares can sum to less than one.
    """
    if not links:
        raise UnattributablePaper("unattributable paper: no authorship links")
    by_author = _author_affiliations(links)
    per_author = 1.0 / len(by_author)
    shares: dict[str, float] = defaultdict(float)
    for author in sorted(by_author):
        affs = by_author[author]
        for aff in sorted(affs):
            shares[aff] += per_author / len(affs)
    return dict(sorted(shares.items()))


def unattributed_share(links: Sequence[AuthorshipLink]) -> float:
    """Part of the paper score carried by authors without an affiliation."""
    by_author = _author_affiliations(links)
    if not by_author:
        return 1.0
    return sum(1 for affs in by_author.values() if not affs) / len(by_author)


def _passes(paper: PaperRecord, paper_filter: str) -> bool:
    if paper_filter == ALL_PAPERS:
        return True
    if paper_filter == FULL_RESEARCH_ONLY:
        return paper.is_full_research
    raise ValueError(f"unknown paper filter {paper_filter!r}")


def _links_by_paper(snapshot: CorpusSnapshot) -> dict[str, list[AuthorshipLink]]:
    grouped: dict[str, list[AuthorshipLink]] = defaultdict(list)
    for link in snapshot.authorships:
        grouped[link.paper_id].append(link)
    return grouped


@dataclass(frozen=True, eq=False)
class RelevancePanel:
    """Dense relevance grid indexed ``[conference, affiliation, year]``.

    ``years`` is a contiguous ascending range; every combination is stored,
    zero where nothing was published.
    """

    conferences: tuple[str, ...]
    affiliations: tuple[str, ...]
    years: tuple[int, ...]
    relevance: np.ndarray
    paper_count: np.ndarray
    paper_filter: str = ALL_PAPERS
    deficit: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = (len(self.conferences), len(self.affiliations), len(self.years))
        if self.relevance.shape != shape or self.paper_count.shape != shape:
            raise ValueError(f"panel arrays must have shape {shape}")
        if list(self.years) != list(range(self.years[0], self.years[0] + len(self.years))):
            raise ValueError("panel years must be contiguous and ascending")
        for name in ("conferences", "affiliations"):
            values = getattr(self, name)
            if len(set(values)) != len(values):
                raise ValueError(f"duplicate {name} in panel")
        self.relevance.setflags(write=False)
        self.paper_count.setflags(write=False)
        if self.deficit is None:
            object.__setattr__(self, "deficit", np.zeros((shape[0], shape[2])))
        self.deficit.setflags(write=False)
        object.__setattr__(self, "_conf_index", {c: i for i, c in enumerate(self.conferences)})
        object.__setattr__(self, "_aff_index", {a: i for i, a in enumerate(self.affiliations)})

    @property
    def first_year(self) -> int:
        return self.years[0]

    @property
    def last_year(self) -> int:
        return self.years[-1]

    def conference_index(self, conference: str) -> int:
        try:
            return self._conf_index[conference]
        except KeyError:
            raise KeyError(f"conference {conference!r} not in panel") from None

    def affiliation_index(self, affiliation: str) -> int:
        return self._aff_index[affiliation]

    def year_index(self, year: int) -> int:
        idx = year - self.years[0]
        if not 0 <= idx < len(self.years):
            raise KeyError(f"year {year} outside panel range {self.years[0]}-{self.years[-1]}")
        return idx

    def cell(self, conference: str, affiliation: str, year: int) -> float:
        return float(self.relevance[
            self.conference_index(conference), self._aff_index[affiliation], self.year_index(year)
        ])

    def conference_slice(self, conference: str) -> np.ndarray:
        """Relevance of every affiliation at one conference, shape (A, Y)."""
        return self.relevance[self.conference_index(conference)]

    def truth(self, conference: str, year: int) -> dict[str, float]:
        col = self.relevance[self.conference_index(conference), :, self.year_index(year)]
        return {a: float(v) for a, v in zip(self.affiliations, col)}

    def counts_over(self, conference: str, years: Iterable[int]) -> dict[str, int]:
        idx = [self.year_index(y) for y in years if self.years[0] <= y <= self.years[-1]]
        if not idx:
            return {}
        totals = self.paper_count[self.conference_index(conference)][:, idx].sum(axis=1)
        return {a: int(n) for a, n in zip(self.affiliations, totals) if n > 0}

    def __eq__(self, other):
        if not isinstance(other, RelevancePanel):
            return NotImplemented
        return (
            self.conferences == other.conferences
            and self.affiliations == other.affiliations
            and self.years == other.years
            and self.paper_filter == other.paper_filter
            and np.array_equal(self.relevance, other.relevance)
            and np.array_equal(self.paper_count, other.paper_count)
            and np.array_equal(self.deficit, other.deficit)
        )

    __hash__ = None


def build_panel(
    snapshot: CorpusSnapshot,
    conferences: Sequence[str],
    years: tuple[int, int],
    paper_filter: str = ALL_PAPERS,
    *,
    affiliations: Optional[Sequence[str]] = None,
    max_affiliations: Optional[int] = None,
) -> RelevancePanel:
    """Build the dense relevance panel for ``conferences`` over ``years``.

    The affiliation universe is every affiliation with positive relevance at
    an in-scope conference, optionally capped to the ``max_affiliations``
    largest by total relevance; pass ``affiliations`` to fix it instead.
    """
    lo, hi = years
    if hi < lo:
        raise ValueError("empty year range")
    conferences = tuple(dict.fromkeys(conferences))
    if not conferences:
        raise ValueError("no conferences given")
    if paper_filter not in PAPER_FILTERS:
        raise ValueError(f"unknown paper filter {paper_filter!r}")
    conf_idx = {c: i for i, c in enumerate(conferences)}
    n_years = hi - lo + 1

    grouped = _links_by_paper(snapshot)
    rel: dict[tuple[int, str, int], float] = defaultdict(float)
    cnt: dict[tuple[int, str, int], int] = defaultdict(int)
    deficit = np.zeros((len(conferences), n_years))
    seen_conferences = set()
    unattributable = 0
    for paper in sorted(snapshot.papers, key=lambda p: p.paper_id):
        c = conf_idx.get(paper.conference_series_id)
        if c is None:
            continue
        seen_conferences.add(paper.conference_series_id)
        if not lo <= paper.year <= hi or not _passes(paper, paper_filter):
            continue
        links = grouped.get(paper.paper_id, ())
        if not links:
            unattributable += 1
            continue
        y = paper.year - lo
        for aff, share in paper_affiliation_shares(links).items():
            rel[c, aff, y] += share
            cnt[c, aff, y] += 1
        deficit[c, y] += unattributed_share(links)
    for conf in conferences:
        if conf not in seen_conferences:
            logger.warning("conference %s has no papers in the snapshot", conf)
    if unattributable:
        logger.warning("%d papers without authorship links ignored", unattributable)

    if affiliations is None:
        totals: dict[str, float] = defaultdict(float)
        for (c, aff, y), value in sorted(rel.items()):
            totals[aff] += value
        universe = [a for a, v in totals.items() if v > 0]
        if max_affiliations is not None and len(universe) > max_affiliations:
            universe = sorted(universe, key=lambda a: (-totals[a], a))[:max_affiliations]
        affiliations = sorted(universe)
    affiliations = tuple(affiliations)
    aff_idx = {a: i for i, a in enumerate(affiliations)}

    relevance = np.zeros((len(conferences), len(affiliations), n_years))
    paper_count = np.zeros_like(relevance, dtype=np.int64)
    for (c, aff, y), value in rel.items():
        a = aff_idx.get(aff)
        if a is not None:
            relevance[c, a, y] = value
            paper_count[c, a, y] = cnt[c, aff, y]
    return RelevancePanel(
        conferences=conferences,
        affiliations=affiliations,
        years=tuple(range(lo, hi + 1)),
        relevance=relevance,
        paper_count=paper_count,
        paper_filter=paper_filter,
        deficit=deficit,
        meta={"unattributable_papers": unattributable},
    )


def affiliation_paper_counts(
    snapshot: CorpusSnapshot,
    conference: str,
    year_range: tuple[int, int],
    paper_filter: str = ALL_PAPERS,
) -> dict[str, int]:
    """Whole-paper counts per affiliation: a paper counts once per affiliation."""
    lo, hi = year_range
    if hi < lo:
        return {}
    grouped = _links_by_paper(snapshot)
    counts: dict[str, int] = defaultdict(int)
    for paper in snapshot.papers:
        if paper.conference_series_id != conference or not lo <= paper.year <= hi:
            continue
        if not _passes(paper, paper_filter):
            continue
        affs = {l.affiliation_id for l in grouped.get(paper.paper_id, ()) if l.affiliation_id}
        for aff in affs:
            counts[aff] += 1
    return dict(sorted(counts.items()))


def write_panel(panel: RelevancePanel, path: os.PathLike | str) -> Path:
    """Write the panel as TSV plus a ``<path>.json`` manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as out:
        out.write("conference\taffiliation\tyear\trelevance\tpaper_count\n")
        for c, conf in enumerate(panel.conferences):
            for a, aff in enumerate(panel.affiliations):
                for y, year in enumerate(panel.years):
                    out.write(
                        f"{conf}\t{aff}\t{year}\t{float(panel.relevance[c, a, y])!r}"
                        f"\t{int(panel.paper_count[c, a, y])}\n"
                    )
    manifest = {
        "paper_filter": panel.paper_filter,
        "years": [panel.first_year, panel.last_year],
        "conferences": list(panel.conferences),
        "affiliations": list(panel.affiliations),
        "deficit": {
            conf: {str(year): float(panel.deficit[c, y]) for y, year in enumerate(panel.years)}
            for c, conf in enumerate(panel.conferences)
        },
        "deficit_total": float(panel.deficit.sum()),
        **panel.meta,
    }
    with open(path.with_suffix(path.suffix + ".json"), "w", encoding="utf-8") as out:
        json.dump(manifest, out, indent=2)
    return path


def read_panel(path: os.PathLike | str) -> RelevancePanel:
    path = Path(path)
    with open(path.with_suffix(path.suffix + ".json"), encoding="utf-8") as handle:
        manifest = json.load(handle)
    conferences = tuple(manifest["conferences"])
    affiliations = tuple(manifest["affiliations"])
    lo, hi = manifest["years"]
    c_idx = {c: i for i, c in enumerate(conferences)}
    a_idx = {a: i for i, a in enumerate(affiliations)}
    shape = (len(conferences), len(affiliations), hi - lo + 1)
    relevance = np.zeros(shape)
    paper_count = np.zeros(shape, dtype=np.int64)
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().rstrip("\n").split("\t")
        if header[:5] != ["conference", "affiliation", "year", "relevance", "paper_count"]:
            raise ValueError(f"{path}: not a panel file")
        for line in handle:
            conf, aff, year, value, count = line.rstrip("\n").split("\t")
            key = (c_idx[conf], a_idx[aff], int(year) - lo)
            relevance[key] = float(value)
            paper_count[key] = int(count)
    deficit = np.array([
        [manifest["deficit"][conf][str(year)] for year in range(lo, hi + 1)]
        for conf in conferences
    ]).reshape(len(conferences), hi - lo + 1)
    extra = {k: v for k, v in manifest.items() if k not in
             {"paper_filter", "years", "conferences", "affiliations", "deficit", "deficit_total"}}
    return RelevancePanel(conferences, affiliations, tuple(range(lo, hi + 1)),
                          relevance, paper_count, manifest["paper_filter"], deficit, extra)


def panel_from_arrays(
    relevance: np.ndarray,
    conferences: Sequence[str],
    affiliations: Sequence[str],
    first_year: int,
    paper_count: Optional[np.ndarray] = None,
) -> RelevancePanel:
    """Wrap raw arrays as a panel; handy for synthetic worlds and tests."""
    relevance = np.asarray(relevance, dtype=float)
    if relevance.ndim == 2:
        relevance = relevance[None]
    if paper_count is None:
        paper_count = np.ceil(relevance).astype(np.int64)
    years = tuple(range(first_year, first_year + relevance.shape[2]))
    return RelevancePanel(tuple(conferences), tuple(affiliations), years,
                          relevance.copy(), np.asarray(paper_count, dtype=np.int64).copy())
