"""Reading MAG-style tab separated dumps and sampling the working corpus.

A dump is four tables (papers, author/affiliation links, references and
keywords).  Column positions differ between MAG releases, so every reader
takes an explicit column map; :data:`DEFAULT_COLUMNS` describes the compact
layout written by :func:`write_snapshot` and :data:`MAG_2016_COLUMNS` the
layout of the 2016-02-05 MAG release.
"""

from __future__ import annotations

import datetime
import gzip
import io
import json
import logging
import os
from collections import defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MIN_YEAR = 1800

RECORD_KINDS = ("papers", "authorships", "citations", "keywords")

DEFAULT_COLUMNS: dict[str, dict[str, int]] = {
    "papers": {"paper_id": 0, "year": 1, "conference_series_id": 2, "is_full_research": 3},
    "authorships": {"paper_id": 0, "author_id": 1, "affiliation_id": 2, "author_sequence": 3},
    "citations": {"citing_paper_id": 0, "cited_paper_id": 1},
    "keywords": {"paper_id": 0, "keyword": 1},
}

# Papers.txt / PaperAuthorAffiliations.txt / PaperReferences.txt /
# PaperKeywords.txt of the 2016-02-05 release.
MAG_2016_COLUMNS: dict[str, dict[str, int]] = {
    "papers": {"paper_id": 0, "year": 3, "conference_series_id": 9},
    "authorships": {"paper_id": 0, "author_id": 1, "affiliation_id": 2, "author_sequence": 5},
    "citations": {"citing_paper_id": 0, "cited_paper_id": 1},
    "keywords": {"paper_id": 0, "keyword": 1},
}

_REQUIRED = {
    "papers": ("paper_id", "year"),
    "authorships": ("paper_id", "author_id"),
    "citations": ("citing_paper_id", "cited_paper_id"),
    "keywords": ("paper_id", "keyword"),
}

_TRUE = {"1", "true", "t", "yes", "y"}


class SchemaError(ValueError):
    """The column map does not fit the file."""


class SamplingError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class PaperRecord:
    paper_id: str
    year: int
    conference_series_id: Optional[str] = None
    is_full_research: bool = False


@dataclass(frozen=True, slots=True)
class AuthorshipLink:
    paper_id: str
    author_id: str
    affiliation_id: Optional[str] = None
    author_sequence: int = 1


@dataclass(frozen=True, slots=True)
class CitationEdge:
    citing_paper_id: str
    cited_paper_id: str


@dataclass(frozen=True, slots=True)
class KeywordRecord:
    paper_id: str
    keyword: str


@dataclass
class ParseStats:
    """Counters filled in while a table is read."""

    lines: int = 0
    records: int = 0
    bad_year: int = 0
    malformed: int = 0
    self_citations: int = 0

    def skipped(self) -> int:
        return self.bad_year + self.malformed + self.self_citations

    def as_dict(self) -> dict[str, int]:
        return {
            "lines": self.lines,
            "records": self.records,
            "bad_year": self.bad_year,
            "malformed": self.malformed,
            "self_citations": self.self_citations,
        }


def normalize_keyword(text: str) -> str:
    return " ".join(text.strip().lower().split())


def _open_text(path: os.PathLike | str) -> io.TextIOBase:
    path = Path(path)
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, encoding="utf-8", newline="")


def _optional(value: str) -> Optional[str]:
    value = value.strip()
    return value or None


def _build(kind: str, cols: list[str], columns: Mapping[str, int], stats: ParseStats):
    get = {name: cols[idx] for name, idx in columns.items()}
    if kind == "papers":
        try:
            year = int(get["year"].strip())
        except ValueError:
            stats.bad_year += 1
            return None
        if not MIN_YEAR <= year <= datetime.date.today().year + 1:
            stats.bad_year += 1
            return None
        flag = get.get("is_full_research")
        return PaperRecord(
            paper_id=get["paper_id"].strip(),
            year=year,
            conference_series_id=_optional(get.get("conference_series_id", "")),
            is_full_research=flag is not None and flag.strip().lower() in _TRUE,
        )
    if kind == "authorships":
        seq = get.get("author_sequence")
        try:
            seq = int(seq) if seq is not None and seq.strip() else 1
        except ValueError:
            stats.malformed += 1
            return None
        if seq < 1:
            stats.malformed += 1
            return None
        return AuthorshipLink(
            paper_id=get["paper_id"].strip(),
            author_id=get["author_id"].strip(),
            affiliation_id=_optional(get.get("affiliation_id", "")),
            author_sequence=seq,
        )
    if kind == "citations":
        citing, cited = get["citing_paper_id"].strip(), get["cited_paper_id"].strip()
        if citing == cited:
            stats.self_citations += 1
            return None
        return CitationEdge(citing, cited)
    keyword = normalize_keyword(get["keyword"])
    if not keyword:
        stats.malformed += 1
        return None
    return KeywordRecord(get["paper_id"].strip(), keyword)


def parse_table(
    path: os.PathLike | str,
    kind: str,
    columns: Optional[Mapping[str, int]] = None,
    *,
    header: bool = False,
    strict: bool = False,
    stats: Optional[ParseStats] = None,
) -> Iterator:
    """Yield typed records from one tab separated table.

    ``kind`` is one of :data:`RECORD_KINDS`.  Lines with an unparseable year,
    self citations and short lines after the first are skipped and counted
    in ``stats``; a first data line that is too short for the column map
    raises :class:`SchemaError` because the map, not the line, is wrong.
    With ``strict=True`` any malformed line raises.
    """
    if kind not in RECORD_KINDS:
        raise ValueError(f"unknown record kind {kind!r}")
    columns = dict(DEFAULT_COLUMNS[kind] if columns is None else columns)
    missing = [name for name in _REQUIRED[kind] if name not in columns]
    if missing:
        raise SchemaError(f"{kind}: column map lacks {missing}")
    if any(idx < 0 for idx in columns.values()):
        raise SchemaError(f"{kind}: negative column index in {columns}")
    width = max(columns.values()) + 1
    stats = ParseStats() if stats is None else stats
    try:
        handle = _open_text(path)
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    with handle:
        first = True
        for lineno, line in enumerate(handle, 1):
            line = line.rstrip("\r\n")
            if header and lineno == 1:
                continue
            if not line.strip():
                continue
            stats.lines += 1
            cols = line.split("\t")
            if len(cols) < width:
                if first:
                    raise SchemaError(
                        f"{path}:{lineno}: {len(cols)} columns, column map needs {width}"
                    )
                if strict:
                    raise ValueError(f"{path}:{lineno}: malformed line")
                stats.malformed += 1
                continue
            first = False
            before = stats.skipped()
            record = _build(kind, cols, columns, stats)
            if record is None:
                if strict and stats.skipped() != before:
                    raise ValueError(f"{path}:{lineno}: rejected record")
                continue
            stats.records += 1
            yield record


def read_flag_file(path: os.PathLike | str) -> frozenset[str]:
    with _open_text(path) as handle:
        return frozenset(line.strip() for line in handle if line.strip())


@dataclass
class GraphRecords:
    """Raw record collections for a whole dump (or any subset of it)."""

    papers: list[PaperRecord] = field(default_factory=list)
    authorships: list[AuthorshipLink] = field(default_factory=list)
    citations: list[CitationEdge] = field(default_factory=list)
    keywords: list[KeywordRecord] = field(default_factory=list)
    stats: dict[str, dict[str, int]] = field(default_factory=dict)

    def apply_flags(self, full_research_ids: Iterable[str]) -> None:
        """Mark the listed papers as full research papers."""
        ids = frozenset(full_research_ids)
        self.papers = [
            PaperRecord(p.paper_id, p.year, p.conference_series_id, True)
            if p.paper_id in ids and not p.is_full_research
            else p
            for p in self.papers
        ]


def load_graph(
    papers: os.PathLike | str,
    links: Optional[os.PathLike | str] = None,
    refs: Optional[os.PathLike | str] = None,
    keywords: Optional[os.PathLike | str] = None,
    flags: Optional[os.PathLike | str] = None,
    columns: Optional[Mapping[str, Mapping[str, int]]] = None,
    header: bool = False,
) -> GraphRecords:
    columns = {**DEFAULT_COLUMNS, **(columns or {})}
    graph = GraphRecords()
    for kind, path in zip(RECORD_KINDS, (papers, links, refs, keywords)):
        if path is None:
            continue
        stats = ParseStats()
        getattr(graph, kind).extend(parse_table(path, kind, columns[kind], header=header, stats=stats))
        graph.stats[kind] = stats.as_dict()
        if stats.skipped():
            logger.warning("%s: skipped %d of %d lines", path, stats.skipped(), stats.lines)
    if flags is not None:
        graph.apply_flags(read_flag_file(flags))
    return graph


@dataclass(frozen=True)
class CorpusSnapshot:
    """An immutable sampled corpus.

    ``dangling`` holds cited ids missing from the paper table; edges to them
    stay in ``citations`` but never enter ``degrees``.
    """

    papers: tuple[PaperRecord, ...]
    authorships: tuple[AuthorshipLink, ...]
    citations: tuple[CitationEdge, ...]
    keywords: tuple[KeywordRecord, ...]
    degrees: dict[str, tuple[int, int]]
    dangling: frozenset[str] = frozenset()
    params: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)

    def paper_ids(self) -> frozenset[str]:
        return frozenset(p.paper_id for p in self.papers)

    def as_graph(self) -> GraphRecords:
        return GraphRecords(
            list(self.papers), list(self.authorships), list(self.citations), list(self.keywords)
        )


def compute_degrees(
    citations: Iterable[CitationEdge], paper_ids: Iterable[str]
) -> dict[str, tuple[int, int]]:
    """In/out degree of every paper, counting only edges inside ``paper_ids``."""
    ids = set(paper_ids)
    indeg = dict.fromkeys(ids, 0)
    outdeg = dict.fromkeys(ids, 0)
    seen = set()
    for edge in citations:
        key = (edge.citing_paper_id, edge.cited_paper_id)
        if key in seen or key[0] == key[1]:
            continue
        seen.add(key)
        if key[0] in ids and key[1] in ids:
            outdeg[key[0]] += 1
            indeg[key[1]] += 1
    return {pid: (indeg[pid], outdeg[pid]) for pid in sorted(ids)}


def _dedup_sorted(records, key):
    return tuple(sorted(set(records), key=key))


def _link_key(a: AuthorshipLink):
    return (a.paper_id, a.author_sequence, a.author_id, a.affiliation_id or "")


def build_snapshot(graph: GraphRecords, keep: Iterable[str], params: Optional[dict] = None) -> CorpusSnapshot:
    """Restrict ``graph`` to the paper ids in ``keep``."""
    keep = set(keep)
    papers_by_id: dict[str, PaperRecord] = {}
    for p in graph.papers:
        papers_by_id.setdefault(p.paper_id, p)
    known = set(papers_by_id)
    keep &= known
    papers = tuple(papers_by_id[pid] for pid in sorted(keep))
    links = _dedup_sorted((a for a in graph.authorships if a.paper_id in keep), _link_key)
    edges = []
    dangling = set()
    for e in graph.citations:
        if e.citing_paper_id == e.cited_paper_id:
            continue
        citing_in = e.citing_paper_id in keep
        if e.cited_paper_id in keep and citing_in:
            edges.append(e)
        elif citing_in and e.cited_paper_id not in known:
            dangling.add(e.cited_paper_id)
            edges.append(e)
    edges = _dedup_sorted(edges, lambda e: (e.citing_paper_id, e.cited_paper_id))
    kws = _dedup_sorted((k for k in graph.keywords if k.paper_id in keep), lambda k: (k.paper_id, k.keyword))
    return CorpusSnapshot(
        papers=papers,
        authorships=links,
        citations=edges,
        keywords=kws,
        degrees=compute_degrees(edges, keep),
        dangling=frozenset(dangling),
        params=dict(params or {}),
        skipped={k: dict(v) for k, v in graph.stats.items()},
    )


def sample_corpus(
    graph: GraphRecords,
    target_conferences: Iterable[str],
    seed_years: tuple[int, int],
    author_floor_year: int,
    bfs_depth: int = 2,
    direction: str = "out",
) -> CorpusSnapshot:
    """Sample the working corpus around the target conferences.

    Seeds are the target-conference papers inside ``seed_years``.  Every
    paper written since ``author_floor_year`` by an author of a seed joins
    them, then the citation graph is walked ``bfs_depth`` hops from that set.
    ``direction`` picks which edges the walk follows: ``"out"`` (a paper to
    its references), ``"in"`` (to papers citing it) or ``"both"``.
    """
    lo, hi = seed_years
    if bfs_depth < 0:
        raise ValueError("bfs_depth must be >= 0")
    if lo > hi or lo < author_floor_year:
        raise ValueError(f"seed years {seed_years} must lie inside [{author_floor_year}, {hi}]")
    if direction not in ("out", "in", "both"):
        raise ValueError(f"direction must be out, in or both, got {direction!r}")
    targets = set(target_conferences)

    papers_by_id: dict[str, PaperRecord] = {}
    for p in graph.papers:
        papers_by_id.setdefault(p.paper_id, p)
    seeds = {
        pid for pid, p in papers_by_id.items()
        if p.conference_series_id in targets and lo <= p.year <= hi
    }
    if not seeds:
        raise SamplingError(
            f"no seed papers for conferences {sorted(targets)} in {lo}-{hi}"
        )

    seed_authors = {a.author_id for a in graph.authorships if a.paper_id in seeds}
    sampled = set(seeds)
    for a in graph.authorships:
        if a.author_id in seed_authors:
            p = papers_by_id.get(a.paper_id)
            if p is not None and p.year >= author_floor_year:
                sampled.add(p.paper_id)

    adjacency: dict[str, list[str]] = defaultdict(list)
    for e in graph.citations:
        if e.citing_paper_id == e.cited_paper_id:
            continue
        if direction in ("out", "both"):
            adjacency[e.citing_paper_id].append(e.cited_paper_id)
        if direction in ("in", "both"):
            adjacency[e.cited_paper_id].append(e.citing_paper_id)

    frontier = deque((pid, 0) for pid in sorted(sampled))
    while frontier:
        pid, depth = frontier.popleft()
        if depth == bfs_depth:
            continue
        for nxt in sorted(set(adjacency.get(pid, ()))):
            if nxt in papers_by_id and nxt not in sampled:
                sampled.add(nxt)
                frontier.append((nxt, depth + 1))

    params = {
        "target_conferences": sorted(targets),
        "seed_years": [lo, hi],
        "author_floor_year": author_floor_year,
        "bfs_depth": bfs_depth,
        "direction": direction,
    }
    snap = build_snapshot(graph, sampled, params)
    logger.info(
        "sampled %d papers (%d seeds) with %d citation edges",
        len(snap.papers), len(seeds), len(snap.citations),
    )
    return snap


# -- snapshot interchange -------------------------------------------------

def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    return str(value)


def write_snapshot(snapshot: CorpusSnapshot, directory: os.PathLike | str) -> Path:
    """Write one TSV per record kind plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for kind in RECORD_KINDS:
        names = sorted(DEFAULT_COLUMNS[kind], key=DEFAULT_COLUMNS[kind].get)
        with open(directory / f"{kind}.tsv", "w", encoding="utf-8", newline="\n") as out:
            for rec in getattr(snapshot, kind):
                out.write("\t".join(_cell(getattr(rec, n)) for n in names) + "\n")
    manifest = {
        "format_version": FORMAT_VERSION,
        "counts": {kind: len(getattr(snapshot, kind)) for kind in RECORD_KINDS},
        "dangling": len(snapshot.dangling),
        "params": snapshot.params,
        "skipped": snapshot.skipped,
    }
    with open(directory / "manifest.json", "w", encoding="utf-8") as out:
        json.dump(manifest, out, indent=2, sort_keys=True)
    return directory


def read_snapshot(directory: os.PathLike | str) -> CorpusSnapshot:
    directory = Path(directory)
    with open(directory / "manifest.json", encoding="utf-8") as handle:
        manifest = json.load(handle)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported snapshot format {manifest.get('format_version')}")
    graph = GraphRecords()
    for kind in RECORD_KINDS:
        getattr(graph, kind).extend(parse_table(directory / f"{kind}.tsv", kind, strict=True))
    graph.stats = manifest.get("skipped", {})
    keep = [p.paper_id for p in graph.papers]
    snap = build_snapshot(graph, keep, manifest.get("params", {}))
    for kind in RECORD_KINDS:
        if len(getattr(snap, kind)) != manifest["counts"][kind]:
            raise SchemaError(f"{kind}: manifest count mismatch in {directory}")
    return snap
