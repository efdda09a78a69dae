import gzip

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affrank.ingest import (
    AuthorshipLink,
    CitationEdge,
    GraphRecords,
    KeywordRecord,
    ParseStats,
    PaperRecord,
    SamplingError,
    SchemaError,
    build_snapshot,
    compute_degrees,
    load_graph,
    parse_table,
    read_snapshot,
    sample_corpus,
    write_snapshot,
)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_parse_paper_line(tmp_path):
    path = write(tmp_path, "papers.tsv", "p1\t2014\tc7\t1\n")
    recs = list(parse_table(path, "papers", {"paper_id": 0, "year": 1, "conference_series_id": 2, "is_full_research": 3}))
    assert recs == [PaperRecord("p1", 2014, "c7", True)]


def test_parse_empty_file(tmp_path):
    stats = ParseStats()
    assert list(parse_table(write(tmp_path, "e.tsv", ""), "papers", stats=stats)) == []
    assert stats.skipped() == 0


def test_parse_bad_year_is_skipped(tmp_path):
    stats = ParseStats()
    path = write(tmp_path, "p.tsv", "p1\t20x4\tc7\t1\np2\t2013\tc7\t0\n")
    recs = list(parse_table(path, "papers", stats=stats))
    assert [r.paper_id for r in recs] == ["p2"]
    assert stats.bad_year == 1


def test_schema_error_on_short_first_line(tmp_path):
    path = write(tmp_path, "p.tsv", "p1\t2014\n")
    with pytest.raises(SchemaError):
        list(parse_table(path, "papers", {"paper_id": 0, "year": 1, "conference_series_id": 9}))


def test_later_short_lines_are_counted(tmp_path):
    stats = ParseStats()
    path = write(tmp_path, "p.tsv", "p1\t2014\tc\t1\np2\n")
    assert len(list(parse_table(path, "papers", stats=stats))) == 1
    assert stats.malformed == 1


def test_unreadable_file(tmp_path):
    with pytest.raises(OSError):
        list(parse_table(tmp_path / "missing.tsv", "papers"))


def test_mag_layout_and_gzip(tmp_path):
    line = "\t".join(["p9", "Title", "title", "2012", "2012/01/01", "", "KDD", "kdd", "", "c41", "5"])
    path = tmp_path / "Papers.txt.gz"
    with gzip.open(path, "wt", encoding="utf-8") as out:
        out.write(line + "\n")
    from affrank.ingest import MAG_2016_COLUMNS
    (rec,) = parse_table(path, "papers", MAG_2016_COLUMNS["papers"])
    assert rec == PaperRecord("p9", 2012, "c41", False)


def test_keywords_normalized_and_self_citations_dropped(tmp_path):
    kw = list(parse_table(write(tmp_path, "k.tsv", "p1\t  Data   MINING \n"), "keywords"))
    assert kw == [KeywordRecord("p1", "data mining")]
    stats = ParseStats()
    refs = list(parse_table(write(tmp_path, "r.tsv", "a\ta\na\tb\n"), "citations", stats=stats))
    assert refs == [CitationEdge("a", "b")] and stats.self_citations == 1


def test_flags_file_marks_full_research(tmp_path):
    papers = write(tmp_path, "p.tsv", "p1\t2014\tc\t0\np2\t2014\tc\t0\n")
    flags = write(tmp_path, "f.txt", "p2\n")
    graph = load_graph(papers, flags=flags)
    assert [p.is_full_research for p in graph.papers] == [False, True]


def test_degrees_chain():
    deg = compute_degrees([CitationEdge("a", "b"), CitationEdge("b", "c")], ["a", "b", "c", "d"])
    assert deg == {"a": (0, 1), "b": (1, 1), "c": (1, 0), "d": (0, 0)}


def test_degrees_deduplicate():
    deg = compute_degrees([CitationEdge("a", "b"), CitationEdge("a", "b")], ["a", "b"])
    assert deg["b"] == (1, 0)


def toy_graph():
    g = GraphRecords()
    g.papers = [
        PaperRecord("p1", 2014, "c1", True),
        PaperRecord("p2", 2005, None),
        PaperRecord("p3", 2001, None),
        PaperRecord("p4", 1999, None),
        PaperRecord("p5", 1990, "c2"),
        PaperRecord("p9", 2015, "c3"),
        PaperRecord("p8", 1995, None),
    ]
    g.authorships = [
        AuthorshipLink("p1", "a1", "A", 1),
        AuthorshipLink("p2", "a1", "A", 1),
        AuthorshipLink("p5", "a1", "A", 1),  # before the author floor year
        AuthorshipLink("p9", "a9", "B", 1),
    ]
    g.citations = [
        CitationEdge("p2", "p3"),
        CitationEdge("p3", "p4"),
        CitationEdge("p4", "p8"),
        CitationEdge("p9", "p1"),
        CitationEdge("p1", "ghost"),
    ]
    g.keywords = [KeywordRecord("p1", "ranking"), KeywordRecord("p8", "old")]
    return g


def test_sample_two_step_bfs():
    snap = sample_corpus(toy_graph(), {"c1"}, (2011, 2015), 2000, bfs_depth=2)
    assert snap.paper_ids() == {"p1", "p2", "p3", "p4"}
    assert snap.dangling == {"ghost"}
    assert CitationEdge("p1", "ghost") in snap.citations
    assert snap.degrees["p1"] == (0, 0)


def test_sample_depth_zero_is_seeds_only():
    g = toy_graph()
    g.authorships = [a for a in g.authorships if a.paper_id != "p2"]
    snap = sample_corpus(g, {"c1"}, (2011, 2015), 2000, bfs_depth=0)
    assert snap.paper_ids() == {"p1"}


def test_in_degree_from_citing_seed():
    snap = sample_corpus(toy_graph(), {"c1", "c3"}, (2011, 2015), 2000, bfs_depth=2)
    assert snap.degrees["p1"] == (1, 0)


def test_direction_in_follows_citers():
    snap = sample_corpus(toy_graph(), {"c1"}, (2011, 2015), 2000, bfs_depth=1, direction="in")
    assert "p9" in snap.paper_ids() and "p3" not in snap.paper_ids()


def test_no_seed_papers():
    with pytest.raises(SamplingError, match="no seed papers"):
        sample_corpus(toy_graph(), {"nope"}, (2011, 2015), 2000)


def test_snapshot_roundtrip(tmp_path):
    snap = sample_corpus(toy_graph(), {"c1", "c3"}, (2011, 2015), 2000, bfs_depth=3)
    write_snapshot(snap, tmp_path / "snap")
    assert read_snapshot(tmp_path / "snap") == snap


# -- properties on random graphs ------------------------------------------

@st.composite
def graphs(draw):
    n = draw(st.integers(2, 14))
    ids = [f"p{i}" for i in range(n)]
    g = GraphRecords()
    for pid in ids:
        g.papers.append(PaperRecord(pid, draw(st.integers(1998, 2015)), draw(st.sampled_from([None, "c1", "c2"]))))
    for pid in ids:
        for author in draw(st.sets(st.sampled_from(["a1", "a2", "a3", "a4"]), max_size=2)):
            g.authorships.append(AuthorshipLink(pid, author, "A"))
    pairs = draw(st.lists(st.tuples(st.sampled_from(ids + ["zz"]), st.sampled_from(ids)), max_size=30))
    g.citations = [CitationEdge(a, b) for a, b in pairs if a != b]
    g.papers.append(PaperRecord("seed", 2013, "c1"))
    g.authorships.append(AuthorshipLink("seed", "a1", "A"))
    g.citations.append(CitationEdge("seed", ids[0]))
    return g


@settings(max_examples=60, deadline=None)
@given(graphs(), st.integers(0, 3), st.sampled_from(["out", "in", "both"]))
def test_sampling_properties(g, depth, direction):
    snap = sample_corpus(g, {"c1"}, (2011, 2015), 2000, depth, direction)
    inside = [e for e in snap.citations if e.cited_paper_id in snap.paper_ids()]
    assert sum(i for i, _ in snap.degrees.values()) == len(inside)
    assert sum(o for _, o in snap.degrees.values()) == len(inside)
    deeper = sample_corpus(g, {"c1"}, (2011, 2015), 2000, depth + 1, direction)
    assert snap.paper_ids() <= deeper.paper_ids()
    again = sample_corpus(snap.as_graph(), {"c1"}, (2011, 2015), 2000, depth, direction)
    assert again == snap


def test_build_snapshot_ignores_unknown_ids():
    snap = build_snapshot(toy_graph(), ["p1", "nope"])
    assert snap.paper_ids() == {"p1"}
