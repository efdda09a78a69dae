import pytest
from hypothesis import given
from hypothesis import strategies as st

from affrank.ingest import AuthorshipLink, GraphRecords, KeywordRecord, PaperRecord, build_snapshot
from affrank.similarity import (
    ConferenceProfile,
    build_profiles,
    jaccard,
    related_conferences,
    similarity_report,
)


def profile(cid, authors, keywords=()):
    return ConferenceProfile(cid, frozenset(authors), frozenset(keywords))


def test_jaccard_examples():
    assert jaccard({"a", "b"}, {"a", "b"}) == 1.0
    assert jaccard({"a"}, {"b"}) == 0.0
    assert jaccard({"a", "b", "c"}, {"b", "c", "d"}) == 0.5
    assert jaccard(set(), set()) == 0.0


@given(st.sets(st.integers(0, 20)), st.sets(st.integers(0, 20)))
def test_jaccard_symmetric_and_bounded(a, b):
    assert jaccard(a, b) == jaccard(b, a)
    assert 0.0 <= jaccard(a, b) <= 1.0


def fixture_profiles():
    return {
        "t": profile("t", "abcd", ["x", "y"]),
        "u": profile("u", "abcdefgh", ["x"]),      # 4/8 = 0.5
        "v": profile("v", "aefg", ["x", "y"]),     # 1/7
        "w": profile("w", "abwz", ["q"]),          # 2/6
    }


def test_related_ordering_and_self_exclusion():
    got = related_conferences("t", fixture_profiles(), 3)
    assert [c for c, _ in got] == ["u", "w", "v"]
    assert got[0][1] == 0.5 and got[2][1] == pytest.approx(1 / 7)


def test_related_k_zero_and_errors():
    profs = fixture_profiles()
    assert related_conferences("t", profs, 0) == []
    with pytest.raises(KeyError):
        related_conferences("zz", profs, 3)
    with pytest.raises(ValueError):
        related_conferences("t", profs, 2, basis="venue")


def test_tie_break_larger_union_then_id():
    profs = {
        "t": profile("t", "ab"),
        "small": profile("small", "a"),    # 1/2
        "big": profile("big", "abcd"),     # 2/4
        "big2": profile("big2", "abef"),   # 2/4
    }
    assert [c for c, _ in related_conferences("t", profs, 3)] == ["big", "big2", "small"]


def test_keyword_basis_and_fusion():
    profs = fixture_profiles()
    kw = related_conferences("t", profs, 3, basis="keywords")
    assert kw[0] == ("v", 1.0)
    fused = related_conferences("t", profs, 3, basis="fusion")
    # authors: u, w, v; keywords: v, u, w
    assert [c for c, _ in fused] == ["u", "v", "w"]
    assert fused[0][1] == pytest.approx(0.5 * (1 + 1 / 2))


def test_build_profiles_and_report():
    g = GraphRecords(
        papers=[PaperRecord("p1", 2014, "c1"), PaperRecord("p2", 2014, "c2"), PaperRecord("p3", 2010, "c2")],
        authorships=[AuthorshipLink("p1", "a1", "A"), AuthorshipLink("p2", "a1", "B"), AuthorshipLink("p3", "a2", "B")],
        keywords=[KeywordRecord("p1", "ir")],
    )
    snap = build_snapshot(g, ["p1", "p2", "p3"])
    profs = build_profiles(snap)
    assert profs["c2"].author_set == {"a1", "a2"}
    assert related_conferences("c1", profs, 1) == [("c2", 0.5)]
    assert related_conferences("c1", build_profiles(snap, (2012, 2015)), 1) == [("c2", 1.0)]
    assert similarity_report("c1", profs, 1) == [("c1", "c2", "authors", 0.5, 1)]
