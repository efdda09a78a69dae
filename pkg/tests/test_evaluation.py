import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affrank.evaluation import RankedList, dcg, ndcg_at_k, rank_affiliations


def test_dcg_examples():
    assert dcg([3]) == 3.0
    assert dcg([2, 3, 1]) == pytest.approx(2 + 3 / math.log2(3) + 0.5, abs=1e-12)
    assert dcg([2, 3, 1]) == pytest.approx(4.3928, abs=1e-4)
    assert dcg([]) == 0.0
    assert dcg([5, 5], k=1) == 5.0
    with pytest.raises(ValueError):
        dcg([1, -1])


def test_ndcg_examples():
    truth = {"A": 3, "B": 2, "C": 1}
    assert ndcg_at_k(["A", "B", "C"], truth).ndcg == 1.0
    rep = ndcg_at_k(["B", "A", "C"], truth)
    assert rep.ndcg == pytest.approx(0.9225, abs=1e-4)
    assert rep.idcg == pytest.approx(4.7619, abs=1e-4)
    assert ndcg_at_k(["X", "Y"], truth).ndcg == 0.0


def test_all_zero_truth_flag():
    rep = ndcg_at_k(["A"], {"A": 0.0, "B": 0.0})
    assert rep.ndcg == 0.0 and rep.all_zero_truth


def test_duplicates_rejected():
    with pytest.raises(ValueError):
        ndcg_at_k(["A", "A"], {"A": 1})
    with pytest.raises(ValueError):
        RankedList((("A", 1.0), ("A", 0.5)))


def test_rank_tie_breaks():
    ranked = rank_affiliations(["C", "B", "A", "D"], [1, 1, 1, 2], recent=[0, 5, 0, 0])
    assert ranked.affiliations == ["D", "B", "A", "C"]


def brute_force(pred, truth, k):
    """Best DCG over every permutation, not the sorted shortcut."""
    gains = lambda order: sum(truth.get(a, 0) / math.log2(i + 2) for i, a in enumerate(order[:k]))
    best = max(gains(p) for p in itertools.permutations(truth))
    return gains(pred) / best if best > 0 else 0.0


rel = st.floats(0, 10, allow_nan=False).map(lambda v: round(v, 3))


@settings(max_examples=80, deadline=None)
@given(st.dictionaries(st.sampled_from("ABCDEFG"), rel, min_size=1, max_size=6),
       st.permutations("ABCDEFGH"), st.integers(1, 8))
def test_matches_permutation_oracle(truth, order, k):
    pred = list(order)[:6]
    assert ndcg_at_k(pred, truth, k).ndcg == pytest.approx(brute_force(pred, truth, k), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.sampled_from("ABCDEFGH"), rel, min_size=1, max_size=8),
       st.permutations("ABCDEFGH"))
def test_bounded_and_tail_invariant(truth, order):
    order = list(order)
    rep = ndcg_at_k(order, truth, 3)
    assert 0.0 <= rep.ndcg <= 1.0 + 1e-12
    shuffled_tail = order[:3] + order[3:][::-1]
    assert ndcg_at_k(shuffled_tail, truth, 3).ndcg == rep.ndcg
