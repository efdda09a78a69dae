import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affrank.models import (
    GbdtConfig,
    backward_eliminate,
    feature_importance,
    gbdt_fit,
    gbdt_predict,
    load_model,
    mixed_fit,
    prob_fit,
    save_model,
)
from affrank.models.gbdt import staged_predict
from affrank.models.mixed import INTERCEPT, ConvergenceError, RankDeficientError, mixed_loglik


# -- probabilities baseline -----------------------------------------------

def test_prob_examples():
    m = prob_fit({"A": 3, "B": 1})
    assert m.scores == {"A": 0.75, "B": 0.25} and m.ranking()[0][0] == "A"
    assert prob_fit({"A": 1}).scores == {"A": 1.0}
    assert [a for a, _ in prob_fit({"B": 2, "A": 2}).ranking()] == ["A", "B"]
    with pytest.raises(ValueError):
        prob_fit({"A": 0})


# -- boosting ---------------------------------------------------------------

def stump_fixture():
    return np.array([[0.0], [1.0]]), np.array([0.0, 1.0])


def test_constant_target():
    X = np.random.default_rng(0).random((30, 3))
    model = gbdt_fit(X, np.full(30, 2.5), GbdtConfig(n_trees=5))
    assert np.all(gbdt_predict(model, X) == 2.5)


def test_stump_exact_fit():
    X, y = stump_fixture()
    model = gbdt_fit(X, y, GbdtConfig(n_trees=1, max_depth=1, learning_rate=1.0, min_samples_leaf=1))
    assert model.base_prediction == 0.5
    tree = model.trees[0]
    assert sorted(tree.value[tree.feature < 0]) == [-0.5, 0.5]
    assert gbdt_predict(model, np.array([[0.0]]))[0] == 0.0
    assert gbdt_predict(model, X).tolist() == [0.0, 1.0]


@pytest.mark.parametrize("M", [1, 2, 5, 10])
def test_residual_contraction(M):
    X, y = stump_fixture()
    model = gbdt_fit(X, y, GbdtConfig(n_trees=M, max_depth=1, learning_rate=0.5, min_samples_leaf=1))
    resid = y - gbdt_predict(model, X)
    np.testing.assert_allclose(np.abs(resid), 0.5 ** M * 0.5, rtol=0, atol=1e-15)


def test_empty_ensemble_and_duplicate_rows():
    X = np.random.default_rng(1).random((20, 2))
    y = X[:, 0]
    assert np.all(gbdt_predict(gbdt_fit(X, y, GbdtConfig(n_trees=0)), X) == y.mean())
    model = gbdt_fit(X, y, GbdtConfig(n_trees=10))
    p = gbdt_predict(model, np.vstack([X[:1], X[:1]]))
    assert p[0] == p[1]


def test_rejects_non_finite():
    X = np.ones((3, 1))
    with pytest.raises(ValueError):
        gbdt_fit(np.array([[np.nan], [1.0], [2.0]]), [1, 2, 3])
    with pytest.raises(ValueError):
        gbdt_fit(X, [1.0, np.inf, 0.0])


def test_missing_column_named():
    X = np.random.default_rng(2).random((20, 2))
    model = gbdt_fit(X, X[:, 0], GbdtConfig(n_trees=3), ["a", "b"])
    with pytest.raises(KeyError, match="b"):
        gbdt_predict(model, X[:, :1], ["a"])
    swapped = gbdt_predict(model, X[:, ::-1], ["b", "a"])
    np.testing.assert_array_equal(swapped, gbdt_predict(model, X))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_loss_monotone(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(60, 4))
    y = X[:, 0] ** 2 + rng.normal(size=60)
    model = gbdt_fit(X, y, GbdtConfig(n_trees=40, max_depth=3, learning_rate=0.3, min_samples_leaf=2))
    assert np.all(np.diff(model.train_loss) <= 1e-12 * model.train_loss[0])
    last = list(staged_predict(model, X))[-1]
    np.testing.assert_allclose(last, gbdt_predict(model, X))


@pytest.mark.parametrize("seed", range(5))
def test_interpolation_deep_trees(seed):
    rng = np.random.default_rng(seed)
    X = rng.random((50, 3))
    y = rng.normal(size=50)
    model = gbdt_fit(X, y, GbdtConfig(n_trees=50, max_depth=6, learning_rate=1.0, min_samples_leaf=1))
    assert np.mean((gbdt_predict(model, X) - y) ** 2) < 1e-10


def test_importance():
    rng = np.random.default_rng(4)
    X = np.column_stack([rng.random(80), np.zeros(80)])
    model = gbdt_fit(X, 3 * X[:, 0], GbdtConfig(n_trees=20), ["f1", "f2"])
    imp = feature_importance(model)
    assert "f2" not in imp and imp["f1"] == pytest.approx(1.0)
    Xs, ys = stump_fixture()
    stump = gbdt_fit(Xs, ys, GbdtConfig(n_trees=1, max_depth=1, min_samples_leaf=1), ["x"])
    assert feature_importance(stump) == {"x": 1.0}
    assert feature_importance(gbdt_fit(Xs, ys, GbdtConfig(n_trees=0))) == {}
    X2 = rng.random((200, 2))
    both = feature_importance(gbdt_fit(X2, X2[:, 0] + 2 * X2[:, 1], GbdtConfig(n_trees=30)))
    assert set(both) == {"f0", "f1"} and sum(both.values()) == pytest.approx(1.0)


def test_gbdt_serialization(tmp_path):
    rng = np.random.default_rng(5)
    X = rng.random((40, 3))
    model = gbdt_fit(X, X @ [1, -2, 0.5], GbdtConfig(n_trees=15, feature_fraction=0.67, seed=3), ["a", "b", "c"])
    back = load_model(save_model(model, tmp_path / "m.json"))
    assert back.columns == model.columns and back.config == model.config
    np.testing.assert_array_equal(gbdt_predict(back, X), gbdt_predict(model, X))


# -- mixed model --------------------------------------------------------------

def grouped_data(seed, n_groups=12, per=8, s2u=1.0, betas=(2.0, -1.0)):
    rng = np.random.default_rng(seed)
    groups = np.repeat([f"g{i}" for i in range(n_groups)], per)
    u = rng.normal(0, np.sqrt(s2u), n_groups).repeat(per)
    X = rng.normal(size=(groups.size, len(betas)))
    y = 0.5 + X @ np.array(betas) + u + rng.normal(size=groups.size)
    return X, y, list(groups)


def test_zero_group_variance_is_ols():
    X, y, groups = grouped_data(0, s2u=0.0)
    model = mixed_fit(X, y, groups, ["a", "b"], zero_group_variance=True)
    D = np.column_stack([np.ones(len(y)), X])
    ols = np.linalg.lstsq(D, y, rcond=None)[0]
    got = [model.fixed_coefficients[k] for k in (INTERCEPT, "a", "b")]
    np.testing.assert_allclose(got, ols, atol=1e-8)
    assert set(model.random_intercepts.values()) == {0.0}


def balanced_oracle(y, groups, n):
    ybar = np.array([np.mean(y[groups == g]) for g in np.unique(groups)])
    G, N = ybar.size, y.size
    mu = y.mean()
    ssw = sum(np.sum((y[groups == g] - m) ** 2) for g, m in zip(np.unique(groups), ybar))
    s2e = ssw / (N - G)
    s2u = (n * np.sum((ybar - mu) ** 2) / G - s2e) / n
    return mu, s2e, s2u, n * s2u / (s2e + n * s2u) * (ybar - mu)


def test_balanced_shrinkage_matches_closed_form():
    rng = np.random.default_rng(7)
    n, G = 6, 10
    groups = np.repeat(np.arange(G), n)
    y = rng.normal(0, 1.5, G).repeat(n) + rng.normal(size=G * n)
    model = mixed_fit(np.empty((y.size, 0)), y, groups.tolist())
    mu, s2e, s2u, blup = balanced_oracle(y, groups, n)
    assert s2u > 0
    assert model.fixed_coefficients[INTERCEPT] == pytest.approx(mu, abs=1e-6)
    assert model.sigma2_residual == pytest.approx(s2e, abs=1e-6)
    assert model.sigma2_group == pytest.approx(s2u, abs=1e-6)
    np.testing.assert_allclose([model.random_intercepts[g] for g in range(G)], blup, atol=1e-6)


def test_two_group_shrinkage_between_means():
    y = np.array([1.0, 2.0, 3.0, 7.0, 8.0, 9.0])
    model = mixed_fit(np.empty((6, 0)), y, ["a"] * 3 + ["b"] * 3)
    grand = y.mean()
    for g, m in (("a", 2.0), ("b", 8.0)):
        fitted = model.fixed_coefficients[INTERCEPT] + model.random_intercepts[g]
        assert min(m, grand) < fitted < max(m, grand)


def test_plain_em_agrees_with_accelerated():
    X, y, groups = grouped_data(1)
    fast = mixed_fit(X, y, groups)
    slow = mixed_fit(X, y, groups, accelerate=False, max_iter=5000, tol=1e-10)
    assert fast.sigma2_group == pytest.approx(slow.sigma2_group, rel=1e-5)
    assert fast.loglik == pytest.approx(slow.loglik, abs=1e-6)
    assert fast.loglik >= slow.loglik - 1e-8
    beta = [fast.fixed_coefficients[k] for k in (INTERCEPT, "x0", "x1")]
    assert mixed_loglik(X, y, groups, beta, fast.sigma2_group, fast.sigma2_residual) == pytest.approx(fast.loglik)


def test_boundary_gives_zero_group_variance():
    # group means identical by construction: no between-group spread
    y = np.array([0.0, 2.0, 0.0, 2.0, 0.0, 2.0])
    model = mixed_fit(np.empty((6, 0)), y, ["a", "a", "b", "b", "c", "c"])
    assert model.sigma2_group == 0.0


def test_mixed_errors():
    X, y, groups = grouped_data(2)
    with pytest.raises(ValueError):
        mixed_fit(X, y, ["g"] * len(y))
    with pytest.raises(RankDeficientError) as err:
        mixed_fit(np.column_stack([X, 2 * X[:, 0]]), y, groups, ["a", "b", "c"])
    assert "a" in err.value.columns or "c" in err.value.columns
    with pytest.raises(ConvergenceError) as conv:
        mixed_fit(X, y, groups, accelerate=False, max_iter=2)
    assert len(conv.value.trace) == 2


def test_constant_column_dropped_and_predict():
    X, y, groups = grouped_data(3)
    X = np.column_stack([X, np.ones(len(y))])
    model = mixed_fit(X, y, groups, ["a", "b", "k"])
    assert model.dropped_constant == ["k"] and model.features == ["a", "b"]
    pred = model.predict(X, ["a", "b", "k"], groups)
    assert np.corrcoef(pred, y)[0, 1] > 0.8
    with pytest.raises(KeyError, match="b"):
        model.predict(X[:, :1], ["a"])


def test_mixed_serialization(tmp_path):
    X, y, _ = grouped_data(4)
    groups = [("c1", f"A{i // 8}") for i in range(len(y))]
    model = mixed_fit(X, y, groups)
    back = load_model(save_model(model, tmp_path / "mixed.json"))
    np.testing.assert_array_equal(back.predict(X, ["x0", "x1"], groups), model.predict(X, ["x0", "x1"], groups))


def test_backward_elimination():
    rng = np.random.default_rng(11)
    X, y, groups = grouped_data(5, n_groups=20, per=10, betas=(1.5,))
    X = np.column_stack([X, rng.normal(size=len(y))])
    model = backward_eliminate(X, y, groups, ["signal", "noise"])
    assert model.features == ["signal"] and model.eliminated == ["noise"]
    same = backward_eliminate(X, y, groups, ["signal", "noise"], level=1.0)
    assert same.features == ["signal", "noise"] and same.eliminated == []


def test_backward_all_significant_fixed_point():
    X, y, groups = grouped_data(6, n_groups=20, per=10)
    model = backward_eliminate(X, y, groups, ["a", "b"])
    assert model.features == ["a", "b"]
