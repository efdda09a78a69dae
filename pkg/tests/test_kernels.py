import numpy as np
import pytest

from affrank import _kernels
from affrank.models import GbdtConfig, gbdt_fit, gbdt_predict

needs_cython = pytest.mark.skipif("cython" not in _kernels.available_backends(),
                                  reason="compiled kernel not built")


def split_inputs(seed, n=200, p=5, n_nodes=3):
    rng = np.random.default_rng(seed)
    X = np.ascontiguousarray(rng.integers(0, 6, size=(n, p)).astype(float))  # many ties
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T, dtype=np.intp)
    resid = rng.normal(size=n)
    node_of = rng.integers(-1, n_nodes, size=n).astype(np.int32)
    return X, order, resid, node_of, n_nodes


def test_python_backend_always_available():
    assert "python" in _kernels.available_backends()
    with pytest.raises(ValueError):
        _kernels.get_backend("fortran")


def test_python_split_matches_brute_force():
    X, order, resid, node_of, n_nodes = split_inputs(0)
    feat, thr, gain, _ = _kernels.get_backend("python")(
        X, order, resid, node_of, n_nodes, 3, np.arange(X.shape[1], dtype=np.intp))
    for s in range(n_nodes):
        rows = node_of == s
        r, xs = resid[rows], X[rows]
        best = (0.0, -1, 0.0)
        for f in range(X.shape[1]):
            for t in np.unique(xs[:, f])[:-1]:
                left = xs[:, f] <= t
                if left.sum() < 3 or (~left).sum() < 3:
                    continue
                g = r[left].sum() ** 2 / left.sum() + r[~left].sum() ** 2 / (~left).sum() - r.sum() ** 2 / r.size
                if g > best[0] + 1e-12:
                    best = (g, f, t)
        assert feat[s] == best[1]
        if best[1] >= 0:
            assert gain[s] == pytest.approx(best[0], rel=1e-9)
            assert np.sum(xs[:, feat[s]] <= thr[s]) == np.sum(xs[:, best[1]] <= best[2])


@needs_cython
@pytest.mark.parametrize("seed", range(5))
def test_backends_bit_identical_splits(seed):
    args = split_inputs(seed)
    feats = np.arange(args[0].shape[1], dtype=np.intp)
    a = _kernels.get_backend("cython")(*args[:4], args[4], 2, feats)
    b = _kernels.get_backend("python")(*args[:4], args[4], 2, feats)
    for u, v in zip(a, b):
        assert np.asarray(u).tobytes() == np.asarray(v).tobytes()


@needs_cython
def test_backends_bit_identical_models():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(300, 6)).round(1)
    y = X[:, 0] - X[:, 1] ** 2 + rng.normal(size=300)
    cfg = GbdtConfig(n_trees=30, max_depth=4, feature_fraction=0.5, seed=1)
    fast = gbdt_fit(X, y, cfg, backend="cython")
    slow = gbdt_fit(X, y, cfg, backend="python")
    assert fast.train_loss == slow.train_loss
    assert gbdt_predict(fast, X).tobytes() == gbdt_predict(slow, X).tobytes()
