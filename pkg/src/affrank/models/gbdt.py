"""Least-squares gradient boosted regression trees.

Trees are grown level by level.  At each level the split search scans every
feature once in presorted order for all open nodes together, which is the
part handed to :mod:`affrank._kernels`.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .. import _kernels

logger = logging.getLogger(__name__)

# split gains below this fraction of the node's sum of squares are rounding noise
_GAIN_RTOL = 1e-12


@dataclass(frozen=True)
class GbdtConfig:
    n_trees: int = 300
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 5
    feature_fraction: float = 1.0
    min_split_gain: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 0 or self.max_depth < 0:
            raise ValueError("n_trees and max_depth must be >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not 0.0 < self.feature_fraction <= 1.0:
            raise ValueError("feature_fraction must lie in (0, 1]")

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "GbdtConfig":
        return cls(**(d or {}))


@dataclass
class Tree:
    """Flat array tree; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return node
            r, n, f = rows[inner], node[inner], feat[inner]
            go_left = X[r, f] <= self.threshold[n]
            node[inner] = np.where(go_left, self.left[n], self.right[n])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_nested(self, columns: Sequence[str], i: int = 0) -> dict:
        if self.feature[i] < 0:
            return {"leaf": float(self.value[i])}
        return {
            "feature": columns[self.feature[i]],
            "threshold": float(self.threshold[i]),
            "gain": float(self.gain[i]),
            "left": self.to_nested(columns, int(self.left[i])),
            "right": self.to_nested(columns, int(self.right[i])),
        }

    @classmethod
    def from_nested(cls, node: dict, columns: Sequence[str]) -> "Tree":
        col = {c: i for i, c in enumerate(columns)}
        feats, thrs, lefts, rights, vals, gains = [], [], [], [], [], []

        def add(n):
            i = len(feats)
            feats.append(-1); thrs.append(0.0); lefts.append(-1); rights.append(-1)
            vals.append(0.0); gains.append(0.0)
            if "leaf" in n:
                vals[i] = float(n["leaf"])
                return i
            if n["feature"] not in col:
                raise KeyError(f"tree references unknown feature {n['feature']!r}")
            feats[i] = col[n["feature"]]
            thrs[i] = float(n["threshold"])
            gains[i] = float(n.get("gain", 0.0))
            lefts[i] = add(n["left"])
            rights[i] = add(n["right"])
            return i

        add(node)
        return cls(np.array(feats, dtype=np.intp), np.array(thrs), np.array(lefts, dtype=np.intp),
                   np.array(rights, dtype=np.intp), np.array(vals), np.array(gains))


@dataclass
class GbdtModel:
    columns: list[str]
    base_prediction: float
    trees: list[Tree]
    config: GbdtConfig
    train_loss: list[float] = field(default_factory=list)

    @property
    def shrinkage(self) -> float:
        return self.config.learning_rate

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "base_prediction": self.base_prediction,
            "config": asdict(self.config),
            "trees": [t.to_nested(self.columns) for t in self.trees],
            "train_loss": list(self.train_loss),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtModel":
        cols = list(d["columns"])
        return cls(cols, float(d["base_prediction"]),
                   [Tree.from_nested(t, cols) for t in d["trees"]],
                   GbdtConfig.from_dict(d["config"]), list(d.get("train_loss", [])))


def _check_finite(X: np.ndarray, y: Optional[np.ndarray] = None) -> None:
    if not np.all(np.isfinite(X)):
        bad = sorted(set(np.argwhere(~np.isfinite(X))[:, 1].tolist()))
        raise ValueError(f"non-finite feature values in columns {bad}")
    if y is not None and not np.all(np.isfinite(y)):
        raise ValueError("non-finite target values")


def _grow_tree(X, order, resid, features, cfg: GbdtConfig, find_splits) -> tuple[Tree, np.ndarray]:
    """Fit one tree to ``resid``; also return each row's leaf index."""
    n = X.shape[0]
    feats, thrs, lefts, rights, gains = [-1], [0.0], [-1], [-1], [0.0]
    leaf_of = np.zeros(n, dtype=np.intp)
    slot_of = np.zeros(n, dtype=np.int32)
    open_nodes = [0]
    for _ in range(cfg.max_depth):
        if not open_nodes:
            break
        n_open = len(open_nodes)
        best_f, best_t, best_g, _ = find_splits(
            X, order, resid, slot_of, n_open, cfg.min_samples_leaf, features
        )
        valid = slot_of >= 0
        node_ss = np.bincount(slot_of[valid], weights=resid[valid] ** 2, minlength=n_open)
        left_slot = np.full(n_open, -1, dtype=np.int32)
        right_slot = np.full(n_open, -1, dtype=np.int32)
        next_open = []
        for s, node in enumerate(open_nodes):
            g = best_g[s]
            if best_f[s] < 0 or g <= cfg.min_split_gain or g <= _GAIN_RTOL * node_ss[s]:
                continue
            feats[node], thrs[node], gains[node] = int(best_f[s]), float(best_t[s]), float(g)
            for side in (lefts, rights):
                side[node] = len(feats)
                feats.append(-1); thrs.append(0.0); lefts.append(-1); rights.append(-1); gains.append(0.0)
            left_slot[s] = len(next_open)
            next_open.append(lefts[node])
            right_slot[s] = len(next_open)
            next_open.append(rights[node])
        if not next_open:
            break
        rows = np.flatnonzero(valid)
        s = slot_of[rows]
        moving = left_slot[s] >= 0
        rows, s = rows[moving], s[moving]
        new_slot = np.full(n, -1, dtype=np.int32)
        f = np.asarray(best_f)[s]
        go_left = X[rows, f] <= np.asarray(best_t)[s]
        new_slot[rows] = np.where(go_left, left_slot[s], right_slot[s])
        slot_of = new_slot
        node_ids = np.asarray(next_open, dtype=np.intp)
        leaf_of[rows] = node_ids[new_slot[rows]]
        open_nodes = next_open
    n_nodes = len(feats)
    sums = np.bincount(leaf_of, weights=resid, minlength=n_nodes)
    counts = np.bincount(leaf_of, minlength=n_nodes)
    value = np.zeros(n_nodes)
    np.divide(sums, counts, out=value, where=counts > 0)
    tree = Tree(np.array(feats, dtype=np.intp), np.array(thrs), np.array(lefts, dtype=np.intp),
                np.array(rights, dtype=np.intp), value, np.array(gains))
    return tree, leaf_of


def gbdt_fit(
    X: np.ndarray,
    y: np.ndarray,
    config: Optional[GbdtConfig] = None,
    columns: Optional[Sequence[str]] = None,
    *,
    backend: Optional[str] = None,
) -> GbdtModel:
    """Boost ``config.n_trees`` regression trees on squared loss.

    ``backend`` forces ``"cython"`` or ``"python"`` split search; by default
    the compiled kernel is used when available.
    """
    cfg = config or GbdtConfig()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"X {X.shape} and y {y.shape} do not match")
    if X.shape[0] < 1:
        raise ValueError("need at least one training row")
    _check_finite(X, y)
    columns = list(columns) if columns is not None else [f"f{i}" for i in range(X.shape[1])]
    if len(columns) != X.shape[1]:
        raise ValueError("column names do not match X")
    find_splits = _kernels.get_backend(backend) if backend else _kernels.find_best_splits

    base = float(y[0]) if np.all(y == y[0]) else float(np.mean(y))
    pred = np.full(y.shape, base)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T, dtype=np.intp)
    rng = np.random.default_rng(cfg.seed)
    p = X.shape[1]
    n_sub = max(1, int(round(cfg.feature_fraction * p)))
    trees = []
    resid = y - pred
    loss = [float(resid @ resid)]
    for _ in range(cfg.n_trees):
        if cfg.feature_fraction < 1.0:
            features = np.sort(rng.choice(p, size=n_sub, replace=False)).astype(np.intp)
        else:
            features = np.arange(p, dtype=np.intp)
        tree, leaf_of = _grow_tree(X, order, resid, features, cfg, find_splits)
        pred = pred + cfg.learning_rate * tree.value[leaf_of]
        resid = y - pred
        trees.append(tree)
        loss.append(float(resid @ resid))
    return GbdtModel(columns, base, trees, cfg, loss)


def gbdt_predict(model: GbdtModel, X: np.ndarray, columns: Optional[Sequence[str]] = None) -> np.ndarray:
    """Predict rows of ``X``; with ``columns`` given, they are matched by name."""
    X = np.asarray(X, dtype=np.float64)
    if columns is not None:
        columns = list(columns)
        missing = [c for c in model.columns if c not in columns]
        if missing:
            raise KeyError(f"missing feature column(s): {', '.join(missing)}")
        X = X[:, [columns.index(c) for c in model.columns]]
    elif X.shape[1] != len(model.columns):
        raise ValueError(f"expected {len(model.columns)} columns, got {X.shape[1]}")
    out = np.full(X.shape[0], model.base_prediction)
    if model.trees:
        total = np.zeros(X.shape[0])
        for tree in model.trees:
            total += tree.predict(X)
        out = out + model.shrinkage * total
    return out


def staged_predict(model: GbdtModel, X: np.ndarray):
    pred = np.full(X.shape[0], model.base_prediction)
    yield pred.copy()
    for tree in model.trees:
        pred = pred + model.shrinkage * tree.predict(X)
        yield pred.copy()


def feature_importance(model: GbdtModel) -> dict[str, float]:
    """Share of the total squared-error reduction credited to each feature."""
    totals = np.zeros(len(model.columns))
    for tree in model.trees:
        inner = tree.feature >= 0
        np.add.at(totals, tree.feature[inner], tree.gain[inner])
    grand = totals.sum()
    if grand <= 0:
        return {}
    return {c: float(totals[i] / grand) for i, c in enumerate(model.columns) if totals[i] > 0}
