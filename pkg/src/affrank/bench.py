"""Year-based backtests, the configuration grid and configuration selection."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .evaluation import DEFAULT_K, NdcgReport, RankedList, ndcg_at_k, rank_affiliations
from .features import AifIndex, FeatureSetSpec, assemble, concat_matrices
from .models import GbdtConfig, gbdt_fit, gbdt_predict, mixed_fit, prob_fit
from .models.mixed import ConvergenceError, RankDeficientError
from .relevance import RelevancePanel

logger = logging.getLogger(__name__)

MODEL_FAMILIES = ("gbdt", "mixed", "prob")
BASELINE_WINDOW = 5


class Infeasible(Exception):
    """A backtest cell that cannot be evaluated (e.g. not enough history)."""


@dataclass(frozen=True)
class CellResult:
    feature_set: str
    related_count: int
    year: int
    ndcg: Optional[float]
    feasible: bool = True
    reason: str = ""
    n_features: int = 0
    n_train_rows: int = 0


def train_years_for(panel: RelevancePanel, validation_year: int, span: Optional[int] = None) -> list[int]:
    lo = panel.first_year + 1
    if span is not None:
        lo = max(lo, validation_year - span)
    return list(range(lo, min(validation_year, panel.last_year + 1)))


def independent_columns(X: np.ndarray) -> list[int]:
    """Indices of a maximal set of non-constant, linearly independent columns."""
    varying = [j for j in range(X.shape[1]) if np.ptp(X[:, j]) > 0]
    if not varying:
        return []
    D = np.column_stack([np.ones(X.shape[0]), X[:, varying]])
    D = D / np.linalg.norm(D, axis=0)
    _, R, piv = linalg.qr(D, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > diag[0] * 1e-10))
    chosen = sorted(p - 1 for p in piv[:rank] if p > 0)
    return [varying[j] for j in chosen]


def baseline_ranking(panel: RelevancePanel, conference: str, year: int,
                     window: int = BASELINE_WINDOW) -> RankedList:
    counts = panel.counts_over(conference, range(year - window, year))
    if not counts:
        raise Infeasible(f"no accepted papers for {conference} in the {window} years before {year}")
    model = prob_fit(counts, (year - window, year - 1))
    return RankedList(tuple(model.ranking()), conference, year)


def backtest(
    panel: RelevancePanel,
    spec: FeatureSetSpec,
    related: Sequence[str],
    model_family: str,
    train_years: Sequence[int],
    validation_year: int,
    conference: Optional[str] = None,
    *,
    gbdt_config: Optional[GbdtConfig] = None,
    aif: Optional[AifIndex] = None,
    k: int = DEFAULT_K,
    baseline_window: int = BASELINE_WINDOW,
) -> tuple[NdcgReport, dict]:
    """Train on ``train_years`` targets, rank ``conference`` at ``validation_year``.

    Related conferences contribute training rows only.  Raises
    :class:`Infeasible` when the years do not allow an honest evaluation.
    Returns the report and a dict of diagnostics.
    """
    conference = conference or panel.conferences[0]
    if model_family not in MODEL_FAMILIES:
        raise ValueError(f"model family must be one of {MODEL_FAMILIES}")
    if not panel.first_year < validation_year <= panel.last_year:
        raise Infeasible(f"validation year {validation_year} cannot be scored with this panel")
    truth = panel.truth(conference, validation_year)
    if model_family == "prob":
        ranked = baseline_ranking(panel, conference, validation_year, baseline_window)
        return ndcg_at_k(ranked, truth, k), {"n_features": 0, "n_train_rows": 0}

    years = sorted(t for t in train_years
                   if panel.first_year < t <= panel.last_year and t < validation_year)
    if not years:
        raise Infeasible(f"no training year before {validation_year}")
    parts = [assemble(panel, spec, t, conference, related, aif=aif, coverage=True) for t in years]
    X, y, keys, columns = concat_matrices(parts)
    test = assemble(panel, spec, validation_year, conference, (), aif=aif, coverage=True)

    if model_family == "gbdt":
        model = gbdt_fit(X, y, gbdt_config, columns)
        pred = gbdt_predict(model, test.X)
        n_features = len(columns)
    else:
        keep = independent_columns(X)
        cols = [columns[j] for j in keep]
        groups = [(c, a) for c, a, _ in keys]
        try:
            model = mixed_fit(X[:, keep], y, groups, cols)
        except (RankDeficientError, ConvergenceError, ValueError) as exc:
            raise Infeasible(f"mixed model: {exc}") from exc
        pred = model.predict(test.X[:, keep], cols, test.keys)
        n_features = len(cols)

    affs = [a for _, a in test.keys]
    ranked = rank_affiliations(affs, pred, test.last_relevance, conference, validation_year)
    return ndcg_at_k(ranked, truth, k), {"n_features": n_features, "n_train_rows": int(X.shape[0])}


@dataclass
class GridConfig:
    conference: str
    feature_sets: dict[str, FeatureSetSpec]
    related_counts: list[int] = field(default_factory=lambda: [0, 5, 10, 15, 20])
    validation_years: list[int] = field(default_factory=list)
    model_family: str = "gbdt"
    gbdt: GbdtConfig = field(default_factory=GbdtConfig)
    neighbors: list[str] = field(default_factory=list)
    train_span: Optional[int] = None
    baseline_window: int = BASELINE_WINDOW
    k: int = DEFAULT_K

    def to_dict(self) -> dict:
        return {
            "conference": self.conference,
            "feature_sets": {n: s.to_dict() for n, s in self.feature_sets.items()},
            "related_counts": list(self.related_counts),
            "validation_years": list(self.validation_years),
            "model_family": self.model_family,
            "gbdt": asdict(self.gbdt),
            "neighbors": list(self.neighbors),
            "train_span": self.train_span,
            "baseline_window": self.baseline_window,
            "k": self.k,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridConfig":
        d = dict(d)
        d["feature_sets"] = {n: FeatureSetSpec.from_dict(s) for n, s in d["feature_sets"].items()}
        d["gbdt"] = GbdtConfig.from_dict(d.get("gbdt"))
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class BacktestReport:
    grid: dict
    cells: list[CellResult]
    baseline: dict[int, Optional[float]]

    def to_dict(self) -> dict:
        return {
            "grid": self.grid,
            "cells": [asdict(c) for c in self.cells],
            "baseline": {str(y): v for y, v in sorted(self.baseline.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BacktestReport":
        return cls(d["grid"], [CellResult(**c) for c in d["cells"]],
                   {int(y): v for y, v in d["baseline"].items()})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write(self, path: os.PathLike | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path: os.PathLike | str) -> "BacktestReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def all_infeasible(self) -> bool:
        return not any(c.feasible for c in self.cells)


def _run_cell(args) -> CellResult:
    panel, grid, name, related_count, year, aif = args
    related = grid.neighbors[:related_count]
    if related_count > len(grid.neighbors):
        logger.warning("asked for %d related conferences, only %d known", related_count, len(grid.neighbors))
    try:
        report, info = backtest(
            panel, grid.feature_sets[name], related, grid.model_family,
            train_years_for(panel, year, grid.train_span), year, grid.conference,
            gbdt_config=grid.gbdt, aif=aif, k=grid.k, baseline_window=grid.baseline_window,
        )
    except Infeasible as exc:
        return CellResult(name, related_count, year, None, False, str(exc))
    return CellResult(name, related_count, year, report.ndcg, True, "",
                      info["n_features"], info["n_train_rows"])


def _baseline_ndcg(panel, grid: GridConfig, year: int) -> Optional[float]:
    try:
        report, _ = backtest(panel, FeatureSetSpec(), (), "prob", (), year, grid.conference,
                             k=grid.k, baseline_window=grid.baseline_window)
    except Infeasible:
        return None
    return report.ndcg


def grid_search(
    panel: RelevancePanel,
    grid: GridConfig,
    jobs: int = 1,
    aif: Optional[AifIndex] = None,
) -> BacktestReport:
    """Evaluate every (feature set, related count, year) combination."""
    if not grid.feature_sets or not grid.related_counts or not grid.validation_years:
        raise ValueError("grid is empty")
    tasks = [
        (panel, grid, name, rc, year, aif)
        for name in grid.feature_sets
        for rc in grid.related_counts
        for year in grid.validation_years
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell, tasks))
    else:
        cells = [_run_cell(t) for t in tasks]
    baseline = {year: _baseline_ndcg(panel, grid, year) for year in grid.validation_years}
    return BacktestReport(grid.to_dict(), cells, baseline)


@dataclass(frozen=True)
class Selection:
    feature_set: Optional[str]
    related_count: int
    mean_ndcg: float
    years: tuple[int, ...]
    fallback: bool = False
    n_features: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def dominates_baseline(cells: Sequence[CellResult], baseline: dict) -> bool:
    """True when the feasible cells never fall below a defined baseline."""
    for c in cells:
        if not c.feasible:
            continue
        base = baseline.get(c.year)
        if base is not None and c.ndcg < base:
            return False
    return any(c.feasible for c in cells)


def select_config(report: BacktestReport) -> Selection:
    """Best mean-NDCG configuration among those never below the baseline.

    Ties go to fewer feature columns, then fewer related conferences.  When
    no configuration dominates, the baseline itself is returned with
    ``fallback=True``.
    """
    if not report.cells:
        raise ValueError("empty report")
    groups: dict[tuple[str, int], list[CellResult]] = {}
    for c in report.cells:
        groups.setdefault((c.feature_set, c.related_count), []).append(c)
    if not any(c.feasible for c in report.cells):
        raise Infeasible("no feasible configuration in the report")
    candidates = []
    for (name, rc), cells in groups.items():
        if not dominates_baseline(cells, report.baseline):
            continue
        ok = [c for c in cells if c.feasible]
        mean = float(np.mean([c.ndcg for c in ok]))
        nfeat = max(c.n_features for c in ok)
        candidates.append((-mean, nfeat, rc, name, tuple(sorted(c.year for c in ok))))
    if not candidates:
        years = tuple(sorted(y for y, v in report.baseline.items() if v is not None))
        mean = float(np.mean([report.baseline[y] for y in years])) if years else 0.0
        return Selection(None, 0, mean, years, fallback=True)
    neg_mean, nfeat, rc, name, years = min(candidates)
    return Selection(name, rc, -neg_mean, years, False, nfeat)


def evaluate_selection(
    panel: RelevancePanel,
    grid: GridConfig,
    selection: Selection,
    year: int,
    aif: Optional[AifIndex] = None,
) -> tuple[float, Optional[float]]:
    """NDCG of the selected configuration and of the baseline on ``year``."""
    base = _baseline_ndcg(panel, grid, year)
    if selection.fallback:
        return (base if base is not None else 0.0), base
    cell = _run_cell((panel, grid, selection.feature_set, selection.related_count, year, aif))
    if not cell.feasible:
        raise Infeasible(cell.reason)
    return cell.ndcg, base
