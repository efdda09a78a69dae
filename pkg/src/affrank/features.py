"""Time-series features over a relevance panel.

Scalar helpers (:func:`series_stats`, :func:`drift_forecast`, ...) work on
one history; :func:`assemble` computes the same quantities for every row of
a panel at once with numpy and packs them into a :class:`FeatureMatrix`.
"""

from __future__ import annotations

import json
import os
from bisect import bisect_left
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .ingest import CorpusSnapshot
from .relevance import RelevancePanel

STAT_NAMES = ("std", "sum", "min", "max", "median", "mean")
DEFAULT_SES_ALPHAS = (0.1, 0.3, 0.5, 0.7, 0.9)
ALPHA_GRID = np.arange(1, 101) / 100.0
SES_FALLBACK_ALPHA = 0.5
DEFAULT_AIF_WINDOW = 2
MAX_WINDOW = 4


# -- scalar operations ----------------------------------------------------

def series_stats(values: Sequence[float]) -> tuple[float, ...]:
    """(std, sum, min, max, median, mean) with the population std."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("series_stats needs a nonempty 1-d sequence")
    return tuple(float(v) for v in _stats_rows(arr[None, :])[0])


def lagged_relevance(
    panel: RelevancePanel,
    key: tuple[str, str],
    target_year: int,
    window: int,
    zero_extend: bool = False,
) -> list[float]:
    """Relevance 1..window years before ``target_year``, most recent first."""
    conference, affiliation = key
    if window < 1:
        raise ValueError("window must be >= 1")
    if target_year - window < panel.first_year and not zero_extend:
        raise ValueError(
            f"lag {window} from {target_year} leaves the panel (starts {panel.first_year})"
        )
    row = panel.relevance[panel.conference_index(conference), panel.affiliation_index(affiliation)]
    out = []
    for k in range(1, window + 1):
        year = target_year - k
        out.append(float(row[year - panel.first_year]) if panel.first_year <= year <= panel.last_year else 0.0)
    return out


def linear_weights(window: int) -> np.ndarray:
    w = np.arange(window, 0, -1, dtype=float)
    return w / w.sum()


def weighted_moving_average(lags: Sequence[float], window: int) -> float:
    """Linearly decaying normalized weights, lags given most recent first."""
    lags = np.asarray(lags, dtype=float)
    if lags.shape != (window,):
        raise ValueError(f"expected {window} lags, got {lags.shape}")
    return float(lags @ linear_weights(window))


def drift_forecast(history: Sequence[float]) -> float:
    """Last value plus the mean step of the history."""
    h = np.asarray(history, dtype=float)
    if h.size == 0:
        raise ValueError("empty history")
    if h.size == 1:
        return float(h[0])
    return float(h[-1] + (h[-1] - h[0]) / (h.size - 1))


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"smoothing parameter must lie in (0, 1], got {alpha}")


def ses_forecast(history: Sequence[float], alpha: float) -> float:
    _check_alpha(alpha)
    h = np.asarray(history, dtype=float)
    if h.size == 0:
        raise ValueError("empty history")
    if alpha == 1.0:
        return float(h[-1])
    level = h[0]
    for value in h[1:]:
        level = level + alpha * (value - level)
    return float(level)


def ses_fit_alpha(history: Sequence[float]) -> tuple[float, float]:
    """Grid-fit the smoothing parameter on one-step-ahead squared error.

    The grid is 0.01, 0.02, ..., 1.00 and ties go to the smaller value.
    Returns ``(alpha, forecast)``.
    """
    h = np.asarray(history, dtype=float)
    if h.size < 3:
        raise ValueError("ses_fit_alpha needs at least 3 observations")
    alpha, forecast = _ses_fit_rows(h[None, :])
    return float(alpha[0]), float(forecast[0])


# -- batch kernels (rows x time) -------------------------------------------

def _stats_rows(h: np.ndarray) -> np.ndarray:
    lo, hi = h.min(axis=1), h.max(axis=1)
    flat = lo == hi
    # constant rows get exact moments instead of summation round-off
    std = np.where(flat, 0.0, h.std(axis=1))
    mean = np.where(flat, lo, h.mean(axis=1))
    return np.column_stack([std, h.sum(axis=1), lo, hi, np.median(h, axis=1), mean])


def _drift_rows(h: np.ndarray) -> np.ndarray:
    if h.shape[1] == 1:
        return h[:, 0].copy()
    return h[:, -1] + (h[:, -1] - h[:, 0]) / (h.shape[1] - 1)


def _ses_rows(h: np.ndarray, alpha: float) -> np.ndarray:
    if alpha == 1.0:
        return h[:, -1].copy()
    level = h[:, 0].copy()
    for t in range(1, h.shape[1]):
        level += alpha * (h[:, t] - level)
    return level


def _ses_fit_rows(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = h.shape[0]
    level = np.repeat(h[:, :1], ALPHA_GRID.size, axis=1)
    sse = np.zeros((n, ALPHA_GRID.size))
    for t in range(1, h.shape[1]):
        err = h[:, t:t + 1] - level
        sse += err * err
        level += ALPHA_GRID * err
        level[:, -1] = h[:, t]
    best = np.argmin(sse, axis=1)
    return ALPHA_GRID[best], level[np.arange(n), best]


# -- author impact factor ---------------------------------------------------

class AifIndex:
    """Per-author impact factor lookups over a corpus snapshot.

    The impact factor of an author in year ``t`` is the number of citations
    received during ``t`` by the author's papers published in the
    ``window`` years before ``t``, divided by the number of those papers.
    """

    def __init__(self, snapshot: CorpusSnapshot, window: int = DEFAULT_AIF_WINDOW):
        if window < 1:
            raise ValueError("AIF window must be >= 1")
        self.window = window
        year_of = {p.paper_id: p.year for p in snapshot.papers}
        conf_of = {p.paper_id: p.conference_series_id for p in snapshot.papers}
        self._cites: dict[str, Counter] = defaultdict(Counter)
        for e in snapshot.citations:
            if e.cited_paper_id in year_of and e.citing_paper_id in year_of:
                self._cites[e.cited_paper_id][year_of[e.citing_paper_id]] += 1
        papers: dict[str, set[tuple[int, str]]] = defaultdict(set)
        # (conference, affiliation) -> author -> first year seen
        self._members: dict[tuple[str, str], dict[str, int]] = defaultdict(dict)
        for link in snapshot.authorships:
            year = year_of.get(link.paper_id)
            if year is None:
                continue
            papers[link.author_id].add((year, link.paper_id))
            conf = conf_of[link.paper_id]
            if conf is not None and link.affiliation_id is not None:
                seen = self._members[conf, link.affiliation_id]
                seen[link.author_id] = min(year, seen.get(link.author_id, year))
        self._papers = {a: sorted(v) for a, v in papers.items()}
        self._cache: dict[tuple[str, int], Optional[float]] = {}

    def author_aif(self, author: str, year: int) -> Optional[float]:
        key = (author, year)
        if key not in self._cache:
            self._cache[key] = self._compute(author, year)
        return self._cache[key]

    def _compute(self, author: str, year: int) -> Optional[float]:
        papers = self._papers.get(author, ())
        lo = bisect_left(papers, (year - self.window, ""))
        hi = bisect_left(papers, (year, ""))
        window = papers[lo:hi]
        if not window:
            return None
        cites = sum(self._cites[pid][year] for _, pid in window if pid in self._cites)
        return cites / len(window)

    def authors_for(self, conference: str, affiliation: str, before_year: int) -> list[str]:
        members = self._members.get((conference, affiliation), {})
        return sorted(a for a, first in members.items() if first < before_year)

    def aif_values(self, conference: str, affiliation: str, year: int, first_year: int) -> list[float]:
        values = []
        for author in self.authors_for(conference, affiliation, year):
            for y in range(first_year, year):
                v = self.author_aif(author, y)
                if v is not None:
                    values.append(v)
        return values


def author_aif(author: str, year: int, snapshot: CorpusSnapshot, window: int = DEFAULT_AIF_WINDOW) -> Optional[float]:
    return AifIndex(snapshot, window).author_aif(author, year)


def aif_stats(
    index: AifIndex, key: tuple[str, str], year: int, first_year: int
) -> tuple[tuple[float, ...], int]:
    """AIF statistics for one (conference, affiliation) pair plus a presence flag."""
    values = index.aif_values(key[0], key[1], year, first_year)
    if not values:
        return (0.0,) * len(STAT_NAMES), 0
    return series_stats(values), 1


# -- feature sets -----------------------------------------------------------

@dataclass(frozen=True)
class FeatureSetSpec:
    """Which feature families to compute.

    Window lists hold the number of past years a family looks at.
    """

    include_w: tuple[int, ...] = ()
    include_sw: tuple[int, ...] = ()
    include_s_all: bool = False
    include_wt: tuple[int, ...] = ()
    include_drift: bool = False
    include_ses_fixed: tuple[float, ...] = ()
    include_ses_fitted: bool = False
    include_aif: bool = False
    max_window: int = MAX_WINDOW

    def __post_init__(self):
        for name in ("include_w", "include_sw", "include_wt", "include_ses_fixed"):
            object.__setattr__(self, name, tuple(sorted(set(getattr(self, name)))))
        for name in ("include_w", "include_sw", "include_wt"):
            for w in getattr(self, name):
                if not isinstance(w, (int, np.integer)) or not 1 <= w <= self.max_window:
                    raise ValueError(f"{name}: window {w} outside 1..{self.max_window}")
        for w in self.include_wt:
            if w < 2:
                raise ValueError("weighted moving averages need a window of at least 2")
        for a in self.include_ses_fixed:
            _check_alpha(a)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSetSpec":
        d = dict(d)
        for name in ("include_w", "include_sw", "include_wt", "include_ses_fixed"):
            if name in d:
                d[name] = tuple(d[name])
        return cls(**d)

    def is_empty(self) -> bool:
        return not self.column_names(coverage=False)

    def column_names(self, coverage: bool = False) -> list[str]:
        cols: list[str] = []
        if self.include_w:
            cols += [f"w_lag{k}" for k in range(1, max(self.include_w) + 1)]
        for y in self.include_sw:
            cols += [f"sw{y}_{s}" for s in STAT_NAMES]
        if self.include_s_all:
            cols += [f"s_all_{s}" for s in STAT_NAMES]
        cols += [f"wt{y}" for y in self.include_wt]
        if self.include_drift:
            cols.append("dt")
        cols += [f"es_{a:g}" for a in self.include_ses_fixed]
        if self.include_ses_fitted:
            cols.append("es_fit")
        if self.include_aif:
            cols += [f"aif_{s}" for s in STAT_NAMES] + ["aif_present"]
        if coverage:
            cols.append("hist_years")
        return cols

    def deepest_window(self) -> int:
        return max(self.include_w + self.include_sw + self.include_wt, default=0)


def preset_feature_sets(ses_alphas: Sequence[float] = DEFAULT_SES_ALPHAS) -> dict[str, FeatureSetSpec]:
    """Candidate feature sets: each family combined with drift and fitted SES."""
    windows = tuple(range(1, MAX_WINDOW + 1))
    trend = dict(include_drift=True, include_ses_fitted=True)
    return {
        "dt+es": FeatureSetSpec(**trend),
        "w+dt+es": FeatureSetSpec(include_w=(MAX_WINDOW,), **trend),
        "sw+dt+es": FeatureSetSpec(include_sw=windows, include_s_all=True, **trend),
        "w+sw+dt+es": FeatureSetSpec(include_w=(MAX_WINDOW,), include_sw=windows, include_s_all=True, **trend),
        "es_a+dt+es": FeatureSetSpec(include_ses_fixed=tuple(ses_alphas), **trend),
        "w+sw+es_a+dt+es": FeatureSetSpec(
            include_w=(MAX_WINDOW,), include_sw=windows, include_s_all=True,
            include_ses_fixed=tuple(ses_alphas), **trend,
        ),
    }


@dataclass
class FeatureMatrix:
    keys: list[tuple[str, str]]
    columns: list[str]
    X: np.ndarray
    target: Optional[np.ndarray]
    target_year: int
    last_relevance: np.ndarray
    spec: Optional[FeatureSetSpec] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return len(self.keys)

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.columns.index(name)]

    def rows_for(self, conference: str) -> np.ndarray:
        return np.array([k[0] == conference for k in self.keys], dtype=bool)

    def subset(self, mask: np.ndarray) -> "FeatureMatrix":
        idx = np.flatnonzero(mask)
        return FeatureMatrix(
            [self.keys[i] for i in idx], list(self.columns), self.X[idx],
            None if self.target is None else self.target[idx], self.target_year,
            self.last_relevance[idx], self.spec, dict(self.meta),
        )


def concat_matrices(parts: Sequence[FeatureMatrix]) -> tuple[np.ndarray, np.ndarray, list, list[str]]:
    """Stack matrices with identical columns; returns X, y, keys with year, columns."""
    if not parts:
        raise ValueError("nothing to concatenate")
    columns = parts[0].columns
    for p in parts:
        if p.columns != columns:
            raise ValueError("feature matrices have different columns")
        if p.target is None:
            raise ValueError(f"matrix for {p.target_year} has no target")
    X = np.vstack([p.X for p in parts])
    y = np.concatenate([p.target for p in parts])
    keys = [(c, a, p.target_year) for p in parts for c, a in p.keys]
    return X, y, keys, list(columns)


def assemble(
    panel: RelevancePanel,
    spec: FeatureSetSpec,
    target_year: int,
    conference: Optional[str] = None,
    related: Sequence[str] = (),
    *,
    aif: Optional[AifIndex] = None,
    coverage: Optional[bool] = None,
) -> FeatureMatrix:
    """Feature rows for every affiliation of ``conference`` and ``related``.

    History is every panel year before ``target_year``.  Windows deeper
    than the history are zero-extended; ``coverage=None`` adds the
    ``hist_years`` column exactly when that happens, ``True``/``False``
    force it.  ``target_year`` may lie one past the panel, in which case
    the matrix has no target.
    """
    if conference is None:
        conference = panel.conferences[0]
    n_hist = target_year - panel.first_year
    if n_hist < 1:
        raise ValueError(f"target year {target_year} has no preceding year in the panel")
    if target_year > panel.last_year + 1:
        raise ValueError(f"target year {target_year} is beyond the panel end {panel.last_year}")
    if spec.include_aif and aif is None:
        raise ValueError("the spec asks for AIF features but no AifIndex was given")
    confs = [conference] + [c for c in dict.fromkeys(related) if c != conference]
    c_idx = [panel.conference_index(c) for c in confs]

    hist = panel.relevance[c_idx, :, :n_hist].reshape(-1, n_hist)
    n_rows = hist.shape[0]
    keys = [(c, a) for c in confs for a in panel.affiliations]
    has_target = target_year <= panel.last_year
    target = (
        panel.relevance[c_idx, :, n_hist].reshape(-1).copy() if has_target else None
    )
    deficit = max(spec.deepest_window() - n_hist, 0)
    if coverage is None:
        coverage = deficit > 0
    padded = np.hstack([np.zeros((n_rows, deficit)), hist]) if deficit else hist

    blocks: list[np.ndarray] = []
    if spec.include_w:
        k = max(spec.include_w)
        blocks.append(padded[:, ::-1][:, :k])
    for y in spec.include_sw:
        blocks.append(_stats_rows(padded[:, -y:]))
    if spec.include_s_all:
        blocks.append(_stats_rows(hist))
    for y in spec.include_wt:
        blocks.append((padded[:, -y:][:, ::-1] @ linear_weights(y))[:, None])
    if spec.include_drift:
        blocks.append(_drift_rows(hist)[:, None])
    for a in spec.include_ses_fixed:
        blocks.append(_ses_rows(hist, a)[:, None])
    ses_fallback = 0
    if spec.include_ses_fitted:
        if n_hist >= 3:
            blocks.append(_ses_fit_rows(hist)[1][:, None])
        else:
            ses_fallback = n_rows
            blocks.append(_ses_rows(hist, SES_FALLBACK_ALPHA)[:, None])
    aif_missing = 0
    if spec.include_aif:
        rows = np.zeros((n_rows, len(STAT_NAMES) + 1))
        for i, key in enumerate(keys):
            stats, present = aif_stats(aif, key, target_year, panel.first_year)
            rows[i, :-1] = stats
            rows[i, -1] = present
            aif_missing += 1 - present
        blocks.append(rows)
    if coverage:
        positive = hist > 0
        first = np.where(positive.any(axis=1), positive.argmax(axis=1), n_hist)
        blocks.append((n_hist - first).astype(float)[:, None])

    X = np.hstack(blocks) if blocks else np.zeros((n_rows, 0))
    columns = spec.column_names(coverage=coverage)
    assert X.shape[1] == len(columns)
    meta = {
        "zero_extended_years": deficit,
        "ses_fit_fallback_rows": ses_fallback,
        "aif_missing_rows": aif_missing,
        "conferences": confs,
    }
    return FeatureMatrix(
        keys=keys, columns=columns, X=np.ascontiguousarray(X), target=target,
        target_year=target_year, last_relevance=hist[:, -1].copy(), spec=spec, meta=meta,
    )


def write_feature_matrix(fm: FeatureMatrix, path: os.PathLike | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as out:
        out.write("\t".join(["conference", "affiliation", "target_year", *fm.columns, "last_relevance", "target"]) + "\n")
        for i, (conf, aff) in enumerate(fm.keys):
            vals = [repr(float(v)) for v in fm.X[i]]
            tgt = "" if fm.target is None else repr(float(fm.target[i]))
            out.write("\t".join([conf, aff, str(fm.target_year), *vals, repr(float(fm.last_relevance[i])), tgt]) + "\n")
    sidecar = {
        "spec": fm.spec.to_dict() if fm.spec else None,
        "target_year": fm.target_year,
        "columns": fm.columns,
        "imputation": fm.meta,
    }
    with open(path.with_suffix(path.suffix + ".json"), "w", encoding="utf-8") as out:
        json.dump(sidecar, out, indent=2)
    return path


def read_feature_matrix(path: os.PathLike | str) -> FeatureMatrix:
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().rstrip("\n").split("\t")
        columns = header[3:-2]
        keys, rows, last, target, years = [], [], [], [], set()
        for line in handle:
            parts = line.rstrip("\n").split("\t")
            keys.append((parts[0], parts[1]))
            years.add(int(parts[2]))
            rows.append([float(v) for v in parts[3:-2]])
            last.append(float(parts[-2]))
            target.append(parts[-1])
    if len(years) > 1:
        raise ValueError(f"{path}: rows span several target years")
    spec = None
    sidecar = path.with_suffix(path.suffix + ".json")
    meta: dict = {}
    if sidecar.exists():
        with open(sidecar, encoding="utf-8") as handle:
            side = json.load(handle)
        spec = FeatureSetSpec.from_dict(side["spec"]) if side.get("spec") else None
        meta = side.get("imputation", {})
    tgt = None if any(t == "" for t in target) else np.array([float(t) for t in target])
    X = np.array(rows, dtype=float).reshape(len(keys), len(columns))
    return FeatureMatrix(keys, columns, X, tgt, years.pop() if years else 0,
                         np.array(last), spec, meta)
