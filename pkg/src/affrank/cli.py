"""Command line entry point: ``affrank <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 nothing feasible anywhere in a backtest grid.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .bench import (
    BacktestReport,
    GridConfig,
    Infeasible,
    grid_search,
    select_config,
)
from .evaluation import DEFAULT_K, RankedList, ndcg_at_k, rank_affiliations
from .features import (
    AifIndex,
    FeatureSetSpec,
    assemble,
    concat_matrices,
    read_feature_matrix,
    preset_feature_sets,
    write_feature_matrix,
)
from .ingest import (
    DEFAULT_COLUMNS,
    MAG_2016_COLUMNS,
    SamplingError,
    SchemaError,
    build_snapshot,
    load_graph,
    read_snapshot,
    sample_corpus,
    write_snapshot,
)
from .models import (
    GbdtConfig,
    GbdtModel,
    MixedModel,
    ProbModel,
    backward_eliminate,
    gbdt_fit,
    gbdt_predict,
    load_model,
    mixed_fit,
    prob_fit,
    save_model,
)
from .relevance import PAPER_FILTERS, read_panel, build_panel, write_panel
from .similarity import BASES, build_profiles, related_conferences, similarity_report

logger = logging.getLogger("affrank")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE = 0, 1, 2, 3


class ConfigError(Exception):
    """Bad or incomplete configuration file."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv(text: str | None) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def _year_range(text: str) -> tuple[int, int]:
    try:
        lo, _, hi = text.partition(":")
        lo, hi = int(lo), int(hi or lo)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YEAR or LO:HI, got {text!r}")
    if hi < lo:
        raise argparse.ArgumentTypeError(f"empty year range {text!r}")
    return lo, hi


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc


def _resolve(base: Path, value):
    p = Path(value)
    return p if p.is_absolute() else base / p


def _output(path):
    """Open ``path`` for writing, ``-`` or None meaning stdout."""
    if path in (None, "-"):
        return sys.stdout
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="")


def write_ranking(ranked, path) -> None:
    out = _output(path)
    try:
        w = csv.writer(out, delimiter="\t", lineterminator="\n")
        w.writerow(["rank", "affiliation", "score"])
        for rank, (aff, score) in enumerate(ranked.items, 1):
            w.writerow([rank, aff, repr(float(score))])
    finally:
        if out is not sys.stdout:
            out.close()


def read_ranking(path) -> list[str]:
    with open(path, encoding="utf-8") as handle:
        rows = list(csv.reader(handle, delimiter="\t"))
    if not rows or rows[0][:2] != ["rank", "affiliation"]:
        raise ValueError(f"{path}: expected a ranking TSV with a rank/affiliation header")
    return [r[1] for r in sorted(rows[1:], key=lambda r: int(r[0]))]


def read_truth(path) -> dict[str, float]:
    truth = {}
    with open(path, encoding="utf-8") as handle:
        for i, row in enumerate(csv.reader(handle, delimiter="\t")):
            if not row or (i == 0 and row[0] == "affiliation"):
                continue
            truth[row[0]] = float(row[1])
    return truth


# -- subcommands -------------------------------------------------------------

def cmd_ingest(args) -> int:
    if args.schema == "default":
        columns = DEFAULT_COLUMNS
    elif args.schema == "mag2016":
        columns = MAG_2016_COLUMNS
    else:
        columns = _load_json(args.schema)
    graph = load_graph(args.papers, args.links, args.refs, args.keywords, args.flags, columns, args.header)
    if args.conferences:
        if args.seed_years is None:
            raise ConfigError("--seed-years is required together with --conferences")
        floor = args.author_floor_year if args.author_floor_year is not None else args.seed_years[0]
        snap = sample_corpus(graph, _csv(args.conferences), args.seed_years, floor,
                             args.bfs_depth, args.direction)
    else:
        snap = build_snapshot(graph, [p.paper_id for p in graph.papers], {"sampled": False})
    write_snapshot(snap, args.out)
    print(f"{len(snap.papers)} papers, {len(snap.authorships)} authorships, "
          f"{len(snap.citations)} citations, {len(snap.keywords)} keywords -> {args.out}")
    return EXIT_OK


def cmd_panel(args) -> int:
    snap = read_snapshot(args.snapshot)
    panel = build_panel(snap, _csv(args.conferences), args.years, args.filter,
                        max_affiliations=args.max_affiliations)
    write_panel(panel, args.out)
    print(f"panel {panel.relevance.shape} -> {args.out}")
    return EXIT_OK


def cmd_similar(args) -> int:
    profiles = build_profiles(read_snapshot(args.panel_corpus), args.years)
    w = csv.writer(sys.stdout, delimiter="\t", lineterminator="\n")
    w.writerow(["target", "neighbor", "basis", "score", "rank"])
    w.writerows(similarity_report(args.target, profiles, args.k, args.basis))
    return EXIT_OK


def _spec_from(value) -> FeatureSetSpec:
    if isinstance(value, str):
        sets = preset_feature_sets()
        if value not in sets:
            raise ConfigError(f"unknown feature set {value!r}; known: {', '.join(sets)}")
        return sets[value]
    return FeatureSetSpec.from_dict(value)


def cmd_features(args) -> int:
    panel = read_panel(args.panel)
    spec = _spec_from(args.spec if args.spec in preset_feature_sets() else _load_json(args.spec))
    aif = AifIndex(read_snapshot(args.snapshot)) if args.snapshot else None
    fm = assemble(panel, spec, args.target_year, args.conference, _csv(args.related), aif=aif)
    write_feature_matrix(fm, args.out)
    print(f"{fm.n_rows} rows x {len(fm.columns)} columns -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_json(args.config) if args.config else {}
    family = args.model_family
    if family == "prob":
        if not (args.panel and args.conference and args.year):
            raise ConfigError("prob training needs --panel, --conference and --year")
        panel = read_panel(args.panel)
        window = int(config.get("window", 5))
        counts = panel.counts_over(args.conference, range(args.year - window, args.year))
        model = prob_fit(counts, (args.year - window, args.year - 1))
    else:
        if not args.features:
            raise ConfigError(f"{family} training needs --features")
        X, y, keys, columns = concat_matrices([read_feature_matrix(p) for p in args.features])
        if family == "gbdt":
            try:
                cfg = GbdtConfig.from_dict(config.get("gbdt", config))
            except TypeError as exc:
                raise ConfigError(f"bad gbdt config: {exc}") from exc
            model = gbdt_fit(X, y, cfg, columns)
        else:
            groups = [(c, a) for c, a, _ in keys]
            if "level" in config:
                model = backward_eliminate(X, y, groups, columns, float(config["level"]))
            else:
                model = mixed_fit(X, y, groups, columns)
    save_model(model, args.model_out)
    print(f"{family} model -> {args.model_out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model_in)
    family = {GbdtModel: "gbdt", MixedModel: "mixed", ProbModel: "prob"}[type(model)]
    if args.model_family and args.model_family != family:
        raise ConfigError(f"{args.model_in} holds a {family} model, not {args.model_family}")
    if isinstance(model, ProbModel):
        ranked = RankedList(tuple(model.ranking()))
    else:
        if not args.features:
            raise ConfigError("--features is required for gbdt and mixed models")
        fm = read_feature_matrix(args.features)
        if isinstance(model, GbdtModel):
            pred = gbdt_predict(model, fm.X, fm.columns)
        else:
            pred = model.predict(fm.X, fm.columns, fm.keys)
        conference = fm.keys[0][0] if fm.keys else None
        ranked = rank_affiliations([a for _, a in fm.keys], pred, fm.last_relevance,
                                   conference, fm.target_year)
    write_ranking(ranked, args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    report = ndcg_at_k(read_ranking(args.predicted), read_truth(args.truth), args.k)
    print(json.dumps({k: getattr(report, k) for k in report.__dataclass_fields__}, sort_keys=True))
    return EXIT_OK


def load_grid(path) -> tuple[GridConfig, object, object]:
    """Grid config plus the panel and optional AIF index it points at.

    Besides the :class:`GridConfig` fields the file holds ``panel`` (path of
    a panel TSV) and optionally ``snapshot`` (corpus used to find
    neighbours when ``neighbors`` is absent, and for AIF features).
    ``feature_sets`` may be the string ``"presets"`` or a mapping whose
    values are spec dicts or named preset sets.
    """
    path = Path(path)
    raw = _load_json(path)
    for key in ("panel", "conference", "validation_years"):
        if key not in raw:
            raise ConfigError(f"grid config lacks {key!r}")
    base = path.parent
    panel = read_panel(_resolve(base, raw["panel"]))
    snapshot = read_snapshot(_resolve(base, raw["snapshot"])) if raw.get("snapshot") else None
    sets = raw.get("feature_sets", "presets")
    if sets == "presets":
        sets = preset_feature_sets()
    else:
        sets = {name: _spec_from(v) for name, v in sets.items()}
    if "neighbors" not in raw:
        if snapshot is None:
            neighbors = []
        else:
            depth = max(raw.get("related_counts", [0]) or [0])
            profiles = build_profiles(snapshot)
            neighbors = [c for c, _ in related_conferences(
                raw["conference"], profiles, depth, raw.get("basis", "authors"))]
    else:
        neighbors = raw["neighbors"]
    fields = {k: v for k, v in raw.items() if k in GridConfig.__dataclass_fields__}
    fields.update(feature_sets={n: s.to_dict() for n, s in sets.items()}, neighbors=list(neighbors))
    try:
        grid = GridConfig.from_dict(fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid config: {exc}") from exc
    needs_aif = any(s.include_aif for s in grid.feature_sets.values())
    aif = AifIndex(snapshot) if needs_aif and snapshot is not None else None
    if needs_aif and aif is None:
        raise ConfigError("AIF features need a 'snapshot' entry in the grid config")
    return grid, panel, aif


def cmd_grid(args) -> int:
    grid, panel, aif = load_grid(args.grid_config)
    if args.feature_set:
        if args.feature_set not in grid.feature_sets:
            raise ConfigError(f"feature set {args.feature_set!r} not in the grid")
        grid.feature_sets = {args.feature_set: grid.feature_sets[args.feature_set]}
    if args.related_count is not None:
        grid.related_counts = [args.related_count]
    report = grid_search(panel, grid, jobs=args.jobs, aif=aif)
    if args.report_out:
        report.write(args.report_out)
    else:
        print(report.to_json())
    if report.all_infeasible():
        print("no feasible cell in the grid", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_select(args) -> int:
    report = BacktestReport.read(args.report)
    sel = select_config(report)
    print(json.dumps(sel.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import WorldParams, synthetic_graph

    params = WorldParams(**_load_json(args.config)) if args.config else WorldParams(seed=args.seed)
    world, graph = synthetic_graph(params)
    first, last = params.first_year, params.first_year + params.n_years - 1
    snap = sample_corpus(graph, world.conferences, (first, last), first, 2)
    write_snapshot(snap, args.out)
    print(f"{len(snap.papers)} papers for {', '.join(world.conferences)} over {first}:{last} -> {args.out}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="affrank", description="Rank affiliations by predicted conference relevance.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="parse TSV dumps into a corpus snapshot")
    s.add_argument("--papers", required=True)
    s.add_argument("--links", help="paper/author/affiliation table")
    s.add_argument("--refs", help="citation table")
    s.add_argument("--keywords")
    s.add_argument("--flags", help="file of full-research paper ids, one per line")
    s.add_argument("--schema", default="default", help="default, mag2016 or a JSON column map")
    s.add_argument("--header", action="store_true", help="input files have a header line")
    s.add_argument("--conferences", help="comma-separated target conference ids; enables sampling")
    s.add_argument("--seed-years", type=_year_range)
    s.add_argument("--author-floor-year", type=int)
    s.add_argument("--bfs-depth", type=int, default=2)
    s.add_argument("--direction", choices=("out", "in", "both"), default="out")
    s.add_argument("--out", required=True, help="snapshot directory")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("panel", help="build the relevance panel")
    s.add_argument("--snapshot", required=True)
    s.add_argument("--conferences", required=True)
    s.add_argument("--years", required=True, type=_year_range, help="LO:HI")
    s.add_argument("--filter", choices=PAPER_FILTERS, default=PAPER_FILTERS[1])
    s.add_argument("--max-affiliations", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_panel)

    s = sub.add_parser("similar", help="related conferences by Jaccard overlap")
    s.add_argument("--panel-corpus", required=True, help="snapshot directory")
    s.add_argument("--target", required=True)
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--basis", choices=BASES, default="authors")
    s.add_argument("--years", type=_year_range)
    s.set_defaults(func=cmd_similar)

    s = sub.add_parser("features", help="assemble a feature matrix")
    s.add_argument("--panel", required=True)
    s.add_argument("--spec", required=True, help="JSON feature spec or a preset set name")
    s.add_argument("--target-year", required=True, type=int)
    s.add_argument("--conference")
    s.add_argument("--related", help="comma-separated related conferences")
    s.add_argument("--snapshot", help="corpus snapshot, needed for AIF features")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train", help="fit a ranker")
    s.add_argument("--model-family", required=True, choices=("gbdt", "mixed", "prob"))
    s.add_argument("--config", help="JSON hyperparameters")
    s.add_argument("--features", nargs="+", help="feature matrices with targets")
    s.add_argument("--panel", help="panel TSV (prob family)")
    s.add_argument("--conference")
    s.add_argument("--year", type=int, help="year being predicted (prob family)")
    s.add_argument("--model-out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="rank affiliations with a saved model")
    s.add_argument("--model-family", choices=("gbdt", "mixed", "prob"))
    s.add_argument("--model-in", required=True)
    s.add_argument("--features")
    s.add_argument("--out", help="ranking TSV, default stdout")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", help="NDCG@k of a ranking against true relevance")
    s.add_argument("--predicted", required=True)
    s.add_argument("--truth", required=True, help="TSV of affiliation, relevance")
    s.add_argument("--k", type=int, default=DEFAULT_K)
    s.set_defaults(func=cmd_evaluate)

    for name, text in (("backtest", "run backtests for one or more configurations"),
                       ("grid", "run the full configuration grid")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--grid-config", required=True)
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("--report-out")
        s.add_argument("--feature-set", help="restrict to one feature set")
        s.add_argument("--related-count", type=int, help="restrict to one related count")
        s.set_defaults(func=cmd_grid)

    s = sub.add_parser("select", help="pick the configuration from a report")
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("synth", help="write a synthetic corpus snapshot")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config", help="JSON world parameters")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, SamplingError, OSError, ValueError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
