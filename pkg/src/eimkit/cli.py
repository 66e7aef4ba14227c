"""Command-line entry point: ``eimkit <subcommand> [options]``.

Every subcommand reads optional defaults from ``--config`` (a JSON object
with a top-level ``seed`` and one block per subcommand name) and lets
flags override them. Outputs go to the ``--output`` directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
import time
from pathlib import Path

from . import __version__
from .errors import DataError, EimError, StorageError, UsageError
from .io import atomic_write_text, read_json, read_text, write_json

log = logging.getLogger("eimkit")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands re-declare the globals without defaults so values given
    # before the subcommand name survive
    d = {"default": argparse.SUPPRESS} if suppress else {}
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON config file; flags override its values", **d)
    p.add_argument("--seed", type=int, help="master seed for every random sub-stream", **d)
    p.add_argument("--input", help="input file or directory", **d)
    p.add_argument("--output", help="output directory", **d)
    p.add_argument("--verbose", "-v", action="count", **(d or {"default": 0}))
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eimkit", description="Meeting effectiveness and inclusiveness toolkit.",
                     parents=[_global_flags(False)])
    g = _global_flags(True)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("generate", parents=[g], help="synthetic attendee-meeting records + ground truth")
    p.add_argument("--default", action="store_true", help="use the built-in EIM generator spec")
    p.add_argument("--spec", help="GeneratorSpec JSON file")
    p.add_argument("--n", type=int, help="number of records")

    p = sub.add_parser("fit-graph", parents=[g], help="filter, featurize and fit the EIM graph")
    _quality_flags(p)
    p.add_argument("--alpha", type=float, help="Wald significance level for pruning (default 0.05)")
    p.add_argument("--rules", help="binarization rules manifest JSON")

    p = sub.add_parser("fit-glm", parents=[g], help="fit an interaction GLM and sweep scenarios")
    p.add_argument("--model", help="canned spec name: effective_size_recurring | participation_video")
    p.add_argument("--model-spec", help="ModelSpec JSON file")

    p = sub.add_parser("evaluate", parents=[g], help="boosted-tree cross-validation and org holdout")
    _quality_flags(p)
    p.add_argument("--target", choices=["effective", "inclusive"])
    p.add_argument("--splits", type=int, help="number of random splits (default 50)")
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--holdout-org")
    p.add_argument("--group-by-user", action="store_true", help="split by user instead of by row")
    p.add_argument("--trees", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--min-leaf", type=int)
    p.add_argument("--subsample", type=float)

    p = sub.add_parser("simulate-survey", parents=[g], help="run the survey scheduler over a meeting stream")
    p.add_argument("--meetings", type=int, help="number of meetings (default 10000)")
    p.add_argument("--users", type=int)
    p.add_argument("--days", type=float)
    p.add_argument("--trigger-rate", type=float)
    p.add_argument("--cooldown-days", type=float)
    p.add_argument("--timeout", type=float)
    p.add_argument("--preset", choices=["star-skewed", "worded-balanced"])
    p.add_argument("--fatigue-boost", type=float)

    p = sub.add_parser("analyze-skew", parents=[g], help="PMR, entropy and grouped rates of a log")
    p.add_argument("--group", choices=sorted(GROUPINGS))
    p.add_argument("--metric", choices=["pmr", "response_rate", "five_star_effective", "top2_effective"])
    p.add_argument("--min-response-time", type=float)
    p.add_argument("--mc-iterations", type=int)

    p = sub.add_parser("compare-graphs", parents=[g], help="side-by-side edge table of several graphs")
    p.add_argument("graphs", nargs="+", help="NAME=graph.json")

    sub.add_parser("report", parents=[g], help="render figures and CSV summaries for a run directory")
    return parser


def _quality_flags(p):
    p.add_argument("--quality-model", help="quality probability model JSON (default: the truth sidecar's)")
    p.add_argument("--truth", help="ground-truth sidecar (default: truth.json next to the input)")


# --------------------------------------------------------------------------
# option resolution


class Options:
    """Flag value if given, else the config block's, else a default."""

    def __init__(self, args, config: dict):
        self.args = args
        self.block = dict(config.get(args.command, {}))
        self.config = config

    def get(self, name: str, default=None):
        v = getattr(self.args, name.replace("-", "_"), None)
        if v is not None and v is not False:
            return v
        key = name.replace("-", "_")
        for k in (name, key):
            if k in self.block:
                return self.block[k]
        return default

    def seed(self, required: bool = True):
        s = self.args.seed if self.args.seed is not None else self.block.get("seed", self.config.get("seed"))
        if s is None and required:
            raise UsageError(f"{self.args.command} needs --seed (or a seed in --config)")
        return s

    def path(self, name: str, required: bool = True):
        v = self.get(name)
        if v is None and required:
            raise UsageError(f"{self.args.command} needs --{name}")
        return None if v is None else Path(v)


def _check_distinct(inp, out):
    if inp is not None and out is not None and Path(inp).resolve() == Path(out).resolve():
        raise UsageError("input and output paths must differ")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write_text(path, buf.getvalue())


# --------------------------------------------------------------------------
# shared stages


def _load_records(path: Path):
    from .records import parse_records

    log.info("reading records from %s", path)
    return parse_records(read_text(path))


def _filtered(records, opts):
    from .records import FilterPolicy, apply_filters

    block = opts.block.get("filters", {})
    kept, report = apply_filters(records, FilterPolicy(**block))
    log.info("filters kept %d records, dropped %s", report.kept, report.dropped)
    if not kept:
        raise DataError("no records after filters")
    return kept, report


def _quality_model(opts, input_path: Path):
    from .features import quality_model_from_dict

    qm = opts.get("quality-model")
    if qm is not None:
        return quality_model_from_dict(read_json(qm))
    truth = opts.get("truth")
    truth = Path(truth) if truth is not None else input_path.parent / "truth.json"
    if not truth.exists():
        raise DataError("no quality model: pass --quality-model or keep truth.json next to the input")
    return quality_model_from_dict(read_json(truth)["quality_model"])


def _stage(name, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except EimError as exc:
        exc.args = (f"{name}: {exc}",)
        raise


# --------------------------------------------------------------------------
# subcommands


def cmd_generate(opts: Options) -> int:
    from .synthgen import GeneratorSpec, default_eim_spec, generate
    from .records import serialize_record

    out = opts.path("output")
    seed = opts.seed()
    n = opts.get("n")
    spec_path = opts.get("spec")
    if spec_path is not None:
        spec = GeneratorSpec.from_dict(read_json(spec_path))
        spec.seed = seed
        if n is not None:
            spec.n_records = n
    else:
        spec = default_eim_spec(20000 if n is None else n, seed)
    if spec.n_records <= 0:
        raise UsageError("--n must be a positive record count")
    records, truth = _stage("generate", generate, spec)
    atomic_write_text(out / "records.jsonl", "".join(serialize_record(r) + "\n" for r in records))
    write_json(out / "truth.json", truth.to_dict())
    write_json(out / "generator_spec.json", spec.to_dict())
    responded = sum(r.responded for r in records)
    print(f"wrote {len(records)} records ({responded} with survey responses, "
          f"{len({r.meeting_id for r in records})} meetings) to {out}")
    return 0


def cmd_fit_graph(opts: Options) -> int:
    from .features import DEFAULT_RULES, eim_frame, rules_from_manifest, rules_manifest
    from .glm import L1Config
    from .graph import HierarchyConfig, fit_graph, graph_table

    inp = opts.path("input")
    out = opts.path("output")
    _check_distinct(inp, out)
    records = _stage("ingest", _load_records, inp)
    kept, report = _stage("filter", _filtered, records, opts)
    model = _stage("quality model", _quality_model, opts, inp)
    rules = rules_from_manifest(read_json(opts.get("rules"))) if opts.get("rules") else DEFAULT_RULES
    frame = _stage("featurize", eim_frame, kept, model, rules)
    alpha = float(opts.get("alpha", 0.05))
    graph = _stage("fit", fit_graph, frame, HierarchyConfig(), alpha, None, L1Config(**opts.block.get("l1", {})))
    write_json(out / "graph.json", graph.to_dict() | {"alpha": alpha, "rules": rules_manifest(rules)})
    write_json(out / "filter_report.json", report.to_dict())
    table = graph_table(graph)
    atomic_write_text(out / "graph_table.txt", table)
    print(table, end="")
    return 0


def cmd_fit_glm(opts: Options) -> int:
    from .interaction import CANNED, MEETING_SIZE, ModelSpec, fit_spec, interaction_frame, sweep

    inp = opts.path("input")
    out = opts.path("output")
    _check_distinct(inp, out)
    if opts.get("model-spec"):
        spec = ModelSpec.from_dict(read_json(opts.get("model-spec")))
    else:
        name = opts.get("model", "effective_size_recurring")
        if name not in CANNED:
            raise UsageError(f"unknown model {name!r}; known: {', '.join(CANNED)}")
        spec = CANNED[name][0]
    records = _stage("ingest", _load_records, inp)
    kept, _ = _stage("filter", _filtered, records, opts)
    fit = _stage("fit", fit_spec, interaction_frame(kept), spec)
    write_json(out / "glm.json", {"spec": spec.to_dict(), "fit": fit.to_dict()})
    _write_csv(out / "glm_coefficients.csv", ["term", "coef", "std_error", "p_value", "odds_ratio"],
               [[t, b, se, pv, math.exp(b)] for t, b, se, pv in fit.summary_rows()])
    rows = []
    if MEETING_SIZE in spec.columns():
        base = {c: 0 for c in spec.columns()}
        grid = {c: [0, 1] for c in spec.columns() if c != MEETING_SIZE and "Duration" not in c}
        frame = sweep(fit, base, MEETING_SIZE, list(range(2, 15)), **grid)
        atomic_write_text(out / "glm_sweep.csv", frame.to_csv(index=False, lineterminator="\n"))
        rows = len(frame)
    print(f"fitted {spec.outcome} ~ {' + '.join(spec.terms)} on {fit.n} rows; aic {fit.aic:.2f}"
          + (f"; sweep with {rows} scenarios" if rows else ""))
    return 0


def _gbdt_params(opts: Options, seed: int):
    from .gbdt import GbdtParams

    p = dict(opts.block.get("gbdt", {}))
    for flag, key in (("trees", "tree_count"), ("depth", "max_depth"), ("learning-rate", "learning_rate"),
                      ("min-leaf", "min_leaf_count"), ("subsample", "subsample")):
        v = getattr(opts.args, flag.replace("-", "_"), None)
        if v is not None:
            p[key] = v
    p["seed"] = seed
    try:
        return GbdtParams(**p)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad gbdt parameters: {exc}") from exc


def cmd_evaluate(opts: Options) -> int:
    from .features import predictive_features
    from .gbdt import cross_validate, holdout_by_org
    from .records import derive_outcomes

    inp = opts.path("input")
    out = opts.path("output")
    _check_distinct(inp, out)
    seed = opts.seed()
    target = opts.get("target", "inclusive")
    if target not in ("effective", "inclusive"):
        raise UsageError("--target must be effective or inclusive")
    params = _gbdt_params(opts, seed)
    k = int(opts.get("splits", 50))
    tf = float(opts.get("test-fraction", 0.2))
    records = _stage("ingest", _load_records, inp)
    kept, _ = _stage("filter", _filtered, records, opts)
    kept = [r for r in kept if r.responded]
    if not kept:
        raise DataError("no survey responses after filters")
    model = _stage("quality model", _quality_model, opts, inp)
    X = predictive_features(kept, model)
    y = [getattr(derive_outcomes(r), target) for r in kept]
    groups = [r.user_id for r in kept] if opts.get("group-by-user") else None
    report = _stage("cross-validate", cross_validate, X, y, params, k, tf, seed, groups)
    write_json(out / f"eval_{target}.json", report.to_dict() | {"target": target, "params": params.to_dict()})
    atomic_write_text(out / f"eval_{target}.csv", report.to_csv())
    print(f"{target}: mean AUC {report.mean_auc:.4f} (sd {report.auc_stddev:.4f}) over {k} splits")
    org = opts.get("holdout-org")
    if org is not None:
        orgs = [r.org_id for r in kept]
        h = _stage("holdout", holdout_by_org, X, y, orgs, org, params, k, tf, seed)
        write_json(out / f"holdout_{target}_{org}.json", h.to_dict() | {"target": target})
        print(f"{target}: in-train CV AUC {h.mean_auc:.4f}, unseen org {org} AUC {h.holdout_auc:.4f}")
    return 0


def cmd_simulate_survey(opts: Options) -> int:
    from dataclasses import replace

    from .survey import SchedulerConfig, meeting_stream, preset, run_scheduler

    out = opts.path("output")
    seed = opts.seed()
    try:
        cfg = SchedulerConfig(trigger_rate=float(opts.get("trigger-rate", 0.10)),
                              cooldown_days=float(opts.get("cooldown-days", 7.0)),
                              survey_timeout_s=float(opts.get("timeout", 30.0)), seed=seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    respondent = preset(opts.get("preset", "star-skewed"))
    if opts.get("fatigue-boost") is not None:
        respondent = replace(respondent, fatigue_perfect_boost=float(opts.get("fatigue-boost")))
    stream = meeting_stream(int(opts.get("meetings", 10000)), int(opts.get("users", 2000)),
                            float(opts.get("days", 60.0)), seed=seed)
    events = run_scheduler(stream, cfg, respondent)
    atomic_write_text(out / "events.jsonl", events.to_jsonl())
    trig, meetings = events.meeting_trigger_fraction()
    viol = events.cooldown_violations(cfg.cooldown_days)
    summary = {"meetings": meetings, "triggered_meetings": trig, "shown": len(events.shown()),
               "responses": len(events.responses()), "cooldown_violations": len(viol)}
    write_json(out / "simulation_summary.json", summary)
    print(f"{meetings} meetings, {trig} triggered, {summary['shown']} shown, {summary['responses']} responses, "
          f"{len(viol)} cool-down violations")
    return 0


def _group_days_since(e):
    from .skew import fatigue_bucket

    return fatigue_bucket(7.0)(e)


def _group_calls(e):
    from .skew import calls_bucket

    return calls_bucket(e)


def _group_next(e):
    from .skew import next_meeting_bucket

    return next_meeting_bucket(e)


GROUPINGS = {"days-since-last-survey": _group_days_since, "calls-per-day": _group_calls,
             "next-meeting": _group_next, "cohort": None}


def cmd_analyze_skew(opts: Options) -> int:
    from .skew import (assign_cohort, distribution_test_2xK, grouped_rates, rate_difference, skew_report,
                       star_histogram, user_histories)
    from .survey import SimEventLog

    inp = opts.path("input")
    out = opts.path("output")
    _check_distinct(inp, out)
    seed = opts.seed()
    text = read_text(inp)
    first = text.split("\n", 1)[0]
    if first.startswith('{"config"'):
        events = SimEventLog.from_jsonl(text).events
    else:
        from .records import parse_records

        events = [r for r in parse_records(text)]
    min_rt = opts.get("min-response-time")
    grouped = {}
    group = opts.get("group")
    metric = opts.get("metric", "pmr")
    extra = {}
    if group is not None:
        if group not in GROUPINGS:
            raise UsageError(f"unknown grouping {group!r}")
        if not hasattr(events[0] if events else None, "shown"):
            raise DataError(f"grouping {group!r} needs a simulator event log")
        if group == "cohort":
            cohort = {u: assign_cohort(h) for u, h in user_histories(events).items()}
            key = lambda e: cohort[e.user_id]  # noqa: E731
        else:
            key = GROUPINGS[group]
        g = grouped_rates(events, key, metric)
        grouped[group] = g
        if len(g.groups) >= 2:
            d, lo, hi = rate_difference(g.groups[0], g.groups[1])
            extra["difference"] = {"groups": [str(g.groups[0].group), str(g.groups[1].group)],
                                   "difference": d, "ci_low": lo, "ci_high": hi}
            resp = [e for e in events if getattr(e, "responded", True)]
            rows = [[*star_histogram([e for e in resp if key(e) == gr.group], "effective")] for gr in g.groups[:2]]
            try:
                extra["distribution_p"] = distribution_test_2xK(rows, int(opts.get("mc-iterations", 100_000)), seed)
            except EimError as exc:
                extra["distribution_p"] = None
                extra["distribution_note"] = str(exc)
        _write_csv(out / f"grouped_{group}.csv", ["group", "n", "successes", "rate", "ci_low", "ci_high"],
                   [[x.group, x.n, x.successes, x.rate, x.ci_low, x.ci_high] for x in g.groups])
    report = skew_report(events, min_rt, grouped)
    payload = report.to_dict() | extra
    if group is not None and grouped[group].notes:
        payload["notes"] = grouped[group].notes
    write_json(out / "skew_report.json", payload)
    pmr = "n/a" if report.pmr is None else f"{report.pmr:.4f}"
    ent = {q: (None if v is None else round(v, 4)) for q, v in report.entropy_bits.items()}
    print(f"{report.responses} responses, response rate {report.response_rate:.4f}, PMR {pmr}, entropy bits {ent}")
    return 0


def cmd_compare_graphs(opts: Options) -> int:
    from .graph import EimGraph, compare_graphs

    out = opts.path("output")
    graphs = {}
    for item in opts.args.graphs:
        if "=" not in item:
            raise UsageError(f"expected NAME=path, got {item!r}")
        name, path = item.split("=", 1)
        graphs[name] = EimGraph.from_dict(read_json(path))
    cmp = compare_graphs(graphs)
    write_json(out / "comparison.json", cmp.to_dict())
    atomic_write_text(out / "comparison_table.txt", cmp.table())
    print(cmp.table(), end="")
    if cmp.migrations:
        print("neighborhood migrations: " + ", ".join(m[0] for m in cmp.migrations))
    return 0


def cmd_report(opts: Options) -> int:
    """Render figures and CSV summaries for every known artifact in the input directory."""
    from . import plotting
    from .gbdt import EvalReport
    from .graph import EimGraph
    from .skew import GroupedRates, GroupRate

    inp = opts.path("input")
    out = opts.path("output", required=False) or inp
    if not inp.is_dir():
        raise StorageError(f"{inp} is not a directory")
    made = []
    if (inp / "graph.json").exists():
        g = EimGraph.from_dict(read_json(inp / "graph.json"))
        plotting.edge_odds_ratios(g, out / "graph_odds_ratios.png")
        _write_csv(out / "graph_edges.csv", ["source", "target", "odds_ratio", "p_value", "n"],
                   [[e.source, e.target, e.adjusted_or, e.p_value, e.n_used] for e in g.edges])
        made += ["graph_odds_ratios.png", "graph_edges.csv"]
    evals = {}
    for t in ("inclusive", "effective"):
        f = inp / f"eval_{t}.json"
        if f.exists():
            evals[t] = EvalReport(read_json(f)["aucs"])
    if evals:
        plotting.auc_boxplot(evals, out / "auc_boxplot.png")
        _write_csv(out / "auc_summary.csv", ["target", "mean_auc", "auc_stddev", "splits"],
                   [[t, r.mean_auc, r.auc_stddev, len(r.aucs)] for t, r in evals.items()])
        made += ["auc_boxplot.png", "auc_summary.csv"]
    if (inp / "skew_report.json").exists():
        rep = read_json(inp / "skew_report.json")
        plotting.star_histograms(rep["histograms"], out / "star_histograms.png")
        _write_csv(out / "star_histograms.csv", ["stars", "effective", "inclusive"],
                   [[k + 1, rep["histograms"]["effective"][k], rep["histograms"]["inclusive"][k]] for k in range(5)])
        made += ["star_histograms.png", "star_histograms.csv"]
        for name, rows in rep.get("grouped", {}).items():
            gr = GroupedRates(rows[0]["metric"] if rows else "rate",
                              [GroupRate(r["group"], r["n"], r["successes"], r["rate"], r["ci_low"], r["ci_high"])
                               for r in rows])
            plotting.grouped_rates_plot(gr, out / f"grouped_{name}.png", title=name)
            made.append(f"grouped_{name}.png")
    if (inp / "glm_sweep.csv").exists():
        import pandas as pd

        from .interaction import MEETING_SIZE

        frame = pd.read_csv(inp / "glm_sweep.csv")
        by = [c for c in frame.columns if c not in (MEETING_SIZE, "probability") and frame[c].nunique() > 1]
        plotting.scenario_sweep(frame, MEETING_SIZE, out / "glm_sweep.png", by=by)
        made.append("glm_sweep.png")
    if not made:
        raise DataError(f"no known artifacts in {inp}")
    print("rendered " + ", ".join(made))
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "fit-graph": cmd_fit_graph,
    "fit-glm": cmd_fit_glm,
    "evaluate": cmd_evaluate,
    "simulate-survey": cmd_simulate_survey,
    "analyze-skew": cmd_analyze_skew,
    "compare-graphs": cmd_compare_graphs,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command is None:
            raise UsageError("a subcommand is required; see --help")
        config = read_json(args.config) if args.config else {}
        if not isinstance(config, dict):
            raise UsageError("config must be a JSON object")
        t0 = time.perf_counter()
        code = COMMANDS[args.command](Options(args, config))
        log.info("%s finished in %.2fs", args.command, time.perf_counter() - t0)
        return code
    except EimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return StorageError.exit_code


if __name__ == "__main__":
    sys.exit(main())
