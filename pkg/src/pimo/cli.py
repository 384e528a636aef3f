"""``pimo`` command-line entry point.

Every subcommand writes one report.  JSON is the full record (sorted keys,
fixed indentation, so identical inputs give identical bytes); ``--format csv``
writes the main table of the same report.  With ``--mo/--ms`` and several
``--a`` values the work is repeated per mixing value and the runs are listed
in the given order.

Exit codes: 0 success, 2 bad flags, 3 unreadable or malformed input,
4 numerical failure, 5 degenerate data.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from typing import Callable

import numpy as np

from . import __version__
from .ensemble import MatrixEnsemble, load_ensemble, mix, save_ensemble
from .errors import FlagError, IngestionError, NumericalError, PimoError
from .gaussmodel import fit_pattern_moments, gaussianity_report, sample_ensemble
from .geometry import (
    DEV_EXPT,
    DEV_THEOR,
    DIAG_DEV,
    DIAG_VALUE,
    FLAT,
    MAHA,
    RAW,
    build_features,
    build_metric,
    load_word_vectors,
)
from .obsgraph import SET_NAMES, canonical_set, load_observables
from .tasks import (
    TASKS,
    full_protocol,
    histograms,
    hyper_length_ratio,
    load_pairs,
    ordering_check,
    pair_cosines,
    relation_means,
    run_baselines,
    split_protocol,
)

log = logging.getLogger("pimo")

DEVIATIONS = {"raw": RAW, "expt": DEV_EXPT, "theor": DEV_THEOR}
METRICS = ("diag", "maha", "flat")


def metric_kind(metric: str, deviation: str) -> str:
    if metric == "maha":
        return MAHA
    if metric == "flat":
        return FLAT
    return DIAG_VALUE if deviation == "raw" else DIAG_DEV


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_ensemble(p):
    g = p.add_argument_group("ensemble")
    g.add_argument("--ensemble", help="single ensemble directory")
    g.add_argument("--mo", help="object-context ensemble directory")
    g.add_argument("--ms", help="subject-context ensemble directory")
    g.add_argument("--a", type=float, nargs="+", help="mixing value(s) a for a*M_O + (1-a)*M_S")


def _add_observables(p, default):
    p.add_argument("--set", default=default, choices=[*SET_NAMES, "file"], help="observable set")
    p.add_argument("--observables", help="JSON graph list, used with --set file")


def _add_geometry(p):
    p.add_argument("--deviation", default="expt", choices=list(DEVIATIONS))
    p.add_argument("--metric", default="diag", choices=METRICS)


def _add_output(p, formats=("json", "csv")):
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--format", default="json", choices=formats)


def _add_protocol(p):
    p.add_argument("--protocol", default="full", choices=["full", "split"])
    p.add_argument("--frac", type=float, default=0.65, help="training fraction for the split protocol")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stratify", default="on", choices=["on", "off"])


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(FlagError.exit_code, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pimo", description="Permutation-invariant matrix observables toolkit")
    parser.add_argument("--version", action="version", version=f"pimo {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gaussianity", help="fit the Gaussian model and compare predicted and measured means")
    _add_ensemble(p)
    _add_observables(p, "15")
    _add_output(p)

    p = sub.add_parser("features", help="observable value or deviation vectors per word")
    _add_ensemble(p)
    _add_observables(p, "28")
    _add_geometry(p)
    _add_output(p)

    p = sub.add_parser("relation-means", help="mean cosine per lexical relation")
    _add_ensemble(p)
    _add_observables(p, "28")
    _add_geometry(p)
    p.add_argument("--pairs", required=True)
    p.add_argument("--hist-bins", type=int, default=40)
    p.add_argument("--hist-out", help="also write the per-relation cosine histograms as CSV")
    _add_output(p)

    p = sub.add_parser("classify", help="divide-based relation classification")
    _add_ensemble(p)
    _add_observables(p, "28")
    _add_geometry(p)
    p.add_argument("--pairs", required=True)
    p.add_argument("--mode", default="syn-ant", choices=list(TASKS))
    _add_protocol(p)
    _add_output(p)

    p = sub.add_parser("hyper-length", help="fraction of pairs whose hypernym vector is longer")
    _add_ensemble(p)
    _add_observables(p, "28")
    _add_geometry(p)
    p.add_argument("--pairs", required=True)
    _add_output(p)

    p = sub.add_parser("baselines", help="relation means for flattened-matrix and word-vector baselines")
    _add_ensemble(p)
    p.add_argument("--pairs", required=True)
    p.add_argument("--vectors", help="word vectors, one 'word v1 ... vD' per line")
    _add_output(p)

    p = sub.add_parser("sample", help="draw an ensemble from the fitted Gaussian model")
    _add_ensemble(p)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--dim", type=int, help="matrix size of the samples (default: the input's)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-dir", required=True, help="directory for the sampled ensemble")
    _add_output(p, formats=("json",))

    p = sub.add_parser("dump-observables", help="write an observable set as JSON graphs")
    _add_observables(p, "28")
    _add_output(p)
    return parser


# ---------------------------------------------------------------------------
# validation and loading
# ---------------------------------------------------------------------------

def _check_path(path, what, is_dir=False):
    if path is None:
        return
    ok = os.path.isdir(path) if is_dir else os.path.isfile(path)
    if not ok:
        raise IngestionError(f"{path}: {what} not found")


def validate(args) -> None:
    """Flag consistency and path existence, before any work starts."""
    if hasattr(args, "ensemble"):
        single = args.ensemble is not None
        pair = args.mo is not None or args.ms is not None
        if single == pair:
            raise FlagError("give either --ensemble or both --mo and --ms")
        if pair and (args.mo is None or args.ms is None):
            raise FlagError("--mo and --ms must be given together")
        if pair and not args.a:
            raise FlagError("--mo/--ms need at least one --a value")
        if single and args.a:
            raise FlagError("--a only applies to --mo/--ms")
        for a in args.a or ():
            if not 0.0 <= a <= 1.0:
                raise FlagError(f"--a {a} outside [0, 1]")
    if hasattr(args, "set"):
        if (args.set == "file") != (args.observables is not None):
            raise FlagError("--observables PATH goes with --set file")
    if getattr(args, "frac", None) is not None and not 0.0 < args.frac <= 1.0:
        raise FlagError(f"--frac {args.frac} outside (0, 1]")
    if getattr(args, "reps", 1) < 1:
        raise FlagError("--reps must be positive")
    if getattr(args, "hist_bins", 1) < 1:
        raise FlagError("--hist-bins must be positive")
    if getattr(args, "count", 1) < 1:
        raise FlagError("--count must be positive")
    for attr in ("ensemble", "mo", "ms"):
        _check_path(getattr(args, attr, None), "ensemble directory", is_dir=True)
    for attr, what in (("pairs", "pairs file"), ("vectors", "word-vector file"), ("observables", "observable file")):
        _check_path(getattr(args, attr, None), what)


def load_runs(args) -> list[tuple[float | None, MatrixEnsemble]]:
    if args.ensemble is not None:
        return [(None, load_ensemble(args.ensemble))]
    mo, ms = load_ensemble(args.mo), load_ensemble(args.ms)
    return [(a, mix(mo, ms, a)) for a in args.a]


def load_set(args):
    if args.set == "file":
        try:
            return load_observables(args.observables)
        except (ValueError, KeyError, TypeError) as exc:
            raise IngestionError(f"{args.observables}: malformed observable file ({exc})") from None
    return canonical_set(args.set)


def _features(args, ens, obs_set):
    mode = DEVIATIONS[args.deviation]
    pm = fit_pattern_moments(ens) if mode == DEV_THEOR else None
    ft = build_features(ens, obs_set.observables, mode, pm=pm)
    return ft, build_metric(ft, metric_kind(args.metric, args.deviation))


# ---------------------------------------------------------------------------
# subcommands: each returns (result json, csv header, csv rows)
# ---------------------------------------------------------------------------

def cmd_gaussianity(args, ens, obs_set, ctx):
    rep = gaussianity_report(obs_set.observables, ens)
    header = ["id", "label", "expt_mean", "theor_mean", "std", "normalized_difference"]
    rows = [[r["id"], r["label"], r["expt_mean"], r["theor_mean"], r["std"],
             "undefined" if r["normalized_difference"] is None else r["normalized_difference"]]
            for r in rep.rows()]
    return rep.to_json(), header, rows


def cmd_features(args, ens, obs_set, ctx):
    ft, metric = _features(args, ens, obs_set)
    out = ft.to_json()
    out["reference"] = [float(x) for x in ft.reference]
    out["metric"] = metric.to_json()
    ctx["dropped_observables"] = list(metric.dropped)
    rows = [[w, *map(float, r)] for w, r in zip(ft.words, ft.values)]
    return out, ["word", *ft.columns], rows


def cmd_relation_means(args, ens, obs_set, ctx):
    ft, metric = _features(args, ens, obs_set)
    groups = pair_cosines(ft, metric, ctx["pairs"])
    means = relation_means(groups)
    hist = histograms(groups, args.hist_bins)
    ctx["dropped_observables"] = list(metric.dropped)
    ctx["skipped"] = groups.skipped
    ctx.setdefault("histograms", []).append((ctx["a"], hist))
    out = {"metric": metric.kind, "means": means, "ordering_ok": ordering_check(means), "histograms": hist}
    rows = [[rel, m["mean"], m["stderr"], m["count"]] for rel, m in means.items()]
    return out, ["relation", "mean", "stderr", "count"], rows


def cmd_classify(args, ens, obs_set, ctx):
    ft, metric = _features(args, ens, obs_set)
    groups = pair_cosines(ft, metric, ctx["pairs"])
    if args.protocol == "full":
        rep = full_protocol(groups, args.mode)
    else:
        rep = split_protocol(groups, args.mode, frac=args.frac, reps=args.reps, seed=args.seed,
                             stratify=args.stratify == "on")
    ctx["dropped_observables"] = list(metric.dropped)
    ctx["skipped"] = groups.skipped
    out = rep.to_json()
    out["metric"] = metric.kind
    rows = [[c, int(n), r] for c, n, r in zip(rep.classes, rep.counts, rep.true_rates)]
    rows.append(["balanced_accuracy", int(rep.counts.sum()), rep.balanced_accuracy])
    return out, ["class", "count", "true_rate"], rows


def cmd_hyper_length(args, ens, obs_set, ctx):
    ft, metric = _features(args, ens, obs_set)
    rep = hyper_length_ratio(ft, metric, ctx["pairs"])
    ctx["dropped_observables"] = list(metric.dropped)
    ctx["skipped"] = rep.skipped
    out = rep.to_json()
    out["metric"] = metric.kind
    return out, ["ratio", "hypernym_longer", "ties", "pairs"], [[rep.ratio, rep.longer, rep.ties, rep.total]]


def cmd_baselines(args, ens, obs_set, ctx):
    tables = run_baselines(ens, ctx["pairs"], ctx.get("vectors"))
    rows = [[name, rel, m["mean"], m["stderr"], m["count"]]
            for name, t in tables.items() for rel, m in t["means"].items()]
    return tables, ["baseline", "relation", "mean", "stderr", "count"], rows


def cmd_sample(args, ens, obs_set, ctx):
    pm = fit_pattern_moments(ens)
    dim = args.dim or ens.dim
    target = args.sample_dir if ctx["a"] is None or len(args.a) == 1 else \
        os.path.join(args.sample_dir, f"a={ctx['a']:g}")
    sample = sample_ensemble(pm, dim, args.count, args.seed)
    save_ensemble(sample, target)
    return {"pattern_moments": pm.to_json(), "dim": dim, "count": args.count, "sample_dir": target}, [], []


COMMANDS: dict[str, Callable] = {
    "gaussianity": cmd_gaussianity,
    "features": cmd_features,
    "relation-means": cmd_relation_means,
    "classify": cmd_classify,
    "hyper-length": cmd_hyper_length,
    "baselines": cmd_baselines,
    "sample": cmd_sample,
}


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

def _config_echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose",)}


def _plain(obj):
    """JSON-safe copy: numpy scalars and arrays become Python numbers and lists."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_plain(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _csv_text(header, rows, with_a) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow((["a"] if with_a else []) + header)
    for a, row in rows:
        cells = [repr(float(x)) if isinstance(x, float) else ("" if x is None else x) for x in row]
        w.writerow(([("" if a is None else repr(a))] if with_a else []) + cells)
    return buf.getvalue()


def _write(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def run(args) -> dict:
    validate(args)
    report = {"version": __version__, "command": args.command, "config": _config_echo(args),
              "seed": getattr(args, "seed", None)}
    if args.command == "dump-observables":
        obs_set = load_set(args)
        report["observables"] = [o.to_json() for o in obs_set]
        report["set"] = obs_set.name
        if args.format == "csv":
            rows = [(None, [o.name, o.label, o.node_count, json.dumps([list(e) for e in o.edges])])
                    for o in obs_set]
            _write(_csv_text(["id", "label", "nodes", "edges"], rows, False), args.out)
        else:
            _write(dumps(report), args.out)
        return report

    obs_set = load_set(args) if hasattr(args, "set") else None
    ctx = {}
    if getattr(args, "pairs", None):
        ctx["pairs"] = load_pairs(args.pairs)
    if getattr(args, "vectors", None):
        ctx["vectors"] = load_word_vectors(args.vectors)
    if obs_set is not None:
        report["observables"] = obs_set.ids
    runs, csv_rows, header = [], [], []
    for a, ens in load_runs(args):
        ctx.update(a=a, dropped_observables=[], skipped={})
        result, header, rows = COMMANDS[args.command](args, ens, obs_set, ctx)
        runs.append({"a": a, "n_words": len(ens), "dropped_words": ens.dropped,
                     "dropped_observables": ctx["dropped_observables"], "skipped": ctx["skipped"],
                     "result": result})
        csv_rows.extend((a, r) for r in rows)
    report["runs"] = runs
    if getattr(args, "hist_out", None):
        hist_rows = []
        for a, hist in ctx["histograms"]:
            hist_rows.extend((a, [h["relation"], h["bin_left"], h["bin_right"], h["normalized_count"]])
                             for h in hist)
        _write(_csv_text(["relation", "bin_left", "bin_right", "normalized_count"], hist_rows,
                         args.ensemble is None), args.hist_out)
    if args.format == "csv":
        _write(_csv_text(header, csv_rows, args.ensemble is None), args.out)
    else:
        _write(dumps(report), args.out)
    return report


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        run(args)
    except PimoError as exc:
        print(f"pimo: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"pimo: error: numerical failure ({exc})", file=sys.stderr)
        return NumericalError.exit_code
    except OSError as exc:
        print(f"pimo: error: {exc}", file=sys.stderr)
        return IngestionError.exit_code
    except ValueError as exc:
        print(f"pimo: error: {exc}", file=sys.stderr)
        return FlagError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
