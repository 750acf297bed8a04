"""Command-line front door: ``stylegraph <subcommand> [flags]``.

Every subcommand reads one config document (``--config`` or
``$STYLEGRAPH_CONFIG``) and applies flag overrides on top. ``-`` as an
input or output path means stdin / stdout, so ``simulate | analyze`` works.
Failures print one JSON object to stderr and exit with a code from
:data:`EXIT_CODES`.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io as _stdio
import json
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .classify import (
    LABELS,
    Dataset,
    PerceptronModel,
    TrainConfig,
    extract_features,
    predict_batch,
    synthetic_dataset,
    train,
    weighted_accuracy,
)
from .config import FEATURE_LAYOUTS, RunConfig, load_config
from .errors import (
    CalibrationError,
    ConfigError,
    DomainError,
    ParseError,
    StyleGraphError,
)
from .evalkit import SWEEPS, evaluate_episode, parse_annotations_csv, run_sweep, summarize
from .graph import adjacency_csv, replay_adjacency
from .io import dumps_json, parse_trajectory_csv, trajectory_to_csv
from .polyfit import condition_study
from .styles import episode_reports
from .synthgen import MEASURES, PRESETS, GeneratorParams, calibrate, simulate

EXIT_CODES = {
    "ok": 0,
    "usage": 2,  # unknown flag / bad flag value (argparse convention)
    "missing_input": 3,
    "config": 4,
    "input_data": 5,
    "domain": 6,
    "calibration": 7,
    "internal": 70,
}


class CliError(Exception):
    def __init__(self, kind: str, message: str, **extra) -> None:
        super().__init__(message)
        self.kind = kind
        self.extra = extra


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D401 - argparse hook
        raise CliError("usage", f"{self.prog}: {message}")


# I/O helpers ---------------------------------------------------------------------------

def _read_text(path: str | None, what: str) -> str:
    if path is None:
        raise CliError("missing_input", f"no {what} given")
    if path == "-":
        return sys.stdin.read()
    p = Path(path)
    if not p.is_file():
        raise CliError("missing_input", f"{what} not found: {path}", path=path)
    return p.read_text(encoding="utf-8")


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")


def _parse_float(text: str) -> float:
    return float(text)


def _config_from(args) -> RunConfig:
    base = load_config(args.config)
    overrides = {
        name: getattr(args, name)
        for name in ("mu", "capacity", "dwell", "degree", "delta", "sle_window", "weave_window", "stride",
                     "eps_ball", "sharp_tol", "conservative_tol", "frame_rate", "seed", "feature_layout",
                     "series_noise", "jobs")
    }
    config = base.replace(**overrides)
    if args.dump_config:
        _write_text(args.dump_config, config.to_json())
    return config


def _path(args, name: str, config: RunConfig) -> str | None:
    """Flag value, else ``config.paths[name]``."""
    value = getattr(args, name, None)
    return value if value is not None else config.paths.get(name)


def _load_episode(path: str | None, config: RunConfig):
    return parse_trajectory_csv(_read_text(path or "-", "trajectory input"), config.frame_rate)


# Subcommands ---------------------------------------------------------------------------

def cmd_analyze(args, config: RunConfig) -> None:
    ts = _load_episode(_path(args, "input", config), config)
    agents = [args.agent] if args.agent is not None else None
    if args.agent is not None and args.agent not in ts.agent_index:
        raise CliError("domain", f"agent {args.agent!r} not in input", agent=args.agent)
    reports = episode_reports(ts, config, agents)
    if args.agent is not None:
        doc = reports[args.agent].to_dict()
    else:
        doc = {"agents": {str(a): r.to_dict() for a, r in reports.items()}}
    doc["config"] = config.to_dict()
    out = _path(args, "out", config)
    _write_text(out, dumps_json(doc))
    curves_dir = args.curves_dir
    if curves_dir is None and out not in (None, "-"):
        curves_dir = str(Path(out).parent)
    if curves_dir is not None:
        stem = Path(out).stem if out not in (None, "-") else "report"
        for agent, report in reports.items():
            for style in report.curves:
                for which in ("sle", "sie"):
                    name = f"{stem}.{agent}.{style.value}.{which}.csv"
                    _write_text(str(Path(curves_dir) / name), report.curve_csv(style, which))
    if args.dump_adjacency:
        state = replay_adjacency(ts, config.mu, config.capacity, config.dwell)
        _write_text(args.dump_adjacency, adjacency_csv(state))


def cmd_simulate(args, config: RunConfig) -> None:
    params = PRESETS[args.preset]
    if args.params:
        doc = json.loads(_read_text(args.params, "generator params"))
        try:
            params = GeneratorParams(**{**params.to_dict(), **doc.get("params", doc)})
        except TypeError as exc:
            raise CliError("config", f"bad generator params: {exc}") from None
    overrides = {k: getattr(args, k) for k in ("lanes", "n_vehicles") if getattr(args, k) is not None}
    params = dataclasses.replace(params, seed=config.seed, **overrides)
    ts, truth = simulate(params, args.horizon, config.frame_rate, config.capacity)
    _write_text(_path(args, "out", config), trajectory_to_csv(ts))
    if args.truth:
        _write_text(f"{args.truth}.labels.csv", truth.labels_csv())
        _write_text(f"{args.truth}.maneuvers.csv", truth.maneuvers_csv())


def _dataset_csv(data: Dataset) -> str:
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(data.names) + ["label"])
    for row, label in zip(data.X, data.labels):
        w.writerow([repr(float(v)) for v in row] + [label])
    return buf.getvalue()


def _parse_dataset(text: str) -> Dataset:
    rows = [r for r in csv.reader(_stdio.StringIO(text)) if r]
    if len(rows) < 2 or rows[0][-1] != "label":
        raise ParseError("feature CSV needs a header ending in 'label' and at least one row", 1)
    names = tuple(rows[0][:-1])
    X, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(names) + 1:
            raise ParseError(f"expected {len(names) + 1} fields, got {len(row)}", lineno)
        try:
            X.append([float(v) for v in row[:-1]])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        labels.append(row[-1].strip().lower())
    return Dataset(np.asarray(X), tuple(labels), tuple(range(len(labels))), names)


def cmd_train(args, config: RunConfig) -> None:
    if args.data:
        data = _parse_dataset(_read_text(args.data, "feature data"))
    else:
        gens = {name: PRESETS[name] for name in ("conservative", "aggressive")}
        data = synthetic_dataset(gens, args.synthetic // 2, config, first_seed=config.seed)
        if args.dump_data:
            _write_text(args.dump_data, _dataset_csv(data))
    tcfg = TrainConfig(kind=args.kind, hidden=tuple(args.hidden) if args.kind == "mlp" else (),
                       lr=args.lr, epochs=args.epochs, seed=config.seed)
    train_set, test_set = data.split(args.holdout, config.seed) if args.holdout else (data, None)
    model = train(train_set.X, list(train_set.labels), tcfg)
    model.feature_names = data.names
    model_path = _path(args, "model", config)
    if model_path is None:
        raise CliError("usage", "train needs --model PATH (or paths.model in the config)")
    _write_text(model_path, model.to_json())
    summary = {"n_train": len(train_set.labels), "final_loss": model.loss_trace[-1] if model.loss_trace else None}
    if test_set is not None:
        preds = predict_batch(model, test_set.X)
        summary["n_test"] = len(test_set.labels)
        summary["weighted_accuracy"] = weighted_accuracy(preds, list(test_set.labels))
    _write_text(args.summary, dumps_json(summary))


def cmd_classify(args, config: RunConfig) -> None:
    model = PerceptronModel.from_json(_read_text(_path(args, "model", config), "model"))
    ts = _load_episode(_path(args, "input", config), config)
    agents = [args.agent] if args.agent is not None else None
    reports = episode_reports(ts, config, agents)
    out = {}
    rows = []
    for agent, report in reports.items():
        fv = extract_features(report, layout=config.feature_layout)
        if model.feature_names and tuple(model.feature_names) != fv.names:
            raise CliError("config", "model feature layout does not match config.feature_layout",
                           model=list(model.feature_names), config=list(fv.names))
        rows.append(fv.values)
    if rows:
        X = np.vstack(rows)
        scores = model.scores(X)
        for (agent, _), label, s in zip(reports.items(), predict_batch(model, X), scores):
            out[str(agent)] = {"label": label, "scores": dict(zip(LABELS, s.tolist()))}
    _write_text(_path(args, "out", config), dumps_json({"predictions": out}))


def cmd_evaluate(args, config: RunConfig) -> None:
    if args.sweep:
        levels = args.levels or {
            "density": [5, 10, 15, 20, 25],
            "noise": [1e-4, 1e-3, 1e-2, 1e-1],
            "lanes": [2, 4, 6, 8],
        }[args.sweep]
        means = run_sweep(args.sweep, levels, range(config.seed, config.seed + args.seeds), config=config)
        doc = {"sweep": args.sweep, "levels": list(levels), "mean_tde_seconds": means, "seeds": args.seeds}
        _write_text(_path(args, "out", config), dumps_json(doc))
        return
    ts = _load_episode(_path(args, "input", config), config)
    annotations = parse_annotations_csv(_read_text(_path(args, "annotations", config), "annotations"))
    records = evaluate_episode(ts, annotations, config, args.agent, args.styles)
    for r in records:
        if r.warning:
            print(json.dumps({"warning": r.warning, "style": r.style.value}), file=sys.stderr)
    doc = {"records": [r.to_dict() for r in records], "summary": summarize(records)}
    _write_text(_path(args, "out", config), dumps_json(doc))


def _parse_band(text: str) -> tuple[str, tuple[float, float]]:
    try:
        key, rng = text.split("=", 1)
        lo, hi = rng.split(":", 1)
        return key.strip(), (float(lo) if lo else -math.inf, float(hi) if hi else math.inf)
    except ValueError:
        raise argparse.ArgumentTypeError(f"band must look like name=lo:hi, got {text!r}") from None


def cmd_calibrate(args, config: RunConfig) -> None:
    if not args.band:
        raise CliError("usage", "calibrate needs at least one --band name=lo:hi")
    bands = dict(args.band)
    base = PRESETS[args.base] if args.base else None
    seeds = range(config.seed, config.seed + args.seeds)
    try:
        result = calibrate(args.target, bands, args.max_iters, base=base, seeds=seeds,
                           horizon=args.horizon, config=config)
    except CalibrationError as exc:
        best = exc.best
        raise CliError("calibration", str(exc), best={"params": best.params.to_dict(),
                                                      "measurements": best.measurements}) from None
    doc = {"target": args.target, "params": result.params.to_dict(), "measurements": result.measurements,
           "iterations": result.iterations, "converged": result.converged}
    _write_text(_path(args, "out", config), dumps_json(doc))


def cmd_condition_study(args, config: RunConfig) -> None:
    d = args.d if args.d is not None else config.degree
    rows = condition_study(d, args.t_max, config.delta)
    buf = _stdio.StringIO()
    w = csv.DictWriter(buf, fieldnames=["T", "kappa_unregularized", "kappa_regularized", "alpha"],
                       lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(float(v)) if k != "T" else int(v)) for k, v in row.items()})
    _write_text(_path(args, "out", config), buf.getvalue())


# Parser --------------------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("config")
    g.add_argument("--config", help="config JSON (default: $STYLEGRAPH_CONFIG)")
    g.add_argument("--dump-config", metavar="PATH", help="write the effective config")
    g.add_argument("--mu", type=float)
    g.add_argument("--capacity", type=int)
    g.add_argument("--dwell", type=int)
    g.add_argument("--degree", type=int)
    g.add_argument("--delta", type=float, help="condition-number bound")
    g.add_argument("--sle-window", type=int)
    g.add_argument("--weave-window", type=int)
    g.add_argument("--stride", type=int)
    g.add_argument("--eps-ball", type=int)
    g.add_argument("--sharp-tol", type=float)
    g.add_argument("--conservative-tol", type=float)
    g.add_argument("--frame-rate", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--feature-layout", choices=FEATURE_LAYOUTS)
    g.add_argument("--series-noise", type=float)
    g.add_argument("--jobs", type=int)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="stylegraph", description="Driver-style detection from traffic-graph centrality.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", parents=[common], help="StyleReport JSON and SLE/SIE curves")
    p.add_argument("--input", help="trajectory CSV, '-' for stdin (default)")
    p.add_argument("--agent", help="one agent id (default: every agent with a gap-free span)")
    p.add_argument("--out", help="report JSON path, '-' for stdout (default)")
    p.add_argument("--curves-dir", help="directory for SLE/SIE CSVs (default: next to --out)")
    p.add_argument("--dump-adjacency", metavar="PATH", help="write the final cumulative adjacency block")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", parents=[common], help="synthetic episode CSV (+ truth)")
    p.add_argument("--preset", choices=sorted(PRESETS), default="conservative")
    p.add_argument("--params", help="GeneratorParams JSON (e.g. calibrate output); overrides the preset")
    p.add_argument("--horizon", type=int, default=300)
    p.add_argument("--lanes", type=int)
    p.add_argument("--n-vehicles", type=int)
    p.add_argument("--out", help="trajectory CSV path, '-' for stdout (default)")
    p.add_argument("--truth", metavar="PREFIX", help="write PREFIX.labels.csv and PREFIX.maneuvers.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", parents=[common], help="fit the classifier")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--data", help="feature CSV with a trailing label column")
    src.add_argument("--synthetic", type=int, default=200, help="episodes from the presets (default 200)")
    p.add_argument("--dump-data", metavar="PATH", help="write the synthetic feature CSV")
    p.add_argument("--kind", choices=("mlp", "logistic"), default="mlp")
    p.add_argument("--hidden", type=int, nargs="+", default=[32, 32])
    p.add_argument("--lr", type=float, default=TrainConfig.lr)
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--holdout", type=float, default=1 / 3, help="test fraction, 0 to train on everything")
    p.add_argument("--model", help="model JSON output path")
    p.add_argument("--summary", default=None, help="training summary JSON (default: stdout)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", parents=[common], help="label agents with a trained model")
    p.add_argument("--model", help="model JSON from 'train'")
    p.add_argument("--input", help="trajectory CSV, '-' for stdin (default)")
    p.add_argument("--agent")
    p.add_argument("--out")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", parents=[common], help="TDE against annotations, or a sweep")
    p.add_argument("--input", help="trajectory CSV, '-' for stdin (default)")
    p.add_argument("--annotations", help="participant,style,start_frame,end_frame CSV")
    p.add_argument("--agent")
    p.add_argument("--styles", nargs="+")
    p.add_argument("--sweep", choices=SWEEPS, help="run a scripted-episode sweep instead")
    p.add_argument("--levels", type=_parse_float, nargs="+")
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("calibrate", parents=[common], help="coordinate-search generator parameters")
    p.add_argument("--target", choices=("aggressive", "conservative"), required=True)
    p.add_argument("--band", type=_parse_band, action="append",
                   help=f"measurement band name=lo:hi (blank side = unbounded); names: {', '.join(MEASURES)}")
    p.add_argument("--base", choices=sorted(PRESETS), help="starting preset (default: the opposite one)")
    p.add_argument("--max-iters", type=int, default=20)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--horizon", type=int, default=300)
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("condition-study", parents=[common], help="kappa vs T table")
    p.add_argument("--d", type=int)
    p.add_argument("--t-max", type=int, default=20)
    p.add_argument("--out")
    p.set_defaults(func=cmd_condition_study)
    return parser


def _fail(kind: str, message: str, **extra) -> int:
    code = EXIT_CODES[kind]
    doc = {"error": kind, "message": message, "exit_code": code, **extra}
    sys.stderr.write(dumps_json(doc))
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = _config_from(args)
        args.func(args, config)
        return 0
    except CliError as exc:
        return _fail(exc.kind, str(exc), **exc.extra)
    except ConfigError as exc:
        return _fail("config", str(exc))
    except (ParseError, json.JSONDecodeError) as exc:
        line = getattr(exc, "line", None) or getattr(exc, "lineno", None)
        return _fail("input_data", str(exc), **({"line": line} if line else {}))
    except FileNotFoundError as exc:
        return _fail("missing_input", str(exc))
    except (StyleGraphError, DomainError, KeyError, IndexError, TypeError, ArithmeticError) as exc:
        return _fail("domain", f"{type(exc).__name__}: {exc}")
    except BrokenPipeError:
        return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
