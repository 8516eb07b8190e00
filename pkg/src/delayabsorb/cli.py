"""Command-line entry point: ``delayabsorb <command> [options]``.

Every command reads its inputs from files, writes its outputs into ``--out``
and leaves a ``manifest.json`` describing the run beside them.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .absorption import (BufferTable, absorption_profile, airport_day_delays, airport_turnover_summary,
                         compute_buffer_stats, delay_category_histogram, label_delay_absorbed, table_from_buffers,
                         write_airport_day_delays, write_buffer_stats, write_delay_histogram, write_labels,
                         write_profiles, write_turnover_summary)
from .errors import DataError
from .features import EncoderFormatError, EncoderState, write_feature_matrix
from .ingest import load_dataset, write_dataset
from .learner import ModelFormatError, load_model
from .pipeline.metrics import compute_metrics
from .pipeline.run import PipelineConfig, apply_models, prepare, run_two_stage, save_outputs
from .rotation import chain_rotations, write_links_csv
from .synth import SCENARIOS, SynthConfig, generate_network, propagation_share, read_buffers, \
    truth_absorption_rate, write_network

log = logging.getLogger("delayabsorb")

COMMANDS = ("ingest", "chain", "label", "analyze", "featurize", "train", "evaluate", "synth", "report")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """Reports usage problems as exceptions so ``main`` controls the exit code."""

    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser, data=True):
    if data:
        p.add_argument("--data", required=True, help="input data directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--config", help="JSON file overriding pipeline defaults")
    p.add_argument("--join-window-min", type=float, default=None)
    p.add_argument("--overnight-min", type=int, default=None)
    p.add_argument("--buffer-floor", type=int, default=None)


def _model_flags(p: argparse.ArgumentParser):
    p.add_argument("--beta", type=float, default=None, help="F-beta used for threshold tuning")
    p.add_argument("--pos-weight", type=float, default=None, help="Stage II positive-class weight")
    p.add_argument("--bins", type=int, default=None, help="histogram bins, 0 for exact greedy")
    p.add_argument("--trees", type=int, default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--search-trials", type=int, default=None)


def build_parser() -> Parser:
    parser = Parser(prog="delayabsorb", description="Delay absorption and two-stage delay prediction.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=Parser, metavar="{" + ",".join(COMMANDS) + "}")
    sub.required = True
    for name in ("ingest", "chain", "analyze"):
        _common(sub.add_parser(name))
    p = sub.add_parser("label")
    _common(p)
    p.add_argument("--buffers", help="CSV of known per-pair buffers (airport,carrier,buffer_min)")
    p = sub.add_parser("featurize")
    _common(p)
    p = sub.add_parser("train")
    _common(p)
    _model_flags(p)
    p = sub.add_parser("evaluate")
    _common(p)
    p.add_argument("--model", required=True, help="directory written by train")
    p = sub.add_parser("synth")
    _common(p, data=False)
    p.add_argument("--tails", type=int, default=200)
    p.add_argument("--legs", type=int, default=8)
    p.add_argument("--legs-per-day", type=int, default=4)
    p.add_argument("--airports", type=int, default=8)
    p.add_argument("--carriers", type=int, default=4)
    p.add_argument("--scenario", choices=SCENARIOS, default="propagated_first")
    p = sub.add_parser("report")
    p.add_argument("--model", required=True, help="directory written by train")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    return parser


def load_config(args) -> PipelineConfig:
    """Defaults, then the ``--config`` file, then explicit flags."""
    doc = {}
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise DataError("config file must hold a JSON object")
    try:
        cfg = PipelineConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid config: {exc}") from exc
    flags = ("seed", "threads", "beta", "pos_weight", "buffer_floor", "join_window_min", "overnight_min",
             "search_trials")
    over = {f: getattr(args, f) for f in flags if getattr(args, f, None) is not None}
    cfg = replace(cfg, **over)
    stage = {"n_bins": getattr(args, "bins", None), "n_trees": getattr(args, "trees", None),
             "max_depth": getattr(args, "depth", None), "learning_rate": getattr(args, "lr", None)}
    stage = {k: v for k, v in stage.items() if v is not None}
    if "seed" in over:
        stage["seed"] = cfg.seed
    try:
        return replace(cfg, stage1=replace(cfg.stage1, **stage), stage2=replace(cfg.stage2, **stage))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load(args, cfg):
    return load_dataset(args.data, cfg.join_window_min, cfg.threads)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(args, cfg):
    ds = _load(args, cfg)
    out = _outdir(args)
    write_dataset(ds, out)
    return ["flights.csv", "weather/", "ingest_report.txt", "ingest_summary.json"]


def cmd_chain(args, cfg):
    ds = _load(args, cfg)
    res = chain_rotations(ds.flights, cfg.overnight_min)
    out = _outdir(args)
    write_links_csv(res.links, out / "links.csv")
    summary = {"flights": len(ds.flights), "links": len(res.links), "unchained": res.unchained,
               "overnight": sum(l.overnight for l in res.links), "duplicate_departures": res.duplicate_departures}
    (out / "chain_summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return ["links.csv", "chain_summary.json"]


def _buffers(args, links, cfg) -> BufferTable:
    if getattr(args, "buffers", None):
        return table_from_buffers(read_buffers(args.buffers))
    return compute_buffer_stats(links, cfg.buffer_floor)


def cmd_label(args, cfg):
    ds = _load(args, cfg)
    links = chain_rotations(ds.flights, cfg.overnight_min).links
    table = _buffers(args, links, cfg)
    labels = label_delay_absorbed(links, table)
    out = _outdir(args)
    write_buffer_stats(table, out / "buffer_stats.csv")
    write_labels(labels, out / "labels.csv")
    return ["buffer_stats.csv", "labels.csv"]


def cmd_analyze(args, cfg):
    ds = _load(args, cfg)
    links = chain_rotations(ds.flights, cfg.overnight_min).links
    out = _outdir(args)
    write_buffer_stats(compute_buffer_stats(links, cfg.buffer_floor), out / "buffer_stats.csv")
    write_turnover_summary(airport_turnover_summary(links), out / "turnover_summary.csv")
    write_profiles(absorption_profile(links, "airport"), out / "absorption_profile.csv")
    write_profiles(absorption_profile(links, "airport+date"), out / "absorption_profile_daily.csv")
    hist = delay_category_histogram(ds.flights)
    write_delay_histogram(hist, out / "delay_histogram.csv")
    write_airport_day_delays(airport_day_delays(ds.flights), out / "airport_day_delays.csv")
    (out / "delay_summary.json").write_text(json.dumps(
        {k: v for k, v in hist.items() if k != "counts"}, indent=1, sort_keys=True) + "\n")
    return ["buffer_stats.csv", "turnover_summary.csv", "absorption_profile.csv", "absorption_profile_daily.csv",
            "delay_histogram.csv", "airport_day_delays.csv", "delay_summary.json"]


def cmd_featurize(args, cfg):
    ds = _load(args, cfg)
    prep = prepare(ds.joined, cfg)
    out = _outdir(args)
    write_feature_matrix(prep.X, prep.names, out / "features.csv", prep.keys)
    with open(out / "labels.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_key", "dep_del15", "stage1_eligible", "delay_absorbed"])
        for i, k in enumerate(prep.keys):
            w.writerow([k, int(prep.y2[i]), int(prep.eligible[i]), int(prep.absorbed[i]) if prep.eligible[i] else ""])
    prep.encoder.save(out / "encoder.json")
    prep.plan.save(out / "split.json")
    write_buffer_stats(prep.buffers, out / "buffer_stats.csv")
    return ["features.csv", "labels.csv", "encoder.json", "split.json", "buffer_stats.csv"]


def cmd_train(args, cfg):
    ds = _load(args, cfg)
    result = run_two_stage(prepare(ds.joined, cfg), cfg)
    paths = save_outputs(result, _outdir(args))
    return sorted(paths)


def cmd_evaluate(args, cfg):
    model_dir = Path(args.model)
    try:
        s1 = load_model(model_dir / "stage1_model.json")
        s2 = load_model(model_dir / "stage2_model.json")
        encoder = EncoderState.load(model_dir / "encoder.json")
        buffers = BufferTable.from_dict(json.loads((model_dir / "buffer_stats.json").read_text()))
        trained = json.loads((model_dir / "evaluation.json").read_text())
    except (ModelFormatError, EncoderFormatError, json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"cannot load model directory {model_dir}: {exc}") from exc
    ds = _load(args, cfg)
    scored = apply_models(ds.joined, s1, s2, encoder, buffers, cfg.overnight_min)
    thresholds = {"default": 0.5, "tuned": trained["stage2"]["threshold"]}
    doc = {"stage2": {name: compute_metrics(scored.stage2_prob, scored.y2, t).as_dict()
                      for name, t in thresholds.items()}}
    if scored.eligible.any():
        e = scored.eligible
        doc["stage1"] = compute_metrics(scored.absorb_score[e], scored.absorbed[e],
                                        trained["stage1"]["threshold"]).as_dict()
    out = _outdir(args)
    (out / "evaluation.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    with open(out / "scores.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_key", "absorb_score", "absorb_score_source", "stage2_prob", "dep_del15", "delay_absorbed"])
        for i, k in enumerate(scored.keys):
            w.writerow([k, repr(float(scored.absorb_score[i])), scored.source[i], repr(float(scored.stage2_prob[i])),
                        int(scored.y2[i]), int(scored.absorbed[i]) if scored.eligible[i] else ""])
    return ["evaluation.json", "scores.csv"]


def cmd_synth(args, cfg):
    try:
        sc = SynthConfig(n_tails=args.tails, legs_per_tail=args.legs, legs_per_day=args.legs_per_day,
                         n_airports=args.airports, n_carriers=args.carriers, scenario=args.scenario,
                         seed=cfg.seed)
    except TypeError as exc:
        raise UsageError(str(exc)) from exc
    net = generate_network(sc)
    out = _outdir(args)
    write_network(net, out)
    summary = {"config": sc.to_dict(), "flights": len(net.flights),
               "dep_del15_rate": sum(f.dep_delay_min > 15 for f in net.flights) / len(net.flights),
               "propagation_share": propagation_share(net.truth)}
    try:
        summary["truth_absorption_rate"] = truth_absorption_rate(net.truth)
    except DataError:
        summary["truth_absorption_rate"] = None
    (out / "synth_summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return ["flights.csv", "weather/", "truth.csv", "buffers.csv", "synth_summary.json"]


TABLE2_FIELDS = ["setting", "threshold", "accuracy", "precision", "recall", "f1", "precision_neg", "recall_neg",
                 "f1_neg", "f1_weighted", "roc_auc", "average_precision", "tn", "fp", "fn", "tp", "n"]


def cmd_report(args, cfg):
    src = Path(args.model) / "evaluation.json"
    try:
        doc = json.loads(src.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"cannot read {src}: {exc}") from exc
    out = _outdir(args)
    with open(out / "table1.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "accuracy", "roc_auc"])
        for r in doc["table1_test"]:
            w.writerow([r["model"], r["accuracy"], r["roc_auc"]])
    written = ["table1.csv"]
    for part in ("test", "cv"):
        rows = doc.get(f"table2_{part}", [])
        name = f"table2_{part}.csv"
        with open(out / name, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TABLE2_FIELDS)
            for r in rows:
                w.writerow(["" if r.get(k) is None else r.get(k) for k in TABLE2_FIELDS])
        written.append(name)
    return written


HANDLERS = {"ingest": cmd_ingest, "chain": cmd_chain, "label": cmd_label, "analyze": cmd_analyze,
            "featurize": cmd_featurize, "train": cmd_train, "evaluate": cmd_evaluate, "synth": cmd_synth,
            "report": cmd_report}


def write_manifest(args, cfg, outputs, seconds) -> None:
    inputs = {k: getattr(args, k) for k in ("data", "model", "config", "buffers") if getattr(args, k, None)}
    manifest = {"command": args.command, "inputs": inputs, "outputs": outputs, "out": args.out,
                "config": cfg.to_dict(), "seed": cfg.seed, "version": __version__,
                "duration_s": round(seconds, 3)}
    Path(args.out, "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        outputs = HANDLERS[args.command](args, cfg)
    except UsageError as exc:
        print(f"{parser.format_usage()}error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    write_manifest(args, cfg, outputs, time.perf_counter() - t0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
