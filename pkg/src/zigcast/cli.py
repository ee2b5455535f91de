"""``zigcast`` command line.

Every subcommand reads ``--config`` plus flag overrides, writes its outputs
and a manifest into the run directory, and exits nonzero with a JSON error
report on failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, io
from .config import RunConfig, check_paths, load_config
from .errors import CompatibilityError, ConfigError, LoadError, ZigcastError
from .eta import apply_eta, fit_eta
from .evaluation import QUANTILE_LEVELS, backtest_report, feature_importance, ks_statistic, pit_values, zig_quantile
from .linkage import aggregate_units, link_addresses, links_frame
from .nn import fit, load_model, predict_raw, save_model
from .features import assemble_feature_matrix
from .pipeline import (baseline_frame, build_context, check_schema, load_dataset, match_table,
                       matches_frame, resolve_eta, target_column)
from .synth import synth_generate
from .zig import link_transform, zig_mean, zig_sample

log = logging.getLogger("zigcast")

SUBCOMMANDS = ("train", "predict", "evaluate", "calibrate", "importance", "match-addresses",
               "match-baseline", "fit-eta", "synth")
TRUTH_NAME = "synthetic_truth.DO_NOT_TRAIN.csv"


@contextmanager
def run_lock(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".zigcast.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ZigcastError(f"run directory {out} is locked by another writer ({lock})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _inputs(cfg: RunConfig):
    paths = {k: v for k, v in cfg.data.to_dict().items() if k != "internet" and v}
    paths.update({f"internet.{k}": v for k, v in cfg.data.internet.items()})
    return {k: io.file_sha256(v) for k, v in sorted(paths.items()) if Path(v).exists() and k != "truth"}


def write_manifest(cfg: RunConfig, sub: str, outputs: list[Path], model_path=None):
    """Record input/output hashes; warn when inputs drifted since the last run."""
    path = cfg.out / f"manifest.{sub}.json"
    inputs = _inputs(cfg)
    if model_path is not None:
        inputs["model"] = io.file_sha256(model_path)
    if path.exists():
        for w in manifest_drift(json.loads(path.read_text()), inputs):
            log.warning(w)
    io.write_json({
        "subcommand": sub,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "inputs": inputs,
        "outputs": {str(p.relative_to(cfg.out)): io.file_sha256(p) for p in outputs},
        "versions": {"zigcast": __version__, "numpy": np.__version__, "pandas": pd.__version__,
                     "python": platform.python_version()},
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }, path)


def manifest_drift(previous: dict, inputs: dict) -> list[str]:
    old = previous.get("inputs", {})
    return [f"input drift: {k} changed since the previous run ({old.get(k, 'absent')[:12]} -> "
            f"{inputs.get(k, 'absent')[:12]})"
            for k in sorted(set(old) | set(inputs)) if old.get(k) != inputs.get(k)]


def _model_path(cfg, args):
    return Path(args.model) if getattr(args, "model", None) else cfg.out / "model.json"


def _load_model(path):
    if not Path(path).exists():
        raise ConfigError("--model", f"model file not found: {path}")
    return load_model(Path(path).read_text())


def cmd_synth(cfg: RunConfig, args):
    data = synth_generate(cfg.synthetic_spec())
    d = cfg.data
    written = []

    def put(path, fn, *a):
        if path is not None:
            fn(*a, path)
            written.append(Path(path))

    put(d.buildings, io.write_buildings, data.buildings)
    put(d.weather, io.write_weather, data.weather)
    put(d.landcover, io.write_raster, data.landcover)
    put(d.nightlight, io.write_raster, data.nightlight)
    if d.ami_addresses is not None:
        io.write_csv(pd.DataFrame([a.__dict__ for a in data.ami_addresses]), d.ami_addresses)
        written.append(d.ami_addresses)
        cons = data.consumption
    else:
        bmap = {f"AMI{i:05d}": b.building_id for i, b in enumerate(data.buildings)}
        cons = data.consumption.assign(building_id=data.consumption["ami_key"].str[:8].map(bmap))
        cons = cons.groupby(["building_id", "timestamp"], sort=True)[["heating", "electricity"]].sum().reset_index()
    cons = cons.assign(timestamp=io.format_hours(cons["timestamp"].to_numpy()))
    put(d.consumption, io.write_csv, cons)
    if d.archetypes is not None:
        profiles = d.profiles or d.archetypes.with_name("profiles.csv")
        io.write_archetypes(data.archetypes, d.archetypes, profiles)
        written += [d.archetypes, profiles]
    put(d.puma, io.write_puma, data.puma)
    put(d.eta_input, io.write_csv, data.eta_corpus)
    truth_path = d.truth or Path(d.consumption).with_name(TRUTH_NAME)
    truth = data.truth.assign(timestamp=io.format_hours(data.truth["timestamp"].to_numpy()))
    io.write_csv(truth, truth_path)
    io.write_json({k: v.to_dict() for k, v in data.spec.maps.items()},
                  truth_path.with_suffix(".maps.json"))
    written.append(truth_path)
    return {"files": [str(p) for p in written], "n_buildings": len(data.buildings),
            "rows": int(len(data.truth))}, []


def cmd_train(cfg: RunConfig, args):
    ds = load_dataset(cfg)
    tr, va = ds.frame("train"), ds.frame("val")
    names = ds.schema.names
    model, hist = fit(tr[names].to_numpy(), tr["value"].to_numpy(), va[names].to_numpy(),
                      va["value"].to_numpy(), cfg.train, feature_names=names, schema_hash=ds.schema.hash)
    out = cfg.out
    model_path = out / "model.json"
    model_path.write_text(save_model(model))
    io.write_json(ds.schema.to_dict(), out / "schema.json")
    io.write_json(hist.to_dict(), out / "train_history.json")
    sel = hist.selected_epoch
    return {"model": str(model_path), "dropout_rate": model.dropout_rate, "epochs": len(hist.val_nll),
            "best_val_nll": hist.val_nll[sel], "n_train": len(tr), "n_val": len(va)}, \
        [model_path, out / "schema.json", out / "train_history.json"]


def _split_frame(ds, split):
    return ds.frame(None if split == "all" else split)


def cmd_predict(cfg: RunConfig, args):
    model = _load_model(_model_path(cfg, args))
    buildings = io.read_buildings(cfg.data.buildings)
    if cfg.data.consumption is not None:
        ds = load_dataset(cfg)
        check_schema(model, ds.schema)
        frame = _split_frame(ds, args.split)
    else:
        ctx = build_context(cfg, buildings)
        schema = ctx.schema()
        check_schema(model, schema)
        hours = np.asarray(io.parse_hours(pd.Series(args.hours)), dtype="datetime64[h]") if args.hours else None
        if hours is None:
            raise ConfigError("--hours", "needed when no consumption file defines the hours")
        x, ids, hrs = assemble_feature_matrix(buildings, [hours] * len(buildings), ctx, schema)
        frame = pd.DataFrame(x, columns=schema.names)
        frame.insert(0, "timestamp", hrs)
        frame.insert(0, "building_id", ids)
    params = link_transform(predict_raw(model, frame[model.feature_names].to_numpy()))
    out = frame[["building_id", "timestamp"]].copy()
    out["timestamp"] = io.format_hours(out["timestamp"].to_numpy())
    p, k, th = params.arrays()
    out["p"], out["k"], out["theta"] = p, k, th
    out["mean"] = zig_mean(params)
    for q in QUANTILE_LEVELS:
        out[f"q{int(round(q * 100)):02d}"] = zig_quantile(q, params)
    eta, _ = resolve_eta(cfg) if cfg.target == "heating" else (None, None)
    if eta is not None:
        out["heat_mean"] = apply_eta(out["mean"], eta)
    path = cfg.out / "predictions.csv"
    io.write_csv(out, path)
    return {"predictions": str(path), "rows": len(out), "eta": eta}, [path]


def cmd_evaluate(cfg: RunConfig, args):
    model_path = _model_path(cfg, args)
    model = _load_model(model_path)
    ds = load_dataset(cfg)
    check_schema(model, ds.schema)
    frame = _split_frame(ds, args.split)
    base, matches = baseline_frame(cfg, ds, frame)
    obs = frame[["building_id", "timestamp", "value"]]
    report, per_hour, pit = backtest_report(model, frame.drop(columns="value"), obs, base,
                                            ds.schema, seed=cfg.seed)
    out = cfg.out
    paths = [out / "report.json", out / "backtest.csv", out / "segments.csv", out / "pit_histogram.csv"]
    doc = report.to_dict()
    doc["split"] = args.split
    io.write_json(doc, paths[0])
    per_hour = per_hour.assign(timestamp=io.format_hours(per_hour["timestamp"].to_numpy()))
    io.write_csv(per_hour, paths[1])
    io.write_csv(pd.DataFrame([{"segment": s, **v} for s, v in report.segments.items()]), paths[2])
    io.write_csv(pit_histogram(pit), paths[3])
    if matches is not None:
        paths.append(out / "baseline_matches.csv")
        io.write_csv(matches_frame(matches), paths[-1])
    return doc, paths


def pit_histogram(pit, bins=20):
    counts, edges = np.histogram(pit, bins=bins, range=(0.0, 1.0))
    return pd.DataFrame({"lo": edges[:-1], "hi": edges[1:], "count": counts,
                         "density": counts / max(len(pit), 1) * bins})


def cmd_calibrate(cfg: RunConfig, args):
    model = _load_model(_model_path(cfg, args))
    ds = load_dataset(cfg)
    check_schema(model, ds.schema)
    frame = _split_frame(ds, args.split)
    params = link_transform(predict_raw(model, frame[ds.schema.names].to_numpy()))
    obs = frame["value"].to_numpy()
    rng = np.random.default_rng(cfg.seed)
    pit = pit_values(params, obs, rng)
    pit_det = pit_values(params, obs, rng, randomized=False)
    # self-consistency: labels drawn from the model's own predictive distributions
    own = zig_sample(params, rng)
    pit_own = pit_values(params, own, rng)
    doc = {"split": args.split, "n": int(obs.size), "ks_randomized": ks_statistic(pit),
           "ks_deterministic": ks_statistic(pit_det), "ks_self_consistency": ks_statistic(pit_own)}
    out = cfg.out
    paths = [out / "calibration.json", out / "calibration_pit_histogram.csv"]
    io.write_json(doc, paths[0])
    io.write_csv(pit_histogram(pit), paths[1])
    return doc, paths


def cmd_importance(cfg: RunConfig, args):
    model = _load_model(_model_path(cfg, args))
    ds = load_dataset(cfg)
    check_schema(model, ds.schema)
    frame = _split_frame(ds, args.split)
    imp = feature_importance(model, frame[ds.schema.names].to_numpy(), ds.schema)
    path = cfg.out / "importance.csv"
    io.write_csv(imp.frame(), path)
    return {"top_features": imp.ranking[:10], "n": int(len(frame))}, [path]


def cmd_match_addresses(cfg: RunConfig, args):
    buildings = io.read_buildings(cfg.data.buildings)
    links = link_addresses(io.read_ami_addresses(cfg.data.ami_addresses), buildings, cfg.threshold)
    out = cfg.out
    paths = [out / "links.csv"]
    io.write_csv(links_frame(links), paths[0])
    if cfg.data.consumption is not None:
        cons = io.read_consumption(cfg.data.consumption, column=target_column(cfg))
        agg = aggregate_units(cons, links)
        agg = agg.assign(timestamp=io.format_hours(agg["timestamp"].to_numpy()))
        paths.append(out / "building_hours.csv")
        io.write_csv(agg, paths[-1])
    stages = pd.Series([r.stage for r in links]).value_counts().sort_index()
    return {"n": len(links), "stages": {k: int(v) for k, v in stages.items()}}, paths


def cmd_match_baseline(cfg: RunConfig, args):
    buildings = io.read_buildings(cfg.data.buildings)
    regions = io.read_puma(cfg.data.puma)
    archetypes = io.read_archetypes(cfg.data.archetypes, cfg.data.profiles)
    matches = match_table(buildings, regions, archetypes)
    path = cfg.out / "baseline_matches.csv"
    io.write_csv(matches_frame(matches), path)
    reasons = pd.Series([m.reason or "matched" for m in matches]).value_counts().sort_index()
    return {"n": len(matches), "outcomes": {k: int(v) for k, v in reasons.items()}}, [path]


def cmd_fit_eta(cfg: RunConfig, args):
    res = fit_eta(*io.read_eta_input(cfg.data.eta_input))
    doc = res.to_dict()
    doc["eta_in_use"] = cfg.eta if cfg.eta is not None else res.eta
    path = cfg.out / "eta.json"
    io.write_json(doc, path)
    paths = [path]
    if args.series is not None:
        s = io.read_csv(args.series)
        s["heating_demand"] = apply_eta(s["value"].to_numpy(float), doc["eta_in_use"])
        paths.append(cfg.out / "heating_demand.csv")
        io.write_csv(s, paths[-1])
    return doc, paths


COMMANDS = {
    "train": cmd_train, "predict": cmd_predict, "evaluate": cmd_evaluate, "calibrate": cmd_calibrate,
    "importance": cmd_importance, "match-addresses": cmd_match_addresses,
    "match-baseline": cmd_match_baseline, "fit-eta": cmd_fit_eta, "synth": cmd_synth,
}


def _float_list(s):
    return [float(v) for v in s.split(",") if v.strip()]


def _int_list(s):
    return [int(v) for v in s.split(",") if v.strip()]


def build_parser():
    parser = argparse.ArgumentParser(prog="zigcast", description="Zero-inflated gamma MLP demand forecasting")
    parser.add_argument("--version", action="version", version=f"zigcast {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--target", choices=["heating", "electricity"])
        p.add_argument("--eta", type=float)
        p.add_argument("--threshold", type=int)
        p.add_argument("--out", help="run directory")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("predict", "evaluate", "calibrate", "importance"):
            p.add_argument("--model", help="model document (default: <out>/model.json)")
            p.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
        if name == "predict":
            p.add_argument("--hours", nargs="*", help="UTC hours to forecast when no consumption file is set")
        if name == "fit-eta":
            p.add_argument("--series", help="CSV with a 'value' gas column to convert")
        if name == "train":
            g = p.add_argument_group("training overrides")
            g.add_argument("--batch-size", type=int)
            g.add_argument("--initial-learning-rate", type=float)
            g.add_argument("--adam-beta1", type=float)
            g.add_argument("--adam-beta2", type=float)
            g.add_argument("--adam-epsilon", type=float)
            g.add_argument("--max-epochs", type=int)
            g.add_argument("--early-stop-patience", type=int)
            g.add_argument("--lr-reduce-factor", type=float)
            g.add_argument("--lr-reduce-patience", type=int)
            g.add_argument("--dropout-grid", type=_float_list, help="comma-separated, within [0, 0.08]")
            g.add_argument("--hidden-widths", type=_int_list, help="comma-separated hidden layer widths")
    return parser


_OVERRIDES = ("seed", "target", "eta", "threshold", "out", "batch_size", "initial_learning_rate",
              "adam_beta1", "adam_beta2", "adam_epsilon", "max_epochs", "early_stop_patience",
              "lr_reduce_factor", "lr_reduce_patience", "dropout_grid", "hidden_widths")


def _error_doc(exc):
    doc = {"error": type(exc).__name__, "message": str(exc)}
    if getattr(exc, "path", None) is not None:
        doc["field"] = exc.path
    return doc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = None
    try:
        cfg = load_config(args.config, {k: getattr(args, k, None) for k in _OVERRIDES})
        check_paths(cfg, args.subcommand)
        with run_lock(cfg.out):
            result, outputs = COMMANDS[args.subcommand](cfg, args)
            model_path = _model_path(cfg, args) if args.subcommand in (
                "predict", "evaluate", "calibrate", "importance") else None
            write_manifest(cfg, args.subcommand, [Path(p) for p in outputs if Path(p).is_relative_to(cfg.out)],
                           model_path)
            # a stale failure report would contradict this success
            (cfg.out / f"error.{args.subcommand}.json").unlink(missing_ok=True)
    except (ZigcastError, ValueError, KeyError, OSError) as exc:
        doc = _error_doc(exc)
        print(json.dumps(doc), file=sys.stderr)
        if cfg is not None and cfg.out.exists():
            io.write_json(doc, cfg.out / f"error.{args.subcommand}.json")
        if isinstance(exc, ConfigError):
            return 2
        if isinstance(exc, (CompatibilityError, LoadError)):
            return 3
        return 1
    print(json.dumps(result, indent=1, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
