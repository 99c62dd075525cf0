"""Command-line entry point: ``sweepsense {gen,train,eval,sizes,sweep,bench}``.

Settings resolve in this order, later wins: built-in defaults, the
``DEEPSWEEP_SEED`` environment variable (seed only), a JSON ``--config`` file,
explicit flags. The resolved settings are validated in full before anything
is written, then echoed next to the outputs as ``*.run.json``.

Exit codes: 0 success, 1 invalid settings or data, 2 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import BuildError, ConfigError, ContractError, DataError, FormatError, ValidationError

logger = logging.getLogger("sweepsense")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2
SEED_ENV = "DEEPSWEEP_SEED"

DEFAULTS = {
    "gen": {
        "preset": "chunk8", "n_records": 20000, "n_time": 1024, "n_fft": 256, "g": 8,
        "snr_min": 10.0, "snr_max": 30.0, "power_min": 10.0, "power_max": 20.0,
        "waveform": "TONE", "seed": 0, "out": "dataset.dswp",
    },
    "train": {
        "dataset": None, "chunk_bins": None, "lr": 0.01, "batch_size": 64, "epochs": 100,
        "patience": 5, "seed": 0, "out_weights": "weights.json", "history": None,
        "filters": 16, "kernel": 7, "pool": 4, "dense_units": 128, "dropout": 0.5,
    },
    "eval": {"weights": None, "dataset": None, "split": "test", "out_dir": "."},
    "sizes": {
        "g_values": [1, 2, 4, 8], "seeds": [0, 1, 2, 3, 4], "n_records": 10000, "preset": "allsub",
        "power_min": 0.0, "power_max": 10.0, "epochs": 40, "patience": 5, "seed": 0, "out": "sizes.csv",
    },
    "sweep": {
        "weights": None, "duration_s": 1.0, "g": None, "n_time": 1024, "n_fft": 256,
        "sample_rate_hz": 1.0e7, "source": "synthetic", "iq_file": None, "max_rate": False,
        "slowdown": 1.0, "workers": 1, "sense_capacity": 8, "report_format": "csv",
        "seed": 0, "out_dir": ".",
    },
    "bench": {
        "weights": None, "baseline": None, "reps": 1000, "sweep_reps": 300, "g_values": [1, 2, 4, 8],
        "n_time": 1024, "n_fft": 256, "sample_rate_hz": 1.0e7, "seed": 0, "out_dir": ".",
    },
}


class UsageError(ValidationError):
    """Bad flags or config keys."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage, which here means an I/O
    # failure, so usage problems are routed through the validation path.
    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    p = _Parser(prog="sweepsense", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="JSON file with settings; flags override it")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="synthesize a labelled chunk dataset", argument_default=S)
    g.add_argument("--preset", choices=["fullband8", "chunk8", "allsub"])
    g.add_argument("--n-records", type=int)
    g.add_argument("--n-time", type=int)
    g.add_argument("--n-fft", type=int)
    g.add_argument("--g", type=int)
    g.add_argument("--snr-min", type=float)
    g.add_argument("--snr-max", type=float)
    g.add_argument("--power-min", type=float, help="interference power, dB over one subcarrier")
    g.add_argument("--power-max", type=float)
    g.add_argument("--waveform", choices=["TONE", "NARROWBAND_NOISE"])
    g.add_argument("--seed", type=int)
    g.add_argument("--out")

    t = sub.add_parser("train", help="train the reference CNN", argument_default=S)
    t.add_argument("--dataset")
    t.add_argument("--chunk-bins", type=int, help="assert the dataset's chunk length")
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--patience", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--out-weights")
    t.add_argument("--history", help="history CSV (default: history.csv next to the weights)")
    t.add_argument("--filters", type=int)
    t.add_argument("--kernel", type=int)
    t.add_argument("--pool", type=int)
    t.add_argument("--dense-units", type=int)
    t.add_argument("--dropout", type=float)

    e = sub.add_parser("eval", help="test-split metrics and confusion matrix", argument_default=S)
    e.add_argument("--weights")
    e.add_argument("--dataset")
    e.add_argument("--split", choices=["train", "val", "test"])
    e.add_argument("--out-dir")

    z = sub.add_parser("sizes", help="accuracy versus chunk bandwidth", argument_default=S)
    z.add_argument("--g-values", type=_int_list)
    z.add_argument("--seeds", type=_int_list)
    z.add_argument("--n-records", type=int)
    z.add_argument("--preset", choices=["fullband8", "chunk8", "allsub"])
    z.add_argument("--power-min", type=float)
    z.add_argument("--power-max", type=float)
    z.add_argument("--epochs", type=int)
    z.add_argument("--patience", type=int)
    z.add_argument("--out")

    s = sub.add_parser("sweep", help="stream captures through the sensing pipeline", argument_default=S)
    s.add_argument("--weights")
    s.add_argument("--duration-s", type=float)
    s.add_argument("--g", type=int, help="chunk count (default: implied by the weights)")
    s.add_argument("--source", choices=["synthetic", "file"])
    s.add_argument("--iq-file", help="interleaved float32 I/Q samples for --source file")
    s.add_argument("--max-rate", action="store_true", help="do not pace the source at the sample rate")
    s.add_argument("--slowdown", type=float, help="stretch each sensing job by this factor")
    s.add_argument("--workers", type=int)
    s.add_argument("--sense-capacity", type=int)
    s.add_argument("--report-format", choices=["csv", "jsonl"])
    s.add_argument("--seed", type=int)
    s.add_argument("--out-dir")

    b = sub.add_parser("bench", help="latency table and real-time budget", argument_default=S)
    b.add_argument("--weights", help="reference weights (default: fresh initialisation)")
    b.add_argument("--baseline", help="baseline weights (default: fresh initialisation)")
    b.add_argument("--reps", type=int)
    b.add_argument("--sweep-reps", type=int)
    b.add_argument("--g-values", type=_int_list)
    b.add_argument("--seed", type=int)
    b.add_argument("--out-dir")
    return p


def resolve(command: str, flags: dict, config_path: str | None = None, environ=None) -> dict:
    """Merge defaults, environment, config file and flags for one subcommand."""
    environ = os.environ if environ is None else environ
    cfg = json.loads(json.dumps(DEFAULTS[command]))
    if "seed" in cfg and environ.get(SEED_ENV):
        try:
            cfg["seed"] = int(environ[SEED_ENV])
        except ValueError as exc:
            raise UsageError(f"{SEED_ENV} must be an integer, got {environ[SEED_ENV]!r}") from exc
    if config_path:
        with open(config_path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"{config_path}: not valid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise UsageError(f"{config_path}: top level must be an object")
        # top-level keys are shared by all subcommands; a key named after a
        # subcommand holds settings for that subcommand only
        known = {k for d in DEFAULTS.values() for k in d}
        shared = {k: v for k, v in doc.items() if k not in DEFAULTS}
        section = doc.get(command, {})
        unknown = sorted(set(shared) - known) + sorted(set(section) - set(cfg))
        if unknown:
            raise UsageError(f"{config_path}: unknown settings {unknown}")
        cfg.update({k: v for k, v in shared.items() if k in cfg})
        cfg.update(section)
    cfg.update(flags)
    return cfg


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if not cfg.get(k)]
    if missing:
        raise UsageError("missing required settings: " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _require_file(path: str, what: str) -> None:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{what} not found: {path}")


def _write_run(path: str, command: str, cfg: dict) -> None:
    with open(path, "w") as fh:
        json.dump({"command": command, "settings": cfg}, fh, indent=2, sort_keys=True)


def _makedirs_for(path: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)


def cmd_gen(cfg: dict) -> int:
    from .datasets import BuildConfig, build_dataset, write_dataset
    from .sweep import SweepConfig

    bc = BuildConfig(
        preset=cfg["preset"], n_records=cfg["n_records"], n_time=cfg["n_time"], n_fft=cfg["n_fft"],
        g=cfg["g"], snr_db=(cfg["snr_min"], cfg["snr_max"]),
        power_db_rel=(cfg["power_min"], cfg["power_max"]), waveform=cfg["waveform"], seed=cfg["seed"],
    )
    SweepConfig(bc.n_time, bc.n_fft, bc.g)  # geometry errors surface before any work
    ds = build_dataset(bc)
    _makedirs_for(cfg["out"])
    write_dataset(cfg["out"], ds)
    _write_run(cfg["out"] + ".run.json", "gen", cfg)
    counts = dict(zip(ds.class_names, ds.class_counts().tolist()))
    print(json.dumps({"records": len(ds), "chunk_len": ds.chunk_len, "class_counts": counts}))
    return EXIT_OK


def cmd_train(cfg: dict) -> int:
    from .datasets import read_dataset
    from .nn import save_weights
    from .trainer import ModelConfig, TrainConfig, train

    _require(cfg, "dataset")
    _require_file(cfg["dataset"], "dataset")
    tc = TrainConfig(cfg["lr"], cfg["batch_size"], cfg["epochs"], cfg["patience"], cfg["seed"])
    mc = ModelConfig(cfg["filters"], cfg["kernel"], cfg["pool"], cfg["dense_units"], cfg["dropout"])
    ds = read_dataset(cfg["dataset"])
    if cfg["chunk_bins"] is not None and cfg["chunk_bins"] != ds.chunk_len:
        raise UsageError(f"--chunk-bins {cfg['chunk_bins']} but the dataset holds {ds.chunk_len}-bin chunks")
    if ds.chunk_len % mc.pool:
        raise UsageError(f"pool {mc.pool} does not divide chunk length {ds.chunk_len}")
    history = cfg["history"] or os.path.join(os.path.dirname(os.path.abspath(cfg["out_weights"])), "history.csv")
    model, hist = train(ds, mc, tc)
    _makedirs_for(cfg["out_weights"])
    _makedirs_for(history)
    save_weights(model, cfg["out_weights"])
    hist.to_csv(history)
    _write_run(cfg["out_weights"] + ".run.json", "train", dict(cfg, history=history))
    print(json.dumps({
        "stopped_epoch": hist.stopped_epoch, "best_epoch": hist.best_epoch,
        "best_val_acc": hist.val_acc[hist.best_epoch - 1] if hist.best_epoch else None,
        "epoch_reaching_0.95": hist.first_epoch_reaching(0.95),
    }))
    return EXIT_OK


def cmd_eval(cfg: dict) -> int:
    from .datasets import read_dataset
    from .nn import load_weights
    from .trainer import evaluate

    _require(cfg, "weights", "dataset")
    _require_file(cfg["weights"], "weights")
    _require_file(cfg["dataset"], "dataset")
    model = load_weights(cfg["weights"])
    ds = read_dataset(cfg["dataset"])
    if (model.input_len, model.num_classes) != (ds.chunk_len, ds.num_classes):
        raise UsageError(
            f"weights expect {model.input_len} bins / {model.num_classes} classes, dataset has "
            f"{ds.chunk_len} / {ds.num_classes}"
        )
    report = evaluate(model, ds.split(cfg["split"]), ds.class_names)
    os.makedirs(cfg["out_dir"], exist_ok=True)
    report.to_csv(os.path.join(cfg["out_dir"], "confusion.csv"))
    with open(os.path.join(cfg["out_dir"], "metrics.json"), "w") as fh:
        json.dump(report.summary(), fh, indent=2)
    _write_run(os.path.join(cfg["out_dir"], "eval.run.json"), "eval", cfg)
    print(json.dumps({"accuracy": report.accuracy, "total": report.total}))
    return EXIT_OK


def cmd_sizes(cfg: dict) -> int:
    from .sweep import SweepConfig
    from .trainer import TrainConfig, sweep_input_sizes, sweep_table_csv

    for g in cfg["g_values"]:
        SweepConfig(g=g)
    if not cfg["seeds"]:
        raise UsageError("need at least one seed")
    tc = TrainConfig(max_epochs=cfg["epochs"], early_stop_patience=cfg["patience"])
    rows = sweep_input_sizes(
        cfg["g_values"], cfg["seeds"], cfg["n_records"], cfg["preset"], tc,
        power_db_rel=(cfg["power_min"], cfg["power_max"]),
    )
    _makedirs_for(cfg["out"])
    sweep_table_csv(rows, cfg["out"])
    _write_run(cfg["out"] + ".run.json", "sizes", cfg)
    for r in rows:
        print(f"G={r.g} {r.bandwidth_mhz:g} MHz ({r.chunk_bins} bins): mean accuracy {r.mean_accuracy:.4f}")
    return EXIT_OK


def cmd_sweep(cfg: dict) -> int:
    from .nn import load_weights
    from .stream import FileSource, run_stream
    from .sweep import ReportWriter, SweepConfig

    _require(cfg, "weights")
    _require_file(cfg["weights"], "weights")
    if cfg["source"] == "file":
        _require(cfg, "iq_file")
        _require_file(cfg["iq_file"], "IQ file")
    elif cfg["iq_file"]:
        raise UsageError("--iq-file only applies with --source file")
    if cfg["duration_s"] <= 0:
        raise UsageError("--duration-s must be positive")
    if cfg["slowdown"] < 1 or cfg["workers"] < 1 or cfg["sense_capacity"] < 1:
        raise UsageError("--slowdown must be >= 1, --workers and --sense-capacity >= 1")
    model = load_weights(cfg["weights"])
    g = cfg["g"] or cfg["n_fft"] // model.input_len
    sc = SweepConfig(cfg["n_time"], cfg["n_fft"], g, cfg["sample_rate_hz"])
    if (sc.chunk_len, sc.num_classes) != (model.input_len, model.num_classes):
        raise UsageError(
            f"--g {g} gives {sc.chunk_len}-bin chunks with {sc.num_classes} classes; "
            f"weights take {model.input_len} bins and {model.num_classes} classes"
        )
    source = FileSource(cfg["iq_file"], sc.n_time) if cfg["source"] == "file" else None
    os.makedirs(cfg["out_dir"], exist_ok=True)
    ext = "csv" if cfg["report_format"] == "csv" else "jsonl"
    with open(os.path.join(cfg["out_dir"], f"reports.{ext}"), "w", newline="") as fh:
        writer = ReportWriter(fh, cfg["report_format"])
        result = run_stream(
            cfg["duration_s"], sc, model, source=source, paced=not cfg["max_rate"],
            sense_capacity=cfg["sense_capacity"], sense_slowdown=cfg["slowdown"],
            n_sense_workers=cfg["workers"], on_report=writer.write, seed=cfg["seed"],
        )
    result.stats.to_json(os.path.join(cfg["out_dir"], "stats.json"))
    _write_run(os.path.join(cfg["out_dir"], "sweep.run.json"), "sweep", dict(cfg, g=g))
    st = result.stats
    print(json.dumps({"produced": st.produced, "decoded": st.decoded, "sensed": st.sensed,
                      "sense_dropped": st.sense_dropped, "p50_latency_us": st.percentile(50)}))
    return EXIT_OK


def cmd_bench(cfg: dict) -> int:
    from .bench import realtime_report, write_bench_csv
    from .nn import load_weights
    from .sweep import SweepConfig

    if cfg["reps"] < 100 or cfg["sweep_reps"] < 1:
        raise UsageError("--reps must be >= 100 and --sweep-reps >= 1")
    sc = SweepConfig(cfg["n_time"], cfg["n_fft"], 8, cfg["sample_rate_hz"])
    for g in cfg["g_values"]:
        sc.with_g(g)
    for key in ("weights", "baseline"):
        if cfg[key]:
            _require_file(cfg[key], key)
    model = load_weights(cfg["weights"]) if cfg["weights"] else None
    baseline = load_weights(cfg["baseline"]) if cfg["baseline"] else None
    report = realtime_report(sc, model, baseline, cfg["g_values"], cfg["reps"], cfg["sweep_reps"], cfg["seed"])
    os.makedirs(cfg["out_dir"], exist_ok=True)
    write_bench_csv(report.reference + report.baseline, os.path.join(cfg["out_dir"], "bench.csv"))
    report.to_json(os.path.join(cfg["out_dir"], "realtime.json"))
    _write_run(os.path.join(cfg["out_dir"], "bench.run.json"), "bench", cfg)
    print(report.format_table())
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "sizes": cmd_sizes,
            "sweep": cmd_sweep, "bench": cmd_bench}

_INVALID = (UsageError, ConfigError, ValidationError, ContractError, DataError, BuildError, ValueError)
_IO = (OSError, FormatError)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"sweepsense: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = resolve(args.command, flags, args.config)
        return COMMANDS[args.command](cfg)
    except _IO as exc:
        print(f"sweepsense: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except _INVALID as exc:
        print(f"sweepsense: invalid settings: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
