"""Command-line interface wiring the pipeline, models and training together.

Subcommands: prepare, train, evaluate, compare, predict.  Settings resolve
as CLI flags over config-file values over built-in defaults; the output
directory falls back to $METROFLOW_OUT.  Exit codes: 0 success, 1 runtime
failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .data import (
    denormalize,
    format_time,
    load_cache,
    parse_time,
    prepare_dataset,
    save_cache,
    window_before,
)
from .errors import (
    CompatibilityError,
    ConfigError,
    MetroflowError,
    SchemaError,
    UsageError,
)
from .models import KINDS, ForecastModel, ModelSpec, build_model
from .plot import line_chart
from .training import TrainConfig, compare, metrics, train

DEFAULT_OUT = "metroflow_out"
DATASET_FILE = "dataset.bin"

DEFAULTS = {
    "model": "mstim",
    "window": 24,
    "horizon": 1,
    "hidden_size": 64,
    "conv_filters": 16,
    "d_k": 64,
    "epochs": 10,
    "learning_rate": 0.001,
    "batch_size": 32,
    "seed": 0,
    "optimizer": "adam",
    "plot": False,
    "split": "test",
    "raw": False,
}

SETTING_TYPES = {
    "out": str,
    "csv": str,
    "data": str,
    "checkpoint": str,
    "model": str,
    "window": int,
    "horizon": int,
    "hidden_size": int,
    "conv_filters": int,
    "d_k": int,
    "epochs": int,
    "learning_rate": float,
    "batch_size": int,
    "seed": int,
    "optimizer": str,
    "plot": bool,
    "split": str,
    "raw": bool,
    "from_ts": str,
    "to_ts": str,
}

_CHOICES = {
    "model": KINDS,
    "optimizer": ("adam", "sgd"),
    "split": ("train", "val", "test"),
}


def _check_type(key: str, value) -> None:
    want = SETTING_TYPES[key]
    if want is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif want is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, want)
    if not ok:
        raise ConfigError(f"setting {key!r} must be {want.__name__}, got {value!r}")
    if key in _CHOICES and value not in _CHOICES[key]:
        raise ConfigError(
            f"setting {key!r} must be one of {', '.join(_CHOICES[key])}, got {value!r}"
        )


def _load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as handle:
            cfg = json.load(handle)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file {path} is not valid JSON: {err}")
    if not isinstance(cfg, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    for key, value in cfg.items():
        if key not in SETTING_TYPES:
            raise ConfigError(f"config file key {key!r} is not recognized")
        _check_type(key, value)
    return cfg


class Settings:
    """Merged view of CLI flags, config file and defaults, in that order."""

    def __init__(self, args: argparse.Namespace):
        self._flags = vars(args)
        config_path = self._flags.get("config")
        self._file = _load_config_file(config_path) if config_path else {}

    def get(self, key: str, fallback=None):
        value = self._flags.get(key)
        if value is not None:
            return value
        if key in self._file:
            return self._file[key]
        if key in DEFAULTS:
            return DEFAULTS[key]
        return fallback

    def out_dir(self) -> Path:
        out = self.get("out") or os.environ.get("METROFLOW_OUT") or DEFAULT_OUT
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def dataset_path(self) -> Path:
        data = self.get("data")
        return Path(data) if data else self.out_dir() / DATASET_FILE


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def load_bundle(settings: Settings):
    path = settings.dataset_path()
    if not path.exists():
        raise UsageError(f"prepared dataset not found at {path}; run prepare first")
    return load_cache(path)


def build_train_config(settings: Settings) -> TrainConfig:
    config = TrainConfig(
        epochs=settings.get("epochs"),
        learning_rate=settings.get("learning_rate"),
        batch_size=settings.get("batch_size"),
        optimizer=settings.get("optimizer"),
        seed=settings.get("seed"),
    )
    config.validate()
    return config


def model_spec_for(settings: Settings, bundle, kind: str) -> ModelSpec:
    return ModelSpec(
        kind=kind,
        input_features=bundle.input_features,
        window=bundle.window,
        horizon=bundle.horizon,
        hidden_size=settings.get("hidden_size"),
        conv_filters=settings.get("conv_filters"),
        d_k=settings.get("d_k"),
        seed=settings.get("seed"),
    )


def check_compat(model: ForecastModel, meta: dict, bundle) -> None:
    stored = meta.get("data_hash")
    if stored is not None and stored != bundle.data_hash:
        raise CompatibilityError(
            "checkpoint was trained against a different prepared dataset "
            f"(stored hash {stored[:12]}…, dataset hash {bundle.data_hash[:12]}…)"
        )
    spec = model.spec
    if (spec.input_features != bundle.input_features
            or spec.window != bundle.window or spec.horizon != bundle.horizon):
        raise CompatibilityError(
            f"checkpoint expects {spec.window}x{spec.input_features} windows with "
            f"horizon {spec.horizon}, dataset provides {bundle.window}x"
            f"{bundle.input_features} with horizon {bundle.horizon}"
        )


def test_slice_plot(model: ForecastModel, bundle, kind: str, steps: int = 168) -> str:
    ds = bundle.test
    if len(ds.windows) == 0:
        raise UsageError("test split has no windows to plot")
    k = min(steps, len(ds.windows))
    preds = model.predict(ds.windows[:k])[:, 0]
    labels = [format_time(t)[5:16] for t in ds.target_times[:k, 0]]
    return line_chart(
        [
            ("actual", denormalize(ds.targets[:k, 0], bundle.stats)),
            ("predicted", denormalize(preds, bundle.stats)),
        ],
        x_labels=labels,
        title=f"{kind}: predicted vs actual, {k}-step test slice",
        y_label="vehicles/hour",
    )


def cmd_prepare(settings: Settings) -> int:
    csv_path = settings.get("csv")
    if not csv_path:
        raise UsageError("prepare needs --csv pointing at the traffic-volume CSV")
    out = settings.out_dir()
    bundle = prepare_dataset(csv_path, n=settings.get("window"),
                             horizon=settings.get("horizon"))
    cache = out / DATASET_FILE
    save_cache(bundle, cache)
    write_json(out / "prepare_summary.json", bundle.summary)
    counts = bundle.summary["window_counts"]
    print(f"parsed {bundle.summary['parsed']} records "
          f"({bundle.summary['rejected']} rejected, "
          f"{bundle.summary['cleaning']['kept']} kept after cleaning)")
    print(f"windows: train={counts['train']} val={counts['val']} test={counts['test']}")
    print(f"cache written to {cache}")
    return 0


def cmd_train(settings: Settings) -> int:
    kind = settings.get("model")
    _check_type("model", kind)
    config = build_train_config(settings)
    bundle = load_bundle(settings)
    model = build_model(model_spec_for(settings, bundle, kind))
    report = train(model, bundle, config)
    out = settings.out_dir()
    model.save(out / f"model_{kind}.bin", data_hash=bundle.data_hash)
    write_json(out / f"train_report_{kind}.json", report.to_dict())
    write_json(out / f"train_timing_{kind}.json", {kind: report.elapsed_seconds})
    if settings.get("plot"):
        (out / f"plot_{kind}.svg").write_text(test_slice_plot(model, bundle, kind),
                                              encoding="utf-8")
    t = report.test
    print(f"{kind}: test mae={t.mae:.4f} mse={t.mse:.4f} rmse={t.rmse:.4f} "
          f"after {config.epochs} epochs")
    print(f"checkpoint written to {out / f'model_{kind}.bin'}")
    return 0


def cmd_evaluate(settings: Settings) -> int:
    kind = settings.get("model")
    _check_type("model", kind)
    split = settings.get("split")
    _check_type("split", split)
    out = settings.out_dir()
    checkpoint = Path(settings.get("checkpoint") or out / f"model_{kind}.bin")
    if not checkpoint.exists():
        raise UsageError(f"checkpoint not found at {checkpoint}")
    bundle = load_bundle(settings)
    model, meta = ForecastModel.load(checkpoint)
    check_compat(model, meta, bundle)
    ds = getattr(bundle, split)
    if len(ds.windows) == 0:
        raise UsageError(f"{split} split has no windows to evaluate")
    preds = model.predict(ds.windows)
    standardized = metrics(preds, ds.targets)
    payload = {
        "model_kind": model.spec.kind,
        "split": split,
        "standardized": standardized.to_dict(),
        "raw": None,
    }
    if settings.get("raw"):
        payload["raw"] = metrics(denormalize(preds, bundle.stats),
                                 denormalize(ds.targets, bundle.stats)).to_dict()
    write_json(out / f"evaluation_{model.spec.kind}.json", payload)
    line = (f"{model.spec.kind} on {split}: mae={standardized.mae:.4f} "
            f"mse={standardized.mse:.4f} rmse={standardized.rmse:.4f}")
    if payload["raw"]:
        line += f" | raw mae={payload['raw']['mae']:.1f} vehicles/hour"
    print(line)
    return 0


def cmd_compare(settings: Settings) -> int:
    config = build_train_config(settings)
    bundle = load_bundle(settings)
    specs = [model_spec_for(settings, bundle, kind) for kind in KINDS]
    result = compare(specs, bundle, config)
    out = settings.out_dir()
    (out / "comparison.csv").write_text(result.to_csv(), encoding="utf-8")
    text = result.to_text()
    (out / "comparison.txt").write_text(text, encoding="utf-8")
    write_json(out / "comparison.json", result.to_dict())
    write_json(out / "timing.json",
               {k: r.elapsed_seconds for k, r in result.reports.items()})
    for kind, report in result.reports.items():
        write_json(out / f"train_report_{kind}.json", report.to_dict())
    print(text, end="")
    print(f"artifacts written to {out}")
    return 0


def cmd_predict(settings: Settings) -> int:
    kind = settings.get("model")
    _check_type("model", kind)
    out = settings.out_dir()
    checkpoint = Path(settings.get("checkpoint") or out / f"model_{kind}.bin")
    if not checkpoint.exists():
        raise UsageError(f"checkpoint not found at {checkpoint}")
    start_text = settings.get("from_ts")
    end_text = settings.get("to_ts")
    if not start_text or not end_text:
        raise UsageError("predict needs --from and --to timestamps")
    start, end = parse_time(start_text), parse_time(end_text)
    if end < start:
        raise UsageError(f"--to {end_text} is earlier than --from {start_text}")
    bundle = load_bundle(settings)
    model, meta = ForecastModel.load(checkpoint)
    check_compat(model, meta, bundle)
    rows = np.flatnonzero((bundle.times >= start) & (bundle.times <= end))
    if rows.size == 0:
        raise UsageError(f"no records between {start_text} and {end_text}")
    history = []
    for row in rows:
        try:
            history.append(window_before(bundle, int(row)))
        except UsageError as err:
            raise UsageError(f"cannot predict {format_time(bundle.times[row])}: {err}")
    preds = model.predict(np.stack(history))[:, 0]
    predicted = denormalize(preds, bundle.stats)
    actual = denormalize(bundle.series[rows, -1], bundle.stats)
    lines = ["timestamp,predicted_volume,actual_volume"]
    for t, p, a in zip(bundle.times[rows], predicted, actual):
        lines.append(f"{format_time(t)},{p:.2f},{a:.1f}")
    path = out / "predictions.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {rows.size} predictions to {path}")
    return 0


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "predict": cmd_predict,
}


def _common_flags(sub: argparse.ArgumentParser, with_data: bool = True) -> None:
    sub.add_argument("--out", help="output directory (default $METROFLOW_OUT or ./metroflow_out)")
    sub.add_argument("--config", help="JSON config file; flags take precedence")
    if with_data:
        sub.add_argument("--data", help="prepared dataset cache (default <out>/dataset.bin)")


def _training_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--epochs", type=int, help="training epochs")
    sub.add_argument("--lr", dest="learning_rate", type=float, help="learning rate")
    sub.add_argument("--batch", dest="batch_size", type=int, help="mini-batch size")
    sub.add_argument("--seed", type=int, help="seed for weights and shuffling")
    sub.add_argument("--optimizer", choices=_CHOICES["optimizer"])
    sub.add_argument("--hidden-size", dest="hidden_size", type=int)
    sub.add_argument("--conv-filters", dest="conv_filters", type=int)
    sub.add_argument("--d-k", dest="d_k", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metroflow",
        description="Hourly traffic-volume forecasting with multi-scale "
                    "convolution, LSTM and attention models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    prepare = sub.add_parser("prepare", help="ingest a CSV into a windowed dataset cache")
    prepare.add_argument("--csv", help="path to the 9-column traffic CSV")
    prepare.add_argument("--window", type=int, help="input window length in records")
    prepare.add_argument("--horizon", type=int, help="forecast steps per window")
    _common_flags(prepare, with_data=False)

    tr = sub.add_parser("train", help="train one model on a prepared dataset")
    tr.add_argument("--model", choices=KINDS)
    tr.add_argument("--plot", action="store_true", default=None,
                    help="write an SVG of predicted vs actual on a test slice")
    _training_flags(tr)
    _common_flags(tr)

    ev = sub.add_parser("evaluate", help="score a checkpoint on one split")
    ev.add_argument("--model", choices=KINDS, help="kind, used for the default checkpoint name")
    ev.add_argument("--checkpoint", help="checkpoint path (default <out>/model_<kind>.bin)")
    ev.add_argument("--split", choices=_CHOICES["split"])
    ev.add_argument("--raw", action="store_true", default=None,
                    help="also report metrics in vehicles/hour")
    _common_flags(ev)

    cp = sub.add_parser("compare", help="train all four model kinds and tabulate metrics")
    _training_flags(cp)
    _common_flags(cp)

    pr = sub.add_parser("predict", help="predict volumes for a timestamp range")
    pr.add_argument("--model", choices=KINDS, help="kind, used for the default checkpoint name")
    pr.add_argument("--checkpoint", help="checkpoint path (default <out>/model_<kind>.bin)")
    pr.add_argument("--from", dest="from_ts", help="range start, YYYY-MM-DD HH:MM:SS")
    pr.add_argument("--to", dest="to_ts", help="range end, YYYY-MM-DD HH:MM:SS")
    _common_flags(pr)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = Settings(args)
        return COMMANDS[args.command](settings)
    except (ConfigError, UsageError, SchemaError, CompatibilityError,
            FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except MetroflowError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
