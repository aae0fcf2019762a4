"""Command-line interface: synth, train, eval, forecast, compare, ablate, plot.

Every command accepts --seed and --config (a key = value text file, see
docs/FORMATS.md). Exit codes: 0 success, 2 usage error, 3 validation error,
4 training divergence.
"""

import argparse
import json
import os
import sys
from dataclasses import fields, replace

import numpy as np

from .core import Pose
from .data import (
    FAMILY_DEFAULTS,
    SYNTHETIC_FAMILIES,
    generate_synthetic,
    load_dataset,
    split,
    write_dataset,
)
from .errors import CheckpointError, DivergenceError, PosecastError
from .losses import LossWeights
from .metrics import default_pck_delta, evaluate
from .model import ModelConfig
from .training import (
    BenchmarkConfig,
    TrainConfig,
    TRAINABLE_METHODS,
    default_provider_config,
    load_run_checkpoint,
    run_ablation,
    save_report,
    train,
    write_curve_csv,
)

USAGE_EXIT = 2
VALIDATION_EXIT = 3
DIVERGENCE_EXIT = 4


def read_config_file(path):
    """Parse the key = value config format; values are JSON literals or strings."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise PosecastError(f"bad config line {line_no} in {path}: {stripped!r}")
            key, _, raw = stripped.partition("=")
            raw = raw.strip()
            try:
                values[key.strip()] = json.loads(raw)
            except json.JSONDecodeError:
                values[key.strip()] = raw
    return values


def _subset_for(dataclass_cls, config):
    names = {f.name for f in fields(dataclass_cls)}
    return {k: v for k, v in config.items() if k in names}


def _loss_weights_from(config):
    kwargs = {k: config[k] for k in ("alpha", "beta", "theta") if k in config}
    return LossWeights(**kwargs) if kwargs else LossWeights()


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--config", default=None, help="key = value config file")


def _load_config(args):
    return read_config_file(args.config) if args.config else {}


def cmd_synth(args):
    config = _load_config(args)
    spec = FAMILY_DEFAULTS[args.family]
    overrides = {}
    for name in ("amplitude", "frequency", "phase", "noise_std", "label"):
        cli_val = getattr(args, name, None)
        if cli_val is not None:
            overrides[name] = cli_val
        elif name in config:
            overrides[name] = config[name]
    if overrides:
        spec = replace(spec, **overrides)
    samples = generate_synthetic(spec, args.n, args.horizon, args.topology, seed=args.seed)
    write_dataset(args.out, samples)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def cmd_train(args):
    config = _load_config(args)
    samples = load_dataset(args.data)
    if not samples:
        raise PosecastError(f"dataset {args.data} is empty")
    horizon = samples[0].future.horizon
    topology = samples[0].topology

    model_kwargs = _subset_for(ModelConfig, config)
    model_kwargs.setdefault("topology", topology)
    model_kwargs.setdefault("horizon", horizon)
    model_cfg = ModelConfig(**model_kwargs)

    train_kwargs = _subset_for(TrainConfig, config)
    train_kwargs["seed"] = args.seed
    train_kwargs["loss_weights"] = _loss_weights_from(config)
    if args.steps is not None:
        train_kwargs["max_steps"] = args.steps
    train_cfg = TrainConfig(**train_kwargs)

    train_fraction = config.get("train_fraction", 0.9)
    train_samples, test_samples = split(samples, train_fraction, seed=args.seed)
    provider_cfg = default_provider_config(samples, d_m=model_cfg.context_dim)

    os.makedirs(args.out, exist_ok=True)
    write_dataset(os.path.join(args.out, "train.jsonl"), train_samples)
    write_dataset(os.path.join(args.out, "test.jsonl"), test_samples)
    with open(os.path.join(args.out, "log.jsonl"), "a" if args.resume else "w",
              encoding="utf-8") as log_file:
        result = train(
            args.method, train_samples, test_samples, model_cfg, train_cfg,
            provider_cfg, out_dir=args.out, resume=args.resume, log_file=log_file,
        )
    summary = {
        "method": args.method,
        "steps": result.steps_run,
        "final": result.final_report.to_dict() if result.final_report else None,
        "best_step": result.best_step,
        "checkpoint": result.checkpoint_path,
        "best_checkpoint": result.best_checkpoint_path,
    }
    summary.update(result.extras)
    print(json.dumps(summary, sort_keys=True))
    return 0


def _load_prediction_file(path):
    preds = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            preds[record["id"]] = np.asarray(record["frames"], dtype=np.float64)
    return preds


def cmd_eval(args):
    config = _load_config(args)
    samples = load_dataset(args.data)
    if not samples:
        raise PosecastError(f"dataset {args.data} is empty")
    delta = args.delta if args.delta is not None else config.get(
        "delta", default_pck_delta(samples[0].topology)
    )
    gts = [s.future.frames for s in samples]
    diagnostics = {"n_samples": len(samples)}

    if args.predictions is not None:
        table = _load_prediction_file(args.predictions)
        missing = [s.id for s in samples if s.id not in table]
        if missing:
            raise PosecastError(f"predictions missing for ids: {missing[:5]}")
        preds = [table[s.id] for s in samples]
        diagnostics["source"] = "predictions"
    else:
        meta, runner, _ = load_run_checkpoint(args.checkpoint)
        ckpt_topo = meta["model_config"]["topology"]
        if ckpt_topo != samples[0].topology:
            raise CheckpointError(
                f"checkpoint topology {ckpt_topo!r} incompatible with "
                f"dataset topology {samples[0].topology!r}"
            )
        model = getattr(runner, "model", None)
        before = getattr(model, "forward_calls", 0)
        preds = []
        for s in samples:  # one sample per call: single-forward end to end
            preds.extend(runner.predict([s]))
        diagnostics["source"] = "checkpoint"
        diagnostics["method"] = meta["method"]
        if hasattr(model, "forward_calls"):
            diagnostics["forward_calls"] = model.forward_calls - before

    report = evaluate(preds, gts, delta)
    payload = report.to_dict()
    payload["diagnostics"] = diagnostics
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
    from .training import write_curve_csv

    write_curve_csv(os.path.splitext(args.out)[0] + ".curves.csv", {
        "displacement": report.per_timestamp_displacement,
        "pck": report.per_timestamp_pck,
    })
    print(json.dumps({k: payload[k] for k in ("rmse", "pck", "ade", "fde")},
                     sort_keys=True))
    return 0


def cmd_forecast(args):
    with open(args.p0, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    coords = raw["coords"] if isinstance(raw, dict) else raw
    p0 = Pose(np.asarray(coords, dtype=np.float64))
    meta, runner, _ = load_run_checkpoint(args.checkpoint)
    expected = 2 * meta["model_config"]["num_joints"]
    if p0.coords.size != expected:
        raise CheckpointError(
            f"p0 has {p0.coords.size} coordinates but checkpoint expects {expected}"
        )
    horizon = args.horizon or meta["model_config"]["horizon"]

    import torch

    with torch.no_grad():
        ctx = runner.provider.features(args.label)
        if meta["method"] == "ours":
            frames = runner.model.generate(
                torch.tensor(p0.coords, dtype=torch.float32), ctx, horizon
            )[0].double().numpy()
        elif meta["method"] == "tf-ntp":
            frames = runner.model.generate_autoregressive(
                torch.tensor(p0.coords, dtype=torch.float32), ctx, horizon
            )[0].double().numpy()
        elif meta["method"] == "lstm":
            frames = runner.model.generate(
                torch.tensor(p0.coords, dtype=torch.float32), ctx, horizon
            )[0].double().numpy()
        else:
            frames = runner.pipeline.generate(p0, ctx, horizon)
    payload = {
        "topology": meta["model_config"]["topology"],
        "label": args.label,
        "horizon": int(horizon),
        "p0": [float(v) for v in p0.coords],
        "frames": [[float(v) for v in row] for row in frames],
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
    print(f"wrote {horizon}-frame forecast to {args.out}")
    return 0


def cmd_compare(args):
    rows = []
    for path in args.reports:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        name = data.get("diagnostics", {}).get("method") or os.path.splitext(
            os.path.basename(path)
        )[0]
        rows.append((name, data))
    metrics_keys = ("ade", "fde", "pck", "rmse")
    md = ["| method | " + " | ".join(metrics_keys) + " |",
          "|" + "---|" * (len(metrics_keys) + 1)]
    csv = ["method," + ",".join(metrics_keys)]
    for name, data in rows:
        md.append("| " + name + " | "
                  + " | ".join(f"{data[k]:.6f}" for k in metrics_keys) + " |")
        csv.append(name + "," + ",".join(repr(float(data[k])) for k in metrics_keys))
    table = "\n".join(md) + "\n"
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(table)
    csv_path = os.path.splitext(args.out)[0] + ".csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(csv) + "\n")
    print(table, end="")
    return 0


def cmd_ablate(args):
    config = _load_config(args)
    bench_kwargs = _subset_for(BenchmarkConfig, config)
    if "seeds" in bench_kwargs:
        bench_kwargs["seeds"] = tuple(bench_kwargs["seeds"])
    elif args.seed != 0:
        bench_kwargs["seeds"] = (args.seed,)
    bench = BenchmarkConfig(**bench_kwargs)
    report = run_ablation(bench, cache={})
    os.makedirs(args.out, exist_ok=True)
    save_report(report, os.path.join(args.out, "ablation.json"))
    csv_lines = ["rung,mean_ade"]
    for rung in report["rungs"]:
        csv_lines.append(f"{rung['name']},{rung['mean_ade']!r}")
    with open(os.path.join(args.out, "ablation.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(csv_lines) + "\n")
    for rung in report["rungs"]:
        print(f"{rung['name']}: mean ADE {rung['mean_ade']:.6f} "
              f"(diff: {rung['config_diff_from_previous']})")
    return 0


def _read_curve_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    columns = {name: [] for name in header}
    for row in rows:
        for name, value in zip(header, row):
            columns[name].append(float(value))
    return columns


def cmd_plot(args):
    merged = {}
    length = None
    for path in args.curves:
        stem = os.path.splitext(os.path.basename(path))[0]
        columns = _read_curve_csv(path)
        for name, values in columns.items():
            if name == "t":
                length = len(values) if length is None else length
                continue
            key = name if name not in merged else f"{stem}:{name}"
            merged[key] = values
    out_csv = os.path.splitext(args.out)[0] + ".csv"
    write_curve_csv(out_csv, merged)
    wrote = [out_csv]
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(7, 4))
        for name, values in merged.items():
            ax.plot(range(1, len(values) + 1), values, label=name)
        ax.set_xlabel("timestamp")
        ax.set_ylabel("error")
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.out, dpi=120)
        wrote.append(args.out)
    except ImportError:
        pass  # CSV is the contract; images are convenience
    print("wrote " + ", ".join(wrote))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="posecast")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic motion dataset")
    p.add_argument("--family", required=True, choices=SYNTHETIC_FAMILIES)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--horizon", type=int, default=45)
    p.add_argument("--topology", default="body13", choices=("body13", "hand21"))
    p.add_argument("--out", required=True)
    p.add_argument("--amplitude", type=float, default=None)
    p.add_argument("--frequency", type=float, default=None)
    p.add_argument("--phase", type=float, default=None)
    p.add_argument("--noise-std", dest="noise_std", type=float, default=None)
    p.add_argument("--label", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a forecasting method")
    p.add_argument("--data", required=True)
    p.add_argument("--method", required=True, choices=TRAINABLE_METHODS)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or prediction file")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--predictions", default=None,
                   help="JSONL of {id, frames} instead of a checkpoint")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("forecast", help="predict a pose sequence for one input")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--p0", required=True, help="JSON file with pose coords")
    p.add_argument("--label", required=True)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("compare", help="side-by-side table of eval reports")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--out", required=True, help="markdown output (CSV written beside)")
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("ablate", help="run the configuration-ladder experiment")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("plot", help="merge/plot per-timestamp curve CSVs")
    p.add_argument("--curves", nargs="+", required=True)
    p.add_argument("--out", required=True, help="image path; CSV written beside")
    _add_common(p)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else USAGE_EXIT
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DIVERGENCE_EXIT
    except PosecastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return VALIDATION_EXIT


if __name__ == "__main__":
    sys.exit(main())
