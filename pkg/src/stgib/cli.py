"""Command line interface: train, eval, explain, synth, report.

Configuration is a single JSON document; command-line flags override
individual fields.  All randomness funnels through one seed, and every
command writes its artifacts under --out, so identical invocations
produce byte-identical files.  Exit codes: 0 ok, 2 usage/config error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import torch

from . import data as gdata
from .checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from .encoder import EncoderError
from .evaluation import fidelity, forecast_metrics, sparsity_sweep
from .extractor import top_k
from .model import InterpretableForecaster, ModelConfig, collect_explanations, predict
from .prototypes import nearest_training_subgraph
from .training import (
    LOSS_NAMES,
    NumericError,
    TrainConfig,
    samples_to_tensors,
    train,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    data_dir: str = ""
    window: int = 12
    horizon: int = 12
    stride: int = 1
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)
    quantile: float = 0.1
    hidden_dim: int = 32
    n_blocks: int = 2
    temporal_kernel: int = 3
    dilations: tuple[int, ...] = (1, 2)
    dropout: float = 0.0
    n_classes: int = 2
    per_class: int = 3
    gate_mode: str = "soft"
    temp_start: float = 1.0
    temp_end: float = 0.1
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    patience: int | None = 15
    seed: int = 0

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        merged = {}
        for key, value in raw.items():
            if key in ("split", "dilations") and value is not None:
                value = tuple(value)
            merged[key] = value
        config = cls(**merged)
        config.validate()
        return config

    def validate(self) -> None:
        if self.window < 1 or self.horizon < 1 or self.stride < 1:
            raise ConfigError("window, horizon and stride must be >= 1")
        if abs(sum(self.split) - 1.0) > 1e-9 or len(self.split) != 3:
            raise ConfigError(f"split ratios must be 3 values summing to 1: {self.split}")
        if not 0 < self.quantile < 1:
            raise ConfigError("quantile must lie in (0, 1)")
        if self.epochs < 0 or self.batch_size < 1 or self.lr < 0:
            raise ConfigError("epochs >= 0, batch_size >= 1, lr >= 0 required")
        if self.n_blocks != len(self.dilations):
            raise ConfigError("need one dilation per block")
        if self.gate_mode not in ("soft", "hard"):
            raise ConfigError(f"unknown gate_mode {self.gate_mode!r}")
        rf = 1 + (self.temporal_kernel - 1) * sum(self.dilations)
        if rf > self.window:
            raise ConfigError(
                f"encoder receptive field {rf} exceeds window {self.window}"
            )

    def to_json(self) -> str:
        payload = asdict(self)
        payload["split"] = list(self.split)
        payload["dilations"] = list(self.dilations)
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def load_run_config(path: str | None, overrides: dict) -> RunConfig:
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {p} must hold a JSON object")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _load_splits(config: RunConfig):
    base = Path(config.data_dir)
    graph, signal = gdata.load_dataset(base / "signal.bin", base / "graph.csv")
    labels = gdata.compute_thresholds(signal, config.quantile)
    samples = gdata.make_windows(
        signal, labels, config.window, config.horizon, config.stride
    )
    splits = gdata.split_chronological(samples, config.split)
    return graph, signal, labels, splits


def _build_model(config: RunConfig, graph: gdata.StaticGraph, in_features: int):
    model_config = ModelConfig(
        n_nodes=graph.n_nodes,
        in_features=in_features,
        window=config.window,
        horizon=config.horizon,
        hidden_dim=config.hidden_dim,
        n_blocks=config.n_blocks,
        temporal_kernel=config.temporal_kernel,
        dilations=tuple(config.dilations),
        dropout=config.dropout,
        n_classes=config.n_classes,
        per_class=config.per_class,
        seed=config.seed,
    )
    return InterpretableForecaster(model_config, graph.adjacency)


def _restore_model(checkpoint_path: str, config: RunConfig):
    graph, signal, labels, splits = _load_splits(config)
    model = _build_model(config, graph, signal.n_features)
    tensors = read_checkpoint(checkpoint_path)
    model.load_tensors(tensors)
    return model, graph, signal, labels, splits


def _format_row(values) -> str:
    out = []
    for v in values:
        out.append(f"{v:.10g}" if isinstance(v, float) else str(v))
    return ",".join(out)


def _write_history_csv(path: Path, history: list[dict]) -> None:
    columns = ["epoch", *LOSS_NAMES, *(f"w{i+1}" for i in range(5)), "val_mae"]
    lines = [",".join(columns)]
    for row in history:
        lines.append(_format_row(row[c] for c in columns))
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(args: argparse.Namespace) -> int:
    config = load_run_config(
        args.config,
        {
            "seed": args.seed,
            "epochs": args.epochs,
            "data_dir": args.data_dir,
            "batch_size": args.batch_size,
            "lr": args.lr,
        },
    )
    if not config.data_dir:
        raise ConfigError("no data_dir configured (use --data-dir or the config file)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    graph, signal, labels, (train_split, val_split, _) = _load_splits(config)
    model = _build_model(config, graph, signal.n_features)
    train_config = TrainConfig(
        epochs=config.epochs,
        batch_size=config.batch_size,
        lr=config.lr,
        seed=config.seed,
        gate_mode=config.gate_mode,
        temp_start=config.temp_start,
        temp_end=config.temp_end,
        patience=config.patience,
    )
    result = train(model, train_split, val_split, train_config)

    write_checkpoint(out / "checkpoint.gtck", model.export_tensors())
    _write_history_csv(out / "history.csv", result.history)
    (out / "config.resolved.json").write_text(config.to_json())
    print(
        f"trained {len(result.history)} epoch(s); "
        f"best val MAE {result.best_val_mae:.6g} at epoch {result.best_epoch}"
    )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, {"data_dir": args.data_dir})
    model, graph, signal, labels, splits = _restore_model(args.checkpoint, config)
    split_map = {"train": splits[0], "val": splits[1], "test": splits[2]}
    samples = split_map[args.split]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    dtype = next(model.parameters()).dtype
    x, y_reg, _, starts = samples_to_tensors(samples, dtype)
    forecast = predict(model, x, starts, config.seed)
    report = forecast_metrics(forecast.y_hat.numpy(), y_reg.numpy())
    (out / "metrics.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    )

    ks = tuple(int(v) for v in args.ks.split(",") if v.strip()) if args.ks else ()
    if ks:
        bad = [k for k in ks if not 1 <= k <= graph.n_nodes]
        if bad:
            raise ConfigError(f"sparsity level(s) out of range [1, {graph.n_nodes}]: {bad}")
        curve = sparsity_sweep(
            model, samples, ks, seed=config.seed, convention=args.fidelity_convention
        )
        (out / "fidelity.csv").write_text(curve.csv_text())
    print(
        f"eval[{args.split}]: mae {report.mae:.6g} rmse {report.rmse:.6g} "
        f"mape {report.mape_percent if report.mape_percent is not None else 'n/a'}"
    )
    return EXIT_OK


def cmd_explain(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, {"data_dir": args.data_dir})
    model, graph, signal, labels, splits = _restore_model(args.checkpoint, config)
    split_map = {
        "train": splits[0], "val": splits[1], "test": splits[2],
        "all": splits[0] + splits[1] + splits[2],
    }
    samples = split_map[args.split]
    if not 1 <= args.k <= graph.n_nodes:
        raise ConfigError(f"k must lie in [1, {graph.n_nodes}], got {args.k}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    dtype = next(model.parameters()).dtype
    x, _, _, starts = samples_to_tensors(samples, dtype)
    explanations = collect_explanations(model, x, starts, config.seed, args.k)

    lines = ["window_start,node_id,p,rank,selected_at_k"]
    for i, start in enumerate(explanations["window_starts"]):
        p_row = explanations["p"][i]
        ranked = np.lexsort((np.arange(p_row.shape[0]), -p_row))
        for rank, node in enumerate(ranked[: args.k], start=1):
            lines.append(
                f"{start},{graph.node_ids[node]},{p_row[node]:.10g},{rank},1"
            )
    (out / "explanations.csv").write_text("\n".join(lines) + "\n")

    # prototype grounding against the training split
    xt, _, _, tstarts = samples_to_tensors(splits[0], dtype)
    train_expl = collect_explanations(model, xt, tstarts, config.seed, args.k)
    records = nearest_training_subgraph(
        train_expl["gamma"], train_expl["window_starts"], train_expl["node_sets"]
    )
    bank = model.bank
    for record in records:
        m = record["prototype"]
        record["class"] = int(bank.class_of[m])
        record["vector_norm"] = float(bank.vectors[m].detach().norm())
        record["node_ids"] = [graph.node_ids[i] for i in record.pop("nodes")]
    (out / "prototype_report.json").write_text(
        json.dumps(records, indent=2, sort_keys=True) + "\n"
    )
    print(f"explained {len(samples)} window(s) at k={args.k}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    seed = args.seed
    rng = np.random.default_rng(seed)
    if args.informative:
        informative = tuple(int(v) for v in args.informative.split(","))
    else:
        informative = tuple(
            int(i) for i in rng.choice(args.n_nodes, size=args.n_informative, replace=False)
        )
    spec = gdata.PlantedSpec(
        n_nodes=args.n_nodes,
        informative_set=informative,
        noise_sigma=args.noise_sigma,
        window=args.window,
        horizon=args.horizon,
        n_steps=args.n_steps,
        seed=seed,
    )
    graph, signal, truth = gdata.generate_synthetic(spec)
    out = Path(args.out)
    gdata.save_dataset(out, graph, signal)
    (out / "truth.json").write_text(
        json.dumps({"informative_nodes": list(truth)}, indent=2, sort_keys=True) + "\n"
    )
    print(f"wrote planted dataset with {args.n_nodes} nodes to {out}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.exists():
        raise ConfigError(f"run directory not found: {run_dir}")
    sections = ["# Run report", ""]

    history = run_dir / "history.csv"
    if history.exists():
        rows = history.read_text().strip().splitlines()
        sections += [
            "## Training",
            f"- epochs recorded: {len(rows) - 1}",
            f"- final row: `{rows[-1]}`" if len(rows) > 1 else "- no epochs",
            "",
        ]
    metrics = run_dir / "metrics.json"
    if metrics.exists():
        report = json.loads(metrics.read_text())
        sections += ["## Forecast metrics"]
        sections += [f"- {key}: {value}" for key, value in sorted(report.items())]
        sections += [""]
    fidelity_csv = run_dir / "fidelity.csv"
    if fidelity_csv.exists():
        sections += ["## Fidelity over sparsity", "```",
                     fidelity_csv.read_text().strip(), "```", ""]
    proto = run_dir / "prototype_report.json"
    if proto.exists():
        records = json.loads(proto.read_text())
        sections += ["## Prototypes"]
        for record in records:
            sections += [
                f"- prototype {record['prototype']} (class {record['class']}): "
                f"window {record['window_start']}, gamma {record['gamma']:.4g}, "
                f"nodes {record['node_ids']}"
            ]
        sections += [""]

    target = Path(args.out) if args.out else run_dir
    target.mkdir(parents=True, exist_ok=True)
    text = "\n".join(sections).rstrip() + "\n"
    (target / "report.md").write_text(text)
    print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stgib",
        description="Interpretable temporal graph forecasting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write artifacts")
    p_train.add_argument("--config", help="JSON config file")
    p_train.add_argument("--data-dir", help="dataset directory (overrides config)")
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--batch-size", type=int, dest="batch_size")
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--out", required=True, help="artifact directory")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="forecast metrics and fidelity sweep")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--config", required=True, help="resolved config JSON")
    p_eval.add_argument("--data-dir")
    p_eval.add_argument("--split", choices=("train", "val", "test"), default="test")
    p_eval.add_argument("--ks", default="", help="comma separated sparsity levels")
    p_eval.add_argument(
        "--fidelity-convention", choices=("standard", "paper"), default="standard"
    )
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_explain = sub.add_parser("explain", help="per-window node explanations")
    p_explain.add_argument("--checkpoint", required=True)
    p_explain.add_argument("--config", required=True)
    p_explain.add_argument("--data-dir")
    p_explain.add_argument("--split", choices=("train", "val", "test", "all"), default="all")
    p_explain.add_argument("--k", type=int, required=True)
    p_explain.add_argument("--out", required=True)
    p_explain.set_defaults(func=cmd_explain)

    p_synth = sub.add_parser("synth", help="write a planted synthetic dataset")
    p_synth.add_argument("--n-nodes", type=int, default=20)
    p_synth.add_argument("--n-informative", type=int, default=5)
    p_synth.add_argument("--informative", help="explicit comma separated node indices")
    p_synth.add_argument("--noise-sigma", type=float, default=0.1)
    p_synth.add_argument("--window", type=int, default=8)
    p_synth.add_argument("--horizon", type=int, default=4)
    p_synth.add_argument("--n-steps", type=int, default=240)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=cmd_synth)

    p_report = sub.add_parser("report", help="summarize run artifacts as markdown")
    p_report.add_argument("--run-dir", required=True)
    p_report.add_argument("--out")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    torch.set_num_threads(1)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, gdata.DatasetError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, EncoderError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
