"""Command-line entry point: ``hybridqnn {train,eval,analyze-ansatz,generate}``.

Exit codes: 0 success, 2 validation failure, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .ansatz_analysis import DEFAULT_BINS, DEFAULT_ENTANGLEMENT_SAMPLES, DEFAULT_PAIRS, analyze_ansatz
from .ansatz import AnsatzFamily, AnsatzSpec
from .data import generate_synthetic, load_dataset, materialize
from .exceptions import ConfigurationError, HybridQNNError
from .models import ModelSpec, build_model
from .training import (
    TrainConfig,
    confusion_matrix,
    evaluate_accuracy,
    fit,
    load_checkpoint,
    predict_logits,
    save_checkpoint,
    write_metrics_csv,
)

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3
ANALYSIS_COLUMNS = ("family", "n_qubits", "layers", "params", "KL", "Q", "n_samples", "seed")
METRICS_FILE, CHECKPOINT_FILE, MANIFEST_FILE = "metrics.csv", "checkpoint.txt", "manifest.txt"

logger = logging.getLogger("hybridqnn")


class StageError(Exception):
    def __init__(self, stage: str, code: int, message: str):
        super().__init__(message)
        self.stage = stage
        self.code = code


@dataclass
class RunConfig:
    model: str = "qccnn1"
    ansatz: str = "all_to_all"
    layers: int = 1
    shots: int = 0
    angle_scale: float = 1.0
    learning_rate: float = 0.05
    batch_size: int = 10
    epochs: int = 50
    seed: int = 0
    data: Optional[str] = None
    synthetic_per_class: int = 60
    split_ratio: float = 0.5
    out: str = "run"

    def model_spec(self, n_classes: int = 4) -> ModelSpec:
        return ModelSpec(self.model, self.ansatz, self.layers, self.shots, self.angle_scale, n_classes=n_classes)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.batch_size, self.epochs, self.seed)

    def to_lines(self) -> List[str]:
        return [f"{f.name}={'' if getattr(self, f.name) is None else getattr(self, f.name)}" for f in fields(self)]


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"int": int, "float": float, "str": str, "Optional[str]": str}


def read_config_file(path) -> Dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc.strerror}") from None
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigurationError(f"{path}:{n}: unknown key {key!r}")
        out[key] = value
    return out


def resolve_config(file_values: Dict[str, str], flag_values: Dict[str, object]) -> RunConfig:
    """Defaults, then the config file, then flags (flags win)."""
    merged = {}
    for key, value in file_values.items():
        if _FIELD_TYPES[key] == "Optional[str]" and value == "":
            merged[key] = None
            continue
        try:
            merged[key] = _CASTS[_FIELD_TYPES[key]](value)
        except ValueError:
            raise ConfigurationError(f"config key {key!r}: cannot parse {value!r}") from None
    merged.update({k: v for k, v in flag_values.items() if v is not None and k in _FIELD_TYPES})
    return RunConfig(**merged)


def validate_run(config: RunConfig) -> None:
    """Check every field against the owning module before any work starts."""
    config.model_spec()
    config.train_config()
    AnsatzSpec(config.ansatz, 2, config.layers)
    if not 0 < config.split_ratio < 1:
        raise ConfigurationError(f"split_ratio must be in (0, 1), got {config.split_ratio}")
    if config.data is None:
        if config.synthetic_per_class < 2:
            raise ConfigurationError("synthetic_per_class must be >= 2")
    elif not Path(config.data).is_dir():
        raise ConfigurationError(f"data root {config.data} is not a directory")


def load_data(config: RunConfig):
    if config.data is None:
        return generate_synthetic(config.synthetic_per_class, config.seed)
    return load_dataset(config.data, config.split_ratio, config.seed)


def _run_stage(stage, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ConfigurationError, ValueError) as exc:
        code = EXIT_VALIDATION if stage in ("config", "checkpoint") else EXIT_RUNTIME
        raise StageError(stage, code, str(exc)) from exc
    except (HybridQNNError, OSError, RuntimeError, ArithmeticError, MemoryError) as exc:
        raise StageError(stage, EXIT_RUNTIME, str(exc)) from exc


def _flag_values(args) -> Dict[str, object]:
    return {k: v for k, v in vars(args).items() if k in _FIELD_TYPES}


def _config_from_args(args) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    config = resolve_config(file_values, _flag_values(args))
    validate_run(config)
    return config


def cmd_train(args) -> int:
    config = _run_stage("config", _config_from_args, args)
    split = _run_stage("data", load_data, config)
    n_classes = len(split.class_names) or 4
    spec = _run_stage("config", config.model_spec, n_classes)
    model = _run_stage("model", build_model, spec)
    train, test = split.train_arrays(), split.test_arrays()
    out = Path(config.out)
    _run_stage("output", out.mkdir, parents=True, exist_ok=True)
    manifest = [f"# hybridqnn {__version__} run manifest", "# command=train"]
    manifest += config.to_lines()
    manifest += [f"# n_params={model.n_params}", f"# n_train={len(train[1])}", f"# n_test={len(test[1])}"]
    _run_stage("output", (out / MANIFEST_FILE).write_text, "\n".join(manifest) + "\n")

    rows = []

    def on_epoch(row):
        rows.append(row)
        write_metrics_csv(out / METRICS_FILE, rows)

    _run_stage("output", write_metrics_csv, out / METRICS_FILE, rows)
    state = _run_stage("train", fit, model, train, config.train_config(), test, on_epoch)
    extra = {
        "epochs": state.epoch,
        "seed": config.seed,
        "data": config.data or "",
        "synthetic_per_class": config.synthetic_per_class,
        "split_ratio": config.split_ratio,
        "class_names": ",".join(split.class_names),
    }
    _run_stage("output", save_checkpoint, out / CHECKPOINT_FILE, model, state.params, extra)
    final = state.history[-1]["test_acc"] if state.history else float("nan")
    print(f"trained {config.model} for {state.epoch} epochs; test_acc={final:.6f}; outputs in {out}")
    return EXIT_OK


def _eval_config(header: Dict[str, str], args) -> RunConfig:
    file_values = {k: header[k] for k in ("seed", "data", "synthetic_per_class", "split_ratio") if k in header}
    return resolve_config(file_values, _flag_values(args))


def cmd_eval(args) -> int:
    model, params, header = _run_stage("checkpoint", load_checkpoint, args.checkpoint)
    config = _run_stage("config", _eval_config, header, args)
    split = _run_stage("data", load_data, config)
    X, y = split.test_arrays()
    if len(y) == 0:
        raise StageError("data", EXIT_RUNTIME, "test split is empty")
    rng = np.random.default_rng(config.seed) if model.spec.shots else None
    logits = _run_stage("eval", predict_logits, model, X, params, rng)
    pred = np.argmax(logits, axis=1)
    accuracy = float(np.mean(pred == y))
    cm = confusion_matrix(y, pred, model.spec.n_classes)
    names = header.get("class_names", "").split(",") if header.get("class_names") else split.class_names
    print(f"accuracy={accuracy:.6f} ({int(np.sum(pred == y))}/{len(y)})")
    print("confusion (rows=true, cols=predicted):")
    for i, row in enumerate(cm):
        label = names[i] if i < len(names) else str(i)
        print(f"  {label:>20s} " + " ".join(f"{v:5d}" for v in row))
    return EXIT_OK


def _sweep_specs(n_qubits: int) -> List[AnsatzSpec]:
    block = [AnsatzSpec(AnsatzFamily.CIRCUIT_BLOCK, n_qubits, layers) for layers in (1, 2, 3, 4)]
    return block + [AnsatzSpec(AnsatzFamily.ALL_TO_ALL, n_qubits, 1)]


def cmd_analyze(args) -> int:
    def specs():
        if args.sweep:
            return _sweep_specs(args.qubits)
        return [AnsatzSpec(args.family, args.qubits, args.layers)]

    def check():
        for name in ("pairs", "samples", "bins"):
            if getattr(args, name) < (2 if name == "bins" else 1):
                raise ConfigurationError(f"--{name} is too small: {getattr(args, name)}")
        return specs()

    todo = _run_stage("config", check)
    rows = []
    for spec in todo:
        report = _run_stage("analysis", analyze_ansatz, spec, args.seed, args.pairs, args.samples, args.bins)
        rows.append({
            "family": report["family"], "n_qubits": report["n_qubits"], "layers": report["layers"],
            "params": report["params"], "KL": repr(report["kl"]), "Q": repr(report["q"]),
            "n_samples": report["n_samples"], "seed": report["seed"],
        })

    def emit(fh):
        writer = csv.DictWriter(fh, fieldnames=ANALYSIS_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)

    if args.out:
        path = Path(args.out)
        _run_stage("output", path.parent.mkdir, parents=True, exist_ok=True)
        with _run_stage("output", path.open, "w", newline="") as fh:
            emit(fh)
    else:
        emit(sys.stdout)
    return EXIT_OK


def cmd_generate(args) -> int:
    def check():
        if args.per_class < 2:
            raise ConfigurationError(f"--per-class must be >= 2, got {args.per_class}")

    _run_stage("config", check)
    split = _run_stage("generate", generate_synthetic, args.per_class, args.seed)
    root = _run_stage("output", materialize, split, args.out)
    print(f"wrote {len(split.train) + len(split.test)} images in {len(split.class_names)} classes to {root}")
    return EXIT_OK


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; flags override its values")
    p.add_argument("--model", help="cnn, resnet, qccnn1, qccnn2, qcresnet1 or qcresnet2")
    p.add_argument("--ansatz", help="all_to_all or circuit_block")
    p.add_argument("--layers", type=int, help="ansatz layers")
    p.add_argument("--shots", type=int, help="0 for exact probabilities")
    p.add_argument("--angle-scale", dest="angle_scale", type=float, help="radians per unit pixel")
    p.add_argument("--lr", "--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--data", help="image root (class dirs of .pgm, or manifest.csv); synthetic if omitted")
    p.add_argument("--synthetic-per-class", dest="synthetic_per_class", type=int,
                   help="synthetic images per class (split 50/50)")
    p.add_argument("--split-ratio", dest="split_ratio", type=float, help="train fraction per class")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridqnn", description="Hybrid quantum-classical CNN toolkit")
    parser.add_argument("--version", action="version", version=f"hybridqnn {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a model; writes metrics.csv, checkpoint.txt, manifest.txt")
    _add_run_flags(train)
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on its test split")
    ev.add_argument("checkpoint")
    ev.add_argument("--data")
    ev.add_argument("--synthetic-per-class", dest="synthetic_per_class", type=int)
    ev.add_argument("--split-ratio", dest="split_ratio", type=float)
    ev.add_argument("--seed", type=int)
    ev.set_defaults(func=cmd_eval)

    an = sub.add_parser("analyze-ansatz", help="expressibility (KL) and entangling capability (Q)")
    an.add_argument("--family", default="all_to_all", help="all_to_all or circuit_block")
    an.add_argument("--qubits", type=int, default=4)
    an.add_argument("--layers", type=int, default=1)
    an.add_argument("--pairs", type=int, default=DEFAULT_PAIRS, help="fidelity pairs")
    an.add_argument("--samples", type=int, default=DEFAULT_ENTANGLEMENT_SAMPLES, help="entanglement samples")
    an.add_argument("--bins", type=int, default=DEFAULT_BINS)
    an.add_argument("--seed", type=int, default=0)
    an.add_argument("--sweep", action="store_true",
                    help="circuit_block with 1-4 layers plus all_to_all with 1 layer")
    an.add_argument("--out", help="CSV path (stdout if omitted)")
    an.set_defaults(func=cmd_analyze)

    gen = sub.add_parser("generate", help="write the synthetic 4-class set as PGM files")
    gen.add_argument("--out", required=True)
    gen.add_argument("--per-class", dest="per_class", type=int, default=60)
    gen.add_argument("--seed", type=int, default=0)
    gen.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage, which matches the validation code
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"hybridqnn {args.command}: {exc.stage} failed: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
