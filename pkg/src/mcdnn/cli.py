"""Command-line entry point: generate, train, predict, benchmark, evaluate.

Exit codes: 0 on success, 1 for invalid input or configuration, 2 when a
run fails at runtime.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline
from .dataset import generate_synthetic, load_csv, split_dataset, write_csv
from .errors import ValidationError
from .metrics import evaluate

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _config(path: str | None) -> pipeline.PipelineConfig:
    return pipeline.PipelineConfig.load(path) if path else pipeline.PipelineConfig()


def _seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ValidationError(f"seeds must be comma-separated integers, got {text!r}") from None
    if not seeds:
        raise ValidationError("at least one seed is required")
    return seeds


def _labels_for(path: str) -> dict[int, int]:
    """Labels keyed by row id, from either a trips CSV or a row_id,label file."""
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"no such file: {p}")
    with p.open() as fh:
        header = fh.readline().strip().split(",")
    if header[:1] == ["row_id"]:
        return pipeline.read_predictions(p)
    ds = load_csv(p)
    return {int(r): int(y) for r, y in zip(ds.row_id, ds.label)}


def cmd_generate(args) -> int:
    cfg = _config(args.config)
    ds = generate_synthetic(cfg.synthetic, args.seed if args.seed is not None else cfg.data_seed)
    write_csv(ds, args.out)
    print(f"wrote {len(ds)} trips to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args.config)
    data = load_csv(args.data) if args.data else pipeline.load_data(cfg)
    train, val, test = split_dataset(data, cfg.split_ratios, cfg.seed + pipeline.SEED_OFFSETS["split"], cfg.stratify)
    rec = pipeline.FitRecorder()
    model = pipeline.train_mc_dnn(train, val, cfg, recorder=rec)
    out = pipeline.resolve_output_dir(cfg, args.out)
    pipeline.save_model(model, out)
    report = evaluate(test.label, pipeline.predict_mc_dnn(model, test), 4, cfg.beta)
    summary = {
        "k": model.clusters.k,
        "silhouette": None if model.silhouette is None else {str(k): v for k, v in sorted(model.silhouette.items())},
        "mc_fidelity": model.mc_fidelity,
        "rows": {"train": len(train), "val": len(val), "test": len(test)},
        "test": {name: fn(report) for name, fn in pipeline.CRITERIA.items()},
    }
    (out / "training_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"model saved to {out} (k={model.clusters.k}, mc_fidelity={model.mc_fidelity:.4f}, "
          f"test macro-F={report.macro_f:.4f})")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = pipeline.load_model(args.model)
    ds = load_csv(args.data)
    pipeline.write_predictions(args.out, ds.row_id, pipeline.predict_mc_dnn(model, ds))
    print(f"wrote {len(ds)} predictions to {args.out}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = _config(args.config)
    result = pipeline.run_benchmark(cfg, _seeds(args.seeds), log=lambda m: print(m, file=sys.stderr))
    out = pipeline.resolve_output_dir(cfg, args.out)
    pipeline.emit_report(result, out)
    sys.stdout.write((out / "summary.txt").read_text())
    if not any(r.reports for r in result.runs):
        print("every method failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_evaluate(args) -> int:
    actual = _labels_for(args.actual)
    predicted = pipeline.read_predictions(args.predicted)
    missing = sorted(set(actual) - set(predicted))
    if missing:
        raise ValidationError(f"{len(missing)} rows have no prediction (first: row_id {missing[0]})")
    ids = sorted(actual)
    report = evaluate([actual[i] for i in ids], [predicted[i] for i in ids], 4, args.beta)
    out = Path(args.out) if args.out else pipeline.resolve_output_dir(pipeline.PipelineConfig())
    pipeline.emit_evaluation(report, out)
    sys.stdout.write((out / "summary.txt").read_text())
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # bad usage is invalid input, so it shares exit code 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mcdnn", description="EV charge-level forecasting with micro-clustering")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic trips CSV")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train an MC-DNN model")
    p.add_argument("--config")
    p.add_argument("--data", help="trips CSV; defaults to the config's data source")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict charge levels with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark", help="compare MC-DNN with the baselines over seeds")
    p.add_argument("--config")
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--out")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("evaluate", help="score a predictions file")
    p.add_argument("--actual", required=True, help="trips CSV or row_id,label CSV")
    p.add_argument("--predicted", required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
