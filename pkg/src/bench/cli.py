"""Benchmark CLI for the streaming SVM trainers.

Exit codes: 0 success, 2 usage or configuration error, 3 data or
checkpoint error, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Callable
from pathlib import Path

from pydantic import ValidationError

from src.bench.checkpoint import RunParameters, load_checkpoint
from src.bench.runner import (
    RunSplits,
    load_run_splits,
    run_stream,
    split_reports,
    write_metrics_csv,
    write_model,
)
from src.common.files import sha256_file
from src.common.logging_config import setup_logging
from src.common.settings import settings
from src.data.pipe_scan import PipeScanConfig, generate_pipe_scan
from src.data.sparse_text import load_dataset, write_sparse_text
from src.data.splits import SplitSpec
from src.evaluation.curves import learning_curve, write_curve_csv
from src.evaluation.grid_search import GridSpec, grid_search, write_grid_csv
from src.evaluation.metrics import MetricsReport, evaluate
from src.evaluation.trainers import TrainerKind, train_model
from src.svm.batch_smo import SmoConfig, solve_detailed
from src.svm.core import Model, model_from_json
from src.svm.errors import (
    CheckpointCorruptError,
    ConfigurationError,
    DataFormatError,
    EmptyDatasetError,
    InvalidParameterError,
    KernelDomainError,
    NonConvergenceError,
    ShapeError,
    UndefinedMetricError,
    UnsupportedVersionError,
)
from src.svm.kernel import KernelSpec
from src.svm.lasvm import DEFAULT_TAU, EpochSchedule

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NONCONVERGED = 4

DATA_ERRORS = (
    DataFormatError,
    EmptyDatasetError,
    CheckpointCorruptError,
    UnsupportedVersionError,
    KernelDomainError,
    ShapeError,
    UndefinedMetricError,
    FileNotFoundError,
    IsADirectoryError,
)
USAGE_ERRORS = (ConfigurationError, InvalidParameterError, ValidationError, ValueError)


def _data_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--data", type=Path, required=True)
    parent.add_argument("--remap-binary", action="store_true")
    parent.add_argument("--train-fraction", type=float, default=0.3)
    parent.add_argument("--validation-fraction", type=float, default=0.2)
    parent.add_argument("--seed", type=int, default=settings.default_seed)
    return parent


def _model_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--kernel", default="rbf?gamma=auto")
    parent.add_argument("--C", dest="C", type=float, default=100.0)
    parent.add_argument("--tau", type=float, default=DEFAULT_TAU)
    parent.add_argument("--epoch-size", type=int, default=200)
    parent.add_argument("--finish-every", type=int, default=5)
    parent.add_argument("--passes", type=int, default=1)
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svm-bench", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)
    data = _data_options()
    model = _model_options()

    synth = commands.add_parser("synth", help="write a synthetic pipe-scan dataset")
    synth.add_argument("--n", type=int, default=1000)
    synth.add_argument("--beams", type=int, default=180)
    synth.add_argument("--radius", type=float, default=1.0)
    synth.add_argument("--noise", type=float, default=0.01)
    synth.add_argument("--defect-rate", type=float, default=0.3)
    synth.add_argument("--depth-min", type=float, default=0.05)
    synth.add_argument("--depth-max", type=float, default=0.3)
    synth.add_argument("--width-min", type=int, default=3)
    synth.add_argument("--width-max", type=int, default=20)
    synth.add_argument("--seed", type=int, default=settings.default_seed)
    synth.add_argument("--out", type=Path, required=True)
    synth.set_defaults(handler=_synth)

    train = commands.add_parser("train", parents=[data, model], help="train in one pass")
    train.add_argument("--algo", choices=[kind.value for kind in TrainerKind], required=True)
    train.add_argument("--model-out", type=Path)
    train.add_argument("--metrics-out", type=Path)
    train.set_defaults(handler=_train)

    stream = commands.add_parser("stream", parents=[data, model], help="online run")
    stream.add_argument(
        "--algo",
        choices=[TrainerKind.ISVM.value, TrainerKind.LASVM.value],
        required=True,
    )
    stream.add_argument("--checkpoint", type=Path, default=settings.checkpoint_dir / "stream.ckpt")
    stream.add_argument("--checkpoint-every", type=int)
    stream.add_argument("--stop-after", type=int)
    stream.add_argument("--model-out", type=Path)
    stream.add_argument("--metrics-out", type=Path)
    stream.set_defaults(handler=_stream)

    resume = commands.add_parser("resume", help="continue a checkpointed online run")
    resume.add_argument("--from", dest="source", type=Path, required=True)
    resume.add_argument("--stop-after", type=int)
    resume.set_defaults(handler=_resume)

    evaluate_cmd = commands.add_parser("evaluate", help="score a model file on a dataset")
    evaluate_cmd.add_argument("--model", type=Path, required=True)
    evaluate_cmd.add_argument("--data", type=Path, required=True)
    evaluate_cmd.add_argument("--remap-binary", action="store_true")
    evaluate_cmd.add_argument("--metrics-out", type=Path)
    evaluate_cmd.set_defaults(handler=_evaluate)

    grid = commands.add_parser("gridsearch", help="k-fold grid search from a grid file")
    grid.add_argument("--grid", type=Path, required=True)
    grid.add_argument("--algo", default=TrainerKind.LASVM.value)
    grid.add_argument("--data", type=Path, required=True)
    grid.add_argument("--remap-binary", action="store_true")
    grid.add_argument("--seed", type=int, default=settings.default_seed)
    grid.add_argument("--workers", type=int, default=settings.grid_workers)
    grid.add_argument("--epoch-size", type=int, default=200)
    grid.add_argument("--finish-every", type=int, default=5)
    grid.add_argument("--out", type=Path)
    grid.set_defaults(handler=_gridsearch)

    curve = commands.add_parser("curve", parents=[data, model], help="learning curve CSV")
    curve.add_argument("--algo", choices=[kind.value for kind in TrainerKind], required=True)
    curve.add_argument("--checkpoints", required=True, help="comma-separated sample counts")
    curve.add_argument("--out", type=Path, required=True)
    curve.set_defaults(handler=_curve)
    return parser


def _optional_path(args: argparse.Namespace, name: str) -> str | None:
    value = getattr(args, name, None)
    return None if value is None else str(value)


def _run_parameters(args: argparse.Namespace, **extra: object) -> RunParameters:
    return RunParameters(
        trainer=TrainerKind.parse(args.algo),
        data_path=str(args.data),
        data_sha256=sha256_file(args.data),
        remap_binary=args.remap_binary,
        split=SplitSpec(
            train_fraction=args.train_fraction,
            validation_fraction=args.validation_fraction,
            seed=args.seed,
        ),
        kernel=KernelSpec.parse(args.kernel).to_text(),
        C=args.C,
        tau=args.tau if TrainerKind.parse(args.algo).uses_tau else None,
        epoch_size=args.epoch_size,
        epochs_before_finish=args.finish_every,
        passes=args.passes,
        seed=args.seed,
        model_out=_optional_path(args, "model_out"),
        metrics_out=_optional_path(args, "metrics_out"),
        **extra,
    )


def _print_reports(reports: dict[str, MetricsReport]) -> None:
    for name, report in reports.items():
        row = report.as_table_row()
        cells = "  ".join(f"{key}={value}" for key, value in row.items())
        print(f"{name}: {cells}")


def _synth(args: argparse.Namespace) -> int:
    config = PipeScanConfig(
        n_samples=args.n,
        beams_per_revolution=args.beams,
        nominal_radius=args.radius,
        noise_sigma=args.noise,
        defect_rate=args.defect_rate,
        defect_depth_range=(args.depth_min, args.depth_max),
        defect_width_range=(args.width_min, args.width_max),
        seed=args.seed,
    )
    dataset = generate_pipe_scan(config)
    write_sparse_text(dataset, args.out)
    counts = dataset.class_counts()
    print(
        f"Wrote {len(dataset)} samples to {args.out} "
        f"(healthy={counts[1]}, defected={counts[-1]})"
    )
    return EXIT_OK


def _train(args: argparse.Namespace) -> int:
    run = _run_parameters(args)
    splits = load_run_splits(run, check_fingerprint=False)
    kernel = KernelSpec.parse(run.kernel)
    if run.trainer is TrainerKind.SMO:
        model = solve_detailed(splits.train, SmoConfig(C=run.C, kernel=kernel)).model
    else:
        model = train_model(
            run.trainer,
            splits.train,
            C=run.C,
            kernel=kernel,
            tau=run.tau,
            schedule=run.schedule(),
        )
    return _finish_training(run, model, splits)


def _finish_training(run: RunParameters, model: Model, splits: RunSplits) -> int:
    reports = split_reports(model, splits)
    if run.model_out:
        write_model(model, Path(run.model_out))
    if run.metrics_out:
        write_metrics_csv(reports, Path(run.metrics_out))
    _print_reports(reports)
    if not model.converged:
        print("ERROR: solver stopped before reaching its tolerance", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _stream(args: argparse.Namespace) -> int:
    run = _run_parameters(
        args,
        checkpoint_path=str(args.checkpoint),
        checkpoint_every=args.checkpoint_every,
    )
    outcome = run_stream(run, stop_after=args.stop_after)
    return _report_stream(run, outcome.position, outcome.total)


def _resume(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.source)
    outcome = run_stream(
        checkpoint.run,
        state=checkpoint.state,
        position=checkpoint.position,
        stop_after=args.stop_after,
    )
    return _report_stream(checkpoint.run, outcome.position, outcome.total)


def _report_stream(run: RunParameters, position: int, total: int) -> int:
    if position < total:
        print(f"Stopped at {position}/{total}; checkpoint at {run.checkpoint_path}")
    else:
        print(f"Consumed {total} samples")
        if run.metrics_out:
            print(f"Metrics written to {run.metrics_out}")
    return EXIT_OK


def _evaluate(args: argparse.Namespace) -> int:
    model = model_from_json(args.model.read_text(encoding="utf-8"))
    dataset = load_dataset(args.data, remap_binary=args.remap_binary)
    reports = {"evaluation": evaluate(model, dataset, allow_undefined_auc=True)}
    if args.metrics_out:
        write_metrics_csv(reports, args.metrics_out)
    _print_reports(reports)
    return EXIT_OK


def _gridsearch(args: argparse.Namespace) -> int:
    grid = GridSpec.from_file(args.grid)
    trainer = TrainerKind.parse(args.algo)
    dataset = load_dataset(args.data, remap_binary=args.remap_binary)
    schedule = EpochSchedule(
        epoch_size=args.epoch_size,
        epochs_before_finish=args.finish_every,
        shuffle_seed=args.seed,
    )
    result = grid_search(
        dataset,
        grid,
        trainer,
        args.seed,
        workers=args.workers,
        schedule=schedule,
    )
    if args.out:
        write_grid_csv(result, args.out)
    best = result.best
    failed = sum(score.failed for score in result.scores)
    print(
        f"Best config {best.config_id}: C={best.C} kernel={best.kernel} gamma={best.gamma} "
        f"tau={best.tau} mean_val_acc={best.mean_val_acc:.4f} "
        f"({len(result.scores)} configs, {failed} failed)"
    )
    return EXIT_OK


def _parse_checkpoints(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigurationError(f"invalid --checkpoints {text!r}") from None


def _curve(args: argparse.Namespace) -> int:
    run = _run_parameters(args)
    splits = load_run_splits(run, check_fingerprint=False)
    points = learning_curve(
        run.trainer,
        splits.train,
        splits.validation,
        splits.test,
        _parse_checkpoints(args.checkpoints),
        C=run.C,
        kernel=KernelSpec.parse(run.kernel),
        tau=run.tau if run.tau is not None else DEFAULT_TAU,
        schedule=run.schedule(),
    )
    write_curve_csv(points, args.out)
    print(f"Wrote {len(points)} curve points to {args.out}")
    return EXIT_OK


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    setup_logging("src", settings.log_level)
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except NonConvergenceError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except DATA_ERRORS as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_DATA
    except USAGE_ERRORS as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv: list[str] | None = None) -> int:
    return run_cli(argv)


if __name__ == "__main__":
    raise SystemExit(main())
