import logging
from collections.abc import Iterator
from pathlib import Path

import numpy as np
import pytest

from src.bench.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from src.common.settings import PROJECT_ROOT
from src.data.sparse_text import load_sparse_text, write_sparse_text
from src.svm.core import Dataset, model_from_json


def blobs(n: int = 80, seed: int = 0, separation: float = 1.5) -> Dataset:
    rng = np.random.default_rng(seed)
    labels = np.where(np.arange(n) % 2 == 0, 1, -1)
    features = rng.normal(0.0, 1.0, (n, 2)) + separation * labels[:, np.newaxis]
    return Dataset(features, labels)


@pytest.fixture(autouse=True)
def detach_cli_logging() -> Iterator[None]:
    # The CLI binds a stdout handler to whatever stream capsys installed.
    yield
    logger = logging.getLogger("src")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    logger.propagate = True


@pytest.fixture
def data_path(tmp_path: Path) -> Path:
    path = tmp_path / "blobs.txt"
    write_sparse_text(blobs(), path)
    return path


def common_args(data_path: Path) -> list[str]:
    return [
        "--data",
        str(data_path),
        "--train-fraction",
        "0.5",
        "--kernel",
        "rbf?gamma=0.5",
        "--C",
        "10",
        "--epoch-size",
        "10",
        "--finish-every",
        "2",
    ]


def test_synth_writes_the_requested_samples(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    out = tmp_path / "pipe.txt"

    code = main(["synth", "--n", "25", "--beams", "12", "--width-max", "6", "--out", str(out)])

    assert code == EXIT_OK
    assert len(out.read_text(encoding="utf-8").splitlines()) == 25
    dataset = load_sparse_text(out)
    assert dataset.features.shape == (25, 12)
    assert "Wrote 25 samples" in capsys.readouterr().out


@pytest.mark.parametrize("algo", ["isvm", "lasvm", "smo"])
def test_train_writes_model_and_metrics(
    tmp_path: Path, data_path: Path, algo: str, capsys: pytest.CaptureFixture[str]
) -> None:
    model_out = tmp_path / f"{algo}.json"
    metrics_out = tmp_path / f"{algo}.csv"

    code = main(
        [
            "train",
            "--algo",
            algo,
            *common_args(data_path),
            "--model-out",
            str(model_out),
            "--metrics-out",
            str(metrics_out),
        ]
    )

    assert code == EXIT_OK
    assert model_from_json(model_out.read_text(encoding="utf-8")).feature_dim == 2
    lines = metrics_out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "split,accuracy,log_loss,roc_auc,f1,n_samples"
    assert [line.split(",")[0] for line in lines[1:]] == ["validation", "test"]
    output = capsys.readouterr().out
    assert "validation: Accuracy=" in output
    assert "test: Accuracy=" in output


def test_stream_then_resume_matches_a_single_run(tmp_path: Path, data_path: Path) -> None:
    whole = [
        "stream",
        "--algo",
        "lasvm",
        *common_args(data_path),
        "--checkpoint",
        str(tmp_path / "whole.ckpt"),
        "--metrics-out",
        str(tmp_path / "whole.csv"),
    ]
    split = [
        "stream",
        "--algo",
        "lasvm",
        *common_args(data_path),
        "--checkpoint",
        str(tmp_path / "split.ckpt"),
        "--checkpoint-every",
        "7",
        "--stop-after",
        "15",
        "--metrics-out",
        str(tmp_path / "split.csv"),
    ]

    assert main(whole) == EXIT_OK
    assert main(split) == EXIT_OK
    assert not (tmp_path / "split.csv").exists()
    assert main(["resume", "--from", str(tmp_path / "split.ckpt")]) == EXIT_OK

    assert (tmp_path / "split.csv").read_bytes() == (tmp_path / "whole.csv").read_bytes()


def test_evaluate_scores_a_saved_model(
    tmp_path: Path, data_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    model_out = tmp_path / "model.json"
    metrics_out = tmp_path / "eval.csv"
    main(["train", "--algo", "smo", *common_args(data_path), "--model-out", str(model_out)])

    code = main(
        [
            "evaluate",
            "--model",
            str(model_out),
            "--data",
            str(data_path),
            "--metrics-out",
            str(metrics_out),
        ]
    )

    assert code == EXIT_OK
    assert metrics_out.read_text(encoding="utf-8").splitlines()[1].startswith("evaluation,")
    assert "evaluation: Accuracy=" in capsys.readouterr().out


def test_gridsearch_with_the_smoke_grid(
    tmp_path: Path, data_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    out = tmp_path / "grid.csv"

    code = main(
        [
            "gridsearch",
            "--grid",
            str(PROJECT_ROOT / "src" / "config" / "smoke_grid.json"),
            "--algo",
            "batch",
            "--data",
            str(data_path),
            "--out",
            str(out),
        ]
    )

    assert code == EXIT_OK
    assert len(out.read_text(encoding="utf-8").splitlines()) == 13
    assert "(12 configs, 0 failed)" in capsys.readouterr().out


def test_curve_writes_one_row_per_checkpoint(tmp_path: Path, data_path: Path) -> None:
    out = tmp_path / "curve.csv"

    code = main(
        [
            "curve",
            "--algo",
            "isvm",
            *common_args(data_path),
            "--checkpoints",
            "8,16,32",
            "--out",
            str(out),
        ]
    )

    assert code == EXIT_OK
    lines = out.read_text(encoding="utf-8").splitlines()
    assert [line.split(",")[0] for line in lines[1:]] == ["8", "16", "32"]


def test_missing_data_file_is_a_data_error(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    code = main(["train", "--algo", "smo", "--data", str(tmp_path / "missing.txt")])

    assert code == EXIT_DATA
    assert capsys.readouterr().err.count("ERROR:") == 1


def test_malformed_data_is_a_data_error(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    path = tmp_path / "bad.txt"
    path.write_text("+1 1:0.5\n-1 1:x\n", encoding="utf-8")

    code = main(["train", "--algo", "smo", "--data", str(path)])

    assert code == EXIT_DATA
    assert "line 2" in capsys.readouterr().err


def test_corrupt_checkpoint_is_a_data_error(tmp_path: Path) -> None:
    path = tmp_path / "broken.ckpt"
    path.write_bytes(b"SSVM")

    assert main(["resume", "--from", str(path)]) == EXIT_DATA


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["train", "--algo", "perceptron"],
        ["curve", "--algo", "isvm", "--checkpoints", "5,x", "--out", "curve.csv"],
    ],
)
def test_usage_errors(argv: list[str], data_path: Path) -> None:
    if argv[:1] == ["curve"]:
        argv = [*argv, "--data", str(data_path)]

    assert main(argv) == EXIT_USAGE


def test_bad_kernel_and_bad_grid_are_usage_errors(tmp_path: Path, data_path: Path) -> None:
    grid = tmp_path / "grid.json"
    grid.write_text('{"C_values": [], "kernel_kinds": ["rbf"]}', encoding="utf-8")

    bad_kernel = ["train", "--algo", "smo", "--data", str(data_path), "--kernel", "laplace"]

    assert main(bad_kernel) == EXIT_USAGE
    assert main(["gridsearch", "--grid", str(grid), "--data", str(data_path)]) == EXIT_USAGE
