from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

from src.data.pipe_scan import PipeScanConfig, generate_pipe_scan
from src.data.sparse_text import load_dataset, load_sparse_text, write_sparse_text
from src.data.splits import SplitSpec, shuffle_epoch, split, split_positions, stream_order
from src.svm.core import Dataset
from src.svm.errors import ConfigurationError, DataFormatError, EmptyDatasetError


def write(tmp_path: Path, text: str, name: str = "data.txt") -> Path:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_sparse_line_is_densified(tmp_path: Path) -> None:
    dataset = load_sparse_text(write(tmp_path, "+1 1:0.5 3:2.0\n-1 2:1\n"))

    assert dataset.features.tolist() == [[0.5, 0.0, 2.0], [0.0, 1.0, 0.0]]
    assert dataset.labels.tolist() == [1, -1]
    assert dataset.indices.tolist() == [0, 1]


def test_comments_and_blank_lines_are_skipped(tmp_path: Path) -> None:
    dataset = load_sparse_text(write(tmp_path, "# header\n\n+1 1:1  # trailing\n-1 1:2\n"))

    assert dataset.features.tolist() == [[1.0], [2.0]]


def test_empty_file_is_rejected(tmp_path: Path) -> None:
    with pytest.raises(EmptyDatasetError):
        load_sparse_text(write(tmp_path, "# nothing here\n"))


@pytest.mark.parametrize(
    ("text", "message"),
    [
        ("+1 1:0.5\n-1 2:1 2:3\n", "line 2: duplicate feature index 2"),
        ("+1 0:0.5\n", "line 1: feature index 0"),
        ("+1 1:abc\n", "line 1: malformed feature"),
        ("+1 1\n", "line 1: expected <index>:<value>"),
        ("+1 1:nan\n", "line 1: feature 1 is not finite"),
        ("2 1:1\n", r"line 1: label '2' must be \+1 or -1"),
    ],
)
def test_malformed_lines_name_the_line(tmp_path: Path, text: str, message: str) -> None:
    with pytest.raises(DataFormatError, match=message):
        load_sparse_text(write(tmp_path, text))


def test_zero_labels_need_remapping(tmp_path: Path) -> None:
    path = write(tmp_path, "1 1:1\n0 1:2\n")

    with pytest.raises(DataFormatError, match="remap_binary"):
        load_sparse_text(path)
    assert load_sparse_text(path, remap_binary=True).labels.tolist() == [1, -1]


def test_written_files_load_back_unchanged(tmp_path: Path) -> None:
    rng = np.random.default_rng(0)
    features = rng.normal(size=(20, 5))
    features[features < 0] = 0.0
    features[:, -1] = 0.0
    dataset = Dataset(features, np.where(rng.random(20) < 0.5, 1, -1))
    path = tmp_path / "roundtrip.txt"

    write_sparse_text(dataset, path)
    loaded = load_sparse_text(path)

    assert loaded.features.shape == (20, 5)
    assert np.allclose(loaded.features, dataset.features, rtol=0, atol=1e-12)
    assert loaded.labels.tolist() == dataset.labels.tolist()


def test_dense_csv_with_a_header(tmp_path: Path) -> None:
    path = write(tmp_path, "label,a,b\n1,0.5,1.5\n0,2.0,3.0\n", name="data.csv")

    dataset = load_dataset(path, remap_binary=True)

    assert dataset.features.tolist() == [[0.5, 1.5], [2.0, 3.0]]
    assert dataset.labels.tolist() == [1, -1]


def test_dense_csv_errors(tmp_path: Path) -> None:
    with pytest.raises(EmptyDatasetError):
        load_dataset(write(tmp_path, "", name="empty.csv"))
    with pytest.raises(DataFormatError, match="line 2"):
        load_dataset(write(tmp_path, "1,0.5\n-1,x\n", name="bad.csv"))


def test_thirty_percent_train_split_of_a_large_stream() -> None:
    train, validation, test = split_positions(11785, SplitSpec(validation_fraction=0.0))

    assert (train.size, validation.size, test.size) == (3535, 0, 8250)


def test_split_of_ten_samples() -> None:
    train, validation, test = split_positions(10, SplitSpec(validation_fraction=0.0))

    assert (train.size, test.size) == (3, 7)
    assert validation.size == 0


def test_validation_is_carved_from_the_train_pool() -> None:
    train, validation, test = split_positions(1000, SplitSpec(seed=3))

    assert (train.size, validation.size, test.size) == (240, 60, 700)
    combined = np.concatenate([train, validation, test])
    assert sorted(combined.tolist()) == list(range(1000))


def test_split_is_deterministic_per_seed() -> None:
    dataset = Dataset(np.arange(200.0).reshape(100, 2), np.where(np.arange(100) % 3, 1, -1))

    first = split(dataset, SplitSpec(seed=9))
    second = split(dataset, SplitSpec(seed=9))
    other = split(dataset, SplitSpec(seed=10))

    for left, right in zip(first, second, strict=True):
        assert np.array_equal(left.indices, right.indices)
    assert not np.array_equal(first[0].indices, other[0].indices)


def test_split_with_an_empty_partition_is_rejected() -> None:
    with pytest.raises(ConfigurationError, match="empty train or test"):
        split_positions(2, SplitSpec())


def test_split_spec_validation() -> None:
    with pytest.raises(ValidationError):
        SplitSpec(train_fraction=1.0)


def test_shuffle_epoch_is_a_seeded_permutation() -> None:
    order = shuffle_epoch(50, epoch_index=2, seed=7)

    assert sorted(order.tolist()) == list(range(50))
    assert np.array_equal(order, shuffle_epoch(50, epoch_index=2, seed=7))
    assert not np.array_equal(order, shuffle_epoch(50, epoch_index=3, seed=7))
    assert shuffle_epoch(1, epoch_index=0, seed=0).tolist() == [0]


def test_shuffle_epoch_accepts_numpy_sizes_and_datasets() -> None:
    expected = shuffle_epoch(5, epoch_index=0, seed=3)
    dataset = Dataset(features=np.zeros((5, 1)), labels=np.ones(5, dtype=np.int64))

    assert np.array_equal(shuffle_epoch(np.int64(5), epoch_index=0, seed=3), expected)
    assert np.array_equal(shuffle_epoch(dataset, epoch_index=0, seed=3), expected)
    with pytest.raises(TypeError):
        shuffle_epoch(5.0, epoch_index=0, seed=3)  # type: ignore[arg-type]


def test_stream_order_chunks_epochs_and_repeats_passes() -> None:
    epochs = stream_order(25, epoch_size=10, seed=1, passes=2)

    assert [len(epoch) for epoch in epochs] == [10, 10, 5, 10, 10, 5]
    assert sorted(epochs[1].tolist()) == list(range(10, 20))
    assert sorted(np.concatenate(epochs[3:]).tolist()) == list(range(25))
    # Each epoch is shuffled by its global index, so the second pass differs.
    assert not np.array_equal(epochs[0], epochs[3])


def test_generator_shape_and_determinism() -> None:
    config = PipeScanConfig(n_samples=50, beams_per_revolution=36, seed=4)

    first = generate_pipe_scan(config)
    second = generate_pipe_scan(config)

    assert first.features.shape == (50, 36)
    assert np.array_equal(first.features, second.features)
    assert np.array_equal(first.labels, second.labels)
    assert (first.features >= 0).all()


def test_generator_without_defects_labels_everything_healthy() -> None:
    dataset = generate_pipe_scan(PipeScanConfig(n_samples=40, defect_rate=0.0))

    assert (dataset.labels == 1).all()


def test_noise_free_defects_have_the_configured_shape() -> None:
    config = PipeScanConfig(
        n_samples=60,
        beams_per_revolution=36,
        noise_sigma=0.0,
        defect_rate=0.5,
        defect_depth_range=(0.1, 0.2),
        defect_width_range=(3, 6),
        seed=1,
    )

    dataset = generate_pipe_scan(config)

    for features, label in zip(dataset.features, dataset.labels, strict=True):
        deviation = np.abs(features - 1.0)
        if label == 1:
            assert np.all(deviation == 0.0)
            continue
        touched = deviation > 0
        assert 3 <= touched.sum() <= 6
        assert np.allclose(deviation[touched], deviation[touched][0])
        assert 0.1 - 1e-12 <= deviation[touched][0] <= 0.2 + 1e-12
    assert (dataset.labels == -1).any()


def test_generator_rejects_impossible_ranges() -> None:
    with pytest.raises(ValidationError, match="defect_depth_range"):
        PipeScanConfig(defect_depth_range=(0.5, 1.5))
    with pytest.raises(ValidationError, match="defect_width_range"):
        PipeScanConfig(beams_per_revolution=10, defect_width_range=(3, 20))
