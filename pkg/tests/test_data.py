"""CIFAR-10 binary reader, splits, batching, synthetic images."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ujscc import data
from ujscc.nn.rng import seeded_rng


def write_fake_cifar(tmp_path, per_file=20, seed=0):
    """Valid CIFAR-10-format binary batches with random content."""
    rng = seeded_rng(seed)
    raw = {}
    for name in data.TRAIN_FILES + data.TEST_FILES:
        records = rng.integers(0, 256, size=(per_file, data.RECORD_BYTES), dtype=np.uint8)
        records[:, 0] = rng.integers(0, 10, size=per_file)
        (tmp_path / name).write_bytes(records.tobytes())
        raw[name] = records
    return raw


def test_loader_shapes_and_order(tmp_path):
    raw = write_fake_cifar(tmp_path, per_file=12)
    ds = data.load_cifar10(tmp_path, "train")
    assert ds.images.shape == (60, 3, 32, 32)
    assert ds.labels.shape == (60,)
    first = raw[data.TRAIN_FILES[0]]
    np.testing.assert_array_equal(ds.labels[:12], first[:, 0])
    # record order preserved: first image equals first record's pixels
    np.testing.assert_allclose(
        ds.images[0],
        first[0, 1:].reshape(3, 32, 32).astype(np.float64) / 127.5 - 1.0,
    )


def test_loader_byte_to_range_mapping(tmp_path):
    records = np.zeros((1, data.RECORD_BYTES), dtype=np.uint8)
    records[0, 1] = 0
    records[0, 2] = 255
    for name in data.TEST_FILES:
        (tmp_path / name).write_bytes(records.tobytes())
    ds = data.load_cifar10(tmp_path, "test")
    flat = ds.images.reshape(-1)
    assert flat[0] == -1.0
    assert abs(flat[1] - 1.0) < 1 / 255


def test_loader_roundtrip_bytes(tmp_path):
    raw = write_fake_cifar(tmp_path, per_file=5)
    ds = data.load_cifar10(tmp_path, "test")
    encoded = data.encode_cifar10(ds.images, ds.labels)
    assert encoded == raw[data.TEST_FILES[0]].tobytes()


def test_loader_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="data_batch_1.bin"):
        data.load_cifar10(tmp_path, "train")


def test_loader_truncated_file_reports_offset(tmp_path):
    write_fake_cifar(tmp_path, per_file=3)
    path = tmp_path / data.TEST_FILES[0]
    blob = path.read_bytes()
    path.write_bytes(blob[:-100])  # chop into the last record
    with pytest.raises(ValueError, match=f"truncated after byte {2 * data.RECORD_BYTES}"):
        data.load_cifar10(tmp_path, "test")


def test_loader_rejects_unknown_split(tmp_path):
    with pytest.raises(ValueError, match="split"):
        data.load_cifar10(tmp_path, "validation")


def test_split_sizes_disjoint_exhaustive():
    ds = data.synthetic_dataset(50, seed=1)
    train, val = data.split_train_val(ds, fraction=0.2, seed=9)
    assert len(train) == 40 and len(val) == 10
    stacked = np.concatenate([train.images, val.images])
    # every original image appears exactly once across the two splits
    orig = {img.tobytes() for img in ds.images}
    assert {img.tobytes() for img in stacked} == orig
    assert len(stacked) == len(ds)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.9), st.integers(0, 1000))
def test_split_fraction_property(fraction, seed):
    ds = data.synthetic_dataset(23, seed=2)
    train, val = data.split_train_val(ds, fraction, seed)
    assert len(train) + len(val) == 23
    assert len(val) == int(round(23 * fraction))


def test_split_seed_determinism():
    ds = data.synthetic_dataset(30, seed=3)
    t1, v1 = data.split_train_val(ds, 0.2, seed=5)
    t2, v2 = data.split_train_val(ds, 0.2, seed=5)
    assert np.array_equal(t1.images, t2.images)
    assert np.array_equal(v1.images, v2.images)


def test_batches_full_coverage_and_partial_tail():
    ds = data.synthetic_dataset(21, seed=4)
    got = list(data.batches(ds, batch_size=8, seed=0, epoch=0))
    assert [b.shape[0] for b in got] == [8, 8, 5]
    seen = {img.tobytes() for batch in got for img in batch}
    assert seen == {img.tobytes() for img in ds.images}


def test_batches_epoch_reshuffle_and_determinism():
    ds = data.synthetic_dataset(32, seed=5)
    e0a = np.concatenate(list(data.batches(ds, 8, seed=1, epoch=0)))
    e0b = np.concatenate(list(data.batches(ds, 8, seed=1, epoch=0)))
    e1 = np.concatenate(list(data.batches(ds, 8, seed=1, epoch=1)))
    assert np.array_equal(e0a, e0b)
    assert not np.array_equal(e0a, e1)


def test_batch_count_arithmetic():
    ds = data.synthetic_dataset(128, seed=6)
    assert sum(1 for _ in data.batches(ds, 64, 0, 0)) == 2


def test_synthetic_dataset_contract():
    ds = data.synthetic_dataset(7, seed=7)
    assert ds.images.shape == (7, 3, 32, 32)
    assert np.all(ds.images >= -1.0) and np.all(ds.images <= 1.0)
    again = data.synthetic_dataset(7, seed=7)
    assert np.array_equal(ds.images, again.images)
    assert not np.array_equal(ds.images, data.synthetic_dataset(7, seed=8).images)
