"""Checkpoint container: byte-exact round trips, system rebuild."""

import numpy as np
import pytest

from ujscc.checkpoint import (
    load_checkpoint,
    load_system,
    load_te_bundle,
    save_checkpoint,
    save_system,
    save_te_checkpoints,
)
from ujscc.data import synthetic_dataset
from ujscc.nn.rng import seeded_rng
from ujscc.pipeline import TINY, build_system, transmit_image


def test_raw_roundtrip_values_and_meta(tmp_path):
    rng = seeded_rng(0)
    entries = [("a.w", rng.normal(size=(3, 4))), ("b", rng.normal(size=(7,)))]
    meta = {"scheme": "test", "note": 1}
    path = tmp_path / "x.ujsc"
    save_checkpoint(path, entries, meta)
    loaded, got_meta, order = load_checkpoint(path)
    assert got_meta == meta
    assert order == ["a.w", "b"]
    for name, arr in entries:
        assert np.array_equal(loaded[name], arr)


def test_save_load_save_byte_identical(tmp_path):
    system = build_system(TINY, "ujscc", seed=4)
    p1, p2 = tmp_path / "a.ujsc", tmp_path / "b.ujsc"
    save_system(p1, system, extra={"seed": 4})
    reloaded, meta = load_system(p1)
    save_system(p2, reloaded, extra=meta["extra"])
    assert p1.read_bytes() == p2.read_bytes()


def test_loaded_system_is_functionally_identical(tmp_path):
    system = build_system(TINY, "ujscc", seed=5)
    # move the state away from init so the test is not vacuous
    for _, arr in system.state_entries():
        arr += 0.01
    path = tmp_path / "m.ujsc"
    save_system(path, system)
    reloaded, _ = load_system(path)
    x = synthetic_dataset(1, 6).images[0]
    a = transmit_image(system, x, 8.0, seeded_rng(7))
    b = transmit_image(reloaded, x, 8.0, seeded_rng(7))
    assert np.array_equal(a.x_hat, b.x_hat)
    assert np.array_equal(a.z, b.z)


def test_magic_and_version_checks(tmp_path):
    path = tmp_path / "bad.ujsc"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(path)
    save_checkpoint(path, [("x", np.zeros(2))], {})
    blob = bytearray(path.read_bytes())
    blob[4] = 9  # version
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(path)


def test_te_bundle_roundtrip(tmp_path):
    system = build_system(TINY, "te", seed=8)
    paths = save_te_checkpoints(tmp_path, system)
    assert [p.name for p in paths] == ["te_k1.ujsc", "te_k2.ujsc", "te_k3.ujsc"]
    bundle, meta = load_te_bundle(paths)
    assert meta["scheme"] == "te"
    x = synthetic_dataset(1, 9).images[0]
    a = transmit_image(system, x, 25.0, seeded_rng(10))
    b = transmit_image(bundle, x, 25.0, seeded_rng(10))
    assert np.array_equal(a.x_hat, b.x_hat)


def test_te_single_slice_serves_only_its_order(tmp_path):
    system = build_system(TINY, "te", seed=11)
    paths = save_te_checkpoints(tmp_path, system)
    single, meta = load_system(paths[1])
    assert meta["te_index"] == 2
    x = synthetic_dataset(1, 12).images[0]
    result = transmit_image(single, x, 8.0, seeded_rng(13))  # band 2
    assert result.k == 2
    with pytest.raises(ValueError, match="serves order"):
        transmit_image(single, x, 25.0, seeded_rng(13))  # band 3


def test_incomplete_bundle_rejected(tmp_path):
    system = build_system(TINY, "te", seed=14)
    paths = save_te_checkpoints(tmp_path, system)
    with pytest.raises(ValueError, match="incomplete"):
        load_te_bundle(paths[:2])


def test_save_system_rejects_bundle(tmp_path):
    system = build_system(TINY, "te", seed=15)
    with pytest.raises(ValueError, match="per order"):
        save_system(tmp_path / "no.ujsc", system)
