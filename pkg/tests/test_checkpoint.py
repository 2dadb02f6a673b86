import numpy as np
import pytest

from pose2press.autodiff import (
    AdamState,
    Parameter,
    adam_step,
    load_checkpoint,
    load_into,
    save_checkpoint,
)
from pose2press.errors import DataError


def make_params(rng):
    return [
        Parameter(rng.normal(size=(3, 4)).astype(np.float32), name="stem.fc.weight"),
        Parameter(rng.normal(size=(4,)).astype(np.float32), name="stem.fc.bias"),
        Parameter(rng.normal(size=(2, 2, 3)).astype(np.float32), name="block1.conv5x5.depthwise"),
    ]


def test_round_trip_values_and_names(tmp_path):
    params = make_params(np.random.default_rng(0))
    path = tmp_path / "model.p2p"
    save_checkpoint(path, params)
    arrays, optimizer = load_checkpoint(path)
    assert optimizer is None
    assert list(arrays) == [p.name for p in params]
    for p in params:
        assert np.array_equal(arrays[p.name], p.data)


def test_magic_bytes(tmp_path):
    path = tmp_path / "model.p2p"
    save_checkpoint(path, make_params(np.random.default_rng(1)))
    assert path.read_bytes()[:4] == b"P2P1"


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(DataError):
        load_checkpoint(path)


def test_optimizer_state_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    params = make_params(rng)
    state = AdamState(learning_rate=1e-3)
    for p in params:
        p.grad = rng.normal(size=p.data.shape).astype(np.float32)
    adam_step(params, state)
    path = tmp_path / "model.p2p"
    save_checkpoint(path, params, state)
    _, loaded = load_checkpoint(path)
    assert loaded.step == 1
    assert loaded.learning_rate == 1e-3
    for got, expect in zip(loaded.m, state.m):
        assert np.allclose(got, expect, atol=1e-7)


def test_load_into_restores_model(tmp_path):
    rng = np.random.default_rng(3)
    params = make_params(rng)
    path = tmp_path / "model.p2p"
    save_checkpoint(path, params)
    fresh = make_params(np.random.default_rng(99))
    load_into(fresh, path)
    for a, b in zip(fresh, params):
        assert np.array_equal(a.data, b.data)


def test_load_into_name_mismatch(tmp_path):
    params = make_params(np.random.default_rng(4))
    path = tmp_path / "model.p2p"
    save_checkpoint(path, params)
    other = [Parameter(np.zeros(2, dtype=np.float32), name="unknown")]
    with pytest.raises(DataError):
        load_into(other, path)


def test_duplicate_names_rejected(tmp_path):
    params = [Parameter(np.zeros(1), name="a"), Parameter(np.zeros(1), name="a")]
    with pytest.raises(DataError):
        save_checkpoint(tmp_path / "dup.p2p", params)


def test_float64_saved_as_float32(tmp_path):
    p = Parameter(np.array([1.0 + 1e-12]), name="w", dtype=np.float64)
    path = tmp_path / "model.p2p"
    save_checkpoint(path, [p])
    arrays, _ = load_checkpoint(path)
    assert arrays["w"].dtype == np.float32
