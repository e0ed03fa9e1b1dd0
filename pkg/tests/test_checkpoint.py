import struct

import numpy as np
import pytest

from bridgeplan.core import Rng
from bridgeplan.errors import CheckpointFormatError
from bridgeplan.nn import checkpoint
from bridgeplan.nn.model import ArchSpec, init

ARCH = ArchSpec(levels=2, widths=(4, 8), time_embed_dim=4, cond_dim=4, kernel=3)


@pytest.fixture
def model():
    m = init(ARCH, 2, Rng(0))
    rng = np.random.default_rng(0)
    m.params = {k: rng.normal(size=v.shape) for k, v in m.params.items()}
    m.meta = {"length": 8, "note": "x"}
    return m


def test_round_trip_matches_at_f32_precision(model, tmp_path):
    path = tmp_path / "m.ckpt"
    checkpoint.save(model, path)
    back = checkpoint.load(path)
    assert back.arch == model.arch and back.d == model.d and back.meta == model.meta
    rng = np.random.default_rng(1)
    t, x, task = rng.uniform(0, 1, 2), rng.normal(size=(2, 8, 6)), rng.uniform(-1, 1, (2, 4))
    as_f32 = init(ARCH, 2, Rng(0))
    as_f32.params = {k: v.astype(np.float32).astype(np.float64) for k, v in model.params.items()}
    for a, b in zip(back.predict(t, x, task), as_f32.predict(t, x, task)):
        assert np.array_equal(a, b)
    for a, b in zip(back.predict(t, x, task), model.predict(t, x, task)):
        assert np.allclose(a, b, rtol=1e-4, atol=1e-4)


def test_bytes_are_deterministic(model):
    assert checkpoint.to_bytes(model) == checkpoint.to_bytes(model)
    assert checkpoint.to_bytes(checkpoint.from_bytes(checkpoint.to_bytes(model))) == checkpoint.to_bytes(model)


def test_header_layout(model):
    buf = checkpoint.to_bytes(model)
    assert buf[:4] == b"XFMP"
    assert struct.unpack("<H", buf[4:6])[0] == checkpoint.VERSION


def test_bad_magic(model):
    buf = checkpoint.to_bytes(model)
    with pytest.raises(CheckpointFormatError):
        checkpoint.from_bytes(b"NOPE" + buf[4:])


def test_version_mismatch(model):
    buf = bytearray(checkpoint.to_bytes(model))
    buf[4:6] = struct.pack("<H", checkpoint.VERSION + 1)
    with pytest.raises(CheckpointFormatError):
        checkpoint.from_bytes(bytes(buf))


@pytest.mark.parametrize("cut", [3, 10, 100, -1])
def test_truncated(model, cut):
    buf = checkpoint.to_bytes(model)
    with pytest.raises(CheckpointFormatError):
        checkpoint.from_bytes(buf[:cut])


def test_trailing_bytes(model):
    with pytest.raises(CheckpointFormatError):
        checkpoint.from_bytes(checkpoint.to_bytes(model) + b"\0")


def test_tensor_set_must_match_arch(model):
    model.params.pop(sorted(model.params)[0])
    with pytest.raises(CheckpointFormatError):
        checkpoint.from_bytes(checkpoint.to_bytes(model))
