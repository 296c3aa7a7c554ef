import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from georeg.checkpoint import (MAGIC, CheckpointError, decode_model, encode_model,
                               load_checkpoint, save_checkpoint)
from georeg.data import Dataset
from georeg.flow import ACTIVATIONS, LayerParams, ModelState, forward
from georeg.linear_init import HeadParams
from georeg.trainer import StageConfig, TrainConfig, evaluate, train


def random_model(rng, n=5, d=4, m=3, act="tanh", kinds=("plain", "conv", "plain")):
    layers = []
    for kind in kinds:
        if kind == "conv":
            V0, grid, window = rng.standard_normal(9), (2, 2), 3
        else:
            V0, grid, window = rng.standard_normal((d, d)), (0, 0), 0
        layers.append(LayerParams(kind, V0, [rng.standard_normal((d, n))], rng.standard_normal(d),
                                  float(rng.uniform(0, 2)), grid, window))
    return ModelState(rng.standard_normal((d, n)),
                      HeadParams(rng.standard_normal((m, d)), rng.standard_normal(m)),
                      layers, ACTIVATIONS[act])


def test_save_load_save_identical_bytes(tmp_path, rng):
    model = random_model(rng)
    a, b = tmp_path / "a.greg", tmp_path / "b.greg"
    save_checkpoint(model, a)
    loaded = load_checkpoint(a)
    save_checkpoint(loaded, b)
    assert a.read_bytes() == b.read_bytes()
    np.testing.assert_array_equal(loaded.U, model.U)
    for x, y in zip(loaded.layers, model.layers):
        assert (x.kind, x.mu, x.grid, x.window) == (y.kind, y.mu, y.grid, y.window)
        np.testing.assert_array_equal(x.V0, y.V0)
        np.testing.assert_array_equal(x.Vk[0], y.Vk[0])
    X = rng.uniform(0, 1, (5, 7))
    assert forward(loaded, X).tobytes() == forward(model, X).tobytes()
    # atomic writes leave no temporary files behind
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.greg", "b.greg"]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), act=st.sampled_from(sorted(ACTIVATIONS)),
       kinds=st.lists(st.sampled_from(["plain", "conv"]), max_size=4))
def test_encode_decode_round_trip(seed, act, kinds):
    blob = encode_model(random_model(np.random.default_rng(seed), act=act, kinds=kinds))
    assert encode_model(decode_model(blob)) == blob


def test_header_layout(rng):
    model = random_model(rng, kinds=())
    blob = encode_model(model)
    assert blob[:4] == MAGIC
    assert struct.unpack("<7I", blob[4:32]) == (1, 5, 4, 3, 1, ACTIVATIONS["tanh"].id, 0)
    U = np.frombuffer(blob[32:32 + 8 * 20], dtype="<f8").reshape(4, 5)
    np.testing.assert_array_equal(U, model.U)
    assert len(blob) == 32 + 8 * (20 + 12 + 3)


def test_corrupted_magic(rng):
    blob = bytearray(encode_model(random_model(rng)))
    blob[0:4] = b"XXXX"
    with pytest.raises(CheckpointError, match="magic"):
        decode_model(bytes(blob))


def test_version_mismatch(rng):
    blob = bytearray(encode_model(random_model(rng)))
    blob[4:8] = struct.pack("<I", 2)
    with pytest.raises(CheckpointError, match="version"):
        decode_model(bytes(blob))


@pytest.mark.parametrize("cut", [0, 3, 10, 40, -1])
def test_truncation(rng, cut):
    blob = encode_model(random_model(rng))
    with pytest.raises(CheckpointError, match="truncated"):
        decode_model(blob[:cut])


def test_trailing_bytes_and_bad_ids(rng):
    blob = encode_model(random_model(rng))
    with pytest.raises(CheckpointError, match="trailing"):
        decode_model(blob + b"\0")
    bad_act = bytearray(blob)
    bad_act[24:28] = struct.pack("<I", 99)
    with pytest.raises(CheckpointError, match="activation"):
        decode_model(bytes(bad_act))
    bad_kind = bytearray(blob)
    bad_kind[32 + 8 * (20 + 12 + 3)] = 7
    with pytest.raises(CheckpointError, match="kind"):
        decode_model(bytes(bad_kind))


def test_trained_model_reload_reproduces_accuracy(tmp_path, rng):
    X = rng.uniform(0, 1, (9, 300))
    labels = np.argmax(rng.standard_normal((3, 9)) @ X, axis=0)
    data = Dataset(X[:, :200], np.eye(3)[:, labels[:200]])
    test = Dataset(X[:, 200:], np.eye(3)[:, labels[200:]])
    stages = [StageConfig(kind="conv", iterations=3, window=3, mu=0.5, update_head=True),
              StageConfig(iterations=3, mu=0.2)]
    model, rows = train(data, test, TrainConfig(d=9, stages=stages))
    path = tmp_path / "model.greg"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert abs(evaluate(loaded, test)[1] - rows[-1].test_acc) <= 1e-12
    assert evaluate(loaded, data) == evaluate(model, data)
