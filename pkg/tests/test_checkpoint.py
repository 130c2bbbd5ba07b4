"""
Tests for the binary checkpoint format
"""

import struct

import numpy as np
import pytest
import torch

from probeseg.checkpoint import (
    MAGIC,
    Checkpoint,
    capture,
    decode,
    encode,
    load_checkpoint,
    load_model,
    restore,
    save_checkpoint,
)
from probeseg.exceptions import CheckpointError, CheckpointVersionError
from probeseg.predictor import ModelConfig, backward, build_model, forward, make_optimizer


def _sample() -> Checkpoint:
    return Checkpoint(
        step=42,
        config={"train": {"seed": 3}},
        tensors={
            "a": np.arange(6, dtype=np.float32).reshape(2, 3),
            "scalar": np.array(1.5, dtype=np.float32),
        },
    )


def _trained(rng):
    model = build_model(ModelConfig.tiny(), seed=0)
    optimizer = make_optimizer(model)
    rgb = rng.uniform(size=(2, 48, 48, 3))
    depth = rng.uniform(0.2, 1.0, size=(2, 48, 48))
    fp = forward(model, rgb, depth, mode="train")
    backward(fp, rng.normal(size=tuple(fp.s.shape)), np.zeros(fp.m.shape), np.zeros(fp.e.shape))
    optimizer.step()
    return model, optimizer, rgb, depth


class TestEncoding:
    def test_header_layout(self):
        data = encode(_sample())
        assert data[:4] == MAGIC
        version, step = struct.unpack("<IQ", data[4:16])
        assert (version, step) == (1, 42)

    def test_decode_restores_contents(self):
        ckpt = decode(encode(_sample()))
        assert ckpt.step == 42
        assert ckpt.config == {"train": {"seed": 3}}
        assert np.array_equal(ckpt.tensors["a"], _sample().tensors["a"])
        assert ckpt.tensors["scalar"].shape == ()

    def test_bad_magic(self):
        data = b"XXXX" + encode(_sample())[4:]
        with pytest.raises(CheckpointError, match="not a probeseg checkpoint"):
            decode(data)

    def test_future_version(self):
        data = bytearray(encode(_sample()))
        data[4:8] = struct.pack("<I", 2)
        with pytest.raises(CheckpointVersionError):
            decode(bytes(data))

    def test_truncated(self):
        data = encode(_sample())
        with pytest.raises(CheckpointError, match="truncated"):
            decode(data[:-5])

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="does not exist"):
            load_checkpoint(tmp_path / "missing.ckpt")


class TestModelState:
    def test_load_model_reproduces_outputs(self, tmp_path, rng):
        model, optimizer, rgb, depth = _trained(rng)
        path = save_checkpoint(tmp_path / "m.ckpt", model, optimizer, step=7)
        loaded, ckpt = load_model(path)
        assert ckpt.step == 7
        assert ckpt.model_config == ModelConfig.tiny()
        a = forward(model, rgb[0], depth[0]).outputs(0)
        b = forward(loaded, rgb[0], depth[0]).outputs(0)
        assert np.array_equal(a.s, b.s)
        assert np.array_equal(a.e, b.e)

    def test_optimizer_state_round_trip(self, rng):
        model, optimizer, _, _ = _trained(rng)
        ckpt = decode(encode(capture(model, optimizer, step=1)))
        fresh = build_model(ModelConfig.tiny(), seed=9)
        fresh_opt = make_optimizer(fresh)
        restore(ckpt, fresh, fresh_opt)
        p_old = model.score_head.bias
        p_new = fresh.score_head.bias
        assert torch.equal(p_old.detach(), p_new.detach())
        assert torch.equal(optimizer.state[p_old]["exp_avg"], fresh_opt.state[p_new]["exp_avg"])

    def test_config_echo(self, rng):
        model = build_model(ModelConfig.tiny())
        ckpt = capture(model, None, step=0, config={"train": {"seed": 1}})
        assert ckpt.config["model"]["input_size"] == 48
        assert ckpt.config["train"] == {"seed": 1}

    def test_mismatched_model(self):
        ckpt = capture(build_model(ModelConfig.tiny()), None, step=0)
        del ckpt.tensors["trunk.0.weight"]
        with pytest.raises(CheckpointError, match="does not match"):
            restore(ckpt, build_model(ModelConfig.tiny()))
