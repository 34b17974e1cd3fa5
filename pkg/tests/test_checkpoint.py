"""Checkpoint format: bit-exact round trips and corruption handling."""

import numpy as np
import pytest

from mixseg.checkpoint import (Checkpoint, CheckpointError, MAGIC,
                               load_checkpoint, save_checkpoint)
from mixseg.config import ModelConfig
from mixseg.model import build
from mixseg.optim import OptState


def make_checkpoint(seed=0):
    cfg = ModelConfig(trunk_width=3, num_pairs=4, mix_size=4, seed=seed)
    model = build(cfg)
    opt = OptState.for_params(model.params)
    rng = np.random.default_rng(seed)
    for name in opt.m:
        opt.m[name] = rng.standard_normal(opt.m[name].shape).astype(np.float32)
        opt.v[name] = rng.uniform(0, 1, opt.v[name].shape).astype(np.float32)
    opt.step = 17
    return Checkpoint(model_config=cfg, params=model.params, opt=opt,
                      epoch=3, rng_state=rng.bit_generator.state)


class TestRoundTrip:
    def test_bitwise_parameters_and_moments(self, tmp_path):
        ckpt = make_checkpoint()
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, ckpt)
        loaded = load_checkpoint(path)
        assert loaded.model_config == ckpt.model_config
        assert loaded.epoch == ckpt.epoch
        assert loaded.opt.step == ckpt.opt.step
        assert loaded.rng_state == ckpt.rng_state
        for name in ckpt.params:
            assert np.array_equal(loaded.params[name], ckpt.params[name])
            assert loaded.params[name].dtype == np.float32
            assert np.array_equal(loaded.opt.m[name], ckpt.opt.m[name])
            assert np.array_equal(loaded.opt.v[name], ckpt.opt.v[name])

    def test_save_is_deterministic(self, tmp_path):
        ckpt = make_checkpoint()
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(a, ckpt)
        save_checkpoint(b, ckpt)
        assert a.read_bytes() == b.read_bytes()

    def test_second_save_after_load_is_identical(self, tmp_path):
        ckpt = make_checkpoint()
        a = tmp_path / "a.ckpt"
        save_checkpoint(a, ckpt)
        again = tmp_path / "again.ckpt"
        save_checkpoint(again, load_checkpoint(a))
        assert a.read_bytes() == again.read_bytes()


class TestCorruption:
    def test_truncated_payload(self, tmp_path):
        ckpt = make_checkpoint()
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, ckpt)
        data = path.read_bytes()
        path.write_bytes(data[:-10])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, make_checkpoint())
        data = bytearray(path.read_bytes())
        data[:4] = b"NOPE"
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_unknown_version(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, make_checkpoint())
        data = bytearray(path.read_bytes())
        data[4:8] = (99).to_bytes(4, "little")
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, make_checkpoint())
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(CheckpointError, match="trailing"):
            load_checkpoint(path)

    def test_magic_constant(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, make_checkpoint())
        assert path.read_bytes()[:4] == MAGIC == b"M2XC"


class TestModelRestore:
    def test_model_forwardable_after_load(self, tmp_path, rng):
        from mixseg.tensor import Tensor
        ckpt = make_checkpoint(seed=4)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, ckpt)
        model = load_checkpoint(path).model()
        x = Tensor(rng.uniform(0, 1, (3, 64, 64)))
        masks = model.forward(x, x)
        assert masks[0].shape == (1, 64, 64)
