import struct

import numpy as np
import pytest

from stochprune.checkpoint import (MAGIC, CheckpointError, checkpoint_bytes,
                                   load_checkpoint, load_model,
                                   save_checkpoint)
from stochprune.net import build_residual_mlp


def sample_model(seed=0):
    return build_residual_mlp(6, 8, 2, 4, rng=np.random.default_rng(seed))


def sample_meta():
    return {
        "model": {"input_dim": 6, "hidden_width": 8, "blocks": 2,
                  "classes": 4, "has_bias": True},
        "optimizer": {"name": "adam", "mu": 0.01},
        "step": 17,
        "rng_state": None,
        "dataset": {"kind": "spirals", "seed": 0},
    }


class TestRoundTrip:
    def test_save_load_save_byte_identical(self, tmp_path):
        model = sample_model()
        path = tmp_path / "model.sgap"
        save_checkpoint(path, model, sample_meta())
        first = path.read_bytes()
        loaded, meta = load_model(path)
        save_checkpoint(path, loaded, {k: v for k, v in meta.items()
                                       if k != "registry"})
        assert path.read_bytes() == first

    def test_parameters_bit_exact(self, tmp_path):
        model = sample_model(3)
        path = tmp_path / "model.sgap"
        save_checkpoint(path, model, sample_meta())
        loaded, _ = load_model(path)
        for (pa, a), (pb, b) in zip(model.parameters(), loaded.parameters()):
            assert pa == pb
            assert a.tobytes() == b.tobytes()

    def test_registry_order_preserved(self, tmp_path):
        model = sample_model()
        path = tmp_path / "model.sgap"
        save_checkpoint(path, model, sample_meta())
        meta, params = load_checkpoint(path)
        assert [p for p, _ in meta["registry"]] == \
            [p for p, _ in model.parameters()]

    def test_payload_length_matches_parameter_count(self, tmp_path):
        model = sample_model()
        blob = checkpoint_bytes(model, sample_meta())
        total = sum(p.size for _, p in model.parameters())
        meta_len = struct.unpack("<Q", blob[8:16])[0]
        payload_len = struct.unpack(
            "<Q", blob[16 + meta_len:24 + meta_len])[0]
        assert payload_len == 4 * total


class TestCorruption:
    def write(self, tmp_path, mutate):
        model = sample_model()
        blob = bytearray(checkpoint_bytes(model, sample_meta()))
        mutate(blob)
        path = tmp_path / "bad.sgap"
        path.write_bytes(bytes(blob))
        return path

    def test_bad_magic(self, tmp_path):
        path = self.write(tmp_path, lambda b: b.__setitem__(0, ord("X")))
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_bad_version(self, tmp_path):
        path = self.write(tmp_path, lambda b: b.__setitem__(4, 99))
        with pytest.raises(CheckpointError, match="version 99"):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path):
        model = sample_model()
        blob = checkpoint_bytes(model, sample_meta())
        path = tmp_path / "bad.sgap"
        path.write_bytes(blob[:-10])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path):
        model = sample_model()
        path = tmp_path / "bad.sgap"
        path.write_bytes(checkpoint_bytes(model, sample_meta()) + b"xx")
        with pytest.raises(CheckpointError, match="trailing"):
            load_checkpoint(path)

    def test_garbage_metadata(self, tmp_path):
        def mutate(blob):
            blob[16] = 0xFF  # first metadata byte: breaks JSON decode

        path = self.write(tmp_path, mutate)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_magic_matches_container_tag(self):
        assert MAGIC == b"SGAP"
