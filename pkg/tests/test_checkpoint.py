import struct

import numpy as np
import pytest

from dyhg import checkpoint
from dyhg.dhcm import VARIANTS, DhcmConfig
from dyhg.errors import CheckpointError
from dyhg.model import ModelConfig, init_params
from dyhg.numerics import Rng


@pytest.fixture(params=VARIANTS)
def model(request):
    cfg = ModelConfig(d=7, num_classes=3, hidden=5, leaky_slope=0.02,
                      dhcm=DhcmConfig(4, 0.15, request.param, eval_noise=True))
    return cfg, init_params(cfg, Rng(1))


def test_round_trip_is_byte_exact(tmp_path, model):
    cfg, params = model
    checkpoint.save(tmp_path / "m.ckpt", cfg, params)
    cfg2, params2 = checkpoint.load(tmp_path / "m.ckpt")
    assert cfg2 == cfg
    for name in cfg.shapes():
        assert params2[name].value.tobytes() == params[name].value.tobytes()
    assert checkpoint.dumps(cfg2, params2) == (tmp_path / "m.ckpt").read_bytes()


def test_layout_header(model):
    cfg, params = model
    blob = checkpoint.dumps(cfg, params)
    assert blob[:8] == b"DYHGCKPT"
    assert struct.unpack_from("<I", blob, 8)[0] == 1
    (n,) = struct.unpack_from("<I", blob, checkpoint._HEAD.size)
    assert blob[checkpoint._HEAD.size + 4:checkpoint._HEAD.size + 4 + n] == b"W1"


def test_corrupt_checkpoints(model):
    cfg, params = model
    blob = checkpoint.dumps(cfg, params)
    for bad in (blob[:10], blob[:-3], b"NOTACKPT" + blob[8:], blob + b"\0",
                blob[:8] + struct.pack("<I", 9) + blob[12:]):
        with pytest.raises(CheckpointError):
            checkpoint.loads(bad)
