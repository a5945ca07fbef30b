import numpy as np
import pytest

from bfseg.io import load_checkpoint, read_png, save_checkpoint, write_png
from bfseg.model import BFSegModel, ModelConfig
from bfseg.training import load_model, save_model


def test_checkpoint_round_trip(tmp_path):
    model = BFSegModel(ModelConfig(seed=4, width=16))
    save_model(tmp_path / "a.ckpt", model, {"epoch": 3})
    loaded = load_model(tmp_path / "a.ckpt")
    assert loaded.config.to_dict() == model.config.to_dict()
    assert list(loaded.params) == list(model.params)
    for k in model.params:
        assert loaded.params[k].dtype == model.params[k].dtype
        assert np.array_equal(loaded.params[k], model.params[k])
    assert load_checkpoint(tmp_path / "a.ckpt")[2] == {"epoch": 3}


def test_checkpoint_bytes_deterministic(tmp_path):
    params = {"w": np.arange(6.0).reshape(2, 3), "b": np.zeros(3, np.float32)}
    save_checkpoint(tmp_path / "1.ckpt", params, {"x": 1})
    save_checkpoint(tmp_path / "2.ckpt", {k: v.copy() for k, v in params.items()}, {"x": 1})
    assert (tmp_path / "1.ckpt").read_bytes() == (tmp_path / "2.ckpt").read_bytes()


def test_not_a_checkpoint(tmp_path):
    import zipfile

    with zipfile.ZipFile(tmp_path / "x.zip", "w") as zf:
        zf.writestr("header.json", '{"format": "other"}')
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "x.zip")


def test_png_round_trip(tmp_path):
    a = np.random.default_rng(0).integers(0, 256, (8, 8, 3)).astype(np.uint8)
    write_png(tmp_path / "a.png", a)
    assert np.array_equal(read_png(tmp_path / "a.png"), a)
    with pytest.raises(TypeError):
        write_png(tmp_path / "b.png", a.astype(float))
