import sqlite3
import numpy as np
import pytest
from apiae import checkpoint
from apiae.checkpoint import CheckpointDB, load_checkpoint, save_checkpoint
from apiae.exceptions import DataError
from apiae.inference import InferenceNetwork
from apiae.model import LatentModel


def make_pair(decoder="mlp"):
    model = LatentModel(2, 2, 6, 5, 0.05, M=3, hidden=7, decoder=decoder, seed=4)
    net = InferenceNetwork(6, 2, 2, d_h=5, seed=4)
    return model, net


@pytest.mark.parametrize("decoder", ["mlp", "linear"])
def test_save_load_exact(tmp_path, decoder):
    model, net = make_pair(decoder)
    model.prior.mean = np.array([0.5, -0.5])
    fn = save_checkpoint(str(tmp_path / "ckpt.db"), model, net, extra_meta={"epoch": 7})
    loaded, loaded_net, meta = load_checkpoint(fn)
    assert meta["epoch"] == 7
    assert meta["decoder"] == decoder
    assert (loaded.d_z, loaded.d_u, loaded.d_x, loaded.K, loaded.M) == (2, 2, 6, 5, 3)
    assert loaded.dt == 0.05
    assert loaded_net.d_h == 5
    for name, value in model.params.items():
        assert np.array_equal(loaded.params[name], value), name
    for name, value in net.params.items():
        assert np.array_equal(loaded_net.params[name], value), name
    assert np.array_equal(loaded.prior.mean, model.prior.mean)


def test_tensor_access(tmp_path):
    model, net = make_pair()
    fn = save_checkpoint(str(tmp_path / "ckpt.db"), model, net)
    db = CheckpointDB(fn)
    assert "dynamics.A" in db.names()
    assert "inference.W_z" in db.names()
    assert db["dynamics.A"].shape == (3, 2, 2)
    assert set(db.tensors("decoder.")) == set(model.decoder.params)
    with pytest.raises(KeyError):
        db["nope"]
    db.close()


def test_no_overwrite_without_force(tmp_path):
    model, net = make_pair()
    fn = save_checkpoint(str(tmp_path / "ckpt.db"), model, net)
    with pytest.raises(ValueError):
        save_checkpoint(fn, model, net, force=False)


def test_missing_or_foreign_files(tmp_path):
    with pytest.raises(DataError):
        CheckpointDB(str(tmp_path / "missing.db"))

    fn = str(tmp_path / "other.db")
    conn = sqlite3.connect(fn)
    conn.execute("CREATE TABLE features (id text)")
    conn.commit()
    conn.close()
    with pytest.raises(DataError):
        load_checkpoint(fn)


def test_missing_meta_keys(tmp_path):
    fn = str(tmp_path / "partial.db")
    conn = sqlite3.connect(fn)
    conn.executescript(checkpoint.constants.CHECKPOINT_SCHEMA)
    conn.execute(checkpoint.constants._INSERT_META, ("d_z", "2"))
    conn.commit()
    conn.close()
    with pytest.raises(DataError):
        CheckpointDB(fn)
