"""
sqlite-backed checkpoints holding every parameter tensor of a model and
inference network, plus the metadata needed to rebuild them.
"""
import os
import sqlite3
import numpy as np
from apiae import constants
from apiae import helpers
from apiae.exceptions import DataError
from apiae.inference import InferenceNetwork
from apiae.model import LatentModel
from apiae.version import version


class CheckpointDB(object):
    def __init__(self, dbfn, pragmas=constants.default_pragmas):
        """
        Read access to an existing checkpoint.

        Parameters
        ----------
        dbfn : str or sqlite3.Connection

        pragmas : dict
            See constants.default_pragmas.
        """
        if isinstance(dbfn, sqlite3.Connection):
            self.conn = dbfn
            self.dbfn = None
        else:
            if not os.path.exists(dbfn):
                raise DataError("checkpoint %s does not exist" % dbfn)
            self.dbfn = dbfn
            self.conn = sqlite3.connect(dbfn)
        self.conn.row_factory = sqlite3.Row
        self.set_pragmas(pragmas)
        try:
            self.meta = dict(
                (row["key"], helpers._unjsonify(row["value"]))
                for row in self.conn.execute("SELECT key, value FROM meta")
            )
        except sqlite3.DatabaseError as e:
            raise DataError("%s is not an apiae checkpoint: %s" % (dbfn, e))
        missing = [k for k in constants.checkpoint_meta_keys if k not in self.meta]
        if missing:
            raise DataError("checkpoint is missing meta keys: %s" % ", ".join(missing))

    def set_pragmas(self, pragmas):
        self.pragmas = pragmas
        c = self.conn.cursor()
        c.executescript(";\n".join(["PRAGMA %s=%s" % i for i in self.pragmas.items()]))
        self.conn.commit()

    def names(self):
        return [r["name"] for r in self.conn.execute("SELECT name FROM tensors ORDER BY name")]

    def __getitem__(self, name):
        row = self.conn.execute(
            "SELECT shape, payload FROM tensors WHERE name = ?", (name,)
        ).fetchone()
        if row is None:
            raise KeyError(name)
        shape = tuple(helpers._unjsonify(row["shape"]))
        return np.frombuffer(row["payload"], dtype="<f8").reshape(shape).astype(np.float64)

    def tensors(self, prefix=""):
        return dict((n, self[n]) for n in self.names() if n.startswith(prefix))

    def close(self):
        self.conn.close()


def save_checkpoint(dbfn, model, net, extra_meta=None, force=True):
    """
    Write `model` and `net` to the sqlite file `dbfn`.

    Parameters
    ----------
    extra_meta : dict or None
        Additional JSON-serializable entries for the meta table (e.g. epoch).

    force : bool
        Overwrite an existing file.
    """
    if os.path.exists(dbfn):
        if not force:
            raise ValueError("%s exists; use force=True to overwrite" % dbfn)
        os.unlink(dbfn)
    conn = sqlite3.connect(dbfn)
    c = conn.cursor()
    c.executescript(";\n".join(["PRAGMA %s=%s" % i for i in constants.default_pragmas.items()]))
    c.executescript(constants.CHECKPOINT_SCHEMA)

    meta = {
        "d_z": model.d_z,
        "d_u": model.d_u,
        "d_x": model.d_x,
        "d_h": net.d_h,
        "M": model.M,
        "K": model.K,
        "dt": model.dt,
        "hidden": model.hidden,
        "decoder": model.decoder_kind,
        "version": version,
    }
    meta.update(extra_meta or {})
    c.executemany(
        constants._INSERT_META,
        [(k, helpers._jsonify(v)) for k, v in sorted(meta.items())],
    )

    tensors = []
    tensors.extend(model.params.items())
    tensors.append(("prior.mean", model.prior.mean))
    tensors.append(("prior.log_std", model.prior.log_std))
    tensors.extend(net.params.items())
    c.executemany(
        constants._INSERT_TENSOR,
        [
            (
                name,
                helpers._jsonify(list(np.shape(value))),
                np.ascontiguousarray(value, dtype="<f8").tobytes(),
            )
            for name, value in tensors
        ],
    )
    conn.commit()
    conn.close()
    return dbfn


def load_checkpoint(dbfn):
    """
    Rebuild the model and network stored in `dbfn`.

    Returns
    -------
    model, net, meta
    """
    db = CheckpointDB(dbfn)
    try:
        meta = db.meta
        model = LatentModel(
            meta["d_z"],
            meta["d_u"],
            meta["d_x"],
            meta["K"],
            meta["dt"],
            M=meta["M"],
            hidden=meta["hidden"] or 128,
            decoder=meta["decoder"],
        )
        net = InferenceNetwork(meta["d_x"], meta["d_z"], meta["d_u"], d_h=meta["d_h"])
        model.set_params(db.tensors("dynamics."))
        model.set_params(db.tensors("decoder."))
        prior = db.tensors("prior.")
        if prior:
            model.prior.mean = prior["prior.mean"]
            model.prior.log_std = prior["prior.log_std"]
        net.set_params(db.tensors("inference."))
    finally:
        db.close()
    return model, net, meta
