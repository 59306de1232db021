CHECKPOINT_SCHEMA = """

CREATE TABLE meta (
    key text,
    value text,
    primary key (key)
    );

CREATE TABLE tensors (
    name text,
    shape text,
    payload blob,
    primary key (name)
    );

"""

default_pragmas = {
    "synchronous": "NORMAL",
    "journal_mode": "MEMORY",
    "main.page_size": 4096,
}

_INSERT_TENSOR = "INSERT INTO tensors (name, shape, payload) VALUES (?, ?, ?)"
_INSERT_META = "INSERT INTO meta (key, value) VALUES (?, ?)"

# Meta keys a checkpoint must carry to rebuild the model and network.
checkpoint_meta_keys = ["d_z", "d_u", "d_x", "d_h", "M", "K", "dt", "hidden", "decoder"]

# Decoder log-std is clamped to this interval before exponentiating.
LOG_STD_MIN = -5.0
LOG_STD_MAX = 3.0

# Added to softplus outputs on Cholesky diagonals emitted by the network.
CHOL_FLOOR = 1e-4

# Training modes fix (adapt?, resample?).
modes = {
    "apiae+r": (True, True),
    "apiae": (True, False),
    "fivo": (False, True),
    "iwae": (False, False),
}

# Every configuration key and its default.  A config file may only set keys
# that appear here.
default_config = {
    # learning objective
    "mode": "apiae",
    "L": 8,
    "R": 4,
    "K": 10,
    "dt": 0.1,
    "eta": 0.5,
    "ess_threshold": 0.5,
    "cov_floor": 1e-6,
    # optimizer
    "batch_size": 32,
    "learning_rate": 1e-3,
    "epochs": 30,
    "clip_norm": 10.0,
    "pretrain_steps": 0,
    "seed": 0,
    "eval_seed_offset": 1000003,
    "threads": 1,
    # architecture
    "d_z": 2,
    "d_u": 2,
    "d_h": 64,
    "hidden": 128,
    "M": 16,
    "decoder": "mlp",
    # pendulum data
    "n_sequences": 300,
    "disturbance_sigma": 0.5,
    "pixel_noise_sigma": 0.05,
    # planning
    "plan_L": 32,
    "plan_R": 10,
    "plan_eta": 0.9,
    "plan_gain_shrinkage": 1.0,
    "plan_horizon": 10,
    "cost_temperature": 1.0,
}

# Dataset file layout; see doc/source/file-formats.rst
DATASET_MAGIC = b"APIAEDS\x00"
DATASET_VERSION = 1

FRAME_SIZE = 16
