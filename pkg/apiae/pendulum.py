"""
Damped pendulum simulator, 16x16 renderer and the binary dataset format.

The angle is measured from the hanging-down position, so angle 0 hangs
down and angle pi points straight up.
"""
import collections
import logging
import struct
import numpy as np
from apiae import constants
from apiae import helpers
from apiae.exceptions import DataError

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)
ch = logging.StreamHandler()
ch.setLevel(logging.DEBUG)
formatter = logging.Formatter("%(asctime)s - %(levelname)s - %(message)s")
ch.setFormatter(formatter)
logger.addHandler(ch)

GRAVITY = 9.8
DAMPING = 1.0

ROD_LENGTH = 6.0
ROD_HALF_WIDTH = 0.75

PendulumState = collections.namedtuple("PendulumState", ["angle", "velocity"])


def step_pendulum(state, dt, disturbance=0.0):
    """
    One semi-implicit Euler step of

        psi'' = -g sin(psi) - b psi'

    plus a velocity kick of disturbance * sqrt(dt).
    """
    angle, velocity = state
    velocity = (
        velocity
        + dt * (-GRAVITY * np.sin(angle) - DAMPING * velocity)
        + disturbance * np.sqrt(dt)
    )
    angle = angle + dt * velocity
    return PendulumState(angle, velocity)


def energy(state):
    """Mechanical energy per unit mass and length."""
    angle, velocity = state
    return 0.5 * velocity**2 + GRAVITY * (1.0 - np.cos(angle))


_rows, _cols = np.mgrid[0 : constants.FRAME_SIZE, 0 : constants.FRAME_SIZE]
_PIXELS = np.stack([_cols.ravel(), _rows.ravel()], axis=1).astype(float)
# 2x2 samples per pixel
_OFFSETS = np.array([[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]])
_SAMPLES = (_PIXELS[:, None, :] + _OFFSETS[None, :, :]).reshape(-1, 2)
_CENTER = np.array([constants.FRAME_SIZE / 2.0, constants.FRAME_SIZE / 2.0])


def render(angle):
    """
    16x16 grayscale frame in [0, 1] of a rod from the center at `angle`.

    Intensity falls off linearly with distance from the rod's centerline
    and is averaged over 2x2 samples per pixel, so the total brightness
    barely depends on the angle.
    Angles that differ by a multiple of 2*pi give identical frames.
    """
    if isinstance(angle, PendulumState):
        angle = angle.angle
    angle = np.mod(angle, 2 * np.pi)
    # image rows grow downwards; angle 0 points down
    tip = _CENTER + ROD_LENGTH * np.array([np.sin(angle), np.cos(angle)])
    seg = tip - _CENTER
    t = np.clip((_SAMPLES - _CENTER) @ seg / (seg @ seg), 0.0, 1.0)
    nearest = _CENTER + t[:, None] * seg
    dist = np.sqrt(np.sum((_SAMPLES - nearest) ** 2, axis=1))
    samples = np.clip(ROD_HALF_WIDTH + 0.5 - dist, 0.0, 1.0)
    frame = samples.reshape(-1, len(_OFFSETS)).mean(axis=1)
    return frame.reshape(constants.FRAME_SIZE, constants.FRAME_SIZE)


class Dataset(object):
    def __init__(
        self,
        frames,
        states,
        dt,
        disturbance_sigma=0.0,
        pixel_noise_sigma=0.0,
        seed=0,
        height=constants.FRAME_SIZE,
        width=constants.FRAME_SIZE,
    ):
        """
        A set of N observation sequences of K flattened frames.

        Parameters
        ----------
        frames : array (N, K, height*width)

        states : array (N, K, 2)
            Ground-truth (angle, velocity) behind every frame.
        """
        self.frames = np.asarray(frames, dtype=np.float64)
        self.states = np.asarray(states, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[2] != height * width:
            raise DataError("frames must be N x K x %s, got %s" % (height * width, self.frames.shape))
        if self.states.shape != self.frames.shape[:2] + (2,):
            raise DataError("states shape %s does not match frames" % (self.states.shape,))
        if self.frames.shape[1] < 2:
            raise DataError("sequences need at least two frames")
        self.dt = float(dt)
        self.disturbance_sigma = float(disturbance_sigma)
        self.pixel_noise_sigma = float(pixel_noise_sigma)
        self.seed = int(seed)
        self.height = int(height)
        self.width = int(width)

    def __len__(self):
        return self.frames.shape[0]

    def __getitem__(self, i):
        return self.frames[i]

    def __repr__(self):
        return "<Dataset: N=%s, K=%s, %sx%s>" % (len(self), self.K, self.height, self.width)

    @property
    def K(self):
        return self.frames.shape[1]

    @property
    def d_x(self):
        return self.frames.shape[2]

    def header(self):
        return {
            "N": len(self),
            "K": self.K,
            "d_x": self.d_x,
            "dt": self.dt,
            "disturbance_sigma": self.disturbance_sigma,
            "pixel_noise_sigma": self.pixel_noise_sigma,
            "seed": self.seed,
            "height": self.height,
            "width": self.width,
        }

    def subset(self, indices):
        return Dataset(
            self.frames[indices],
            self.states[indices],
            self.dt,
            self.disturbance_sigma,
            self.pixel_noise_sigma,
            self.seed,
            self.height,
            self.width,
        )

    def write(self, fn):
        """
        Write the dataset in the versioned little-endian binary layout.
        Equal datasets give byte-identical files.
        """
        header = helpers._jsonify(
            dict(sorted(self.header().items()))
        ).encode("utf-8")
        with open(fn, "wb") as fout:
            fout.write(constants.DATASET_MAGIC)
            fout.write(struct.pack("<II", constants.DATASET_VERSION, len(header)))
            fout.write(header)
            fout.write(self.frames.astype("<f8").tobytes())
            fout.write(self.states.astype("<f8").tobytes())
        return fn

    @classmethod
    def read(cls, fn):
        with open(fn, "rb") as fh:
            data = fh.read()
        magic = constants.DATASET_MAGIC
        if data[: len(magic)] != magic:
            raise DataError("%s is not an apiae dataset" % fn)
        offset = len(magic)
        try:
            version, n_header = struct.unpack_from("<II", data, offset)
        except struct.error:
            raise DataError("%s: truncated header" % fn)
        if version != constants.DATASET_VERSION:
            raise DataError("%s: unsupported dataset version %s" % (fn, version))
        offset += 8
        header = helpers._unjsonify(data[offset : offset + n_header].decode("utf-8"))
        offset += n_header
        N, K, d_x = header["N"], header["K"], header["d_x"]
        n_frames = N * K * d_x
        n_states = N * K * 2
        if len(data) != offset + 8 * (n_frames + n_states):
            raise DataError("%s: payload size does not match header" % fn)
        frames = np.frombuffer(data, dtype="<f8", count=n_frames, offset=offset)
        states = np.frombuffer(
            data, dtype="<f8", count=n_states, offset=offset + 8 * n_frames
        )
        return cls(
            frames.reshape(N, K, d_x).astype(np.float64),
            states.reshape(N, K, 2).astype(np.float64),
            header["dt"],
            header["disturbance_sigma"],
            header["pixel_noise_sigma"],
            header["seed"],
            header["height"],
            header["width"],
        )


def generate(N, K, dt=0.1, disturbance_sigma=0.5, pixel_noise_sigma=0.05, seed=0):
    """
    Simulate N pendulum sequences of K frames.

    Each sequence starts from angle ~ U[-pi, pi] and velocity ~ U[-2, 2]
    and is driven by a fresh N(0, disturbance_sigma^2) disturbance at every
    step.  Frames get i.i.d. N(0, pixel_noise_sigma^2) pixel noise, clipped
    back to [0, 1].  Sequence i depends only on (seed, i).

    Returns
    -------
    Dataset
    """
    if N < 1 or K < 2:
        raise DataError("need N >= 1 and K >= 2, got N=%s K=%s" % (N, K))
    d_x = constants.FRAME_SIZE**2
    frames = np.empty((N, K, d_x))
    states = np.empty((N, K, 2))
    for i in range(N):
        rng = helpers.rng_for(seed, i)
        state = PendulumState(rng.uniform(-np.pi, np.pi), rng.uniform(-2.0, 2.0))
        for k in range(K):
            if k > 0:
                state = step_pendulum(
                    state, dt, disturbance_sigma * rng.standard_normal()
                )
            states[i, k] = state
            frame = render(state.angle).ravel()
            if pixel_noise_sigma > 0:
                frame = np.clip(frame + pixel_noise_sigma * rng.standard_normal(d_x), 0.0, 1.0)
            frames[i, k] = frame
        if (i + 1) % 100 == 0:
            logger.info("simulated %s of %s sequences" % (i + 1, N))
    return Dataset(frames, states, dt, disturbance_sigma, pixel_noise_sigma, seed)
