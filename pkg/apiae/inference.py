"""
Backward recurrent inference network and the linear feedback control
schedule it emits.
"""
import collections
import numpy as np
from apiae import constants
from apiae import graph
from apiae.exceptions import DataError, ShapeError


class ControlSchedule(object):
    def __init__(self, feedforward, gains, ref_means, ref_chols):
        """
        Piecewise-constant linear feedback control

            u_k(z) = u_ff_k + K_k chol_k^{-1} (z - mu_k)

        All arguments are lists of nodes (one per step, K-1 steps) living on
        the same tape.
        """
        n = len(feedforward)
        if not (len(gains) == len(ref_means) == len(ref_chols) == n):
            raise ShapeError(
                "control schedule", len(feedforward), len(gains), len(ref_means), len(ref_chols)
            )
        if n == 0:
            raise ShapeError("control schedule (no steps)", 0)
        self.feedforward = list(feedforward)
        self.gains = list(gains)
        self.ref_means = list(ref_means)
        self.ref_chols = list(ref_chols)
        self.tape = self.feedforward[0].tape

    def __len__(self):
        return len(self.feedforward)

    @property
    def steps(self):
        return len(self.feedforward)

    def __repr__(self):
        return "<ControlSchedule: %s steps, d_u=%s>" % (self.steps, self.d_u)

    @property
    def d_u(self):
        return self.feedforward[0].shape[0]

    @property
    def d_z(self):
        return self.ref_means[0].shape[0]

    @classmethod
    def zeros(cls, tape, steps, d_u, d_z):
        """
        u = 0 everywhere, with references mu = 0 and chol = I.
        """
        return cls(
            [tape.constant(np.zeros(d_u)) for _ in range(steps)],
            [tape.constant(np.zeros((d_u, d_z))) for _ in range(steps)],
            [tape.constant(np.zeros(d_z)) for _ in range(steps)],
            [tape.constant(np.eye(d_z)) for _ in range(steps)],
        )

    @classmethod
    def from_arrays(cls, tape, feedforward, gains, ref_means=None, ref_chols=None):
        steps, d_u = np.shape(feedforward)
        d_z = np.shape(gains)[2]
        if ref_means is None:
            ref_means = np.zeros((steps, d_z))
        if ref_chols is None:
            ref_chols = np.tile(np.eye(d_z), (steps, 1, 1))
        return cls(
            [tape.constant(u) for u in feedforward],
            [tape.constant(k) for k in gains],
            [tape.constant(m) for m in ref_means],
            [tape.constant(c) for c in ref_chols],
        )

    def control(self, k, Z):
        """
        Control at step k (0-based) for one state (d_z,) or each row of a
        batch (L, d_z).
        """
        if not 0 <= k < self.steps:
            raise IndexError("step %s outside schedule of %s steps" % (k, self.steps))
        D = Z - self.ref_means[k]
        if D.value.ndim == 1:
            return self.feedforward[k] + self.gains[k] @ graph.trisolve(self.ref_chols[k], D)
        Y = graph.trisolve(self.ref_chols[k], D.T)
        return (self.gains[k] @ Y).T + self.feedforward[k]

    def detached(self, tape=None):
        """
        Copy of the schedule's current values as constants on `tape`.
        """
        tape = self.tape if tape is None else tape
        return ControlSchedule.from_arrays(tape, *self.arrays())

    def arrays(self):
        return (
            np.stack([u.value for u in self.feedforward]),
            np.stack([k.value for k in self.gains]),
            np.stack([m.value for m in self.ref_means]),
            np.stack([c.value for c in self.ref_chols]),
        )


def eval_control(schedule, k, z):
    """
    Numeric control for 1-based step k (1 <= k <= K-1) at state `z`.
    """
    if not 1 <= k <= schedule.steps:
        raise IndexError("step %s outside 1..%s" % (k, schedule.steps))
    tape = schedule.tape
    return schedule.control(k - 1, tape.constant(z)).value


class InferenceNetwork(object):
    def __init__(self, d_x, d_z, d_u, d_h=64, seed=0):
        """
        A GRU run backwards over the observations, with linear heads for
        the control schedule and the initial distribution.

        The control heads at step k read the hidden states at k and k+1, so
        step k only ever sees x_k, ..., x_K.
        """
        self.d_x = d_x
        self.d_z = d_z
        self.d_u = d_u
        self.d_h = d_h
        rng = np.random.default_rng([seed, 4])
        n_in = d_x + d_h

        def _w(rows, cols):
            return rng.uniform(-1, 1, size=(rows, cols)) / np.sqrt(cols)

        self.n_offdiag = d_z * (d_z - 1) // 2
        p = collections.OrderedDict()
        for gate in ("z", "r", "h"):
            p["inference.W_" + gate] = _w(d_h, n_in)
            p["inference.b_" + gate] = np.zeros(d_h)
        p["inference.control_W"] = 0.1 * _w(d_u + d_u * d_z, 2 * d_h)
        p["inference.control_b"] = np.zeros(d_u + d_u * d_z)
        p["inference.init_W"] = 0.1 * _w(2 * d_z + self.n_offdiag, d_h)
        # softplus(b) + floor = 1 on the diagonal
        init_b = np.zeros(2 * d_z + self.n_offdiag)
        init_b[d_z : 2 * d_z] = np.log(np.expm1(1.0 - constants.CHOL_FLOOR))
        p["inference.init_b"] = init_b
        self.params = p

    def set_params(self, params):
        for name, value in params.items():
            if not name.startswith("inference."):
                continue
            if name not in self.params or self.params[name].shape != np.shape(value):
                raise ShapeError(name, np.shape(value))
            self.params[name] = np.array(value, dtype=np.float64)

    def bind(self, tape, constant=False):
        add = tape.constant if constant else tape.leaf
        return collections.OrderedDict((k, add(v)) for k, v in self.params.items())

    def cell(self, P, h, x):
        hx = graph.concat([x, h])
        update = graph.sigmoid(P["inference.W_z"] @ hx + P["inference.b_z"])
        reset = graph.sigmoid(P["inference.W_r"] @ hx + P["inference.b_r"])
        cand = graph.tanh(
            P["inference.W_h"] @ graph.concat([x, reset * h]) + P["inference.b_h"]
        )
        return (1.0 - update) * h + update * cand

    def infer(self, P, X, gain_scale=0.0):
        """
        Run the network over observations `X` (node, K x d_x).

        Parameters
        ----------
        gain_scale : float
            Multiplies the emitted feedback gains.  Training uses 0
            (feed-forward only); planning uses 1.

        Returns
        -------
        (mean0, chol0), ControlSchedule
        """
        K = X.shape[0]
        if K < 2:
            raise DataError("need at least two observations, got %s" % K)
        if X.shape[1] != self.d_x:
            raise ShapeError("infer (observation width)", X.shape, (K, self.d_x))
        tape = X.tape
        d_z, d_u = self.d_z, self.d_u

        hidden = [None] * K
        h = tape.constant(np.zeros(self.d_h))
        for k in range(K - 1, -1, -1):
            h = self.cell(P, h, X[k])
            hidden[k] = h

        feedforward, gains = [], []
        for k in range(K - 1):
            out = P["inference.control_W"] @ graph.concat([hidden[k], hidden[k + 1]]) + P[
                "inference.control_b"
            ]
            feedforward.append(out[:d_u])
            gains.append(graph.scale(graph.reshape(out[d_u:], (d_u, d_z)), gain_scale))

        head = P["inference.init_W"] @ hidden[0] + P["inference.init_b"]
        mean0 = head[:d_z]
        chol0 = graph.diagflat(graph.softplus(head[d_z : 2 * d_z]) + constants.CHOL_FLOOR)
        if self.n_offdiag:
            chol0 = chol0 + graph.tril_fill(head[2 * d_z :], d_z, strict=True)

        schedule = ControlSchedule(
            feedforward,
            gains,
            [tape.constant(np.zeros(d_z)) for _ in range(K - 1)],
            [tape.constant(np.eye(d_z)) for _ in range(K - 1)],
        )
        return (mean0, chol0), schedule


def infer(net, x, gain_scale=0.0, tape=None):
    """
    Numeric entry point: run `net` over array `x` (K x d_x) on a fresh (or
    given) tape with constant parameters.
    """
    tape = graph.Tape() if tape is None else tape
    P = net.bind(tape, constant=True)
    return net.infer(P, tape.constant(x), gain_scale=gain_scale)
