"""
Adaptive path-integral refinement of a control schedule.

An ensemble of L controlled paths is weighted by exp(-S_u).  The weighted
noise moves the feed-forward control (and, when enabled, the feedback
gains) towards the optimal control, and the weighted initial states
re-estimate q0.
"""
import logging
import numpy as np
from scipy import special

from apiae import graph
from apiae import helpers
from apiae import model as model_mod
from apiae.inference import ControlSchedule
from apiae.exceptions import ConfigError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)
ch = logging.StreamHandler()
ch.setLevel(logging.DEBUG)
formatter = logging.Formatter("%(asctime)s - %(levelname)s - %(message)s")
ch.setFormatter(formatter)
logger.addHandler(ch)


class AdaptConfig(object):
    def __init__(
        self,
        L=8,
        R=4,
        eta=0.5,
        resample=False,
        ess_threshold=0.5,
        update_gains=False,
        update_init=True,
        cov_floor=1e-6,
        stop_weight_gradients=True,
        gain_shrinkage=1.0,
    ):
        """
        Settings for one adaptation run.

        Parameters
        ----------
        L : int
            Number of paths per round.

        R : int
            Number of adaptation rounds before the final simulation.

        eta : float
            Adaptation rate, in (0, 1].

        resample : bool
            Resample whenever ESS drops below `ess_threshold` * L.

        update_gains : bool
            Also adapt the feedback gains (planning).

        update_init : bool
            Re-estimate q0 from the weighted initial states (learning).

        cov_floor : float
            Added to the diagonal of every weighted covariance.

        stop_weight_gradients : bool
            Treat the normalized weights as constants inside the updates.
            With False, gradients also flow through the weights.

        gain_shrinkage : float
            Multiple of the unweighted state covariance added to the weighted
            one before the gain update standardizes by it.  0 gives the plain
            weighted moments; larger values keep a few dominant paths from
            collapsing the reference covariance.
        """
        if L < 2:
            raise ConfigError("L must be at least 2, got %s" % L)
        if R < 0:
            raise ConfigError("R must be non-negative, got %s" % R)
        if not 0 < eta <= 1:
            raise ConfigError("eta must be in (0, 1], got %s" % eta)
        if not 0 < ess_threshold <= 1:
            raise ConfigError("ess_threshold must be in (0, 1], got %s" % ess_threshold)
        if gain_shrinkage < 0:
            raise ConfigError("gain_shrinkage must be non-negative, got %s" % gain_shrinkage)
        self.L = int(L)
        self.R = int(R)
        self.eta = float(eta)
        self.resample = bool(resample)
        self.ess_threshold = float(ess_threshold)
        self.update_gains = bool(update_gains)
        self.update_init = bool(update_init)
        self.cov_floor = float(cov_floor)
        self.stop_weight_gradients = bool(stop_weight_gradients)
        self.gain_shrinkage = float(gain_shrinkage)

    def __repr__(self):
        return "<AdaptConfig: L=%s R=%s eta=%s resample=%s>" % (
            self.L,
            self.R,
            self.eta,
            self.resample,
        )


def weights(S):
    """
    Normalized path weights and log-mean-exp from actions `S`.

    Returns
    -------
    w, log_mean_exp
        w_l = exp(-S_l) / sum_j exp(-S_j), computed stably.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 1 or S.size == 0:
        raise ShapeError("weights", S.shape)
    if not np.all(np.isfinite(S)):
        raise NonFiniteError("non-finite path action")
    lse = special.logsumexp(-S)
    return np.exp(-S - lse), lse - np.log(S.size)


def ess(w):
    """1 / sum w^2, in [1, L]"""
    w = np.asarray(w, dtype=np.float64)
    return 1.0 / np.sum(w**2)


def systematic_resample(w, u):
    """
    Systematic resampling indices from a single uniform `u` in [0, 1).

    Index l appears either floor(L w_l) or ceil(L w_l) times.
    """
    w = np.asarray(w, dtype=np.float64)
    L = w.size
    positions = (u + np.arange(L)) / L
    cumulative = np.cumsum(w)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions, side="right")


def moments(ensemble, k):
    """
    Weighted mean and covariance Cholesky factor of the states at time
    index k (0-based), with the ensemble's covariance floor.
    """
    points = ensemble.rollout.states[k].value
    return helpers.weighted_moments(ensemble.weights, points, ensemble.cov_floor)


class Ensemble(object):
    def __init__(self, rollout, cov_floor=1e-6, stop_weight_gradients=True):
        """
        L weighted paths from one simulation round.

        Parameters
        ----------
        rollout : apiae.model.Rollout
        """
        self.rollout = rollout
        self.tape = rollout.tape
        self.cov_floor = cov_floor
        self.stop_weight_gradients = stop_weight_gradients
        self.weights, self.log_mean_exp = weights(rollout.action.value)

    @property
    def L(self):
        return self.rollout.L

    @property
    def ess(self):
        return ess(self.weights)

    def weight_node(self):
        if self.stop_weight_gradients:
            return self.tape.constant(self.weights)
        return graph.softmax(-self.rollout.action)

    def mco_node(self):
        """
        log (1/L) sum exp(-S) plus the normalizers collected at resampling
        events, as a node.
        """
        r = self.rollout
        return r.log_normalizer + graph.logsumexp(-r.action) - np.log(self.L)

    def weighted_state_cost(self):
        return float(self.weights @ self.rollout.state_cost.value)

    def mean_node(self, k, w=None):
        w = self.weight_node() if w is None else w
        return w @ self.rollout.states[k]

    def moment_nodes(self, k, w=None, shrinkage=0.0):
        """
        Weighted mean and covariance Cholesky factor of the states at time
        index k, as nodes.  With `shrinkage` > 0 that multiple of the
        unweighted covariance is added before factoring; the mean stays
        weighted.
        """
        w = self.weight_node() if w is None else w
        Z = self.rollout.states[k]
        mu = w @ Z
        D = Z - mu
        d = Z.shape[1]
        cov = (D.T * w) @ D + self.tape.constant(self.cov_floor * np.eye(d))
        if shrinkage > 0:
            uniform = self.tape.constant(np.full(self.L, 1.0 / self.L))
            E = Z - uniform @ Z
            cov = cov + ((E.T * uniform) @ E) * shrinkage
        return mu, graph.cholesky(cov)

    def paths(self):
        return self.rollout.paths()

    def mean_path(self):
        return np.stack([self.weights @ z.value for z in self.rollout.states])


class AdaptTrace(object):
    """
    Per-round diagnostics of an adaptation run.
    """

    def __init__(self):
        self.ess = []
        self.log_mean_exp = []
        self.state_cost = []

    def __len__(self):
        return len(self.ess)

    def record(self, ensemble):
        self.ess.append(ensemble.ess)
        self.log_mean_exp.append(ensemble.log_mean_exp + float(ensemble.rollout.log_normalizer.value))
        self.state_cost.append(ensemble.weighted_state_cost())

    def rows(self):
        for r, row in enumerate(zip(self.ess, self.log_mean_exp, self.state_cost)):
            yield (r,) + row


def update_ff(schedule, ensemble, eta, dt):
    """
    New feed-forward controls and reference means:

        u_ff <- u_ff + K chol^{-1} (mu - mu_ref) + (eta / dt) sum_l w_l dw_l
        mu_ref <- mu

    Returns
    -------
    feedforward, ref_means : lists of nodes
    """
    tape = ensemble.tape
    w = ensemble.weight_node()
    feedforward, ref_means = [], []
    for k in range(schedule.steps):
        mu = ensemble.mean_node(k, w)
        dW = tape.constant(ensemble.rollout.noise[k])
        shift = schedule.gains[k] @ graph.trisolve(
            schedule.ref_chols[k], mu - schedule.ref_means[k]
        )
        feedforward.append(schedule.feedforward[k] + shift + (w @ dW) * (eta / dt))
        ref_means.append(mu)
    return feedforward, ref_means


def update_gain(schedule, ensemble, eta, dt, shrinkage=0.0):
    """
    New feedback gains and reference Cholesky factors:

        K <- K chol_ref^{-1} chol + (eta / dt) sum_l w_l dw_l (chol^{-1}(z_l - mu))^T
        chol_ref <- chol

    where chol factors the weighted covariance plus `shrinkage` times the
    unweighted one (see `Ensemble.moment_nodes`).

    Returns
    -------
    gains, ref_chols : lists of nodes
    """
    tape = ensemble.tape
    w = ensemble.weight_node()
    gains, ref_chols = [], []
    for k in range(schedule.steps):
        mu, chol = ensemble.moment_nodes(k, w, shrinkage)
        Z = ensemble.rollout.states[k]
        dW = tape.constant(ensemble.rollout.noise[k])
        carried = graph.trisolve(schedule.ref_chols[k], schedule.gains[k].T, trans=True).T @ chol
        Y = graph.trisolve(chol, (Z - mu).T)
        gains.append(carried + ((dW.T * w) @ Y.T) * (eta / dt))
        ref_chols.append(chol)
    return gains, ref_chols


def update_init(ensemble):
    """
    q0 <- N(weighted mean of z0, weighted covariance of z0 + floor I)
    """
    return ensemble.moment_nodes(0)


def improve(schedule, ensemble, config, dt):
    """
    One adaptation step of the schedule from a weighted ensemble.
    """
    feedforward, ref_means = update_ff(schedule, ensemble, config.eta, dt)
    if config.update_gains:
        gains, ref_chols = update_gain(
            schedule, ensemble, config.eta, dt, config.gain_shrinkage
        )
    else:
        gains, ref_chols = schedule.gains, schedule.ref_chols
    return ControlSchedule(feedforward, gains, ref_means, ref_chols)


def draw_noise(keys, round, L, steps, d_z, d_u, dt):
    """
    eps0 (L, d_z) and dw (steps, L, d_u) for one round.  Path l of round r
    always uses the stream keyed (keys, r, 0, l).
    """
    eps0 = np.empty((L, d_z))
    dW = np.empty((steps, L, d_u))
    for l in range(L):
        rng = helpers.rng_for(*(tuple(keys) + (round, 0, l)))
        eps0[l] = rng.standard_normal(d_z)
        dW[:, l] = rng.standard_normal((steps, d_u)) * np.sqrt(dt)
    return eps0, dW


def _resampler(config, keys, round):
    def hook(rollout, k):
        w, _ = weights(rollout.action.value)
        if ess(w) >= config.ess_threshold * rollout.L:
            return
        u = helpers.rng_for(*(tuple(keys) + (round, 1, k))).uniform()
        indices = systematic_resample(w, u)
        logger.debug("resampling at step %s (ess %.3f)" % (k, ess(w)))
        rollout.log_normalizer = (
            rollout.log_normalizer + graph.logsumexp(-rollout.action) - np.log(rollout.L)
        )
        rollout.reindex(indices)
        rollout.action = rollout.tape.constant(np.zeros(rollout.L))

    return hook


def simulate(model, P, q0, schedule, cost, config, keys, round=0, dt=None):
    """
    Simulate one round of L paths under `schedule`, resampling if enabled.

    Returns
    -------
    Ensemble
    """
    dt = model.dt if dt is None else dt
    eps0, dW = draw_noise(
        keys, round, config.L, schedule.steps, model.d_z, model.d_u, dt
    )
    hook = _resampler(config, keys, round) if config.resample else None
    rollout = model_mod.simulate(
        model, P, q0, schedule, cost, eps0, dW, dt=dt, step_hook=hook
    )
    return Ensemble(
        rollout,
        cov_floor=config.cov_floor,
        stop_weight_gradients=config.stop_weight_gradients,
    )


def adapt_loop(model, P, q0, schedule, cost, config, keys, dt=None):
    """
    R rounds of simulate-and-improve, then a final simulation.

    Parameters
    ----------
    keys : tuple of int
        Base keys of every random stream used (e.g. (seed, sequence)).

    Returns
    -------
    ensemble, q0, schedule, trace
        The final ensemble, the adapted initial distribution and schedule,
        and an AdaptTrace with one entry per round (R + 1 entries).
    """
    dt = model.dt if dt is None else dt
    trace = AdaptTrace()
    for r in range(config.R):
        ensemble = simulate(model, P, q0, schedule, cost, config, keys, r, dt)
        trace.record(ensemble)
        logger.debug(
            "round %s: ess %.3f, log-mean-exp %.4f"
            % (r, trace.ess[-1], trace.log_mean_exp[-1])
        )
        schedule = improve(schedule, ensemble, config, dt)
        if config.update_init:
            q0 = update_init(ensemble)
    ensemble = simulate(model, P, q0, schedule, cost, config, keys, config.R, dt)
    trace.record(ensemble)
    return ensemble, q0, schedule, trace
