"""
The generative model: locally-linear latent SDE, Gaussian decoder and
initial prior, plus the controlled Euler-Maruyama rollout that accumulates
the Girsanov action S_u.

Parameters live in plain ordered dicts of numpy arrays keyed by namespaced
names ("dynamics.A", "decoder.W1", ...).  Anything that computes with them
takes `P`, a dict mapping the same names to tape nodes (see
:meth:`LatentModel.bind`).
"""
import collections
import numpy as np
from apiae import constants
from apiae import graph
from apiae import helpers
from apiae.exceptions import NonFiniteError, ShapeError

LOG_2PI = np.log(2 * np.pi)


class LocallyLinearDynamics(object):
    def __init__(self, d_z, d_u, M=16, seed=0, a=-0.1, b=0.1, noise=0.01):
        """
        Drift and diffusion as softmax mixtures of M linear systems::

            f(z) = sum_i alpha_i(z) (A_i z + c_i)
            sigma(z) = sum_i alpha_i(z) B_i
            alpha(z) = softmax(W z + w)

        A_i starts at `a`*I and B_i at `b`*I (plus `noise`), which is a stable
        initialization.
        """
        if M < 1:
            raise ValueError("need at least one linear component")
        self.d_z = d_z
        self.d_u = d_u
        self.M = M
        rng = np.random.default_rng([seed, 1])
        eye_z = np.eye(d_z)
        eye_zu = np.eye(d_z, d_u)
        self.params = collections.OrderedDict()
        self.params["dynamics.A"] = a * eye_z + noise * rng.standard_normal((M, d_z, d_z))
        self.params["dynamics.B"] = b * eye_zu + noise * rng.standard_normal((M, d_z, d_u))
        self.params["dynamics.c"] = np.zeros((M, d_z))
        self.params["dynamics.mixer_W"] = rng.standard_normal((M, d_z))
        self.params["dynamics.mixer_b"] = np.zeros(M)

        # expand (.., M) -> (.., M*d_z) and fold (.., M*d_z) -> (.., d_z)
        self._expand = np.kron(np.eye(M), np.ones((1, d_z)))
        self._fold = np.kron(np.ones((M, 1)), eye_z)

    def mixture(self, P, Z):
        return graph.softmax(Z @ P["dynamics.mixer_W"].T + P["dynamics.mixer_b"])

    def _mix(self, alpha, per_component):
        tape = alpha.tape
        weights = alpha @ tape.constant(self._expand)
        return (weights * per_component) @ tape.constant(self._fold)

    def drift(self, P, Z):
        """
        f(Z) for a single state (d_z,) or a batch (L, d_z).
        """
        M, d = self.M, self.d_z
        A = graph.reshape(P["dynamics.A"], (M * d, d))
        c = graph.reshape(P["dynamics.c"], (M * d,))
        return self._mix(self.mixture(P, Z), Z @ A.T + c)

    def diffuse(self, P, Z, V):
        """
        sigma(Z) V, row by row.
        """
        M, d = self.M, self.d_z
        B = graph.reshape(P["dynamics.B"], (M * d, self.d_u))
        return self._mix(self.mixture(P, Z), V @ B.T)

    def diffusion(self, P, z):
        """
        The d_z x d_u matrix sigma(z) for a single state.
        """
        M, d = self.M, self.d_z
        B = graph.reshape(P["dynamics.B"], (M, d * self.d_u))
        return graph.reshape(self.mixture(P, z) @ B, (d, self.d_u))


class GaussianDecoder(object):
    def __init__(self, d_z, d_x, hidden=128, seed=0):
        """
        p(x|z) = N(mu(z), diag(exp(s(z))^2)) from one ReLU hidden layer and
        a 2*d_x linear output split into mean and log-std.
        """
        self.d_z = d_z
        self.d_x = d_x
        self.hidden = hidden
        rng = np.random.default_rng([seed, 2])
        self.params = collections.OrderedDict()
        self.params["decoder.W1"] = rng.standard_normal((hidden, d_z)) / np.sqrt(d_z)
        self.params["decoder.b1"] = np.zeros(hidden)
        self.params["decoder.W2"] = rng.standard_normal((2 * d_x, hidden)) / np.sqrt(hidden)
        self.params["decoder.b2"] = np.zeros(2 * d_x)

    def moments(self, P, Z):
        h = graph.relu(Z @ P["decoder.W1"].T + P["decoder.b1"])
        out = h @ P["decoder.W2"].T + P["decoder.b2"]
        mean = out[..., : self.d_x]
        log_std = graph.clip(
            out[..., self.d_x :], constants.LOG_STD_MIN, constants.LOG_STD_MAX
        )
        return mean, log_std


class LinearGaussianDecoder(object):
    def __init__(self, d_z, d_x, seed=0):
        """
        p(x|z) = N(C z + b, diag(exp(s)^2)) with a constant log-std `s`.
        """
        self.d_z = d_z
        self.d_x = d_x
        self.hidden = 0
        rng = np.random.default_rng([seed, 3])
        self.params = collections.OrderedDict()
        self.params["decoder.C"] = rng.standard_normal((d_x, d_z)) / np.sqrt(d_z)
        self.params["decoder.b"] = np.zeros(d_x)
        self.params["decoder.log_std"] = np.zeros(d_x)

    def moments(self, P, Z):
        mean = Z @ P["decoder.C"].T + P["decoder.b"]
        log_std = graph.clip(
            P["decoder.log_std"], constants.LOG_STD_MIN, constants.LOG_STD_MAX
        )
        return mean, log_std


class InitialPrior(object):
    def __init__(self, d_z, mean=None, log_std=None):
        """
        p0 = N(mean, diag(exp(log_std)^2)); the standard normal by default.
        The prior is not learned.
        """
        self.d_z = d_z
        self.mean = np.zeros(d_z) if mean is None else np.asarray(mean, dtype=float)
        self.log_std = (
            np.zeros(d_z) if log_std is None else np.asarray(log_std, dtype=float)
        )

    @property
    def chol(self):
        return np.diag(np.exp(self.log_std))

    def logpdf(self, Z):
        """
        Log density of each row of node `Z` under the prior.
        """
        tape = Z.tape
        r = (Z - self.mean) * tape.constant(np.exp(-self.log_std))
        return graph.scale(graph.sum(graph.square(r), axis=-1), -0.5) - (
            np.sum(self.log_std) + 0.5 * self.d_z * LOG_2PI
        )


class LatentModel(object):
    def __init__(
        self, d_z, d_u, d_x, K, dt, M=16, hidden=128, decoder="mlp", seed=0
    ):
        """
        The full generative model p_theta.

        Parameters
        ----------
        d_z, d_u, d_x : int
            Latent, noise/control and observation dimensions.

        K : int
            Sequence length the model is trained on.

        dt : float
            Step between observation times; t_k = (k-1) dt.

        M : int
            Number of linear components in the dynamics.

        hidden : int
            Decoder hidden width (ignored for the linear decoder).

        decoder : "mlp" | "linear"
        """
        self.d_z = d_z
        self.d_u = d_u
        self.d_x = d_x
        self.K = K
        self.dt = dt
        self.dynamics = LocallyLinearDynamics(d_z, d_u, M=M, seed=seed)
        if decoder == "linear":
            self.decoder = LinearGaussianDecoder(d_z, d_x, seed=seed)
        elif decoder == "mlp":
            self.decoder = GaussianDecoder(d_z, d_x, hidden=hidden, seed=seed)
        else:
            raise ValueError("unknown decoder %r" % decoder)
        self.decoder_kind = decoder
        self.prior = InitialPrior(d_z)

    @property
    def M(self):
        return self.dynamics.M

    @property
    def hidden(self):
        return self.decoder.hidden

    @property
    def params(self):
        """
        Learnable parameters, in a fixed order.
        """
        p = collections.OrderedDict()
        p.update(self.dynamics.params)
        p.update(self.decoder.params)
        return p

    def set_params(self, params):
        for name, value in params.items():
            if name.startswith("dynamics."):
                target = self.dynamics.params
            elif name.startswith("decoder."):
                target = self.decoder.params
            else:
                continue
            if name not in target or target[name].shape != np.shape(value):
                raise ShapeError(name, np.shape(value))
            target[name] = np.array(value, dtype=np.float64)

    def bind(self, tape, constant=False):
        """
        Enter the parameters on `tape`, as leaves unless `constant`.
        """
        add = tape.constant if constant else tape.leaf
        return collections.OrderedDict((k, add(v)) for k, v in self.params.items())

    def obs_loglik(self, P, x, Z):
        """
        log N(x; mu(z), diag(sigma(z)^2)) for each row of `Z`.
        """
        mean, log_std = self.decoder.moments(P, Z)
        r = (mean - x) * graph.exp(-log_std)
        quad = graph.sum(graph.square(r), axis=-1)
        return graph.scale(quad, -0.5) - graph.sum(log_std, axis=-1) - 0.5 * self.d_x * LOG_2PI

    def decode(self, P, Z):
        return self.decoder.moments(P, Z)[0]


class QuadraticCost(object):
    def __init__(self, target, weight=1.0):
        """
        C(x) = weight * ||x - target||^2 on observation space.
        """
        self.target = np.asarray(target, dtype=np.float64)
        self.weight = float(weight)

    def __call__(self, mean):
        diff = mean - self.target
        return graph.scale(graph.sum(graph.square(diff), axis=-1), self.weight)


class StateCost(object):
    def __init__(self, observations=None, costs=None, temperature=1.0):
        """
        The state cost V of the control problem.

        In learning mode (`observations` given) the cost attached to the
        k-th state is -log p(x_{k+1} | z_k).  In planning mode `costs` maps
        1-based observation indices k to callables C_k evaluated at the
        decoder mean of z_{k-1}; the sum is multiplied by `temperature`.
        """
        if (observations is None) == (costs is None):
            raise ValueError("give either observations or costs")
        self.observations = (
            None if observations is None else np.asarray(observations, dtype=np.float64)
        )
        self.costs = costs
        self.temperature = float(temperature)

    @property
    def mode(self):
        return "learning" if self.observations is not None else "planning"

    @classmethod
    def learning(cls, observations):
        return cls(observations=observations)

    @classmethod
    def planning(cls, costs, temperature=1.0):
        return cls(costs=dict(costs), temperature=temperature)

    def check(self, K):
        if self.mode == "learning" and len(self.observations) != K:
            raise ShapeError("state cost (observations vs. K)", self.observations.shape, (K,))

    def at(self, model, P, k, Z):
        """
        Cost attached to state z_k (0-based), one entry per row of `Z`, or
        None if there is none.
        """
        if self.mode == "learning":
            x = Z.tape.constant(self.observations[k])
            return -model.obs_loglik(P, x, Z)
        cost = self.costs.get(k + 1)
        if cost is None:
            return None
        return graph.scale(cost(model.decode(P, Z)), self.temperature)


class LatentPath(object):
    def __init__(self, states, noise, controls, action):
        """
        A single latent trajectory: states z_{0:K-1}, the exact noise dw
        used, the controls applied and the accumulated action S_u.
        """
        self.states = np.asarray(states)
        self.noise = np.asarray(noise)
        self.controls = np.asarray(controls)
        self.action = float(action)

    def __repr__(self):
        return "<LatentPath: K=%s, S=%.6g>" % (len(self.states), self.action)


class Rollout(object):
    """
    Batched record of L simulated paths on one tape.

    `action` holds the per-path action accumulated since the last
    resampling event; `log_normalizer` the log-mean-exp terms collected at
    those events (zero without resampling).
    """

    def __init__(self, tape, eps0, noise):
        self.tape = tape
        self.eps0 = eps0
        self.noise = noise
        self.states = []
        self.controls = []
        self.action = None
        self.state_cost = None
        self.control_cost = None
        self.log_normalizer = tape.constant(0.0)
        self.ancestors = []

    @property
    def L(self):
        return self.eps0.shape[0]

    def reindex(self, indices):
        """
        Replace every path by path `indices[l]` (history included).
        """
        self.eps0 = self.eps0[indices]
        self.noise = self.noise[:, indices]
        self.states = [graph.take(z, indices) for z in self.states]
        self.controls = [graph.take(u, indices) for u in self.controls]
        self.state_cost = graph.take(self.state_cost, indices)
        self.control_cost = graph.take(self.control_cost, indices)
        self.action = graph.take(self.action, indices)
        self.ancestors.append(np.asarray(indices))

    def paths(self):
        states = np.stack([z.value for z in self.states], axis=1)
        controls = np.stack([u.value for u in self.controls], axis=1)
        noise = np.swapaxes(self.noise, 0, 1)
        return [
            LatentPath(states[l], noise[l], controls[l], self.action.value[l])
            for l in range(self.L)
        ]


def simulate(model, P, q0, schedule, cost, eps0, noise, dt=None, step_hook=None):
    """
    Controlled Euler-Maruyama simulation of L paths, accumulating S_u.

    Parameters
    ----------
    model : LatentModel

    P : dict
        Parameter nodes from `model.bind`.

    q0 : (Node, Node)
        Mean and lower Cholesky factor of the initial distribution.

    schedule : apiae.inference.ControlSchedule

    cost : StateCost

    eps0 : array (L, d_z)
        Standard normal draws; z_0 = mean + chol eps0.

    noise : array (K-1, L, d_u)
        Wiener increments, already scaled to variance dt.

    dt : float or None
        Step size; defaults to `model.dt`.

    step_hook : callable or None
        Called as `step_hook(rollout, k)` after step k (1-based) is
        accumulated; used for resampling.

    Returns
    -------
    Rollout
    """
    dt = model.dt if dt is None else dt
    mean0, chol0 = q0
    tape = mean0.tape
    eps0 = np.asarray(eps0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    L = eps0.shape[0]
    steps = noise.shape[0]
    if noise.shape[1:] != (L, model.d_u) or eps0.shape[1] != model.d_z:
        raise ShapeError("simulate (noise)", eps0.shape, noise.shape)
    if steps != schedule.steps:
        raise ShapeError("simulate (noise vs. schedule)", noise.shape, (schedule.steps,))
    if cost.mode == "learning":
        cost.check(steps + 1)

    out = Rollout(tape, eps0, noise)
    try:
        Z = mean0 + tape.constant(eps0) @ chol0.T
    except NonFiniteError as e:
        raise NonFiniteError(e.msg, step=0)
    out.states.append(Z)
    out.control_cost = tape.constant(np.zeros(L))

    if cost.mode == "learning":
        # log q0(z0) - log p0(z0); z0 = mean + chol eps0, so the q0 residual is eps0
        logq = (
            -0.5 * np.sum(eps0**2, axis=1)
            - 0.5 * model.d_z * LOG_2PI
            - graph.sum(graph.log(graph.diag(chol0)))
        )
        init = logq - model.prior.logpdf(Z)
        out.state_cost = cost.at(model, P, 0, Z)
        out.action = init + out.state_cost
    else:
        out.state_cost = tape.constant(np.zeros(L))
        out.action = tape.constant(np.zeros(L))

    for j in range(steps):
        try:
            Z = out.states[-1]
            dW = tape.constant(noise[j])
            U = schedule.control(j, Z)
            Z_next = Z + model.dynamics.drift(P, Z) * dt + model.dynamics.diffuse(
                P, Z, U * dt + dW
            )
            ctrl = graph.scale(graph.sum(graph.square(U), axis=-1), 0.5 * dt) + graph.sum(
                U * dW, axis=-1
            )
            step_cost = cost.at(model, P, j + 1, Z_next)
        except NonFiniteError as e:
            raise NonFiniteError(e.msg, step=j + 1)
        out.states.append(Z_next)
        out.controls.append(U)
        out.control_cost = out.control_cost + ctrl
        out.action = out.action + ctrl
        if step_cost is not None:
            out.state_cost = out.state_cost + step_cost
            out.action = out.action + step_cost
        if step_hook is not None:
            step_hook(out, j + 1)
    return out


def rollout(model, q0, schedule, cost, noise, P=None):
    """
    Simulate one path with pre-drawn noise and return it as a LatentPath.

    Parameters
    ----------
    noise : dict
        {"eps0": (d_z,), "dw": (K-1, d_u)}; dw_k ~ N(0, dt I).

    q0 : (mean, chol)
        Arrays or nodes on the schedule's tape.
    """
    tape = schedule.tape
    if P is None:
        P = model.bind(tape, constant=True)
    q0 = tuple(tape.lift(q) for q in q0)
    eps0 = np.asarray(noise["eps0"], dtype=np.float64)[None, :]
    dw = np.asarray(noise["dw"], dtype=np.float64)[:, None, :]
    return simulate(model, P, q0, schedule, cost, eps0, dw).paths()[0]


# Numeric conveniences for single states; each builds a throwaway tape.


def drift(model, z):
    tape = graph.Tape()
    return model.dynamics.drift(model.bind(tape, constant=True), tape.constant(z)).value


def diffusion(model, z):
    tape = graph.Tape()
    return model.dynamics.diffusion(
        model.bind(tape, constant=True), tape.constant(z)
    ).value


def mixture_weights(model, z):
    tape = graph.Tape()
    return model.dynamics.mixture(model.bind(tape, constant=True), tape.constant(z)).value


def obs_loglik(model, x, z):
    tape = graph.Tape()
    P = model.bind(tape, constant=True)
    return float(model.obs_loglik(P, tape.constant(x), tape.constant(z)).value)


def init_logratio(prior, q0_mean, q0_chol, z0):
    """
    -log p0(z0) + log q0(z0) for Gaussian p0 (`prior`) and q0.
    """
    logq = helpers.gaussian_logpdf(z0, q0_mean, q0_chol)
    logp = helpers.gaussian_logpdf(z0, prior.mean, prior.chol)
    return logq - logp
