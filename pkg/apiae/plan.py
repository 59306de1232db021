"""
Planning in the learned latent space.

A plan is found by running the same adaptive path-integral loop used for
learning, with the state cost replaced by task costs on decoded
observations, feedback gains enabled and the initial distribution frozen.
"""
import logging
import numpy as np
from apiae import adapt
from apiae import graph
from apiae import pendulum
from apiae.exceptions import ConfigError, DataError
from apiae.inference import ControlSchedule
from apiae.model import QuadraticCost, StateCost

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)
ch = logging.StreamHandler()
ch.setLevel(logging.DEBUG)
formatter = logging.Formatter("%(asctime)s - %(levelname)s - %(message)s")
ch.setFormatter(formatter)
logger.addHandler(ch)


class PlanningProblem(object):
    def __init__(
        self,
        costs,
        horizon,
        z0=None,
        context=None,
        L=32,
        R=10,
        eta=0.9,
        dt=None,
        temperature=1.0,
        seed=0,
        gain_shrinkage=1.0,
    ):
        """
        Parameters
        ----------
        costs : dict
            Maps 1-based observation index k (2 <= k <= horizon) to a cost
            callable on decoder means, e.g. QuadraticCost.  An empty dict is
            the cost-free problem.

        horizon : int
            Number of planned states K_p; may differ from the training K.

        z0 : (mean, chol) or None
            Initial latent distribution.  Give either this or `context`.

        context : array (n, d_x) or None
            Observations to encode into the initial distribution.

        dt : float or None
            Step size; the model's by default.

        gain_shrinkage : float
            See `apiae.adapt.AdaptConfig`.
        """
        if horizon < 2:
            raise ConfigError("planning horizon must be at least 2, got %s" % horizon)
        if (z0 is None) == (context is None):
            raise ConfigError("give either z0 or context")
        for k in costs:
            if not 2 <= k <= horizon:
                raise ConfigError("cost index %s outside 2..%s" % (k, horizon))
        self.costs = dict(costs)
        self.horizon = int(horizon)
        self.z0 = z0
        self.context = None if context is None else np.asarray(context, dtype=np.float64)
        self.config = adapt.AdaptConfig(
            L=L,
            R=R,
            eta=eta,
            resample=False,
            update_gains=True,
            update_init=False,
            gain_shrinkage=gain_shrinkage,
        )
        self.dt = dt
        self.temperature = temperature
        self.seed = seed


class Plan(object):
    def __init__(self, schedule, mean_path, frames, trace, q0):
        """
        Result of planning: the refined schedule (as arrays), the weighted
        mean latent path, its decoded frames and the per-round AdaptTrace.
        """
        self.feedforward, self.gains, self.ref_means, self.ref_chols = schedule
        self.mean_path = mean_path
        self.frames = frames
        self.trace = trace
        self.q0 = q0

    def __repr__(self):
        return "<Plan: %s states, final cost %.4g>" % (len(self.mean_path), self.cost_trace[-1])

    @property
    def cost_trace(self):
        return list(self.trace.state_cost)


def encode_initial(model, net, context):
    """
    Initial latent distribution the inference network assigns to `context`.

    Contexts shorter than the model's K are padded by repeating the last
    frame; longer ones are cut to K.

    Returns
    -------
    mean, chol : arrays
    """
    context = np.atleast_2d(np.asarray(context, dtype=np.float64))
    if len(context) < 1:
        raise DataError("empty planning context")
    if len(context) < model.K:
        pad = np.repeat(context[-1:], model.K - len(context), axis=0)
        context = np.vstack([context, pad])
    context = context[: model.K]
    tape = graph.Tape()
    (mean, chol), _ = net.infer(net.bind(tape, constant=True), tape.constant(context))
    return mean.value.copy(), chol.value.copy()


def plan(model, problem, net=None):
    """
    Refine a control schedule against the problem's costs.

    Parameters
    ----------
    model : LatentModel

    problem : PlanningProblem

    net : InferenceNetwork or None
        Needed when the problem gives a context instead of z0.

    Returns
    -------
    Plan
    """
    if problem.z0 is None:
        if net is None:
            raise ConfigError("encoding a planning context needs the inference network")
        z0 = encode_initial(model, net, problem.context)
    else:
        z0 = tuple(np.asarray(v, dtype=np.float64) for v in problem.z0)

    tape = graph.Tape()
    P = model.bind(tape, constant=True)
    q0 = (tape.constant(z0[0]), tape.constant(z0[1]))
    schedule = ControlSchedule.zeros(tape, problem.horizon - 1, model.d_u, model.d_z)
    cost = StateCost.planning(problem.costs, temperature=problem.temperature)
    ensemble, q0_out, schedule, trace = adapt.adapt_loop(
        model, P, q0, schedule, cost, problem.config, (problem.seed, 0), dt=problem.dt
    )
    logger.info(
        "planned %s steps: state cost %.4f -> %.4f"
        % (problem.horizon, trace.state_cost[0], trace.state_cost[-1])
    )
    mean_path = ensemble.mean_path()
    frames = model.decode(P, tape.constant(mean_path)).value
    return Plan(
        schedule.arrays(),
        mean_path,
        frames,
        trace,
        (q0_out[0].value.copy(), q0_out[1].value.copy()),
    )


def swingup_problem(model, context, config, target_angle=np.pi, horizon=None):
    """
    Terminal image cost ||x_target - x_K||^2 towards the rendered frame of
    `target_angle` (pi is upright), starting from an encoded context.
    """
    horizon = config["plan_horizon"] if horizon is None else horizon
    target = pendulum.render(target_angle).ravel()
    if target.size != model.d_x:
        raise DataError("target frame has %s pixels, model expects %s" % (target.size, model.d_x))
    return PlanningProblem(
        {horizon: QuadraticCost(target)},
        horizon,
        context=context,
        L=config["plan_L"],
        R=config["plan_R"],
        eta=config["plan_eta"],
        temperature=config["cost_temperature"],
        seed=config["seed"],
        gain_shrinkage=config["plan_gain_shrinkage"],
    )
