"""
Objective construction, optimization and bound evaluation.

For one sequence the objective is the multi-sample lower bound

    log (1/L) sum_l exp(-S_u(z^l))

computed on the final ensemble of the adaptation loop.  Its gradient is
taken through the whole loop by reverse-mode differentiation.
"""
import os
import time
import collections
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import simplejson as json
from scipy import linalg
from scipy import special

from apiae import adapt
from apiae import constants
from apiae import graph
from apiae import helpers
from apiae import iterators
from apiae import writers
from apiae.checkpoint import load_checkpoint, save_checkpoint
from apiae.exceptions import DataError, NonFiniteError
from apiae.inference import ControlSchedule, InferenceNetwork
from apiae.model import LatentModel, StateCost, simulate

import logging

formatter = logging.Formatter("%(asctime)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)
ch = logging.StreamHandler()
ch.setLevel(logging.DEBUG)
ch.setFormatter(formatter)
logger.addHandler(ch)

CURVE_COLUMNS = ["epoch", "mean_bound", "ess_mean", "wallclock_s"]
BOUND_COLUMNS = ["sequence", "bound", "ess"]
TRACE_COLUMNS = ["sequence", "round", "ess", "log_mean_exp", "state_cost"]


class TrainConfig(object):
    def __init__(self, config=None, **overrides):
        """
        Attribute view over a validated config dict (see
        constants.default_config for every key).
        """
        if config is None:
            config = helpers.load_config(overrides=overrides)
        else:
            config = dict(config)
            config.update(overrides)
            config = helpers.validate_config(dict(constants.default_config, **config))
        self.config = config
        for key, value in config.items():
            setattr(self, key, value)

    def __repr__(self):
        return "<TrainConfig: mode=%s L=%s R=%s>" % (self.mode, self.L, self.R)

    def adapt_config(self, mode=None, L=None, R=None):
        """
        The AdaptConfig a mode implies: iwae and fivo never adapt, fivo and
        apiae+r resample.
        """
        mode = self.mode if mode is None else mode
        if mode not in constants.modes:
            raise ValueError("unknown mode %r" % mode)
        adapts, resample = constants.modes[mode]
        R = self.R if R is None else R
        return adapt.AdaptConfig(
            L=self.L if L is None else L,
            R=R if adapts else 0,
            eta=self.eta,
            resample=resample,
            ess_threshold=self.ess_threshold,
            update_gains=False,
            update_init=True,
            cov_floor=self.cov_floor,
        )


class BoundReport(object):
    def __init__(
        self, per_sequence, ess, wallclock=0.0, mode=None, L=None, R=None, traces=None
    ):
        """
        Per-sequence lower bounds and final-round ESS of one evaluation.
        `traces` optionally holds the AdaptTrace of every sequence.
        """
        self.traces = traces
        self.per_sequence = np.asarray(per_sequence, dtype=np.float64)
        self.ess = np.asarray(ess, dtype=np.float64)
        self.wallclock = wallclock
        self.mode = mode
        self.L = L
        self.R = R

    def __len__(self):
        return len(self.per_sequence)

    def __repr__(self):
        return "<BoundReport: mode=%s L=%s R=%s mean=%.4f>" % (
            self.mode,
            self.L,
            self.R,
            self.mean,
        )

    @property
    def mean(self):
        return float(np.mean(self.per_sequence))

    @property
    def ess_mean(self):
        return float(np.mean(self.ess))

    @property
    def ess_min(self):
        return float(np.min(self.ess))

    def write_traces(self, out):
        with writers.CSVWriter(out, TRACE_COLUMNS) as w:
            for i, trace in enumerate(self.traces or []):
                for row in trace.rows():
                    w.write_row([i] + list(row))

    def write(self, out):
        with writers.CSVWriter(out, BOUND_COLUMNS) as w:
            for i, (b, e) in enumerate(zip(self.per_sequence, self.ess)):
                w.write_row([i, b, e])


def mco(S):
    """
    log (1/L) sum_l exp(-S_l)
    """
    S = np.asarray(S, dtype=np.float64)
    if not np.all(np.isfinite(S)):
        raise NonFiniteError("non-finite action in mco")
    return float(special.logsumexp(-S) - np.log(S.size))


def mco_node(S):
    """
    The same bound as a node of `S`'s tape.
    """
    return graph.logsumexp(-S) - np.log(S.shape[0])


def mco_grad(tape, bound, *param_dicts):
    """
    Gradients of `bound` with respect to every parameter node.

    Returns
    -------
    OrderedDict
        name -> gradient array, for every name in `param_dicts`.
    """
    grads = graph.backward(tape, bound)
    out = collections.OrderedDict()
    for P in param_dicts:
        for name, node in P.items():
            out[name] = grads.get(node.id, np.zeros_like(node.value))
    return out


class Adam(object):
    def __init__(self, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        """
        Adaptive moment estimation over a dict of named arrays; minimizes.
        """
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        """
        Return updated copies of `params` given loss gradients `grads`.
        """
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        out = collections.OrderedDict()
        for name, value in params.items():
            g = grads[name]
            m = b1 * self.m.get(name, 0.0) + (1 - b1) * g
            v = b2 * self.v.get(name, 0.0) + (1 - b2) * g**2
            self.m[name] = m
            self.v[name] = v
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            out[name] = value - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


def clip_by_global_norm(grads, max_norm):
    norm = np.sqrt(sum(float(np.sum(g**2)) for g in grads.values()))
    if norm <= max_norm or norm == 0:
        return grads, norm
    factor = max_norm / norm
    return collections.OrderedDict((k, g * factor) for k, g in grads.items()), norm


def sequence_objective(model, net, x, config, keys, tape=None):
    """
    Build the bound of one sequence on a tape: infer, adapt, then the
    multi-sample objective on the final ensemble.

    Returns
    -------
    tape, (Pm, Pn), bound node, final Ensemble, AdaptTrace
    """
    tape = graph.Tape() if tape is None else tape
    Pm = model.bind(tape)
    Pn = net.bind(tape)
    q0, schedule = net.infer(Pn, tape.constant(x), gain_scale=0.0)
    cost = StateCost.learning(x)
    ensemble, _, _, trace = adapt.adapt_loop(model, Pm, q0, schedule, cost, config, keys)
    return tape, (Pm, Pn), ensemble.mco_node(), ensemble, trace


def sequence_gradient(model, net, x, config, keys):
    """
    Bound, final ESS and bound gradients for one sequence.
    """
    tape, (Pm, Pn), bound, ensemble, _ = sequence_objective(model, net, x, config, keys)
    grads = mco_grad(tape, bound, Pm, Pn)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient for %s" % name)
    return float(bound.value), ensemble.ess, grads


def sequence_bound(model, net, x, config, keys):
    """
    Bound and final ESS for one sequence, with constant parameters.
    """
    tape = graph.Tape()
    Pm = model.bind(tape, constant=True)
    Pn = net.bind(tape, constant=True)
    q0, schedule = net.infer(Pn, tape.constant(x), gain_scale=0.0)
    ensemble, _, _, trace = adapt.adapt_loop(
        model, Pm, q0, schedule, StateCost.learning(x), config, keys
    )
    return float(ensemble.mco_node().value), ensemble.ess, trace


def _map(threads, func, items):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def _check_compatible(model, net, dataset, exact_K=True):
    if dataset.d_x != model.d_x or net.d_x != model.d_x:
        raise DataError(
            "observation width mismatch: data %s, model %s" % (dataset.d_x, model.d_x)
        )
    if exact_K and dataset.K != model.K:
        raise DataError("sequence length mismatch: data %s, model %s" % (dataset.K, model.K))
    if not exact_K and dataset.K < model.K:
        raise DataError("sequences shorter than the model's K=%s" % model.K)


def bound_pass(model, net, dataset, config, base_keys, threads=1):
    """
    Bounds of every sequence in `dataset`, no parameter updates.
    """
    start = time.time()
    results = _map(
        threads,
        lambda i: sequence_bound(
            model, net, dataset.frames[i], config, tuple(base_keys) + (i,)
        ),
        range(len(dataset)),
    )
    return BoundReport(
        [r[0] for r in results],
        [r[1] for r in results],
        wallclock=time.time() - start,
        L=config.L,
        R=config.R,
        traces=[r[2] for r in results],
    )


def pretrain_dynamics(model, steps, learning_rate=1e-2, seed=0, batch=64):
    """
    Regress the drift onto the stable system f(z) = -z on states drawn from
    N(0, 4I), starting the dynamics off stable.

    Returns the final mean squared error.
    """
    optimizer = Adam(learning_rate)
    loss = None
    for step in range(steps):
        rng = helpers.rng_for(seed, 11, step)
        Z = 2.0 * rng.standard_normal((batch, model.d_z))
        tape = graph.Tape()
        P = model.bind(tape)
        Zc = tape.constant(Z)
        residual = model.dynamics.drift(P, Zc) + Zc
        objective = graph.mean(graph.square(residual))
        grads = mco_grad(tape, objective, P)
        model.set_params(optimizer.step(model.params, grads))
        loss = float(objective.value)
        if step % 100 == 0:
            logger.debug("pretrain step %s: mse %.6f" % (step, loss))
    return loss


def train_run(dataset, config, out_dir=None, model=None, net=None):
    """
    Train a model and inference network on `dataset`.

    Parameters
    ----------
    dataset : apiae.pendulum.Dataset

    config : dict or TrainConfig

    out_dir : str or None
        If given, receives config.json, curve.csv, checkpoint-epoch-NNN.db
        after every epoch and checkpoint.db at the end.

    model, net : optional
        Continue training these instead of fresh ones.

    Returns
    -------
    model, net, history
        `history` is a list of (epoch, BoundReport); epoch 0 is the
        untrained model.
    """
    cfg = config if isinstance(config, TrainConfig) else TrainConfig(config)
    if model is None:
        model = LatentModel(
            cfg.d_z,
            cfg.d_u,
            dataset.d_x,
            dataset.K,
            dataset.dt,
            M=cfg.M,
            hidden=cfg.hidden,
            decoder=cfg.decoder,
            seed=cfg.seed,
        )
    if net is None:
        net = InferenceNetwork(dataset.d_x, cfg.d_z, cfg.d_u, d_h=cfg.d_h, seed=cfg.seed)
    _check_compatible(model, net, dataset)
    if dataset.K != cfg.K:
        logger.warning("config K=%s but dataset K=%s; using the dataset" % (cfg.K, dataset.K))

    if out_dir is not None:
        if not os.path.exists(out_dir):
            os.makedirs(out_dir)
        helpers.write_config(cfg.config, out_dir)
        curve = writers.CSVWriter(os.path.join(out_dir, "curve.csv"), CURVE_COLUMNS)
    else:
        curve = None

    if cfg.pretrain_steps:
        mse = pretrain_dynamics(model, cfg.pretrain_steps, seed=cfg.seed)
        logger.info("pretrained dynamics for %s steps (mse %.4g)" % (cfg.pretrain_steps, mse))

    adapt_cfg = cfg.adapt_config()
    optimizer = Adam(cfg.learning_rate)
    history = []
    start = time.time()

    def _record(epoch, report):
        history.append((epoch, report))
        logger.info(
            "epoch %s: mean bound %.4f, ess %.2f"
            % (epoch, report.mean, report.ess_mean)
        )
        if curve is not None:
            curve.write_row([epoch, report.mean, report.ess_mean, time.time() - start])

    try:
        _record(0, bound_pass(model, net, dataset, adapt_cfg, (cfg.seed, 0), cfg.threads))
        for epoch in range(1, cfg.epochs + 1):
            bounds, esses = [], []
            batches = iterators.BatchIterator(
                dataset, cfg.batch_size, shuffle=True, seed=cfg.seed, epoch=epoch
            )
            for indices, frames in batches:
                try:
                    results = _map(
                        cfg.threads,
                        lambda j: sequence_gradient(
                            model,
                            net,
                            frames[j],
                            adapt_cfg,
                            (cfg.seed, epoch, int(indices[j])),
                        ),
                        range(len(indices)),
                    )
                except NonFiniteError as e:
                    _dump_abort(out_dir, epoch, batches, cfg.seed, e)
                    raise NonFiniteError(
                        "training aborted in epoch %s: %s" % (epoch, e.msg),
                        batch=batches.current_batch_number,
                        seed=cfg.seed,
                    )
                grads = collections.OrderedDict()
                for _, _, g in results:
                    for name, value in g.items():
                        # loss is the negative bound
                        grads[name] = grads.get(name, 0.0) - value / len(results)
                grads, norm = clip_by_global_norm(grads, cfg.clip_norm)
                params = collections.OrderedDict(model.params)
                params.update(net.params)
                params = optimizer.step(params, grads)
                model.set_params(params)
                net.set_params(params)
                bounds.extend(r[0] for r in results)
                esses.extend(r[1] for r in results)
                logger.debug(
                    "epoch %s batch %s: bound %.4f, grad norm %.3g"
                    % (epoch, batches.current_batch_number, np.mean([r[0] for r in results]), norm)
                )
            report = BoundReport(
                bounds, esses, wallclock=time.time() - start, mode=cfg.mode, L=cfg.L, R=adapt_cfg.R
            )
            _record(epoch, report)
            if out_dir is not None:
                save_checkpoint(
                    os.path.join(out_dir, "checkpoint-epoch-%03d.db" % epoch),
                    model,
                    net,
                    extra_meta={"epoch": epoch},
                )
    finally:
        if curve is not None:
            curve.close()

    if out_dir is not None:
        save_checkpoint(
            os.path.join(out_dir, "checkpoint.db"),
            model,
            net,
            extra_meta={"epoch": cfg.epochs},
        )
    return model, net, history


def _dump_abort(out_dir, epoch, batches, seed, error):
    info = {
        "epoch": epoch,
        "batch": batches.current_batch_number,
        "indices": [int(i) for i in batches.current_batch],
        "seed": seed,
        "step": error.step,
        "message": error.msg,
    }
    logger.error("non-finite value, aborting: %s" % json.dumps(info))
    if out_dir is not None:
        with open(os.path.join(out_dir, "abort.json"), "w") as fout:
            json.dump(info, fout, indent=2)


def _resolve(checkpoint):
    if isinstance(checkpoint, str):
        model, net, _ = load_checkpoint(checkpoint)
        return model, net
    return checkpoint


def evaluate_bound(checkpoint, dataset, mode, L, R, config=None, threads=None):
    """
    Per-sequence and mean lower bounds of a trained model.

    Parameters
    ----------
    checkpoint : str or (LatentModel, InferenceNetwork)

    mode : "apiae+r" | "apiae" | "fivo" | "iwae"

    L, R : int
        Samples and adaptation rounds (R is ignored by fivo and iwae).

    config : dict or TrainConfig or None
        Supplies eta, thresholds and seeds.  Evaluation seeds are offset by
        `eval_seed_offset` from the training seed.

    Returns
    -------
    BoundReport
    """
    model, net = _resolve(checkpoint)
    _check_compatible(model, net, dataset)
    cfg = config if isinstance(config, TrainConfig) else TrainConfig(config or {})
    adapt_cfg = cfg.adapt_config(mode=mode, L=L, R=R)
    threads = cfg.threads if threads is None else threads
    report = bound_pass(
        model, net, dataset, adapt_cfg, (cfg.seed + cfg.eval_seed_offset, 0), threads
    )
    report.mode = mode
    logger.info(
        "%s L=%s R=%s: mean bound %.4f (ess %.2f)"
        % (mode, L, adapt_cfg.R, report.mean, report.ess_mean)
    )
    return report


def sweep_bounds(checkpoint, dataset, Ls, Rs, mode="apiae", config=None):
    """
    Evaluate a grid of (L, R) settings.

    Returns
    -------
    list of BoundReport, L-major.
    """
    checkpoint = _resolve(checkpoint)
    return [
        evaluate_bound(checkpoint, dataset, mode, L, R, config) for L in Ls for R in Rs
    ]


def exact_linear_evidence(model, x):
    """
    Exact log p(x_1:K) of a linear-Gaussian model by Kalman filtering the
    discretized system

        z_k = (I + A dt) z_{k-1} + c dt + N(0, B B^T dt)
        x_k = C z_k + b + N(0, diag(exp(2 s)))

    Raises ValueError unless the model has one linear component and the
    linear decoder.
    """
    if model.M != 1 or model.decoder_kind != "linear":
        raise ValueError("exact evidence needs M=1 and the linear decoder")
    x = np.asarray(x, dtype=np.float64)
    p = model.params
    A = p["dynamics.A"][0]
    B = p["dynamics.B"][0]
    c = p["dynamics.c"][0]
    C = p["decoder.C"]
    b = p["decoder.b"]
    log_std = np.clip(p["decoder.log_std"], constants.LOG_STD_MIN, constants.LOG_STD_MAX)
    noise = np.diag(np.exp(2 * log_std))
    dt = model.dt
    F = np.eye(model.d_z) + A * dt
    Q = B @ B.T * dt

    m = model.prior.mean.copy()
    P = np.diag(np.exp(2 * model.prior.log_std))
    total = 0.0
    for k in range(len(x)):
        if k:
            m = F @ m + c * dt
            P = F @ P @ F.T + Q
        S = C @ P @ C.T + noise
        chol = linalg.cholesky(S, lower=True)
        total += helpers.gaussian_logpdf(x[k], C @ m + b, chol)
        gain = linalg.cho_solve((chol, True), C @ P).T
        m = m + gain @ (x[k] - C @ m - b)
        P = P - gain @ S @ gain.T
        P = 0.5 * (P + P.T)
    return float(total)


def reconstruct(model, net, x, config=None, keys=(0,)):
    """
    Decode the weighted posterior mean path of one sequence.

    Returns
    -------
    frames, mean_path, bound
        frames (K, d_x) decoder means; mean_path (K, d_z).
    """
    cfg = config if isinstance(config, TrainConfig) else TrainConfig(config or {})
    adapt_cfg = cfg.adapt_config()
    tape = graph.Tape()
    Pm = model.bind(tape, constant=True)
    Pn = net.bind(tape, constant=True)
    q0, schedule = net.infer(Pn, tape.constant(x[: model.K]), gain_scale=0.0)
    ensemble, _, _, _ = adapt.adapt_loop(
        model, Pm, q0, schedule, StateCost.learning(x[: model.K]), adapt_cfg, keys
    )
    mean_path = ensemble.mean_path()
    frames = model.decode(Pm, tape.constant(mean_path)).value
    return frames, mean_path, float(ensemble.mco_node().value)


def predict(model, z_start, steps):
    """
    Continue from `z_start` with u=0 and no noise (z <- z + f(z) dt) for
    `steps` steps and decode every new state.

    Returns
    -------
    frames (steps, d_x), states (steps, d_z)
    """
    tape = graph.Tape()
    P = model.bind(tape, constant=True)
    z = np.asarray(z_start, dtype=np.float64)
    states = []
    for _ in range(steps):
        z = z + model.dynamics.drift(P, tape.constant(z)).value * model.dt
        states.append(z)
    states = np.array(states).reshape(steps, model.d_z)
    frames = model.decode(P, tape.constant(states)).value if steps else np.zeros((0, model.d_x))
    return frames, states


def prediction_report(model, net, dataset, config=None, limit=None):
    """
    Pixel MSE of reconstructions (first K frames) and of predictions (the
    frames after K, when the data is long enough), next to the MSE of the
    dataset's mean frame.

    Returns
    -------
    dict with keys recon_mse, predict_mse (nan when sequences have only K
    frames), baseline_mse, n.
    """
    _check_compatible(model, net, dataset, exact_K=False)
    cfg = config if isinstance(config, TrainConfig) else TrainConfig(config or {})
    n = len(dataset) if limit is None else min(limit, len(dataset))
    K = model.K
    horizon = dataset.K - K
    mean_frame = dataset.frames.reshape(-1, dataset.d_x).mean(axis=0)
    recon, pred = [], []
    for i in range(n):
        x = dataset.frames[i]
        frames, path, _ = reconstruct(
            model, net, x, cfg, (cfg.seed + cfg.eval_seed_offset, 1, i)
        )
        recon.append(np.mean((frames - x[:K]) ** 2))
        if horizon > 0:
            future, _ = predict(model, path[-1], horizon)
            pred.append(np.mean((future - x[K:]) ** 2))
    baseline = np.mean((dataset.frames[:n] - mean_frame) ** 2)
    return {
        "recon_mse": float(np.mean(recon)),
        "predict_mse": float(np.mean(pred)) if pred else float("nan"),
        "baseline_mse": float(baseline),
        "n": n,
    }


def grad_check_suite(seed=0, eps=1e-5):
    """
    Max relative gradient errors of the standard checks: the op set, the
    rollout action with respect to model, q0 and schedule parameters, and
    the full objective in iwae and apiae modes (two adaptation rounds) with
    respect to all parameters.

    Returns
    -------
    OrderedDict name -> max relative error
    """
    rng = helpers.rng_for(seed, 99)
    out = collections.OrderedDict()

    spd = rng.standard_normal((3, 3))
    spd = spd @ spd.T + 3 * np.eye(3)

    def ops(tape, v):
        M = graph.reshape(v[:9], (3, 3))
        y = graph.softplus(v[9:12]) + graph.sigmoid(v[9:12]) * graph.tanh(v[9:12])
        h = graph.relu(M @ y + 0.3) + graph.exp(graph.clip(v[:3], -1.0, 1.0))
        s = graph.softmax(h) * graph.log(graph.square(v[9:12]) + 1.0)
        return graph.logsumexp(graph.concat([s, h])) + graph.quadform(y, M @ M.T)

    out["ops"] = graph.grad_check(ops, rng.standard_normal(12), eps)

    def chol(tape, v):
        A = graph.reshape(v, (3, 3))
        S = A @ A.T + tape.constant(3 * np.eye(3))
        L = graph.cholesky(S)
        b = tape.constant(np.arange(3.0) + 1)
        return graph.sum(graph.trisolve(L, b)) + graph.sum(
            graph.trisolve(L, graph.diag(L), trans=True)
        ) + graph.sum(graph.log(graph.diag(L)))

    out["cholesky"] = graph.grad_check(chol, linalg.cholesky(spd, lower=True).ravel(), eps)

    model = LatentModel(2, 2, 3, 3, 0.1, M=2, hidden=4, seed=seed)
    net = InferenceNetwork(3, 2, 2, d_h=3, seed=seed)
    x = rng.standard_normal((3, 3))

    action_params = collections.OrderedDict(model.params)
    action_params["q0.mean"] = 0.1 * rng.standard_normal(2)
    action_params["q0.chol"] = np.eye(2) + np.tril(0.1 * rng.standard_normal((2, 2)))
    action_params["schedule.feedforward"] = 0.1 * rng.standard_normal((2, 2))
    action_params["schedule.gains"] = 0.1 * rng.standard_normal((2, 2, 2))
    action_point, action_layout = graph.pack(action_params)
    eps0, dW = adapt.draw_noise((seed, 6), 0, 2, 2, 2, 2, model.dt)

    def action(tape, v):
        P = graph.unpack(tape, v, action_layout)
        schedule = ControlSchedule(
            [P["schedule.feedforward"][k] for k in range(2)],
            [P["schedule.gains"][k] for k in range(2)],
            [tape.constant(np.zeros(2)) for _ in range(2)],
            [tape.constant(np.eye(2)) for _ in range(2)],
        )
        q0 = (P["q0.mean"], P["q0.chol"])
        paths = simulate(model, P, q0, schedule, StateCost.learning(x), eps0, dW)
        return graph.sum(paths.action)

    out["action"] = graph.grad_check(action, action_point, eps)

    params = collections.OrderedDict(model.params)
    params.update(net.params)
    point, layout = graph.pack(params)

    def objective(config):
        def f(tape, v):
            P = graph.unpack(tape, v, layout)
            q0, schedule = net.infer(P, tape.constant(x), gain_scale=1.0)
            ens, _, _, _ = adapt.adapt_loop(
                model, P, q0, schedule, StateCost.learning(x), config, (seed, 5)
            )
            return ens.mco_node()

        return f

    out["objective_iwae"] = graph.grad_check(
        objective(adapt.AdaptConfig(L=3, R=0)), point, eps
    )
    out["objective_apiae"] = graph.grad_check(
        objective(
            adapt.AdaptConfig(
                L=4, R=2, update_gains=True, cov_floor=0.1, stop_weight_gradients=False
            )
        ),
        point,
        eps,
    )
    return out
