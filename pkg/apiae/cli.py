"""
Command-line interface: generate data, train, evaluate bounds, predict,
plan and check gradients.

Every command takes --config, --out, --seed, --threads, --verbose/--debug
and trailing key=value overrides of configuration keys.
"""
import os
import sys

import argcomplete
import argh
from argh import arg

from apiae import adapt
from apiae import helpers
from apiae import inspect as inspect_mod
from apiae import pendulum
from apiae import plan as plan_mod
from apiae import train as train_mod
from apiae import writers
from apiae.checkpoint import load_checkpoint
from apiae.exceptions import (
    CholeskyError,
    ConfigError,
    DataError,
    NonFiniteError,
    UsageError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argh.ArghParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def common_options(func):
    """
    Options shared by every command.
    """
    decorators = [
        arg("overrides", nargs="*", help="key=value config overrides"),
        arg("--config", help="JSON config file"),
        arg("--out", help="Output directory"),
        arg("--seed", type=int, help="Random seed (overrides config)"),
        arg("--threads", type=int, help="Worker threads (overrides config)"),
        arg("--verbose", help="Report progress"),
        arg("--debug", help="Report per-round diagnostics"),
    ]
    for d in reversed(decorators):
        func = d(func)
    return func


def _setup(config, out, seed, threads, verbose, debug, overrides):
    level = "debug" if debug else verbose
    for mod in (train_mod, adapt, plan_mod, pendulum):
        helpers.set_verbose(mod.logger, level)
    extra = list(overrides)
    if seed is not None:
        extra.append("seed=%s" % seed)
    if threads is not None:
        extra.append("threads=%s" % threads)
    cfg = helpers.load_config(config, extra)
    out = out or "."
    if not os.path.exists(out):
        os.makedirs(out)
    helpers.write_config(cfg, out)
    return cfg, out


def _read_dataset(fn):
    if not os.path.exists(fn):
        raise DataError("dataset %s does not exist" % fn)
    return pendulum.Dataset.read(fn)


@argh.named("gen-data")
@common_options
def gen_data(
    *overrides, config=None, out=None, seed=None, threads=None, verbose=False, debug=False
):
    """
    Simulate pendulum sequences into OUT/dataset.bin.
    """
    cfg, out = _setup(config, out, seed, threads, verbose, debug, overrides)
    data = pendulum.generate(
        cfg["n_sequences"],
        cfg["K"],
        dt=cfg["dt"],
        disturbance_sigma=cfg["disturbance_sigma"],
        pixel_noise_sigma=cfg["pixel_noise_sigma"],
        seed=cfg["seed"],
    )
    fn = data.write(os.path.join(out, "dataset.bin"))
    return "wrote %s sequences of %s frames to %s" % (len(data), data.K, fn)


@argh.named("train")
@common_options
@arg("--data", help="Dataset file (default OUT/dataset.bin)")
def train(
    *overrides,
    data=None,
    config=None,
    out=None,
    seed=None,
    threads=None,
    verbose=False,
    debug=False
):
    """
    Train a model; writes OUT/checkpoint.db, per-epoch checkpoints and
    OUT/curve.csv.
    """
    cfg, out = _setup(config, out, seed, threads, verbose, debug, overrides)
    dataset = _read_dataset(data or os.path.join(out, "dataset.bin"))
    _, _, history = train_mod.train_run(dataset, cfg, out_dir=out)
    epoch, report = history[-1]
    return "epoch %s: mean bound %.4f" % (epoch, report.mean)


@argh.named("eval")
@common_options
@arg("--checkpoint", help="Checkpoint file", required=True)
@arg("--data", help="Dataset file", required=True)
@arg("--mode", help="apiae+r, apiae, fivo or iwae")
@arg("--L", type=int, help="Samples per sequence")
@arg("--R", type=int, help="Adaptation rounds")
@arg("--trace", help="Also write OUT/trace.csv")
def evaluate(
    *overrides,
    checkpoint=None,
    data=None,
    mode=None,
    L=None,
    R=None,
    trace=False,
    config=None,
    out=None,
    seed=None,
    threads=None,
    verbose=False,
    debug=False
):
    """
    Lower bounds of a checkpoint on a dataset; writes OUT/bounds.csv.
    """
    cfg, out = _setup(config, out, seed, threads, verbose, debug, overrides)
    mode = mode or cfg["mode"]
    if mode not in ("apiae+r", "apiae", "fivo", "iwae"):
        raise ConfigError("unknown mode %r" % mode)
    dataset = _read_dataset(data)
    model, net, _ = load_checkpoint(checkpoint)
    L = cfg["L"] if L is None else L
    R = cfg["R"] if R is None else R
    report = train_mod.evaluate_bound((model, net), dataset, mode, L, R, cfg)
    report.write(os.path.join(out, "bounds.csv"))
    if trace:
        report.write_traces(os.path.join(out, "trace.csv"))
    return "%s L=%s R=%s: mean bound %.4f (ess mean %.2f, min %.2f)" % (
        mode,
        L,
        report.R,
        report.mean,
        report.ess_mean,
        report.ess_min,
    )


@argh.named("predict")
@common_options
@arg("--checkpoint", help="Checkpoint file", required=True)
@arg("--data", help="Dataset file", required=True)
@arg("--index", type=int, help="Sequence to show")
@arg("--limit", type=int, help="Sequences used for the MSE report")
def predict(
    *overrides,
    checkpoint=None,
    data=None,
    index=0,
    limit=20,
    config=None,
    out=None,
    seed=None,
    threads=None,
    verbose=False,
    debug=False
):
    """
    Reconstruct the first K frames of a sequence, then roll the model
    forward K more steps with u=0.  Writes OUT/recon-NNN.pgm and
    OUT/predict-strip.pgm and reports pixel MSEs.
    """
    cfg, out = _setup(config, out, seed, threads, verbose, debug, overrides)
    dataset = _read_dataset(data)
    model, net, _ = load_checkpoint(checkpoint)
    if not 0 <= index < len(dataset):
        raise DataError("index %s outside 0..%s" % (index, len(dataset) - 1))
    x = dataset.frames[index]
    K = model.K
    recon, path, _ = train_mod.reconstruct(
        model, net, x, cfg, (cfg["seed"] + cfg["eval_seed_offset"], 1, index)
    )
    future, _ = train_mod.predict(model, path[-1], K)
    h, w = dataset.height, dataset.width
    writers.write_strip(os.path.join(out, "recon-%03d.pgm" % index), [x[:K], recon], h, w)
    truth = list(x)
    writers.write_strip(
        os.path.join(out, "predict-strip.pgm"), [truth, list(recon) + list(future)], h, w
    )
    report = train_mod.prediction_report(model, net, dataset, cfg, limit=limit)
    return (
        "reconstruction mse %(recon_mse).5f, prediction mse %(predict_mse).5f, "
        "mean-frame baseline %(baseline_mse).5f over %(n)s sequences" % report
    )


@argh.named("plan")
@common_options
@arg("--checkpoint", help="Checkpoint file", required=True)
@arg("--data", help="Dataset file holding the starting sequence", required=True)
@arg("--index", type=int, help="Sequence whose frames give the initial state")
@arg("--target-angle", type=float, help="Angle of the target frame (pi is upright)")
@arg("--horizon", type=int, help="Planned states (default plan_horizon)")
def plan(
    *overrides,
    checkpoint=None,
    data=None,
    index=0,
    target_angle=3.141592653589793,
    horizon=None,
    config=None,
    out=None,
    seed=None,
    threads=None,
    verbose=False,
    debug=False
):
    """
    Plan towards the rendered frame at TARGET_ANGLE.  Writes OUT/plan-NNN.pgm
    (one per step), OUT/plan-path.csv and OUT/plan-cost.csv.
    """
    cfg, out = _setup(config, out, seed, threads, verbose, debug, overrides)
    dataset = _read_dataset(data)
    model, net, _ = load_checkpoint(checkpoint)
    if not 0 <= index < len(dataset):
        raise DataError("index %s outside 0..%s" % (index, len(dataset) - 1))
    problem = plan_mod.swingup_problem(
        model, dataset.frames[index], cfg, target_angle=target_angle, horizon=horizon
    )
    result = plan_mod.plan(model, problem, net=net)
    for k, frame in enumerate(result.frames):
        writers.write_pgm(
            os.path.join(out, "plan-%03d.pgm" % k),
            frame.reshape(dataset.height, dataset.width),
        )
    with writers.CSVWriter(
        os.path.join(out, "plan-path.csv"), ["k"] + ["z%s" % j for j in range(model.d_z)]
    ) as w:
        for k, z in enumerate(result.mean_path):
            w.write_row([k] + list(z))
    with writers.CSVWriter(
        os.path.join(out, "plan-cost.csv"), ["round", "ess", "log_mean_exp", "state_cost"]
    ) as w:
        w.write_rows(result.trace.rows())
    return "plan cost %.5g -> %.5g over %s rounds" % (
        result.cost_trace[0],
        result.cost_trace[-1],
        len(result.cost_trace) - 1,
    )


@argh.named("grad-check")
@common_options
def grad_check(
    *overrides, config=None, out=None, seed=None, threads=None, verbose=False, debug=False
):
    """
    Print the max relative gradient errors of the standard checks.
    """
    cfg, out = _setup(config, out, seed, threads, verbose, debug, overrides)
    errors = train_mod.grad_check_suite(seed=cfg["seed"])
    return "\n".join("%s\t%.3g" % item for item in errors.items())


@argh.named("latent")
@common_options
@arg("--checkpoint", help="Checkpoint file", required=True)
@arg("--data", help="Dataset file", required=True)
@arg("--limit", type=int, help="Number of sequences")
def latent(
    *overrides,
    checkpoint=None,
    data=None,
    limit=None,
    config=None,
    out=None,
    seed=None,
    threads=None,
    verbose=False,
    debug=False
):
    """
    Posterior-mean latent paths with ground-truth states, as OUT/latent.csv.
    """
    cfg, out = _setup(config, out, seed, threads, verbose, debug, overrides)
    dataset = _read_dataset(data)
    model, net, _ = load_checkpoint(checkpoint)
    result = inspect_mod.inspect_latent(model, net, dataset, cfg, limit=limit, verbose=verbose)
    fn = os.path.join(out, "latent.csv")
    with writers.CSVWriter(fn, inspect_mod.latent_columns(model.d_z)) as w:
        w.write_rows(inspect_mod.latent_rows(result))
    return "wrote %s" % fn


COMMANDS = [gen_data, train, evaluate, predict, plan, grad_check, latent]


def build_parser():
    parser = _Parser(prog="apiae-cli", description=__doc__)
    parser.add_commands(COMMANDS)
    return parser


def run(argv=None):
    """
    Run the command line `argv` and return the exit code.
    """
    parser = build_parser()
    argcomplete.autocomplete(parser)
    try:
        parser.dispatch(argv=argv, output_file=sys.stdout)
    except (UsageError, ConfigError) as e:
        sys.stderr.write("error: %s\n" % e)
        return EXIT_USAGE
    except (DataError, IOError) as e:
        sys.stderr.write("error: %s\n" % e)
        return EXIT_DATA
    except (NonFiniteError, CholeskyError) as e:
        sys.stderr.write("numerical error: %s\n" % e)
        return EXIT_NUMERIC
    except SystemExit as e:
        # --help
        return e.code or EXIT_OK
    return EXIT_OK


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
