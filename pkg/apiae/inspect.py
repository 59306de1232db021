import sys
import numpy as np
from apiae import train

LATENT_COLUMNS_BASE = ["sequence", "k", "angle", "velocity"]


def inspect_latent(model, net, dataset, config=None, limit=None, verbose=True):
    """
    Posterior-mean latent paths of a dataset, next to the ground-truth
    pendulum states.

    This is useful for checking whether the learned latent space is
    organized by angle and velocity, e.g. by plotting the latent
    coordinates colored by angle.

    Parameters
    ----------
    model, net : trained model and inference network

    dataset : apiae.pendulum.Dataset

    config : dict or None
        Adaptation settings used to refine each posterior (L, R, eta, ...).

    limit : int
        Number of sequences to look at.  Default is no limit.

    verbose : bool
        Report how many sequences have been processed.

    Returns
    -------
    dict
        {"latent": (n, K, d_z), "states": (n, K, 2), "bound": (n,)}
    """
    cfg = config if isinstance(config, train.TrainConfig) else train.TrainConfig(config or {})
    n = len(dataset) if limit is None else min(limit, len(dataset))
    latent = np.empty((n, model.K, model.d_z))
    bounds = np.empty(n)
    for i in range(n):
        _, path, bound = train.reconstruct(
            model, net, dataset.frames[i], cfg, (cfg.seed + cfg.eval_seed_offset, 2, i)
        )
        latent[i] = path
        bounds[i] = bound
        if verbose and (i + 1) % 10 == 0:
            sys.stderr.write("\r%s of %s sequences" % (i + 1, n))
            sys.stderr.flush()
    if verbose and n:
        sys.stderr.write("\r%s of %s sequences\n" % (n, n))
    return {
        "latent": latent,
        "states": dataset.states[:n, : model.K],
        "bound": bounds,
    }


def latent_rows(result):
    """
    Flatten an `inspect_latent` result into CSV rows of
    sequence, k, angle, velocity, z_0, ..., z_{d-1}.
    """
    latent = result["latent"]
    states = result["states"]
    for i in range(latent.shape[0]):
        for k in range(latent.shape[1]):
            yield [i, k, states[i, k, 0], states[i, k, 1]] + list(latent[i, k])


def latent_columns(d_z):
    return LATENT_COLUMNS_BASE + ["z%s" % j for j in range(d_z)]
