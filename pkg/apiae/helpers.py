import copy
import os
import logging
import numpy as np
import simplejson as json
from scipy import linalg
from apiae import constants
from apiae.exceptions import ConfigError, CholeskyError

HERE = os.path.dirname(os.path.abspath(__file__))


def example_filename(fn):
    """
    Return the full path of a data file that ships with apiae.
    """
    return os.path.join(HERE, "test", "data", fn)


def _jsonify(x):
    """Use most compact form of JSON"""
    return json.dumps(x, separators=(",", ":"))


def _unjsonify(x):
    return json.loads(x)


def set_verbose(logger, verbose=None):
    """
    "debug" -> DEBUG, truthy -> INFO, otherwise ERROR.
    """
    if verbose == "debug":
        logger.setLevel(logging.DEBUG)
    elif verbose:
        logger.setLevel(logging.INFO)
    else:
        logger.setLevel(logging.ERROR)


def parse_override(item):
    """
    Parse a single "key=value" override.  Values are read as JSON when
    possible (so `L=16` is an int and `decoder=linear` stays a string).
    """
    if "=" not in item:
        raise ConfigError("override %r is not of the form key=value" % item)
    key, value = item.split("=", 1)
    key = key.strip()
    try:
        value = json.loads(value)
    except json.JSONDecodeError:
        pass
    return key, value


def validate_config(config):
    """
    Check keys and values of a config dict in place.
    """
    unknown = sorted(set(config) - set(constants.default_config))
    if unknown:
        raise ConfigError("unknown config keys: %s" % ", ".join(unknown))
    if config["mode"] not in constants.modes:
        raise ConfigError(
            "mode %r not in %s" % (config["mode"], sorted(constants.modes))
        )
    for key in ("L", "plan_L"):
        if int(config[key]) < 2:
            raise ConfigError("%s must be at least 2" % key)
    for key in ("R", "plan_R", "pretrain_steps"):
        if int(config[key]) < 0:
            raise ConfigError("%s must be non-negative" % key)
    for key in ("K", "plan_horizon"):
        if int(config[key]) < 2:
            raise ConfigError("%s must be at least 2" % key)
    for key in ("eta", "plan_eta", "ess_threshold"):
        if not 0 < float(config[key]) <= 1:
            raise ConfigError("%s must be in (0, 1]" % key)
    for key in ("dt", "cov_floor", "learning_rate", "clip_norm"):
        if float(config[key]) <= 0:
            raise ConfigError("%s must be positive" % key)
    if float(config["plan_gain_shrinkage"]) < 0:
        raise ConfigError("plan_gain_shrinkage must be non-negative")
    if config["decoder"] not in ("mlp", "linear"):
        raise ConfigError("decoder must be 'mlp' or 'linear'")
    return config


def load_config(fn=None, overrides=None):
    """
    Build the effective configuration.

    Parameters
    ----------
    fn : str or None
        JSON config file.  Its keys win over `constants.default_config`.

    overrides : list of str or dict
        "key=value" strings (or a dict); these win over the file.

    Returns
    -------
    dict
    """
    config = copy.deepcopy(constants.default_config)
    if fn is not None:
        with open(fn) as fh:
            try:
                from_file = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError("%s is not valid JSON: %s" % (fn, e))
        if not isinstance(from_file, dict):
            raise ConfigError("%s must contain a JSON object" % fn)
        unknown = sorted(set(from_file) - set(config))
        if unknown:
            raise ConfigError("unknown config keys in %s: %s" % (fn, ", ".join(unknown)))
        config.update(from_file)
    if overrides:
        if isinstance(overrides, dict):
            items = overrides.items()
        else:
            items = [parse_override(i) for i in overrides]
        for key, value in items:
            if key not in config:
                raise ConfigError("unknown config key %r" % key)
            config[key] = value
    return validate_config(config)


def write_config(config, out_dir):
    """
    Echo the effective config into `out_dir`/config.json.
    """
    fn = os.path.join(out_dir, "config.json")
    with open(fn, "w") as fout:
        json.dump(config, fout, indent=2, sort_keys=True)
    return fn


def rng_for(*keys):
    """
    Counter-based random stream for a tuple of non-negative integer keys.

    The same keys always give the same stream, whichever thread or order
    asks for it.
    """
    return np.random.default_rng([int(k) for k in keys])


def chol_logdet(chol):
    """log |S| for S = chol chol^T"""
    return 2.0 * np.sum(np.log(np.diag(chol)))


def gaussian_logpdf(x, mean, chol):
    """
    Log density of N(mean, chol chol^T) at `x`, numpy only.
    """
    chol = np.asarray(chol, dtype=np.float64)
    if np.any(np.diag(chol) <= 0):
        raise CholeskyError("Cholesky factor needs a positive diagonal")
    d = np.size(mean)
    r = linalg.solve_triangular(chol, np.asarray(x) - np.asarray(mean), lower=True)
    return -0.5 * (r @ r) - 0.5 * chol_logdet(chol) - 0.5 * d * np.log(2 * np.pi)


def weighted_moments(weights, points, floor):
    """
    Weighted mean and Cholesky factor of the weighted covariance + floor*I.
    """
    weights = np.asarray(weights, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    mu = weights @ points
    centered = points - mu
    cov = (centered * weights[:, None]).T @ centered + floor * np.eye(points.shape[1])
    try:
        return mu, linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        raise CholeskyError("weighted covariance is not positive definite")
