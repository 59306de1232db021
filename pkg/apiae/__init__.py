from apiae.model import LatentModel, StateCost, QuadraticCost
from apiae.inference import InferenceNetwork, ControlSchedule
from apiae.adapt import AdaptConfig, adapt_loop
from apiae.train import TrainConfig, train_run, evaluate_bound
from apiae.plan import PlanningProblem
from apiae.pendulum import Dataset
from apiae.checkpoint import save_checkpoint, load_checkpoint
from apiae.helpers import example_filename, load_config
from apiae.exceptions import (
    ShapeError,
    NonFiniteError,
    CholeskyError,
    ConfigError,
    DataError,
)
from apiae.version import version as __version__
