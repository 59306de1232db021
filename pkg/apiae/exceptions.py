class ShapeError(ValueError):
    """
    Error to be raised when an operation receives tensors of incompatible
    shapes.
    """

    def __init__(self, op, *shapes):
        ValueError.__init__(self)
        self.op = op
        self.shapes = shapes

    def __str__(self):
        return "shape mismatch in %s: %s" % (
            self.op,
            ", ".join(str(tuple(s)) for s in self.shapes),
        )


class NonFiniteError(FloatingPointError):
    """
    Error to be raised when a NaN or Inf shows up in a tensor.

    `step`, `batch` and `seed` are filled in by whoever knows them, so the
    message points at the offending rollout step or minibatch.
    """

    def __init__(self, msg, step=None, batch=None, seed=None):
        FloatingPointError.__init__(self)
        self.msg = msg
        self.step = step
        self.batch = batch
        self.seed = seed

    def __str__(self):
        s = self.msg
        if self.step is not None:
            s += " (step %s)" % self.step
        if self.batch is not None:
            s += " (batch %s, seed %s)" % (self.batch, self.seed)
        return s


class CholeskyError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


class UsageError(Exception):
    pass
