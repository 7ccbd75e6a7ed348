"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class NotPositiveDefinite(ToolkitError):
    """A matrix required to be positive definite failed its Cholesky factorization."""


class IllConditioned(ToolkitError):
    """A solve could not be stabilized within the regularization budget."""


class InsufficientData(ToolkitError):
    """An operation needs more samples than are available."""


class InsufficientEpisodes(ToolkitError):
    """A per-timestep model fit needs at least two episodes."""


class NotFull(ToolkitError):
    """A fixed-size batch buffer was consumed before it filled."""


class NonFiniteState(ToolkitError):
    """A state, action, or intermediate quantity became NaN or infinite."""


class TrainingError(ToolkitError):
    """Training aborted; message names the episode and step."""


class ConfigError(ToolkitError):
    """A configuration key or value was rejected."""


class CheckpointError(ToolkitError):
    """A checkpoint or model file could not be parsed."""
