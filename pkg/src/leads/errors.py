"""Exception types shared across the package.

The CLI maps ContractError (and subclasses) to exit code 1 and I/O
failures to exit code 2.
"""


class ContractError(ValueError):
    """An argument or state violates an operation's contract."""


class ShapeError(ContractError):
    """Operand shapes do not conform for the requested operation."""


class ConfigError(ContractError):
    """A configuration file or sweep specification is invalid."""


class DivergenceError(RuntimeError):
    """An integration, rollout, or training step produced non-finite values."""


class GenerationError(DivergenceError):
    """Ground-truth trajectory generation failed for a specific environment."""
