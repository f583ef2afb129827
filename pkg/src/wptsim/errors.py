"""Exception types shared across the toolkit.

The CLI maps ScenarioError to exit code 2 (validation) and NumericalError
to exit code 3 (numerical failure).
"""


class ScenarioError(ValueError):
    """Invalid configuration, schema violation, or bad CLI input."""


class NumericalError(RuntimeError):
    """A numerical routine failed to converge or produced invalid values."""
