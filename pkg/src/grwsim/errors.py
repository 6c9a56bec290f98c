"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, NumericsError -> 3,
statistical failures (including InconclusiveHorizonError) -> 1.
"""


class GrwError(Exception):
    """Base class for all grwsim errors."""


class ConfigError(GrwError):
    """Invalid configuration, arguments, or file contents."""


class NumericsError(GrwError):
    """Numerical failure: underflow, non-convergence, coverage loss."""


class ZeroProbabilityCollapseError(NumericsError):
    """Collapse center so far from the support that the post-collapse norm underflows."""


class InconclusiveHorizonError(GrwError):
    """Trajectories did not run long enough for a limit statistic to be meaningful."""
