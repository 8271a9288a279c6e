"""Exception hierarchy shared across the package.

Domain errors on individual function arguments raise plain ValueError.
ConfigError marks invalid user-facing input (configs, tables, CLI args)
and maps to exit code 2; NumericsError marks a numerical failure in an
otherwise valid run (blow-up, CFL violation, monotonicity loss beyond
repair tolerance) and maps to exit code 3.
"""


class RanklabError(Exception):
    """Base class for package-specific failures."""


class ConfigError(RanklabError):
    """Invalid configuration or malformed input data."""


class NumericsError(RanklabError):
    """Numerical failure during a run that started from valid input."""
