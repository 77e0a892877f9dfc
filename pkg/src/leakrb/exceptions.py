"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so raising the right class
matters more than the message text.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent user-supplied configuration."""


class NumericalError(RuntimeError):
    """A numerical routine failed to converge or produced unusable output."""


class IntegrityError(RuntimeError):
    """An internal consistency check failed (bad cache, broken invariant)."""


class TwirlWarning(UserWarning):
    """Twirling a set that is not a twirl design; result is heuristic."""
