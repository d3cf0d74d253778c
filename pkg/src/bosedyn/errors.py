"""Exception hierarchy shared across the package."""


class BosedynError(Exception):
    """Base class for all package errors."""


class GridMismatchError(BosedynError, ValueError):
    """Two objects live on incompatible grids or bases."""


class TruncationError(BosedynError):
    """The Fock-space cutoff is too small for the requested state or flow."""


class ConvergenceError(BosedynError):
    """An iterative method did not reach its tolerance."""


class StabilityError(BosedynError):
    """A time step is too large for the integrator's accuracy guard."""


class ConfigError(BosedynError, ValueError):
    """Malformed or inconsistent experiment configuration."""
