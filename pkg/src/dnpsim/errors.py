"""Exception types shared across the package.

The CLI maps each class to a distinct exit code (see ``dnpsim.cli``), so
library code should raise the most specific type that applies.
"""


class DnpsimError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(DnpsimError):
    """Base class for configuration problems."""


class ConfigSyntaxError(ConfigError):
    """Config text that cannot be parsed (bad line syntax, bad literal)."""


class ConfigKeyError(ConfigError):
    """Unknown or misplaced configuration key."""


class ConfigRangeError(ConfigError):
    """Configuration value outside its admissible range."""


class DegeneracyError(DnpsimError):
    """Steady state is not unique: the transition graph is disconnected."""

    def __init__(self, message, components=None):
        super().__init__(message)
        self.components = components or []


class FitError(DnpsimError):
    """Nonlinear fit did not converge; carries the last iterate."""

    def __init__(self, message, last_params=None, residual_norm=None):
        super().__init__(message)
        self.last_params = last_params
        self.residual_norm = residual_norm


class ResolvabilityError(FitError):
    """Spectrum does not expose two separable peaks to seed the fit."""


class CalibrationError(DnpsimError):
    """Rate calibration target unreachable; reports the attainable bound."""

    def __init__(self, message, bound=None):
        super().__init__(message)
        self.bound = bound
