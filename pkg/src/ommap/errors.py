"""Exception hierarchy shared across the package."""


class OmmapError(Exception):
    """Base class for all package errors."""


class InputError(OmmapError, ValueError):
    """Bad call arguments: dimension mismatches, out-of-range indices, etc."""


class ParameterError(OmmapError, ValueError):
    """Invalid measure or space parameters at construction time."""


class RegimeError(OmmapError, ValueError):
    """A closed form was requested outside its regime of validity."""


class NumericsError(OmmapError, RuntimeError):
    """Numerical blow-up: non-finite values where finite ones are required."""


class ConfigError(OmmapError, ValueError):
    """Experiment configuration violates the published schema."""
