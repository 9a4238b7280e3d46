"""Exception hierarchy shared by the volfn modules."""


class VolfnError(Exception):
    """Base class for all volfn errors."""


class DimensionError(VolfnError, ValueError):
    """Matrix arguments do not match the declared dimension."""


class ConfigError(VolfnError, ValueError):
    """Estimator or scenario configuration violates a required constraint."""


class NumericalError(VolfnError, ArithmeticError):
    """A computed quantity left its admissible range (e.g. negative variance)."""
