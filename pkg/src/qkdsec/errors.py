"""Exception types shared across the package."""


class QKDError(Exception):
    """Base class for all errors raised by qkdsec."""


class DimensionError(QKDError, ValueError):
    """Operands have incompatible lengths or dimensions."""


class InfeasibleError(QKDError, ValueError):
    """The requested object cannot exist (e.g. more independent vectors than the dimension)."""


class RankError(QKDError, ValueError):
    """A vector set expected to be linearly independent is not."""


class StateError(QKDError, ValueError):
    """A matrix does not describe a valid quantum state or measurement."""


class ModelError(QKDError, ValueError):
    """Source-model parameters admit no canonical construction."""


class InsufficientDataError(QKDError):
    """A simulated run did not produce enough rounds to fill the requested block."""


class ReconciliationError(QKDError):
    """Syndrome decoding was ambiguous."""


class EmptyKeyError(QKDError, ValueError):
    """Privacy amplification would leave no key bits."""


class SizeError(QKDError, ValueError):
    """An exact simulation was requested beyond the supported dimension."""
