"""Exception hierarchy shared across the package."""


class BampfLabError(Exception):
    """Base class for every error raised by bampf_lab."""


class ValidationError(BampfLabError, ValueError):
    """A model, belief or spec document violates a structural invariant."""


class ArgumentError(BampfLabError, ValueError):
    """An operation received an argument outside its documented domain."""


class CapacityError(BampfLabError, RuntimeError):
    """An exact computation would exceed its configured size limit."""


class ImpossibleEvidenceError(BampfLabError, ValueError):
    """An observation has zero likelihood under every candidate in the belief support."""
