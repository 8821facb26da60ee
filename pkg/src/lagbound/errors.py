"""Exception types shared across the package."""


class LagboundError(Exception):
    """Base class for all package errors."""


class Infeasible(LagboundError):
    """A (sub-)problem admits no feasible solution under the current fixings."""


class GenerationError(LagboundError):
    """Instance generation exhausted its retry budget."""


class InstanceFormatError(LagboundError):
    """An instance file failed to parse or violates a dimension contract."""


class ModelFormatError(LagboundError):
    """A model file is corrupt, truncated, or has an unsupported version."""


class FamilyMismatchError(LagboundError):
    """A model trained on one problem family was applied to another."""
