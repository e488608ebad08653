"""Exception hierarchy shared by all cbctus modules."""


class CbctUsError(Exception):
    """Base class for all cbctus errors."""


class InvalidInputError(CbctUsError):
    """An operation received arguments violating its preconditions."""


class DegenerateMotionError(CbctUsError):
    """The recorded motions do not constrain the hand-eye solution."""


class OversegmentationError(CbctUsError):
    """A region grown from a prompt exceeded its area bound (bad prompt)."""


class InfeasiblePoseError(CbctUsError):
    """A requested probe pose violates the in-plane rotation limit."""


class ConfigError(CbctUsError):
    """A run configuration file or override is malformed."""
