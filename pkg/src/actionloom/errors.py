"""Exception hierarchy shared by all actionloom modules."""


class ActionLoomError(Exception):
    """Base class for all domain errors raised by this package."""


# -- bundle loading / validation ------------------------------------------

class BundleError(ActionLoomError):
    pass


class MissingFileError(BundleError):
    pass


class ShapeMismatchError(BundleError):
    """Declared T/D/C do not match the binary payload sizes."""


class InvalidSpanError(BundleError):
    """An action span falls outside its video or violates start<=anchor<=end."""


class NonFiniteValueError(BundleError):
    pass


class DimensionMismatchError(ActionLoomError):
    pass


class EmptyCategoryError(ActionLoomError):
    pass


# -- alignment --------------------------------------------------------------

class EmptyCandidatesError(ActionLoomError):
    pass


class InfeasibleConstraintsError(ActionLoomError):
    """Must-link pairs cross each other or cannot co-occur on one path."""


# -- propagation -------------------------------------------------------------

class FrameOutsideActionError(ActionLoomError):
    pass


class AnchorNotInCategoryError(ActionLoomError):
    """Propagated argmax at an anchor disagrees with the action label."""

    def __init__(self, action_id, message=None):
        self.action_id = action_id
        super().__init__(message or f"anchor of action {action_id} no longer argmaxes to its category")


class NonFiniteGradientError(ActionLoomError):
    pass


class NoGroundTruthError(ActionLoomError):
    pass


class ConfigurationError(ActionLoomError):
    """A configuration value or search grid is unusable (e.g. empty)."""


# -- clustering ---------------------------------------------------------------

class SingleClusterError(ActionLoomError):
    pass


class KTooLargeError(ActionLoomError):
    pass


# -- service ------------------------------------------------------------------

class UnknownClusterError(ActionLoomError):
    pass


class UnknownActionError(ActionLoomError):
    pass


class ConflictingConstraintError(ActionLoomError):
    """A correction batch contradicts itself or the session's constraint log."""
