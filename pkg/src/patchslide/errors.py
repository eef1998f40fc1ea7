"""Exception types raised by patchslide."""


class PatchSlideError(Exception):
    """Base class for all patchslide errors."""


class ZeroTwist(PatchSlideError, ValueError):
    """A twist of zero magnitude where a sliding direction is required."""


class NotOnSurface(PatchSlideError, ValueError):
    pass


class NonPositiveForce(PatchSlideError, ValueError):
    pass


class NotPositiveDefinite(PatchSlideError, ValueError):
    pass


class RankDeficient(PatchSlideError):
    pass


class DegenerateC(PatchSlideError):
    """Some generalized eigenvalue equals one; the object twist is indeterminate."""


class NoRealRoot(PatchSlideError):
    pass


class NegativeK2Both(PatchSlideError):
    pass


class NotOnBoundary(PatchSlideError):
    pass


class NoLocus(PatchSlideError):
    pass


class InsufficientPoints(PatchSlideError):
    pass


class ScenarioError(PatchSlideError, ValueError):
    """Invalid scenario or trajectory file."""
