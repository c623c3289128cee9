"""Exception types shared across the package."""


class SoftArmError(Exception):
    """Base class for package errors."""


class NumericBlowup(SoftArmError):
    """Simulation state left the finite/plausible regime; the timestep or
    stiffness combination is unstable."""


class SceneInvalid(SoftArmError):
    """Scene failed validation (overlaps, missing annotations, ...)."""


class EpisodeFinished(SoftArmError):
    """step() called on an environment whose episode already ended."""


class PlacementFailed(SoftArmError):
    """Rejection sampling could not place all objects in the workspace."""


class Unreachable(SoftArmError):
    """A planned waypoint lies outside the arm's reachable sphere."""
