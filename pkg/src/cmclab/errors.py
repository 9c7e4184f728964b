"""Failure modes with names, so callers can catch what they can handle."""


class CmcLabError(Exception):
    """Base class for everything this package raises on purpose."""


class MollifierTooNarrow(CmcLabError):
    """Mollifier radius below 2h degenerates to the identity stencil."""


class OutOfBox(CmcLabError):
    """Requested body does not fit inside the grid box with margin."""


class DegenerateAxis(CmcLabError):
    """Ellipsoid semiaxis below resolvable size."""


class AmplitudeTooLarge(CmcLabError):
    """Radial perturbation amplitude beyond the validity of the generator."""


class NeckUnresolved(CmcLabError):
    """Neck width below grid resolution."""


class EmptySurface(CmcLabError):
    """Level-set field has no sign change to extract."""


class EmptyBall(CmcLabError):
    """No surface samples inside the query ball."""


class SolverDiverged(CmcLabError):
    """Linear solve stagnated above the residual tolerance."""


class DomainTooThin(CmcLabError):
    """Cut cell too degenerate to form a stable stencil."""


class NonpositiveMeanCurvature(CmcLabError):
    """A boundary sample has H <= 0 where positivity is a hypothesis."""


class DeficitTooLarge(CmcLabError):
    """Estimate hypothesis delta <= 1/2 violated."""


class EmptyThresholdSet(CmcLabError):
    """Sublevel threshold exceeds the depth of the potential."""


class NoBallsSurvive(CmcLabError):
    """Every fitted component fell outside the admissible radius window."""


class InsufficientPoints(CmcLabError):
    """Exponent fit needs at least three usable sweep rows."""


class ConfigError(CmcLabError):
    """Malformed or unknown experiment configuration."""
