"""Exception hierarchy. Exit-code mapping lives in cli.py."""


class BasinMetricError(Exception):
    """Base class for all package errors."""


class ConfigError(BasinMetricError):
    """Base for configuration problems (maps to CLI usage errors)."""


class ParseError(ConfigError):
    """Config file could not be parsed; message carries line/key context."""


class ValidationError(ConfigError):
    """Config parsed but violates a documented invariant."""


class NumericalError(BasinMetricError):
    """Base for numerical failures (CLI exit code 2)."""


class NoConvergence(NumericalError):
    """Root iteration failed to converge within the iteration cap."""


class CommonFactor(BasinMetricError):
    """Numerator and denominator share a root; the map is ill-posed."""


class DegreeTooLow(BasinMetricError):
    """Map has degree < 2 and cannot be used dynamically."""


class NotFixed(BasinMetricError):
    """Claimed fixed point has residual above tolerance."""


class NotAttracting(BasinMetricError):
    """Fixed point is not attracting (|multiplier| >= 1)."""


class AttractorNotMember(BasinMetricError):
    """The attracting point's cell is not a basin member (bad epsilon/max_iter)."""


class NotInBasin(BasinMetricError):
    """Query point does not lie in a member cell."""


class BaseNotInBasin(BasinMetricError):
    """Backward-tree base point is not in the basin raster."""


class NoSuchComponent(BasinMetricError):
    """Component id does not exist in the labeled grid."""


class DegenerateComponent(BasinMetricError):
    """Component has a single cell; no metric graph can be built."""


class DisconnectedPair(BasinMetricError):
    """Two cells of one component are not graph-connected (labeling bug)."""


class OutOfDomain(BasinMetricError):
    """Point outside the open unit disk passed to the closed-form metric."""


class NotPolynomial(BasinMetricError):
    """Operation requires a polynomial map (constant denominator)."""


class BadThreshold(BasinMetricError):
    """Top level set is empty or disconnected for the chosen threshold."""


class NoOrbitNodeInComponent(BasinMetricError):
    """No backward-orbit node shares the query point's component at this depth."""
