"""Exception hierarchy. Everything derives from ``GeometryError`` (a ``ValueError``)."""


class GeometryError(ValueError):
    pass


class NonDegeneracyFailure(GeometryError):
    """A span (or complement) carries a degenerate Lorentz metric."""


class FrameError(GeometryError):
    """Moebius frame data (p0, w, A) or an isometry violates its invariants."""


class ProjectionSingular(GeometryError):
    """A light-cone point lies (numerically) on the ray of ``w``."""


class NoIntersection(GeometryError):
    pass


class DomainError(GeometryError):
    """Argument outside the domain of a map (inversion centre, x_m <= 0, ...)."""


class RankDeficiency(GeometryError):
    pass


class DegenerateNormalSpace(GeometryError):
    pass


class ClusterAmbiguity(GeometryError):
    """Eigenvalues too close to separate and too far apart to merge."""


class CompatibilityError(GeometryError):
    """(phi, beta) violate alpha(grad phi, X) + nabla^perp_X beta = 0."""


class NullCongruence(GeometryError):
    """<F, F> vanishes, so nu = <F, F>^-1 is undefined."""


class DegenerateTransform(GeometryError):
    """The tensor D = I - 2 nu phi S is singular."""


class FrenetDegeneracy(GeometryError):
    pass


class IntegratorAccuracy(GeometryError):
    """Step halving reached the floor without meeting the monitor tolerance."""
