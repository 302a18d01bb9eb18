"""Numerical Moebius geometry in the light cone, isothermic submanifolds and
their Christoffel, Ribaucour and Darboux transforms."""

import jax

jax.config.update("jax_enable_x64", True)

from isothermic.errors import (  # noqa: E402
    ClusterAmbiguity,
    CompatibilityError,
    DegenerateNormalSpace,
    DegenerateTransform,
    DomainError,
    FrameError,
    FrenetDegeneracy,
    GeometryError,
    IntegratorAccuracy,
    NoIntersection,
    NonDegeneracyFailure,
    NullCongruence,
    ProjectionSingular,
    RankDeficiency,
)

__version__ = "0.1.0"
