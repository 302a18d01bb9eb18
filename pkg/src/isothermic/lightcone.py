"""Euclidean space inside the light cone of L^{N+2}.

A Moebius frame (p0, w, A) identifies R^N with the slice E_w = {p null :
<p, w> = 1} through

    Psi(x) = p0 + A x - |x|^2 w / 2,

and every conformal map of R^N becomes linear.  Point maps here accept a
trailing coordinate axis and broadcast over leading ones; they are written
with ``jax.numpy`` so charts built from them keep analytic jets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from isothermic.charts import ImmersionChart
from isothermic.errors import (
    DomainError,
    FrameError,
    NoIntersection,
    ProjectionSingular,
)
from isothermic.minkowski import (
    gram,
    inner,
    is_lorentz_transform,
    metric_matrix,
    random_lorentz_transform,
    reflection_matrix,
)

FRAME_TOL = 1e-12
SINGULAR_TOL = 1e-9
MODEL_TOL = 1e-8


def _concrete(x) -> bool:
    return not isinstance(x, jax.core.Tracer)


def _check_singular(s, x):
    if _concrete(s) and _concrete(x):
        s_np, x_np = np.asarray(s), np.asarray(x)
        size = np.linalg.norm(x_np, axis=-1)
        if np.any(np.abs(s_np) < SINGULAR_TOL * np.maximum(size, 1e-300)):
            raise ProjectionSingular("<x, w> vanishes: the point lies on the ray of w")


@dataclass(frozen=True, eq=False)
class MoebiusFrame:
    """The triple (p0, w, A); ``A`` holds N column vectors in L^{N+2}."""

    p0: np.ndarray
    w: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        p0 = np.asarray(self.p0, dtype=float)
        w = np.asarray(self.w, dtype=float)
        A = np.asarray(self.A, dtype=float)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "A", A)
        dim = p0.size
        if dim < 4 or w.size != dim or A.shape != (dim, dim - 2):
            raise FrameError(f"inconsistent frame shapes {p0.shape}, {w.shape}, {A.shape}")
        scale = max(1.0, float(np.max(np.abs(np.column_stack([p0, w, A])))) ** 2)
        tol = FRAME_TOL * scale * dim
        G = gram(np.column_stack([A, p0, w]).T)
        target = np.zeros((dim, dim))
        target[: dim - 2, : dim - 2] = np.eye(dim - 2)
        target[dim - 2, dim - 1] = target[dim - 1, dim - 2] = 1.0
        err = float(np.max(np.abs(G - target)))
        if err > tol:
            raise FrameError(f"not a Moebius frame (Gram error {err:.3e})")

    @classmethod
    def canonical(cls, N: int) -> "MoebiusFrame":
        dim = N + 2
        E = np.eye(dim)
        return cls(p0=E[N] + E[N + 1], w=0.5 * (E[N] - E[N + 1]), A=E[:, :N])

    @property
    def N(self) -> int:
        return self.p0.size - 2

    @property
    def dim(self) -> int:
        return self.p0.size

    @property
    def basis_matrix(self) -> np.ndarray:
        """Columns [A | p0 | w]."""
        return np.column_stack([self.A, self.p0, self.w])

    def transformed(self, T) -> "MoebiusFrame":
        T = np.asarray(T, dtype=float)
        return MoebiusFrame(T @ self.p0, T @ self.w, T @ self.A)

    # -- point maps (jax-traceable, broadcasting) -----------------------------

    def psi(self, x):
        x = jnp.asarray(x)
        return self.p0 + x @ self.A.T - 0.5 * jnp.sum(x * x, axis=-1)[..., None] * self.w

    def dpsi(self, x, v):
        """Differential of Psi at x applied to v: A v - <x, v> w."""
        return v @ self.A.T - jnp.sum(x * v, axis=-1)[..., None] * self.w

    def coords(self, p):
        """x_i = <p, A e_i>, the inverse of Psi on E_w."""
        return jnp.asarray(p) @ (metric_matrix(self.dim) @ self.A)

    def wdot(self, p):
        return inner(jnp.asarray(p), self.w)

    def drop_point(self, p):
        """Euclidean point of the ray through the null vector p."""
        s = self.wdot(p)
        _check_singular(s, p)
        return self.coords(p) / s[..., None]

    @staticmethod
    def random(rng: np.random.Generator, N: int, scale: float = 0.5) -> "MoebiusFrame":
        """Canonical frame moved by a random time-orientation preserving T."""
        return MoebiusFrame.canonical(N).transformed(random_lorentz_transform(N + 2, rng, scale))


def psi_embed(frame: MoebiusFrame, x) -> np.ndarray:
    return np.asarray(frame.psi(np.asarray(x, dtype=float)))


def psi_invert(frame: MoebiusFrame, p, tol: float = MODEL_TOL) -> np.ndarray:
    """Inverse of Psi; ``p`` must lie on E_w."""
    p = np.asarray(p, dtype=float)
    scale = np.maximum(1.0, np.sum(p * p, axis=-1))
    if np.any(np.abs(inner(p, frame.w) - 1.0) > tol * scale) or np.any(np.abs(inner(p, p)) > tol * scale):
        raise DomainError("point is not on the Euclidean slice <p,p> = 0, <p,w> = 1")
    return np.asarray(frame.coords(p))


def project_to_model(frame: MoebiusFrame, x) -> np.ndarray:
    """Pi(x) = x / <x, w>."""
    x = np.asarray(x, dtype=float)
    s = inner(x, frame.w)
    _check_singular(s, x)
    return x / np.asarray(s)[..., None]


# -- spheres ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SphereVector:
    """Unit spacelike v representing the sphere E_w ∩ {v}^⊥."""

    v: np.ndarray
    frame: MoebiusFrame

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "v", v)
        q = float(inner(v, v))
        if abs(q - 1.0) > 1e-10 * max(1.0, float(v @ v)):
            raise FrameError(f"sphere vector must be unit spacelike, <v,v> = {q}")

    @property
    def h(self) -> float:
        """Mean curvature <v, w>."""
        return float(inner(self.v, self.frame.w))

    @property
    def is_hyperplane(self) -> bool:
        return abs(self.h) <= 1e-12 * max(1.0, float(self.v @ self.v))

    @property
    def center(self) -> np.ndarray:
        if self.is_hyperplane:
            raise DomainError("a hyperplane has no center")
        h = self.h
        return np.asarray(self.frame.coords((self.v - self.frame.w / (2 * h)) / h))

    @property
    def radius(self) -> float:
        if self.is_hyperplane:
            return float("inf")
        return 1.0 / abs(self.h)

    def contains(self, x, tol: float = 1e-10) -> np.ndarray:
        return np.abs(inner(psi_embed(self.frame, x), self.v)) <= tol


def sphere_from_center_radius(frame: MoebiusFrame, q0, r: float, orient: int = 1) -> SphereVector:
    """v = h Psi(q0) + w / (2h) with h = orient / r."""
    if not r > 0:
        raise DomainError(f"radius must be positive, got {r}")
    if orient not in (1, -1):
        raise ValueError("orient must be +1 or -1")
    h = orient / r
    return SphereVector(h * psi_embed(frame, q0) + frame.w / (2 * h), frame)


def hyperplane_from_normal_offset(frame: MoebiusFrame, n, d: float) -> SphereVector:
    """v = A n - d w, the hyperplane <x, n> = d."""
    n = np.asarray(n, dtype=float)
    if abs(float(n @ n) - 1.0) > 1e-10:
        raise DomainError("hyperplane normal must be a unit vector")
    return SphereVector(frame.A @ n - d * frame.w, frame)


def intersection_angle(s1: SphereVector, s2: SphereVector) -> float:
    """Cosine of the intersection angle, <v1, v2>."""
    if s1.frame is not s2.frame and not np.allclose(s1.frame.basis_matrix, s2.frame.basis_matrix):
        raise ValueError("spheres refer to different frames")
    c = float(inner(s1.v, s2.v))
    if abs(c) > 1.0 + 1e-10:
        raise NoIntersection(f"spheres do not meet (<v1,v2> = {c})")
    return float(np.clip(c, -1.0, 1.0))


# -- conformal maps -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConformalMap:
    """A point map with its conformal factor.

    ``fn`` and ``factor`` are jax-traceable and broadcast over leading axes;
    ``factor`` is measured against the metric named in ``source_metric``.
    """

    fn: Callable
    factor: Callable
    source_metric: str = "euclidean"
    meta: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.fn(x)


def _lorentz_drop(frame: MoebiusFrame, L: Callable) -> ConformalMap:
    """C(L) for an isometric light-cone map L (up to the projection)."""

    def fn(x):
        return frame.drop_point(L(x))

    def factor(x):
        return 1.0 / jnp.abs(frame.wdot(L(x)))

    return ConformalMap(fn, factor)


def lorentz_from_similarity(frame: MoebiusFrame, ratio: float, Q=None, b=None) -> np.ndarray:
    """The T in O_1(N+2) with Psi(ratio Q x + b) = ratio T Psi(x)."""
    N = frame.N
    Q = np.eye(N) if Q is None else np.asarray(Q, dtype=float)
    b = np.zeros(N) if b is None else np.asarray(b, dtype=float)
    if not ratio > 0:
        raise DomainError("similarity ratio must be positive")
    if np.max(np.abs(Q.T @ Q - np.eye(N))) > 1e-10:
        raise DomainError("Q must be orthogonal")
    out_A = frame.A @ Q - np.outer(frame.w, Q.T @ b)
    out_p0 = psi_embed(frame, b) / ratio
    out_w = ratio * frame.w
    M_out = np.column_stack([out_A, out_p0, out_w])
    return M_out @ np.linalg.inv(frame.basis_matrix)


def inversion_matrix(frame: MoebiusFrame, center, radius: float = 1.0) -> np.ndarray:
    return reflection_matrix(sphere_from_center_radius(frame, center, radius).v)


@dataclass(frozen=True)
class ConformalMapSpec:
    kind: str
    params: dict = field(default_factory=dict)

    KINDS = ("inversion", "similarity", "stereographic", "theta", "theta_halfspace", "lorentz")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown conformal map kind {self.kind!r}")
        if self.kind == "lorentz":
            T = np.asarray(self.params.get("T"), dtype=float)
            if T.ndim != 2 or not is_lorentz_transform(T):
                raise DomainError("T does not preserve the Lorentz form")


def lorentz_map(frame: MoebiusFrame, T) -> ConformalMap:
    """C(T o Psi)."""
    T = np.asarray(T, dtype=float)
    if not is_lorentz_transform(T):
        raise DomainError("T does not preserve the Lorentz form")
    return _lorentz_drop(frame, lambda x: frame.psi(x) @ T.T)


def build_map(frame: MoebiusFrame, spec: ConformalMapSpec) -> ConformalMap:
    p = spec.params
    if spec.kind == "lorentz":
        return lorentz_map(frame, p["T"])
    if spec.kind == "inversion":
        return lorentz_map(frame, inversion_matrix(frame, p.get("center", np.zeros(frame.N)), p.get("radius", 1.0)))
    if spec.kind == "similarity":
        return lorentz_map(frame, lorentz_from_similarity(frame, p.get("ratio", 1.0), p.get("Q"), p.get("b")))
    if spec.kind == "stereographic":
        return stereographic_map(frame, p.get("B"), p.get("v"), p.get("c", 1.0))
    if spec.kind == "theta":
        return theta_map(frame, p["m"], p.get("C"), p.get("D"), p.get("c", 1.0))
    return theta_halfspace(p["m"], frame.N, p.get("c", 1.0))


def apply_moebius(frame: MoebiusFrame, spec: ConformalMapSpec, x) -> np.ndarray:
    return np.asarray(build_map(frame, spec)(np.asarray(x, dtype=float)))


def frame_change(frame: MoebiusFrame, other: MoebiusFrame) -> dict:
    """Decompose C_frame o Psi_other as an inversion after a similarity.

    Returns the sphere vector v of the inversion (unit radius), its reflection
    R, the Lorentz map T of the similarity, its ratio -<w_other, w>/2 and the
    inversion center.
    """
    wb, w = other.w, frame.w
    s = float(inner(wb, w))
    if abs(s) < 1e-12:
        raise ProjectionSingular("the two frames share the point at infinity")
    v = wb / s + 0.5 * w
    R = reflection_matrix(v)
    M_out = np.column_stack([R @ other.A, R @ other.p0, R @ wb])
    T = M_out @ np.linalg.inv(frame.basis_matrix)
    return {
        "v": v,
        "R": R,
        "T": T,
        "ratio": -0.5 * s,
        "center": np.asarray(frame.coords(wb / s)),
    }


# -- stereographic projection and Theta ---------------------------------------


def stereographic_map(frame: MoebiusFrame, B=None, v=None, c: float = 1.0) -> ConformalMap:
    """C(T_{B,v}) on S^N(c) in R^{N+1}, with T_{B,v}(X) = B X + v.

    The default ``v = (p0 - w/2)/sqrt(c)``, ``B = [A | p0 + w/2]`` gives
    y = x / (x_{N+1} + 1/sqrt(c)), projection from the pole x_{N+1} = -1/sqrt(c).
    """
    if not c > 0:
        raise DomainError("curvature c must be positive")
    N, dim = frame.N, frame.dim
    if B is None:
        B = np.column_stack([frame.A, frame.p0 + 0.5 * frame.w])
    if v is None:
        v = (frame.p0 - 0.5 * frame.w) / np.sqrt(c)
    B, v = np.asarray(B, dtype=float), np.asarray(v, dtype=float)
    if B.shape != (dim, N + 1):
        raise FrameError("B must have N+1 columns")
    if abs(float(inner(v, v)) + 1.0 / c) > 1e-10 * max(1.0, float(v @ v)):
        raise FrameError("<v, v> must equal -1/c")
    G = gram(np.column_stack([B, v]).T)
    target = np.diag(np.r_[np.ones(N + 1), -1.0 / c])
    if np.max(np.abs(G - target)) > 1e-10 * max(1.0, float(np.max(np.abs(B))) ** 2):
        raise FrameError("B must be an isometry onto {v}^perp")
    m = _lorentz_drop(frame, lambda X: X @ B.T + v)
    return ConformalMap(m.fn, m.factor, "sphere", {"c": c})


def default_theta_isometries(frame: MoebiusFrame, m: int):
    """C maps (x_1..x_{m-1}, x_m, x_0) to [A e_1..A e_{m-1}, p0 + w/2, p0 - w/2];
    D is [A e_m .. A e_N]."""
    A = frame.A
    C = np.column_stack([A[:, : m - 1], frame.p0 + 0.5 * frame.w, frame.p0 - 0.5 * frame.w])
    D = A[:, m - 1:]
    return C, D


def _check_theta(frame, m, C, D):
    dim = frame.dim
    if C.shape != (dim, m + 1) or D.shape != (dim, dim - m - 1):
        raise FrameError("C and D have inconsistent shapes")
    M = np.column_stack([C, D])
    target = np.diag(np.r_[np.ones(m), -1.0, np.ones(dim - m - 1)])
    if np.max(np.abs(gram(M.T) - target)) > 1e-10:
        raise FrameError("C, D do not form an orthogonal decomposition with C timelike")


def theta_map(frame: MoebiusFrame, m: int, C=None, D=None, c: float = 1.0) -> ConformalMap:
    """Theta = C(L_{C,D}) on H^m(-c) x S^{N-m}(c).

    Points are concatenations (X, Y) with X in L^{m+1} (timelike coordinate
    last, <X,X> = -1/c) and Y in R^{N-m+1} (|Y|^2 = 1/c).  The factor is
    measured against the product metric.
    """
    N = frame.N
    if not 1 <= m <= N - 1:
        raise DomainError(f"need 1 <= m <= N-1, got m={m}, N={N}")
    if not c > 0:
        raise DomainError("curvature c must be positive")
    if C is None or D is None:
        C0, D0 = default_theta_isometries(frame, m)
        C = C0 if C is None else C
        D = D0 if D is None else D
    C, D = np.asarray(C, dtype=float), np.asarray(D, dtype=float)
    _check_theta(frame, m, C, D)

    def L(z):
        return z[..., : m + 1] @ C.T + z[..., m + 1:] @ D.T

    base = _lorentz_drop(frame, L)
    return ConformalMap(base.fn, base.factor, "hyperbolic x sphere", {"m": m, "c": c, "L": L})


def theta_omitted_residual(frame: MoebiusFrame, m: int, z, C=None, D=None) -> np.ndarray:
    """<L_{C,D}(z), w>; it vanishes on the omitted locus."""
    if C is None or D is None:
        C, D = default_theta_isometries(frame, m)
    z = np.asarray(z, dtype=float)
    return inner(z[..., : m + 1] @ np.asarray(C).T + z[..., m + 1:] @ np.asarray(D).T, frame.w)


def hyperboloid_from_halfspace(X, c: float = 1.0):
    """Upper half-space R^m_+ to the hyperboloid <X,X> = -1/c in L^{m+1}."""
    X = jnp.asarray(X)
    xm = X[..., -1:]
    r2 = jnp.sum(X * X, axis=-1, keepdims=True)
    s = jnp.sqrt(c) * xm
    return jnp.concatenate([X[..., :-1] / s, (1 - r2) / (2 * s), (1 + r2) / (2 * s)], axis=-1)


def halfspace_from_hyperboloid(Xh, c: float = 1.0):
    Xh = jnp.asarray(Xh)
    t = Xh[..., -1:] + Xh[..., -2:-1]
    return jnp.concatenate([Xh[..., :-2] / t, 1.0 / (jnp.sqrt(c) * t)], axis=-1)


def hyperbolic_halfspace_metric(c: float = 1.0) -> Callable:
    """Metric |dX|^2 / (c x_m^2) of H^m(-c) in half-space coordinates."""

    def g(X):
        return jnp.eye(X.shape[-1]) / (c * X[..., -1] ** 2)

    return g


def theta_halfspace(m: int, N: int, c: float = 1.0) -> ConformalMap:
    """Theta_Phi(X, Y) = (x_1..x_{m-1}, sigma(X) Y), sigma(X) = sqrt(c) x_m.

    X lies in the upper half-space R^m_+ and Y on S^{N-m}(c).  The factor is
    sigma, measured against the product of the flat half-space metric and
    the round metric of S^{N-m}(c).
    """
    if not 1 <= m <= N - 1:
        raise DomainError(f"need 1 <= m <= N-1, got m={m}, N={N}")
    if not c > 0:
        raise DomainError("curvature c must be positive")
    sc = float(np.sqrt(c))

    def _check(z):
        if _concrete(z) and np.any(np.asarray(z)[..., m - 1] <= 0):
            raise DomainError("x_m must be positive")

    def fn(z):
        _check(z)
        X, Y = z[..., :m], z[..., m:]
        sigma = sc * X[..., m - 1:m]
        return jnp.concatenate([X[..., : m - 1], sigma * Y], axis=-1)

    def factor(z):
        _check(z)
        return sc * z[..., m - 1]

    return ConformalMap(fn, factor, "halfspace x sphere", {"m": m, "c": c})


# -- lifting and dropping immersions ------------------------------------------


def _factor_callable(f: ImmersionChart, phi) -> Callable:
    if phi is None:
        if f.conformal_factor is None:
            from isothermic.geometry import conformal_factor_fn

            return conformal_factor_fn(f)
        return f.conformal_factor
    if callable(phi):
        return phi
    value = float(phi)
    return lambda u: jnp.asarray(value)


def lift_conformal(frame: MoebiusFrame, f: ImmersionChart, phi=None) -> ImmersionChart:
    """I(f) = Psi(f) / phi; ``phi`` defaults to the chart's factor."""
    if f.ambient != "euclidean" or f.ambient_dim != frame.N:
        raise DomainError("lift expects a chart into R^N of the frame")
    phi_fn = _factor_callable(f, phi)
    values = np.asarray(jax.vmap(phi_fn)(jnp.asarray(f.grid())))
    if np.any(np.abs(values) < 1e-12) or not np.all(np.isfinite(values)):
        raise DomainError("conformal factor vanishes on the sample grid")
    func = f.func

    def F(u):
        return frame.psi(func(u)) / phi_fn(u)

    return f.replace(func=F, ambient="lorentz", conformal_factor=lambda u: jnp.asarray(1.0),
                     name=f"lift({f.name})", meta={**f.meta, "lift_factor": phi_fn})


def drop_to_euclidean(frame: MoebiusFrame, F: ImmersionChart, eps: float = 1e-9):
    """C(F) = Psi^{-1}(F / <F, w>) with factor 1 / <F, w> (relative to the
    metric of F)."""
    if F.ambient != "lorentz" or F.ambient_dim != frame.dim:
        raise DomainError("drop expects a chart into the light cone of the frame")
    vals = F.evaluate(F.grid())
    s = np.asarray(inner(vals, frame.w))
    if np.any(s <= eps * np.linalg.norm(vals, axis=-1)):
        raise ProjectionSingular("<F, w> is not positive on the sample grid")
    func = F.func

    def f(u):
        return frame.drop_point(func(u))

    def factor(u):
        return 1.0 / frame.wdot(func(u))

    F_factor = F.conformal_factor

    def total(u):
        return factor(u) if F_factor is None else factor(u) * F_factor(u)

    chart = F.replace(func=f, ambient="euclidean", conformal_factor=total, name=f"drop({F.name})")
    return chart, factor
