"""Combescure, Christoffel, Ribaucour and Darboux transforms.

Transform data is a pair (phi, beta) on a Euclidean host chart: a scalar
field and a normal field, both jax point functions of the chart coordinate.
beta is kept as an ambient vector field that is normal to the host, so the
normal connection is simply the normal part of its ordinary derivative.
All tensors are expressed in chart coordinates with the metric induced by
the host.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np
import scipy.linalg

from isothermic.charts import ImmersionChart, batch
from isothermic.errors import (
    ClusterAmbiguity,
    CompatibilityError,
    DegenerateTransform,
    DomainError,
    NullCongruence,
)
from isothermic.geometry import CLUSTER_GAP, cluster_eigenvalues, point_geometry

GNORM_TOL = 1e-6
NULL_TOL = 1e-12
SINGULAR_D_TOL = 1e-10


def _host_projector(J, g):
    """Orthogonal projector onto the normal space of the columns of J."""
    return jnp.eye(J.shape[0]) - J @ jnp.linalg.solve(g, J.T)


@dataclass(frozen=True, eq=False)
class CombescureData:
    """(phi, beta) on ``host``; ``transform_field`` optionally holds a closed
    form of F = df(grad phi) + beta used for comparisons."""

    host: ImmersionChart
    phi: Callable
    beta: Callable
    transform_field: Callable | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.host.ambient != "euclidean":
            raise DomainError("transform data lives on Euclidean immersions")

    @classmethod
    def from_transform_field(cls, host: ImmersionChart, phi: Callable, F: Callable, meta=None):
        """beta = normal part of F."""
        jac = host.differentiator().jac(host.func)

        def beta(u):
            J = jac(u)
            return _host_projector(J, J.T @ J) @ F(u)

        return cls(host, phi, beta, F, dict(meta or {}))

    @classmethod
    def from_normal_coefficients(cls, host: ImmersionChart, phi: Callable, coeffs: Callable, meta=None):
        """beta = sum_k c_k(u) xi_k(u) in a smooth normal frame xi."""
        frame = smooth_normal_frame_fn(host)

        def beta(u):
            return coeffs(u) @ frame(u)

        return cls(host, phi, beta, None, dict(meta or {}))

    def with_beta(self, beta: Callable) -> "CombescureData":
        return CombescureData(self.host, self.phi, beta, None, dict(self.meta))


def smooth_normal_frame_fn(chart: ImmersionChart) -> Callable:
    """Orthonormal normal frame varying smoothly with u.

    Standard basis vectors are projected to the normal space; the ones with
    the largest normal part at the chart center are selected once and then
    orthonormalized at every point.
    """
    jac = chart.differentiator().jac(chart.func)
    D, n = chart.ambient_dim, chart.dim
    J0 = np.asarray(jac(jnp.asarray(chart.center)))
    P0 = np.eye(D) - J0 @ np.linalg.solve(J0.T @ J0, J0.T)
    order = list(np.argsort(-np.linalg.norm(P0, axis=0), kind="stable"))
    chosen, basis = [], []
    for i in order:
        v = P0[:, i].copy()
        for b in basis:
            v -= (v @ b) * b
        if np.linalg.norm(v) > 1e-6:
            basis.append(v / np.linalg.norm(v))
            chosen.append(i)
        if len(chosen) == D - n:
            break
    E = np.eye(D)[:, chosen]

    def frame(u):
        J = jac(u)
        V = _host_projector(J, J.T @ J) @ E
        out = []
        for k in range(V.shape[1]):
            v = V[:, k]
            for b in out:
                v = v - (v @ b) * b
            out.append(v / jnp.linalg.norm(v))
        return jnp.stack(out)

    return frame


class PointFields(dict):
    """Named per-point fields; a jax pytree."""

    def __getattr__(self, name):
        try:
            return self[name]
        except KeyError:
            raise AttributeError(name) from None


jax.tree_util.register_pytree_node(
    PointFields,
    lambda p: (tuple(p[k] for k in sorted(p)), tuple(sorted(p))),
    lambda keys, vals: PointFields(zip(keys, vals)),
)


def point_fields(data: CombescureData, method: str | None = None) -> Callable:
    """u -> fields of (phi, beta): geometry, grad/Hess phi, S, F, nu, D."""
    chart = data.host
    d = chart.differentiator(method)
    geom = point_geometry(chart, method)
    dphi = d.jac(data.phi)
    hphi = d.jac(dphi)

    def fields(u):
        p = geom(u)
        ph = data.phi(u)
        dp = dphi(u)
        hess = hphi(u) - jnp.einsum("kij,k->ij", p.Gamma, dp)
        b = data.beta(u)
        Ab = jnp.einsum("aij,a->ij", p.alpha, b)
        S = p.ginv @ (hess - Ab)
        grad = p.ginv @ dp
        F = p.J @ grad + b
        FF = F @ F
        nu = 1.0 / FF
        D = jnp.eye(S.shape[0]) - 2 * nu * ph * S
        return PointFields(x=p.x, J=p.J, g=p.g, ginv=p.ginv, Gamma=p.Gamma, alpha=p.alpha,
                           phi=ph, dphi=dp, grad=grad, hess=hess, beta=b, S=S, F=F, FF=FF, nu=nu, D=D)

    return fields


def _sample(chart, points):
    return chart.grid() if points is None else np.atleast_2d(np.asarray(points, dtype=float))


def _run(fn, pts):
    out = batch(fn)(jnp.asarray(pts))
    return jax.tree_util.tree_map(np.asarray, out)


# -- Combescure ---------------------------------------------------------------


def gnorm_residual(data: CombescureData, points=None, method: str | None = None) -> float:
    """max |alpha(grad phi, X) + (d_X beta)^perp| over coordinate X, relative."""
    fields = point_fields(data, method)
    dbeta = data.host.differentiator(method).jac(data.beta)

    def res(u):
        f = fields(u)
        P = _host_projector(f.J, f.g)
        lhs = jnp.einsum("aij,i->aj", f.alpha, f.grad) + P @ dbeta(u)
        scale = jnp.maximum(1.0, jnp.max(jnp.linalg.norm(dbeta(u), axis=0)))
        return jnp.max(jnp.linalg.norm(lhs, axis=0)) / scale

    return float(np.max(_run(res, _sample(data.host, points))))


@dataclass
class CodazziTensorField:
    points: np.ndarray
    S: np.ndarray  # (M, n, n), S[:, i, j] = (S e_j)^i
    g: np.ndarray
    eigenvalues: np.ndarray  # (M, n) ascending
    eigenvectors: np.ndarray
    symmetry: float
    commuting: float
    codazzi: float
    gnorm: float

    def clusters(self, gap: float = CLUSTER_GAP):
        out = [cluster_eigenvalues(w, gap) for w in self.eigenvalues]
        return [c for c, _ in out], np.array([a for _, a in out])


def codazzi_tensor(data: CombescureData, points=None, method: str | None = None,
                   tol: float = GNORM_TOL, check: bool = True) -> CodazziTensorField:
    """S = Hess phi - A_beta with its symmetry, commuting and Codazzi residuals.

    Raises CompatibilityError when the compatibility residual exceeds ``tol``
    (unless ``check`` is False).
    """
    pts = _sample(data.host, points)
    gn = gnorm_residual(data, pts, method)
    if check and gn > tol:
        raise CompatibilityError(f"compatibility residual {gn:.3e} exceeds {tol:.1e}")
    fields = point_fields(data, method)
    dS = data.host.differentiator(method).jac(lambda u: fields(u).S)

    def res(u):
        f = fields(u)
        dSu = dS(u)
        gS = f.g @ f.S
        sym = jnp.max(jnp.abs(gS - gS.T)) / jnp.maximum(1.0, jnp.max(jnp.abs(gS)))
        # alpha(e_i, S e_j) - alpha(S e_i, e_j)
        aS = jnp.einsum("aik,kj->aij", f.alpha, f.S)
        comm = jnp.max(jnp.linalg.norm(aS - jnp.swapaxes(aS, 1, 2), axis=0))
        comm = comm / jnp.maximum(1.0, jnp.max(jnp.linalg.norm(aS, axis=0)))
        # (nabla_i S)^k_j = d_i S^k_j + Gamma^k_{il} S^l_j - S^k_l Gamma^l_{ij}
        ds = jnp.einsum("kji->ikj", dSu)
        nS = ds + jnp.einsum("kil,lj->ikj", f.Gamma, f.S) - jnp.einsum("kl,lij->ikj", f.S, f.Gamma)
        cod = nS - jnp.einsum("ikj->jki", nS)
        cod = jnp.max(jnp.abs(cod)) / jnp.maximum(1.0, jnp.max(jnp.abs(nS)))
        return f.S, f.g, sym, comm, cod

    S, g, sym, comm, cod = _run(res, pts)
    vals, vecs = [], []
    for m in range(len(pts)):
        w, V = scipy.linalg.eigh(g[m] @ S[m], g[m])
        vals.append(w)
        vecs.append(V)
    return CodazziTensorField(pts, S, g, np.array(vals), np.array(vecs), float(sym.max()),
                              float(comm.max()), float(cod.max()), gn)


def transform_field_fn(data: CombescureData, method: str | None = None) -> Callable:
    """F = df(grad phi) + beta as a point function."""
    fields = point_fields(data, method)
    return lambda u: fields(u).F


def combescure_transform(data: CombescureData, points=None, method: str | None = None,
                         use_closed_form: bool = False) -> ImmersionChart:
    """The chart u -> F(u).  ``meta['immersive']`` flags whether S is
    invertible at every sample."""
    host = data.host
    func = data.transform_field if (use_closed_form and data.transform_field is not None) \
        else transform_field_fn(data, method)
    pts = _sample(host, points)
    S = _run(lambda u: point_fields(data, method)(u).S, pts)
    dets = np.abs(np.linalg.det(S))
    scale = np.maximum(1.0, np.max(np.abs(S), axis=(1, 2))) ** host.dim
    immersive = bool(np.all(dets > SINGULAR_D_TOL * scale))
    return host.replace(func=func, base_metric=None, conformal_factor=None,
                        name=f"combescure({host.name})", meta={**host.meta, "immersive": immersive})


@dataclass
class CombescureReport:
    differential: float  # |dF - df S|
    closedness: float  # |d_i (df S)_j - d_j (df S)_i|
    second_form: float | None  # |alpha_F(X, Y) - alpha_f(S X, Y)|, None when F is not immersive


def verify_combescure(data: CombescureData, points=None, method: str | None = None,
                      F: Callable | None = None) -> CombescureReport:
    """Residuals of dF = df o S, closedness of df o S and alpha_F = alpha_f(S., .).

    ``F`` defaults to the closed form carried by the data, else F(phi, beta).
    """
    host = data.host
    d = host.differentiator(method)
    fields = point_fields(data, method)
    Ffn = F or data.transform_field or transform_field_fn(data, method)
    dF = d.jac(Ffn)
    omega = lambda u: fields(u).J @ fields(u).S
    domega = d.jac(omega)
    Fchart = host.replace(func=Ffn, base_metric=None)
    geoF = point_geometry(Fchart, method)

    def res(u):
        f = fields(u)
        JS = f.J @ f.S
        scale = jnp.maximum(1.0, jnp.max(jnp.abs(JS)))
        r1 = jnp.max(jnp.abs(dF(u) - JS)) / scale
        dw = domega(u)  # (D, j, i) = d_i (JS)[:, j]
        r2 = jnp.max(jnp.abs(dw - jnp.swapaxes(dw, 1, 2))) / scale
        pF = geoF(u)
        target = jnp.einsum("aik,kj->aij", f.alpha, f.S)
        r3 = jnp.max(jnp.linalg.norm(pF.alpha - target, axis=0)) / jnp.maximum(
            1.0, jnp.max(jnp.linalg.norm(target, axis=0)))
        return r1, r2, r3

    r1, r2, r3 = _run(res, _sample(host, points))
    second = float(r3.max()) if np.all(np.isfinite(r3)) else None
    return CombescureReport(float(r1.max()), float(r2.max()), second)


@dataclass
class ChristoffelVerdict:
    verdict: str  # "trivial" | "christoffel" | "neither"
    lam: np.ndarray  # |lambda| field with S^2 = lambda^2 I
    eigenvalues: np.ndarray
    square_residual: float
    scalar_residual: float
    gnorm: float


def check_christoffel(data: CombescureData, points=None, method: str | None = None,
                      tol: float = 1e-7) -> ChristoffelVerdict:
    """Classify the Combescure transform of (phi, beta)."""
    field_ = codazzi_tensor(data, points, method, check=False)
    S = field_.S
    n = S.shape[-1]
    S2 = np.einsum("mij,mjk->mik", S, S)
    lam2 = np.trace(S2, axis1=1, axis2=2) / n
    scale = np.maximum(1.0, np.abs(lam2))
    square = float(np.max(np.abs(S2 - lam2[:, None, None] * np.eye(n)) / scale[:, None, None]))
    mean = np.trace(S, axis1=1, axis2=2) / n
    scalar = float(np.max(np.abs(S - mean[:, None, None] * np.eye(n)) / np.maximum(1.0, np.abs(mean))[:, None, None]))
    constant = float(np.ptp(mean)) <= tol * max(1.0, float(np.max(np.abs(mean))))
    compatible = field_.gnorm <= GNORM_TOL and field_.codazzi <= 1e-6 and field_.commuting <= 1e-6
    if not compatible:
        verdict = "neither"
    elif scalar <= tol and constant:
        verdict = "trivial"
    elif square <= tol:
        verdict = "christoffel"
    else:
        verdict = "neither"
    return ChristoffelVerdict(verdict, np.sqrt(np.abs(lam2)), field_.eigenvalues, square, scalar, field_.gnorm)


# -- Ribaucour ----------------------------------------------------------------


@dataclass
class RibaucourData:
    points: np.ndarray
    F: np.ndarray  # (M, D)
    nu: np.ndarray
    phi: np.ndarray
    S: np.ndarray
    D: np.ndarray  # (M, n, n)
    delta: np.ndarray  # (M, D)
    P: np.ndarray  # (M, D, D)
    excluded: np.ndarray  # (M,) bool, samples where D is singular

    @property
    def valid_points(self) -> np.ndarray:
        return self.points[~self.excluded]

    def isometry_residual(self) -> float:
        PtP = np.einsum("mba,mbc->mac", self.P, self.P)
        return float(np.max(np.abs(PtP - np.eye(self.P.shape[-1]))))

    def d_residual(self) -> float:
        n = self.S.shape[-1]
        target = np.eye(n) - 2 * (self.nu * self.phi)[:, None, None] * self.S
        return float(np.max(np.abs(self.D - target)))

    def delta_residual(self) -> float:
        return float(np.max(np.abs(self.delta + self.F / self.phi[:, None])))


def ribaucour_map_fn(data: CombescureData, method: str | None = None) -> Callable:
    fields = point_fields(data, method)

    def ft(u):
        f = fields(u)
        return f.x - 2 * f.nu * f.phi * f.F

    return ft


def ribaucour_transform(data: CombescureData, points=None, method: str | None = None):
    """f~ = f - 2 nu phi F with its data (P, D, delta).

    Raises NullCongruence if <F, F> vanishes at a sample and
    DegenerateTransform if D is singular at every sample.  Samples where D
    is singular are excluded and flagged.
    """
    host = data.host
    pts = _sample(host, points)
    fields = point_fields(data, method)
    def pick(u):
        f = fields(u)
        return f.F, f.FF, f.phi, f.S, f.D

    F, FF, phi, S, D = _run(pick, pts)
    scale = np.maximum(1.0, np.sum(F * F, axis=-1))
    if np.any(np.abs(FF) <= NULL_TOL * scale) or not np.all(np.isfinite(FF)):
        raise NullCongruence("<F, F> vanishes: nu is undefined")
    nu = 1.0 / FF
    dets = np.abs(np.linalg.det(D))
    excluded = dets <= SINGULAR_D_TOL * np.maximum(1.0, np.max(np.abs(D), axis=(1, 2))) ** host.dim
    if excluded.all():
        raise DegenerateTransform("D = I - 2 nu phi S is singular at every sample")
    Dm = F.shape[-1]
    P = np.eye(Dm)[None] - 2 * nu[:, None, None] * np.einsum("ma,mb->mab", F, F)
    delta = -F / phi[:, None]
    rdata = RibaucourData(pts, F, nu, phi, S, D, delta, P, excluded)
    chart = host.replace(func=ribaucour_map_fn(data, method), base_metric=None, conformal_factor=None,
                         name=f"ribaucour({host.name})",
                         meta={**host.meta, "excluded": int(excluded.sum())})
    return chart, rdata


@dataclass
class RibaucourReport:
    metric: float
    connection: float
    second_form: float
    definition: float  # |df~ - P df D|
    reflection: float  # |P Z - Z - <delta, Z>(f - f~)|
    commuting: float  # |[A_xi, A~_{P xi}]|
    isometry: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def verify_ribaucour_relations(data: CombescureData, ft_chart: ImmersionChart | None = None,
                               rdata: RibaucourData | None = None, method: str | None = None) -> RibaucourReport:
    """Residuals of the metric, connection and second fundamental form
    relations between f and its Ribaucour transform f~, each the max over
    valid samples, normalized by the size of the compared quantities."""
    host = data.host
    if ft_chart is None or rdata is None:
        ft_chart, rdata = ribaucour_transform(data, method=method)
    pts = rdata.valid_points
    fields = point_fields(data, method)
    d = host.differentiator(method)
    dD = d.jac(lambda u: fields(u).D)
    geo_t = point_geometry(ft_chart.replace(func=ribaucour_map_fn(data, method)), method)

    def res(u):
        f = fields(u)
        dDu = dD(u)  # dDu[k, j, i] = d_i D^k_j
        t = geo_t(u)
        g, D, S, nu = f.g, f.D, f.S, f.nu
        # metric
        target = D.T @ g @ D
        r_met = jnp.max(jnp.abs(t.g - target)) / jnp.maximum(1.0, jnp.max(jnp.abs(target)))
        # connection: D Gamma~_ij = d_i(D e_j) + Gamma_i (D e_j) + 2nu<S e_i, D e_j> grad - 2nu<grad, D e_j> S e_i
        lhs = jnp.einsum("kl,lij->kij", D, t.Gamma)
        nab = jnp.einsum("kji->kij", dDu) + jnp.einsum("kil,lj->kij", f.Gamma, D)
        SgD = S.T @ g @ D  # <S e_i, D e_j>
        gD = f.grad @ g @ D  # <grad, D e_j>
        rhs = nab + 2 * nu * SgD[None] * f.grad[:, None, None] - 2 * nu * gD[None, None, :] * S[:, :, None]
        r_con = jnp.max(jnp.abs(lhs - rhs)) / jnp.maximum(1.0, jnp.max(jnp.abs(rhs)))
        # second fundamental form
        P = jnp.eye(f.F.shape[0]) - 2 * nu * jnp.outer(f.F, f.F)
        inner = jnp.einsum("akj,ki->aij", f.alpha, D) + 2 * nu * SgD[None] * f.beta[:, None, None]
        target2 = jnp.einsum("ab,bij->aij", P, inner)
        r_sff = jnp.max(jnp.linalg.norm(t.alpha - target2, axis=0)) / jnp.maximum(
            1.0, jnp.max(jnp.linalg.norm(target2, axis=0)))
        # definition df~ = P df D
        PJD = P @ f.J @ D
        r_def = jnp.max(jnp.abs(t.J - PJD)) / jnp.maximum(1.0, jnp.max(jnp.abs(PJD)))
        # reflection P Z - Z = <delta, Z>(f - f~)
        delta = -f.F / f.phi
        diff = f.x - t.x
        R = (P - jnp.eye(P.shape[0])) - jnp.outer(diff, delta)
        r_ref = jnp.max(jnp.abs(R)) / jnp.maximum(1.0, jnp.max(jnp.abs(P - jnp.eye(P.shape[0]))))
        # shape operators of f along xi and of f~ along P xi commute
        Pn = _host_projector(f.J, g)
        xi = Pn  # columns span the normal space
        A_xi = jnp.einsum("kl,alj,ab->bkj", f.ginv, f.alpha, xi)
        Pxi = P @ xi
        A_t = jnp.einsum("kl,alj,ab->bkj", t.ginv, t.alpha, Pxi)
        comm = jnp.einsum("bij,bjk->bik", A_xi, A_t) - jnp.einsum("bij,bjk->bik", A_t, A_xi)
        sc = jnp.maximum(1.0, jnp.max(jnp.abs(A_xi)) * jnp.max(jnp.abs(A_t)))
        r_comm = jnp.max(jnp.abs(comm)) / sc
        return r_met, r_con, r_sff, r_def, r_ref, r_comm

    out = _run(res, pts)
    r_met, r_con, r_sff, r_def, r_ref, r_comm = (float(np.max(a)) for a in out)
    return RibaucourReport(r_met, r_con, r_sff, r_def, r_ref, r_comm, rdata.isometry_residual())


@dataclass
class DarbouxVerdict:
    verdict: str  # "darboux" | "not_darboux"
    lam: np.ndarray
    mu: np.ndarray
    residual: float
    clusters: int


def check_darboux(data: CombescureData, rdata: RibaucourData | None = None, method: str | None = None,
                  tol: float = 1e-7, gap: float = CLUSTER_GAP) -> DarbouxVerdict:
    """(lambda + mu) phi = <F, F> on the two eigenvalues of S."""
    if rdata is None:
        _, rdata = ribaucour_transform(data, method=method)
    M = len(rdata.points)
    lam, mu, ncl = np.full(M, np.nan), np.full(M, np.nan), set()
    g = _run(lambda u: point_geometry(data.host, method)(u).g, rdata.points)
    for m in range(M):
        w = scipy.linalg.eigh(g[m] @ rdata.S[m], g[m], eigvals_only=True)
        cl, amb = cluster_eigenvalues(w, gap)
        if amb:
            raise ClusterAmbiguity(f"ambiguous eigenvalue clustering at {rdata.points[m]}")
        ncl.add(len(cl))
        if len(cl) == 2:
            lam[m], mu[m] = np.mean(w[cl[0]]), np.mean(w[cl[1]])
    if ncl != {2}:
        return DarbouxVerdict("not_darboux", lam, mu, float("nan"), max(ncl))
    FF = 1.0 / rdata.nu
    res = np.abs((lam + mu) * rdata.phi - FF) / np.maximum(1.0, np.abs(FF))
    residual = float(np.max(res))
    return DarbouxVerdict("darboux" if residual <= tol else "not_darboux", lam, mu, residual, 2)
