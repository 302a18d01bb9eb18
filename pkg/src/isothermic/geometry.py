"""Differential geometry of charts: fundamental forms, conformality, nets.

Everything is assembled from per-point jax functions of the chart coordinate
``u``; batch helpers vmap them over sample grids.  Tangent vectors are
coordinate vectors (length n); ambient vectors live in R^N or L^{N+2}
according to the chart.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import jax
import jax.numpy as jnp
import numpy as np
import scipy.linalg

from isothermic.charts import ImmersionChart, ProductNet, batch
from isothermic.errors import (
    ClusterAmbiguity,
    DegenerateNormalSpace,
    DomainError,
    NonDegeneracyFailure,
    RankDeficiency,
)
from isothermic.minkowski import lorentz_gram_schmidt, orthogonal_complement

CLUSTER_GAP = 1e-3
CLUSTER_MERGE = 1e-6
DEFAULT_PAIRS = 8
ALPHA_ZERO = 1e-10


class PointGeometry(NamedTuple):
    x: jnp.ndarray
    J: jnp.ndarray  # (D, n)
    H: jnp.ndarray  # (D, n, n)
    g: jnp.ndarray
    ginv: jnp.ndarray
    Gamma: jnp.ndarray  # Gamma[k, i, j]
    alpha: jnp.ndarray  # (D, n, n), normal part of H


def christoffel(g, dg):
    """Levi-Civita symbols from the metric and dg[i, j, k] = d_k g_ij."""
    ginv = jnp.linalg.inv(g)
    # t[i, j, l] = d_i g_jl + d_j g_il - d_l g_ij
    t = jnp.einsum("jli->ijl", dg) + jnp.einsum("ilj->ijl", dg) - jnp.einsum("ijl->ijl", dg)
    return 0.5 * jnp.einsum("kl,ijl->kij", ginv, t)


def point_geometry(chart: ImmersionChart, method: str | None = None, func: Callable | None = None) -> Callable:
    """u -> PointGeometry for ``func`` (default the chart map)."""
    d = chart.differentiator(method)
    f = chart.func if func is None else func
    jac = d.jac(f)
    hess = d.jac(jac)
    G = jnp.asarray(chart.G)

    def geom(u):
        x = f(u)
        J = jac(u)
        H = hess(u)
        GJ = G @ J
        g = J.T @ GJ
        ginv = jnp.linalg.inv(g)
        Gamma = jnp.einsum("kl,aij,al->kij", ginv, H, GJ)
        alpha = H - jnp.einsum("al,lij->aij", J, Gamma)
        return PointGeometry(x, J, H, g, ginv, Gamma, alpha)

    return geom


def sample_geometry(chart: ImmersionChart, points=None, method: str | None = None) -> PointGeometry:
    pts = chart.grid() if points is None else np.atleast_2d(np.asarray(points, dtype=float))
    out = batch(point_geometry(chart, method))(jnp.asarray(pts))
    return PointGeometry(*(np.asarray(a) for a in out))


def _check_rank(g: np.ndarray, pts: np.ndarray, eps: float = 1e-12):
    ev = np.linalg.eigvalsh(g)
    scale = np.maximum(1.0, np.abs(ev).max(axis=-1))
    bad = np.flatnonzero(np.abs(ev).min(axis=-1) <= eps * scale)
    if bad.size:
        raise RankDeficiency(f"induced metric degenerate at {pts[bad[0]]}")


def induced_metric_fn(chart: ImmersionChart, method: str | None = None) -> Callable:
    jac = chart.differentiator(method).jac(chart.func)
    G = jnp.asarray(chart.G)

    def g(u):
        J = jac(u)
        return J.T @ G @ J

    return g


def intrinsic_metric_fn(chart: ImmersionChart, method: str | None = None) -> Callable:
    """Declared base metric if any, else the pullback metric."""
    if chart.base_metric is not None:
        return chart.base_metric
    return induced_metric_fn(chart, method)


def first_fundamental_form(chart: ImmersionChart, u, method: str | None = None) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    pts = np.atleast_2d(u)
    g = np.asarray(batch(induced_metric_fn(chart, method))(jnp.asarray(pts)))
    _check_rank(g, pts)
    if chart.ambient == "euclidean" and np.any(np.linalg.eigvalsh(g)[:, 0] <= 0):
        raise RankDeficiency("induced metric is not positive definite")
    return g[0] if u.ndim == 1 else g


def conformal_factor_fn(chart: ImmersionChart, method: str | None = None) -> Callable:
    """u -> (det I / det base)^(1/2n)."""
    g = induced_metric_fn(chart, method)
    base = chart.metric_fn()
    n = chart.dim

    def phi(u):
        return (jnp.linalg.det(g(u)) / jnp.linalg.det(base(u))) ** (0.5 / n)

    return phi


@dataclass
class SecondFundamentalForm:
    """alpha at one point: ambient values, a normal frame and coefficients.

    ``coefficients[i, j, k] = signs[k] <alpha_ij, normal_frame[k]>``.
    """

    ambient: np.ndarray
    normal_frame: np.ndarray
    signs: np.ndarray
    coefficients: np.ndarray


def normal_frame(J: np.ndarray, G: np.ndarray):
    """Orthonormal frame of the normal space of the columns of J."""
    lorentz = G[-1, -1] < 0
    try:
        if lorentz:
            tang, _ = lorentz_gram_schmidt(J.T)
            return orthogonal_complement(tang)
        q, _ = np.linalg.qr(J, mode="complete")
        nf = q[:, J.shape[1]:].T
        return nf, np.ones(len(nf))
    except NonDegeneracyFailure as exc:
        raise DegenerateNormalSpace(str(exc)) from exc


def second_fundamental_form(chart: ImmersionChart, u, method: str | None = None) -> SecondFundamentalForm:
    u = np.asarray(u, dtype=float)
    geo = sample_geometry(chart, u[None], method)
    _check_rank(geo.g, u[None])
    J, alpha = geo.J[0], geo.alpha[0]
    nf, signs = normal_frame(J, chart.G)
    coeff = np.einsum("aij,ab,kb->ijk", alpha, chart.G, nf) * signs
    return SecondFundamentalForm(alpha, nf, signs, coeff)


# -- conformality and adaptedness ---------------------------------------------


@dataclass
class ConformalityResult:
    residual: float
    phi: np.ndarray
    factor_residual: float | None = None


def _tangent_pairs(n: int, seed: int, pairs: int):
    rng = np.random.default_rng(seed)
    basis = np.eye(n)
    X = [basis[i] for i in range(n) for j in range(n)]
    Y = [basis[j] for i in range(n) for j in range(n)]
    R = rng.normal(size=(2, pairs, n))
    return np.array(X + list(R[0])), np.array(Y + list(R[1]))


def conformality_check(chart: ImmersionChart, points=None, seed: int = 0, pairs: int = DEFAULT_PAIRS,
                       method: str | None = None) -> ConformalityResult:
    """max |<df X, df Y> - phi^2 <X, Y>_base| / (phi^2 |X| |Y|) over samples and pairs."""
    pts = chart.grid() if points is None else np.atleast_2d(points)
    g = np.asarray(batch(induced_metric_fn(chart, method))(jnp.asarray(pts)))
    _check_rank(g, pts)
    b = np.asarray(batch(chart.metric_fn())(jnp.asarray(pts)))
    n = chart.dim
    phi = (np.linalg.det(g) / np.linalg.det(b)) ** (0.5 / n)
    X, Y = _tangent_pairs(n, seed, pairs)
    lhs = np.einsum("pi,mij,pj->mp", X, g, Y)
    rhs = phi[:, None] ** 2 * np.einsum("pi,mij,pj->mp", X, b, Y)
    nx = np.sqrt(np.einsum("pi,mij,pj->mp", X, b, X))
    ny = np.sqrt(np.einsum("pi,mij,pj->mp", Y, b, Y))
    residual = float(np.max(np.abs(lhs - rhs) / (phi[:, None] ** 2 * nx * ny)))
    factor_residual = None
    if chart.conformal_factor is not None:
        declared = np.asarray(jax.vmap(chart.conformal_factor)(jnp.asarray(pts)))
        factor_residual = float(np.max(np.abs(np.abs(declared) - phi) / phi))
    return ConformalityResult(residual, phi, factor_residual)


def _block_frames(g: np.ndarray, net: ProductNet) -> list[np.ndarray]:
    """Per block, coordinate vectors orthonormalized in the metric g."""
    frames = []
    for blk in net.blocks:
        E = np.eye(g.shape[0])[:, list(blk)]
        gb = E.T @ g @ E
        L = np.linalg.cholesky(gb)
        frames.append(E @ np.linalg.inv(L).T)
    return frames


def adaptedness_check(chart: ImmersionChart, net: ProductNet | None = None, points=None,
                      method: str | None = None) -> float:
    """max ||alpha(X_i, X_j)|| over unit X_i in E_i, X_j in E_j, i != j,
    normalized by the largest ||alpha(X, Y)|| over unit X, Y.  Returns 0
    when that largest value is below ALPHA_ZERO."""
    net = net or chart.net
    if net is None:
        raise ValueError("chart declares no product net")
    geo = sample_geometry(chart, points, method)
    worst_cross, worst = 0.0, 0.0
    for m in range(len(geo.g)):
        frames = _block_frames(geo.g[m], net)
        full = np.hstack(frames)
        a = np.einsum("aij,ip,jq->apq", geo.alpha[m], full, full)
        norms = np.linalg.norm(a, axis=0)
        worst = max(worst, float(norms.max()))
        sizes = np.cumsum([0] + [f.shape[1] for f in frames])
        for i in range(len(frames)):
            for j in range(len(frames)):
                if i != j:
                    blk = norms[sizes[i]:sizes[i + 1], sizes[j]:sizes[j + 1]]
                    worst_cross = max(worst_cross, float(blk.max()))
    if worst <= ALPHA_ZERO:
        return 0.0  # alpha vanishes identically (totally geodesic or codimension 0)
    return worst_cross / worst


# -- principal curvatures -----------------------------------------------------


def unit_normal_fn(chart: ImmersionChart, method: str | None = None) -> Callable:
    """Oriented unit normal of a Euclidean hypersurface: nu_k = det[J | e_k]."""
    if chart.ambient != "euclidean":
        raise DomainError("unit normals are only defined for Euclidean hypersurfaces")
    jac = chart.differentiator(method).jac(chart.func)
    D = chart.ambient_dim
    if D != chart.dim + 1:
        raise DomainError("principal curvatures need a hypersurface")
    E = jnp.eye(D)

    def nu(u):
        J = jac(u)
        v = jnp.stack([jnp.linalg.det(jnp.concatenate([J, E[:, k:k + 1]], axis=1)) for k in range(D)])
        return v / jnp.linalg.norm(v)

    return nu


def shape_operator_fn(chart: ImmersionChart, method: str | None = None) -> Callable:
    """u -> (g, b, S = g^{-1} b) for the oriented unit normal."""
    geom = point_geometry(chart, method)
    nu = unit_normal_fn(chart, method)

    def shape(u):
        p = geom(u)
        b = jnp.einsum("aij,a->ij", p.alpha, nu(u))
        return p.g, b, p.ginv @ b

    return shape


@dataclass
class PrincipalCurvatures:
    points: np.ndarray
    values: np.ndarray  # (M, n) ascending
    vectors: np.ndarray  # (M, n, n) g-orthonormal columns
    clusters: list  # per sample: list of index lists
    ambiguous: np.ndarray  # (M,) bool
    dupin: np.ndarray | None = None  # (M, n_clusters) |d kappa (X)| worst case

    @property
    def multiplicities(self) -> tuple[int, ...]:
        if self.ambiguous.any():
            raise ClusterAmbiguity(f"near-umbilic clustering at {int(self.ambiguous.sum())} samples")
        mults = {tuple(len(c) for c in cl) for cl in self.clusters}
        if len(mults) != 1:
            raise ClusterAmbiguity(f"cluster structure varies across samples: {sorted(mults)}")
        return mults.pop()

    @property
    def dupin_residual(self) -> float:
        return float(np.max(self.dupin)) if self.dupin is not None else float("nan")


def cluster_eigenvalues(values: np.ndarray, gap: float = CLUSTER_GAP, merge: float = CLUSTER_MERGE):
    """Split sorted eigenvalues at relative gaps above ``gap``.

    Gaps between ``merge`` and ``gap`` (relative) are ambiguous.  The scale
    is floored at 1e-6 so that roundoff around zero does not split clusters.
    """
    scale = max(float(np.max(np.abs(values))), 1e-6)
    clusters, current, ambiguous = [], [0], False
    for i in range(1, len(values)):
        rel = (values[i] - values[i - 1]) / scale
        if rel > gap:
            clusters.append(current)
            current = [i]
        else:
            if rel > merge:
                ambiguous = True
            current.append(i)
    clusters.append(current)
    return clusters, ambiguous


def principal_curvature_fields(chart: ImmersionChart, points=None, method: str | None = None,
                               dupin: bool = True, gap: float = CLUSTER_GAP) -> PrincipalCurvatures:
    pts = chart.grid() if points is None else np.atleast_2d(points)
    shape = shape_operator_fn(chart, method)
    g, b, S = (np.asarray(a) for a in batch(shape)(jnp.asarray(pts)))
    dS = None
    if dupin:
        d = chart.differentiator(method)
        dS = np.asarray(batch(d.jac(lambda u: shape(u)[2]))(jnp.asarray(pts)))  # (M, n, n, k)
    M, n = len(pts), chart.dim
    values = np.zeros((M, n))
    vectors = np.zeros((M, n, n))
    clusters, ambiguous, dup = [], np.zeros(M, bool), []
    for m in range(M):
        w, V = scipy.linalg.eigh(b[m], g[m])
        values[m], vectors[m] = w, V
        cl, amb = cluster_eigenvalues(w, gap)
        clusters.append(cl)
        ambiguous[m] = amb
        if dS is not None:
            row = []
            for c in cl:
                Vc = V[:, c]
                P = Vc @ Vc.T @ g[m]
                worst = 0.0
                for k in c:
                    dX = np.einsum("ijk,k->ij", dS[m], V[:, k])
                    worst = max(worst, abs(np.trace(P @ dX)) / len(c))
                row.append(worst)
            dup.append(row)
    dupin_arr = None
    if dS is not None:
        width = max(len(r) for r in dup)
        dupin_arr = np.array([r + [0.0] * (width - len(r)) for r in dup])
    return PrincipalCurvatures(pts, values, vectors, clusters, ambiguous, dupin_arr)


# -- intrinsic net geometry ---------------------------------------------------


@dataclass
class NetGeometryReport:
    """Residuals per block; H[i] is the mean curvature normal of E_i (a field
    in E_i^perp), eta[i] that of E_i^perp (a field in E_i)."""

    umbilic: np.ndarray
    umbilic_perp: np.ndarray
    spherical: np.ndarray
    cp_residual: float
    wp_residual: float
    twist_residual: float | None
    H: np.ndarray = field(repr=False)
    eta: np.ndarray = field(repr=False)

    def passes_cp(self, tol: float) -> bool:
        return bool(max(self.umbilic.max(), self.umbilic_perp.max(), self.cp_residual) <= tol)


def _projector(g, idx):
    """g-orthogonal projector onto span{e_a : a in idx}."""
    n = g.shape[0]
    E = jnp.eye(n)[:, list(idx)]
    return E @ jnp.linalg.inv(E.T @ g @ E) @ E.T @ g


def _umbilic_fit(g, Gamma, idx, Pperp):
    """Least-squares mean curvature normal of span{e_a : a in idx} and the
    fit residual (g-norm)."""
    idx = list(idx)
    gab = g[np.ix_(idx, idx)]
    V = jnp.einsum("km,mab->kab", Pperp, Gamma[:, idx][:, :, idx])
    eta = jnp.einsum("kab,ab->k", V, gab) / jnp.sum(gab * gab)
    R = V - eta[:, None, None] * gab[None]
    res = jnp.sqrt(jnp.abs(jnp.einsum("kab,kl,lab->ab", R, g, R)))
    return eta, jnp.max(res)


def net_geometry_report(chart: ImmersionChart, net: ProductNet | None = None, points=None,
                        twist: Callable | None = None, method: str | None = None) -> NetGeometryReport:
    """Umbilicity, sphericality, CP and (optionally) twist residuals of a net.

    The metric is the chart's declared base metric, else its pullback.
    ``twist(u)`` returns the k twist functions rho_i at u.
    """
    net = net or chart.net
    if net is None:
        raise ValueError("chart declares no product net")
    metric = intrinsic_metric_fn(chart, method)
    d = chart.differentiator(method)
    dmetric = d.jac(metric)
    n, k = chart.dim, len(net.blocks)
    blocks = net.blocks
    perps = [net.complement(i) for i in range(k)]

    def fields(u):
        g = metric(u)
        Gam = christoffel(g, dmetric(u))
        Hs, etas, uE, uP = [], [], [], []
        for blk, perp in zip(blocks, perps):
            PE, PP = _projector(g, blk), _projector(g, perp)
            H, r1 = _umbilic_fit(g, Gam, blk, PP)
            eta, r2 = _umbilic_fit(g, Gam, perp, PE)
            Hs.append(H)
            etas.append(eta)
            uE.append(r1)
            uP.append(r2)
        return jnp.stack(Hs), jnp.stack(etas), jnp.stack(uE), jnp.stack(uP)

    dfields = d.jac(lambda u: fields(u)[:2])

    def checks(u):
        g = metric(u)
        Gam = christoffel(g, dmetric(u))
        H, eta, uE, uP = fields(u)
        dH, deta = dfields(u)  # (k, n, n_dir)
        # covariant derivative (nabla_{e_j} Z)^m = d_j Z^m + Gamma^m_{j l} Z^l
        nH = dH + jnp.einsum("mjl,kl->kmj", Gam, H)
        neta = deta + jnp.einsum("mjl,kl->kmj", Gam, eta)
        sph, cp = [], []
        for i, (blk, perp) in enumerate(zip(blocks, perps)):
            PE, PP = _projector(g, blk), _projector(g, perp)
            # spherical: (nabla_X H_i)_{E_i^perp} = 0 for X in E_i
            S = PP @ nH[i][:, list(blk)]
            sph.append(jnp.max(jnp.sqrt(jnp.abs(jnp.einsum("ma,ml,la->a", S, g, S)))))
            # <nabla_{Xperp} eta_i, X_i> - <nabla_{X_i} H_i, Xperp>
            Xp = PP[:, list(perp)]
            Xi = jnp.eye(n)[:, list(blk)]
            lhs = jnp.einsum("mp,mj,jq->pq", Xi, g @ neta[i], Xp)
            rhs = jnp.einsum("mq,mj,jp->pq", Xp, g @ nH[i], Xi)
            cp.append(jnp.max(jnp.abs(lhs - rhs)))
        return H, eta, uE, uP, jnp.stack(sph), jnp.stack(cp)

    pts = chart.grid() if points is None else np.atleast_2d(points)
    H, eta, uE, uP, sph, cp = (np.asarray(a) for a in batch(checks)(jnp.asarray(pts)))

    # warped-product net: E_i spherical and E_i^perp totally geodesic for i >= 2
    etanorm = np.sqrt(np.abs(np.einsum("mkn,mnl,mkl->mk", eta, np.asarray(batch(metric)(jnp.asarray(pts))), eta)))
    wp = 0.0
    if k > 1:
        wp = float(max(sph[:, 1:].max(), uP[:, 1:].max(), etanorm[:, 1:].max(), uE[:, 1:].max()))

    twist_res = None
    if twist is not None:
        dlog = d.jac(lambda u: jnp.log(twist(u)))

        def twist_check(u):
            g = metric(u)
            U = -jnp.linalg.solve(g, dlog(u).T).T  # (k, n)
            H = fields(u)[0]
            res = []
            for i, perp in enumerate(perps):
                PP = _projector(g, perp)
                diff = H[i] - PP @ U[i]
                res.append(jnp.sqrt(jnp.abs(diff @ g @ diff)))
            return jnp.max(jnp.stack(res))

        twist_res = float(np.max(np.asarray(batch(twist_check)(jnp.asarray(pts)))))

    return NetGeometryReport(
        umbilic=uE.max(axis=0),
        umbilic_perp=uP.max(axis=0),
        spherical=sph.max(axis=0),
        cp_residual=float(cp.max()),
        wp_residual=wp,
        twist_residual=twist_res,
        H=H,
        eta=eta,
    )


def metric_chart(metric: Callable, lower, upper, net: ProductNet | None = None, resolution=9,
                 jets: str = "auto") -> ImmersionChart:
    """A chart carrying only an intrinsic metric (identity immersion)."""
    return ImmersionChart(func=lambda u: u, lower=lower, upper=upper, resolution=resolution,
                          base_metric=metric, net=net, jets=jets, name="metric")


# -- second fundamental form of a conformal lift ------------------------------


@dataclass
class AlphaSplitResult:
    residual: float
    plane_gram_det: float  # max over samples of det Gram(F, eta); negative means Lorentzian
    normality: float  # max |<eta, dF>| (eta is normal to F)
    alpha_scale: float


def verify_alpha_F_split(frame, f_chart: ImmersionChart, phi=None, points=None,
                         method: str | None = "fd") -> AlphaSplitResult:
    """Compare alpha_F with phi Hess(1/phi) F + dPsi(alpha_f)/phi - <X,Y> eta,
    eta = phi w - d(Psi o f)(grad 1/phi), Hess and grad in the metric of F."""
    from isothermic.lightcone import _factor_callable, lift_conformal

    phi_fn = _factor_callable(f_chart, phi)
    F_chart = lift_conformal(frame, f_chart, phi_fn)
    d = f_chart.differentiator(method)
    geoF = point_geometry(F_chart, method)
    geof = point_geometry(f_chart, method)
    psi_inv = lambda u: 1.0 / phi_fn(u)
    dpsi = d.jac(psi_inv)
    hpsi = d.jac(dpsi)
    w = jnp.asarray(frame.w)
    GL = jnp.asarray(F_chart.G)

    def check(u):
        pF = geoF(u)
        pf = geof(u)
        ph = phi_fn(u)
        grad = pF.ginv @ dpsi(u)
        hess = hpsi(u) - jnp.einsum("kij,k->ij", pF.Gamma, dpsi(u))
        x = pf.x
        eta = ph * w - frame.dpsi(x, pf.J @ grad)
        dpsi_alpha = jnp.einsum("ija->aij", frame.dpsi(x, jnp.einsum("aij->ija", pf.alpha)))
        rhs = ph * hess[None] * pF.x[:, None, None] + dpsi_alpha / ph - pF.g[None] * eta[:, None, None]
        diff = pF.alpha - rhs
        res = jnp.max(jnp.linalg.norm(diff, axis=0))
        scale = jnp.max(jnp.linalg.norm(pF.alpha, axis=0))
        Fv = pF.x
        gram = jnp.array([[Fv @ GL @ Fv, Fv @ GL @ eta], [eta @ GL @ Fv, eta @ GL @ eta]])
        normal = jnp.max(jnp.abs(eta @ GL @ pF.J))
        return res, scale, jnp.linalg.det(gram), normal

    pts = f_chart.grid() if points is None else np.atleast_2d(points)
    res, scale, det, normal = (np.asarray(a) for a in batch(check)(jnp.asarray(pts)))
    s = float(np.max(scale))
    return AlphaSplitResult(float(np.max(res)) / max(1.0, s), float(np.max(det)), float(np.max(normal)), s)
