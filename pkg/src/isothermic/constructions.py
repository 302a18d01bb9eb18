"""Example families of isothermic immersions and explicit transform data.

Every constructor returns charts whose maps are jax functions, so jets come
from forward-mode differentiation of the closed-form composition.  Product
charts carry the product of the induced metrics of their factors as base
metric, the product net of the factors, and (when known) the analytic
conformal factor of the composed map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from isothermic.charts import ImmersionChart, ProductNet, warped_metric
from isothermic.curves import FrenetData, frenet_frame
from isothermic.errors import DomainError, FrenetDegeneracy, ProjectionSingular
from isothermic.geometry import induced_metric_fn
from isothermic.lightcone import (
    MoebiusFrame,
    hyperboloid_from_halfspace,
    inversion_matrix,
    lorentz_from_similarity,
    lorentz_map,
    stereographic_map,
    theta_map,
)
from isothermic.ode import hermite_interpolant, integrate_linear_ode
from isothermic.transforms import CombescureData

SPHERE_TOL = 1e-8
K_TOL = 1e-10
DEFAULT_MARGIN = 0.1


# -- elementary charts ----------------------------------------------------------


def curve_chart(curve: Callable, t0: float, t1: float, resolution: int = 17, name: str = "curve",
                sphere_c: float | None = None) -> ImmersionChart:
    """1-dimensional chart u -> curve(u[0])."""
    meta = {} if sphere_c is None else {"sphere_c": float(sphere_c)}
    return ImmersionChart(lambda u: curve(u[0]), (t0,), (t1,), resolution, name=name, meta=meta)


def _sphere_point(angles, radius):
    m = angles.shape[-1]
    out, prod = [], 1.0
    for k in range(m):
        out.append(prod * jnp.cos(angles[k]))
        prod = prod * jnp.sin(angles[k])
    out.append(prod)
    return radius * jnp.stack(out)


def sphere_chart(m: int, radius: float = 1.0, lower=None, upper=None, resolution=17,
                 name: str = "sphere") -> ImmersionChart:
    """Hyperspherical coordinates on S^m(1/radius^2) in R^{m+1}.

    The first m-1 angles range in (0, pi) and the last over a full turn;
    defaults keep away from the coordinate poles.
    """
    if m < 1:
        raise DomainError("sphere dimension must be positive")
    if lower is None:
        lower = [0.35] * (m - 1) + [0.0]
    if upper is None:
        upper = [np.pi - 0.35] * (m - 1) + [2 * np.pi]
    return ImmersionChart(lambda u: _sphere_point(u, radius), lower, upper, resolution, name=name,
                          meta={"sphere_c": 1.0 / radius**2})


def shrink(chart: ImmersionChart, margin: float = DEFAULT_MARGIN) -> ImmersionChart:
    """Shrink the sample box by ``margin`` of its extent on every side."""
    lo = np.array(chart.lower) + margin * chart.extent
    hi = np.array(chart.upper) - margin * chart.extent
    return chart.replace(lower=lo, upper=hi)


# -- extrinsic products -------------------------------------------------------


def _product_metric_fn(parts: Sequence[ImmersionChart]) -> Callable:
    metrics = [induced_metric_fn(p) for p in parts]
    dims = [p.dim for p in parts]
    offsets = np.cumsum([0] + dims)

    def g(u):
        n = offsets[-1]
        out = jnp.zeros((n, n))
        for fn, a, b in zip(metrics, offsets[:-1], offsets[1:]):
            out = out.at[a:b, a:b].set(fn(u[a:b]))
        return out

    return g


def _split(parts):
    dims = [p.dim for p in parts]
    offsets = np.cumsum([0] + dims)
    return [(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:])]


def _check_sphere(part: ImmersionChart, c: float):
    vals = part.evaluate(part.grid())
    r2 = np.sum(vals * vals, axis=-1)
    if np.max(np.abs(r2 * c - 1.0)) > SPHERE_TOL:
        raise DomainError(f"{part.name} does not lie on the sphere of curvature {c}")


def extrinsic_product(parts: Sequence[ImmersionChart], v_extra=None,
                      sphere_c: Sequence[float | None] | None = None, name: str = "product") -> ImmersionChart:
    """(f_1 x ... x f_k, v) into R^{m_1} + ... + R^{m_k} + R^{len v}.

    ``sphere_c`` (or each part's ``meta['sphere_c']``) declares the sphere
    S^{m_i - 1}(c_i) containing the part; when every part is spherical the
    product lies in S^{N-1}(c) with 1/c = sum 1/c_i + |v|^2, recorded in
    ``meta['sphere_c']``.
    """
    parts = list(parts)
    if not parts:
        raise DomainError("need at least one factor")
    if any(p.ambient != "euclidean" for p in parts):
        raise DomainError("extrinsic products take Euclidean factors")
    v = np.zeros(0) if v_extra is None else np.atleast_1d(np.asarray(v_extra, dtype=float))
    if v.ndim != 1:
        raise DomainError("v_extra must be a vector")
    cs = list(sphere_c) if sphere_c is not None else [p.meta.get("sphere_c") for p in parts]
    if len(cs) != len(parts):
        raise DomainError("one curvature per factor")
    for p, c in zip(parts, cs):
        if c is not None:
            _check_sphere(p, c)
    spans = _split(parts)
    funcs = [p.func for p in parts]
    vj = jnp.asarray(v)

    def func(u):
        return jnp.concatenate([f(u[a:b]) for f, (a, b) in zip(funcs, spans)] + [vj])

    meta = {"factors": [p.name for p in parts], "ambient_dims": [p.ambient_dim for p in parts],
            "v_extra": v.tolist(), "part_c": cs}
    if all(c is not None for c in cs):
        meta["sphere_c"] = 1.0 / (sum(1.0 / c for c in cs) + float(v @ v))
    net = ProductNet.from_sizes(*[p.dim for p in parts]) if len(parts) > 1 else None
    return ImmersionChart(func, sum((p.lower for p in parts), ()), sum((p.upper for p in parts), ()),
                          sum((p.resolution for p in parts), ()), base_metric=_product_metric_fn(parts),
                          net=net, conformal_factor=lambda u: jnp.asarray(1.0), name=name, meta=meta)


def _compose(product: ImmersionChart, cmap, name: str, meta: dict) -> ImmersionChart:
    inner_f = product.func
    return product.replace(func=lambda u: cmap.fn(inner_f(u)),
                           conformal_factor=lambda u: cmap.factor(inner_f(u)),
                           name=name, meta={**product.meta, **meta})


# -- Moore and Theta families ------------------------------------------------


def _default_offset(product: ImmersionChart) -> np.ndarray:
    vals = product.evaluate(product.grid())
    b = np.zeros(product.ambient_dim)
    b[0] = 1.0 + float(np.max(np.linalg.norm(vals, axis=-1)))
    return b


def moore_family(parts: Sequence[ImmersionChart], c: float = 0.0, frame: MoebiusFrame | None = None,
                 ratio: float = 1.0, b=None, v_extra=None, name: str = "moore") -> ImmersionChart:
    """Conformal images of extrinsic products.

    c = 0: the unit inversion at the origin after the homothety x -> ratio x + b
    (b defaults to a shift keeping the image away from the origin).
    c > 0: the stereographic projection of a product lying in S^N(c) in R^{N+1}.
    """
    if c < 0:
        raise DomainError("c must be nonnegative")
    product = extrinsic_product(parts, v_extra)
    n = product.dim
    if c == 0:
        N = product.ambient_dim
        frame = frame or MoebiusFrame.canonical(N)
        if frame.N != N:
            raise DomainError(f"frame dimension {frame.N} does not match the product dimension {N}")
        b = _default_offset(product) if b is None else np.asarray(b, dtype=float)
        T = inversion_matrix(frame, np.zeros(N), 1.0) @ lorentz_from_similarity(frame, ratio, None, b)
        cmap = lorentz_map(frame, T)
        vals = product.evaluate(product.grid())
        if np.min(np.linalg.norm(ratio * vals + b, axis=-1)) < 1e-6:
            raise DomainError("the homothetic image meets the inversion center")
        return _compose(product, cmap, name, {"c": 0.0, "ratio": ratio, "b": b.tolist()})
    k = len(list(parts))
    N = product.ambient_dim - 1
    if "sphere_c" not in product.meta:
        raise DomainError("c > 0 needs spherical factors")
    if abs(1.0 / product.meta["sphere_c"] - 1.0 / c) > 1e-10 * max(1.0, 1.0 / c):
        raise DomainError(f"1/c = {1 / c} but the factors give {1 / product.meta['sphere_c']}")
    if n >= 3 and k > N - n:
        raise DomainError(f"k = {k} factors exceed the codimension bound N - n = {N - n}")
    frame = frame or MoebiusFrame.canonical(N)
    if frame.N != N:
        raise DomainError(f"frame dimension {frame.N} does not match N = {N}")
    cmap = stereographic_map(frame, c=c)
    vals = product.evaluate(product.grid())
    if np.min(np.abs(vals[:, -1] + 1.0 / np.sqrt(c))) < 1e-6:
        raise ProjectionSingular("the product passes through the projection pole")
    return _compose(product, cmap, name, {"c": c})


def hyperbolic_chart(halfspace: ImmersionChart, c: float = 1.0, name: str | None = None) -> ImmersionChart:
    """Compose a chart into the upper half-space R^m_+ with the isometry onto
    the hyperboloid <X, X> = -1/c of L^{m+1}."""
    vals = halfspace.evaluate(halfspace.grid())
    if np.any(vals[:, -1] <= 0):
        raise DomainError("chart leaves the upper half-space")
    f = halfspace.func
    return halfspace.replace(func=lambda u: hyperboloid_from_halfspace(f(u), c), ambient="lorentz",
                             base_metric=None, conformal_factor=None, name=name or f"H({halfspace.name})",
                             meta={**halfspace.meta, "hyperbolic_c": c})


def _lorentz_product(hyp: ImmersionChart, sph: ImmersionChart, name: str, meta: dict) -> ImmersionChart:
    """Juxtaposition (X, Y) of a hyperboloid chart and a sphere chart."""
    fh, fs = hyp.func, sph.func
    n1 = hyp.dim

    def func(u):
        return jnp.concatenate([fh(u[:n1]), fs(u[n1:])])

    net = ProductNet.from_sizes(n1, sph.dim)
    return ImmersionChart(func, hyp.lower + sph.lower, hyp.upper + sph.upper, hyp.resolution + sph.resolution,
                          base_metric=_product_metric_fn([hyp, sph]), net=net, name=name, meta=meta)


def theta_family(f_h: ImmersionChart, others: Sequence[ImmersionChart], c: float = 1.0,
                 frame: MoebiusFrame | None = None, v_extra=None, name: str = "theta") -> ImmersionChart:
    """Theta o (f_h x (f_2 x ... x f_k, v)).

    ``f_h`` maps into the hyperboloid H^m(-c) of L^{m+1} (ambient "lorentz");
    the others are spherical factors whose product lies in S^{N-m}(c).
    """
    if f_h.ambient != "lorentz":
        raise DomainError("the hyperbolic factor must be a chart into L^{m+1}; see hyperbolic_chart")
    if not c > 0:
        raise DomainError("c must be positive")
    vals = f_h.evaluate(f_h.grid())
    G = f_h.G
    if np.max(np.abs(np.einsum("mi,ij,mj->m", vals, G, vals) * c + 1.0)) > SPHERE_TOL or np.any(vals[:, -1] <= 0):
        raise DomainError("hyperbolic factor is off the hyperboloid <X, X> = -1/c")
    m = f_h.ambient_dim - 1
    sph = extrinsic_product(others, v_extra, name="spherical factors")
    if abs(1.0 / sph.meta.get("sphere_c", np.inf) - 1.0 / c) > 1e-10 * max(1.0, 1.0 / c):
        raise DomainError("spherical factors do not lie in S^{N-m}(c)")
    N = m + sph.ambient_dim - 1
    frame = frame or MoebiusFrame.canonical(N)
    if frame.N != N:
        raise DomainError(f"frame dimension {frame.N} does not match N = {N}")
    cmap = theta_map(frame, m, c=c)
    prod = _lorentz_product(f_h, sph, name, {"m": m, "c": c, "factors": [f_h.name] + sph.meta["factors"]})
    if len(list(others)) > 1:
        sizes = [f_h.dim] + [o.dim for o in others]
        prod = prod.replace(net=ProductNet.from_sizes(*sizes))
    L = cmap.meta["L"]
    pts = prod.evaluate(prod.grid())
    s = np.asarray(jax.vmap(lambda z: frame.wdot(L(z)))(jnp.asarray(pts)))
    if np.any(s <= 1e-6 * np.linalg.norm(pts, axis=-1)):
        raise ProjectionSingular("the product meets the sphere omitted by Theta")
    return _compose(prod, cmap, name, {"m": m, "c": c})


# -- cyclides -----------------------------------------------------------------


def _umbilic_hyperbolic(k: int, c: float, resolution) -> ImmersionChart:
    """Umbilical hypersurface of H^k(-1) in L^{k+1} of intrinsic curvature c."""
    d = k - 1
    if c > 0:
        sR = 1.0 / np.sqrt(c)
        cR = np.sqrt(1.0 + sR * sR)
        base = sphere_chart(d, 1.0, resolution=resolution)
        f = base.func
        return base.replace(func=lambda u: jnp.concatenate([sR * f(u), jnp.array([cR])]), ambient="lorentz",
                            meta={"kind": "geodesic sphere", "sinhR": sR, "coshR": cR}, name="umbilic")
    if c == 0:
        def horo(u):
            return hyperboloid_from_halfspace(jnp.concatenate([u, jnp.array([1.0])]))

        return ImmersionChart(horo, [-1.0] * d, [1.0] * d, resolution, ambient="lorentz", name="umbilic",
                              meta={"kind": "horosphere"})
    ch = np.sqrt(-1.0 / c)
    sh = np.sqrt(ch * ch - 1.0)

    def equidistant(u):
        X = hyperboloid_from_halfspace(jnp.concatenate([u[:-1], jnp.exp(u[-1:])]))
        return jnp.concatenate([ch * X[:-1], jnp.array([sh]), ch * X[-1:]])

    return ImmersionChart(equidistant, [-1.0] * d, [1.0] * d, resolution, ambient="lorentz", name="umbilic",
                          meta={"kind": "equidistant", "coshd": ch})


def cyclide(n: int, m: int, c: float, resolution: int = 17, frame: MoebiusFrame | None = None) -> ImmersionChart:
    """Dupin hypersurface Theta o (f_1 x i) in R^{n+1} with principal
    multiplicities (n - m, m).

    f_1 is an umbilical hypersurface of H^{n-m+1}(-1) with intrinsic
    curvature c (geodesic sphere, horosphere or equidistant for c > 0, = 0,
    < 0) and i the identity chart of S^m(1).  For n = 2, m = 1, c > 0 the
    image is a torus of revolution with tube radius sinh R and axis distance
    cosh R, sinh R = 1 / sqrt(c).
    """
    if not (isinstance(n, (int, np.integer)) and isinstance(m, (int, np.integer))) or n < 2:
        raise DomainError("n must be an integer >= 2")
    if not 1 <= m <= n - 1:
        raise DomainError(f"need 1 <= m <= n - 1, got n={n}, m={m}")
    if not c > -1:
        raise DomainError("c must exceed -1")
    k = n - m + 1
    f1 = _umbilic_hyperbolic(k, float(c), resolution)
    sph = sphere_chart(m, 1.0, resolution=resolution, name="fiber")
    out = theta_family(f1, [sph], c=1.0, frame=frame, name=f"cyclide(n={n},m={m},c={c})")
    return out.replace(meta={**out.meta, "n": n, "multiplicities": [n - m, m], "cyclide_c": float(c),
                             **{k_: v for k_, v in f1.meta.items() if k_ != "kind"}, "kind": f1.meta["kind"]})


def torus_curvatures(points: np.ndarray, axis_distance: float, tube_radius: float) -> np.ndarray:
    """Closed-form principal curvatures (1/rho, cos v / r) of a torus of
    revolution about the first coordinate axis, at image points in R^3.

    r is the distance to the axis and cos v = (r - axis_distance) / rho.
    """
    p = np.atleast_2d(points)
    r = np.hypot(p[:, 1], p[:, 2])
    cosv = (r - axis_distance) / tube_radius
    return np.stack([np.full(len(p), 1.0 / tube_radius), cosv / r], axis=-1)


# -- trivial and perturbed data -------------------------------------------------


def trivial_data(host: ImmersionChart, a: float = 0.0, b=None, const: float = 0.0) -> CombescureData:
    """phi = a/2 |f|^2 + <b, f> + const with F = a f + b, so S = a I."""
    b = np.zeros(host.ambient_dim) if b is None else np.asarray(b, dtype=float)
    f, bj = host.func, jnp.asarray(b)

    def phi(u):
        x = f(u)
        return 0.5 * a * (x @ x) + bj @ x + const

    return CombescureData.from_transform_field(host, phi, lambda u: a * f(u) + bj,
                                               {"kind": "trivial", "a": a, "b": b.tolist(), "const": const})


def _smooth_field(dim_in: int, dim_out: int, seed: int, modes: int = 3) -> Callable:
    rng = np.random.default_rng(seed)
    W = jnp.asarray(rng.normal(size=(modes, dim_in)))
    ph = jnp.asarray(rng.uniform(0, 2 * np.pi, size=modes))
    C = jnp.asarray(rng.normal(size=(modes, dim_out)) / np.sqrt(modes))
    return lambda u: jnp.sin(W @ u + ph) @ C


def perturbation(chart: ImmersionChart, eps: float = 1e-2, seed: int = 0) -> ImmersionChart:
    """f + eps * (smooth seeded field), keeping base metric and net; a
    negative control for conformality and adaptedness."""
    field = _smooth_field(chart.dim, chart.ambient_dim, seed)
    f = chart.func
    scale = float(np.max(np.abs(chart.evaluate(chart.grid()))))
    return chart.replace(func=lambda u: f(u) + eps * scale * field(u), conformal_factor=None,
                         name=f"perturbed({chart.name})", meta={**chart.meta, "perturbation": eps, "seed": seed})


def perturb_beta(data: CombescureData, eps: float = 1e-2, seed: int = 0) -> CombescureData:
    """beta + eps * (normal part of a smooth seeded field)."""
    host = data.host
    field = _smooth_field(host.dim, host.ambient_dim, seed)
    jac = host.differentiator().jac(host.func)
    beta = data.beta

    def new_beta(u):
        J = jac(u)
        P = jnp.eye(J.shape[0]) - J @ jnp.linalg.solve(J.T @ J, J.T)
        return beta(u) + eps * P @ field(u)

    return CombescureData(host, data.phi, new_beta, None, {**data.meta, "perturbation": eps})


# -- Christoffel data ---------------------------------------------------------


def christoffel_product(f1: ImmersionChart, f2: ImmersionChart, a: float = 1.0, v=None):
    """F = a((-f_1) x f_2) + v on f = f_1 x f_2, with S = a(Pi_2 - Pi_1)."""
    if a == 0:
        raise DomainError("a must be nonzero")
    host = extrinsic_product([f1, f2], name=f"{f1.name} x {f2.name}")
    m1 = f1.ambient_dim
    D = host.ambient_dim
    v = np.zeros(D) if v is None else np.asarray(v, dtype=float)
    sign = jnp.asarray(np.r_[-np.ones(m1), np.ones(D - m1)])
    f, vj = host.func, jnp.asarray(v)

    def F(u):
        return a * sign * f(u) + vj

    def phi(u):
        x = f(u)
        return 0.5 * a * jnp.sum(sign * x * x) + vj @ x

    data = CombescureData.from_transform_field(host, phi, F, {"kind": "christoffel_product", "a": a, "v": v.tolist()})
    chart = host.replace(func=F, base_metric=None, conformal_factor=None, name=f"christoffel({host.name})")
    return chart, data


def warped_product(gamma: ImmersionChart, g: ImmersionChart, name: str = "warped") -> ImmersionChart:
    """Phi o (gamma x g) = (gamma_1..gamma_{m-1}, gamma_m g) for gamma into the
    half-space R^m_+ and g into the unit sphere."""
    vals = gamma.evaluate(gamma.grid())
    if np.any(vals[:, -1] <= 0):
        raise DomainError("the warping coordinate must stay positive")
    _check_sphere(g, 1.0)
    n1 = gamma.dim
    fg, fs = gamma.func, g.func

    def func(u):
        x = fg(u[:n1])
        return jnp.concatenate([x[:-1], x[-1] * fs(u[n1:])])

    metric = warped_metric(n1, g.dim, lambda u1: fg(u1)[-1], induced_metric_fn(gamma), induced_metric_fn(g))
    return ImmersionChart(func, gamma.lower + g.lower, gamma.upper + g.upper, gamma.resolution + g.resolution,
                          base_metric=metric, net=ProductNet.from_sizes(n1, g.dim),
                          conformal_factor=lambda u: jnp.asarray(1.0), name=name,
                          meta={"factors": [gamma.name, g.name]})


def christoffel_warped(gamma: Callable, t0: float, t1: float, g: ImmersionChart, a: float = 1.0, v=None,
                       resolution: int = 17, tol: float = 1e-11):
    """Christoffel transform of f = Phi o (gamma x g).

    gamma~ solves gamma~' = gamma' / gamma_m^2 with gamma~_i(t0) = 0 for
    i < m and gamma~_m = -1 / gamma_m; then F = Phi o (a gamma~ x g) + v has
    S = a gamma_m^{-2} (Pi_1 - Pi_2), and phi = a psi + <v, f> with
    psi' = <gamma~, gamma'>.
    """
    if a == 0:
        raise DomainError("a must be nonzero")
    gchart = curve_chart(gamma, t0, t1, resolution, name="gamma")
    host = warped_product(gchart, g)
    m = int(np.asarray(gamma(jnp.asarray(t0))).shape[-1])
    dgamma = jax.jacfwd(gamma)
    tt = np.linspace(t0, t1, 4 * resolution + 1)
    gm = np.asarray(jax.vmap(gamma)(jnp.asarray(tt)))[:, -1]
    if np.min(gm) <= 1e-6:
        raise DomainError("gamma_m approaches zero")
    c0 = np.zeros(m)
    c0[-1] = -1.0 / float(gm[0])

    def rhs(t, y):
        dg = dgamma(t)
        gt = y[:m]
        return jnp.concatenate([dg / gamma(t)[-1] ** 2, jnp.array([gt @ dg])])

    traj = integrate_linear_ode(rhs, np.r_[c0, 0.0], tt, tol=tol)
    ev = traj.evaluator()
    f = host.func
    D = host.ambient_dim
    vj = jnp.asarray(np.zeros(D) if v is None else np.asarray(v, dtype=float))
    fs = g.func

    def F(u):
        y = ev(u[0])
        gt = a * y[:m]
        return jnp.concatenate([gt[:-1], gt[-1] * fs(u[1:])]) + vj

    def phi(u):
        return a * ev(u[0])[m] + vj @ f(u)

    def gamma_tilde(t):
        return ev(t)[:m]

    data = CombescureData.from_transform_field(host, phi, F, {"kind": "christoffel_warped", "a": a,
                                                             "gamma_tilde": gamma_tilde, "trajectory": traj})
    chart = host.replace(func=F, base_metric=None, conformal_factor=None, name=f"christoffel({host.name})")
    return chart, data


# -- Darboux data -------------------------------------------------------------


def darboux_sphere_factor(g1: ImmersionChart, g2: ImmersionChart, P2, r2: float) -> CombescureData:
    """F = (0, g_2 - P_2), phi = r_2^2 on f = g_1 x g_2 with g_2 on the sphere
    of center P_2 and radius r_2; then S = Pi_2."""
    P2 = np.asarray(P2, dtype=float)
    vals = g2.evaluate(g2.grid())
    if np.max(np.abs(np.linalg.norm(vals - P2, axis=-1) - r2)) > SPHERE_TOL * max(1.0, r2):
        raise DomainError("g2 does not lie on the sphere |x - P2| = r2")
    host = extrinsic_product([g1, g2], name=f"{g1.name} x {g2.name}")
    m1 = g1.ambient_dim
    f = host.func
    shift = jnp.asarray(np.r_[np.zeros(m1), P2])
    mask = jnp.asarray(np.r_[np.zeros(m1), np.ones(g2.ambient_dim)])
    r2sq = float(r2) ** 2

    def F(u):
        return mask * f(u) - shift

    return CombescureData.from_transform_field(host, lambda u: jnp.asarray(r2sq), F,
                                               {"kind": "darboux_sphere_factor", "P2": P2.tolist(), "r2": r2})


@dataclass(frozen=True)
class DarbouxODEState:
    """(lambda, beta = lambda', V_2..V_N1) with first integral
    K = lambda^2 - beta^2 - sum V_j^2."""

    lam: float
    beta: float
    V: tuple[float, ...]

    @property
    def K(self) -> float:
        return self.lam**2 - self.beta**2 - float(np.sum(np.square(self.V)))

    def as_array(self) -> np.ndarray:
        return np.r_[self.lam, self.beta, np.asarray(self.V, dtype=float)]

    def project(self) -> "DarbouxODEState":
        """Rescale V so that K = 0."""
        target = self.lam**2 - self.beta**2
        V = np.asarray(self.V, dtype=float)
        nv = float(np.linalg.norm(V))
        if target < 0 or nv == 0:
            raise DomainError("K = 0 cannot be reached by rescaling V")
        return DarbouxODEState(self.lam, self.beta, tuple(float(x) for x in V * np.sqrt(target) / nv))


def darboux_ode_rhs(curvatures: Callable) -> Callable:
    """lambda' = beta, beta' = lambda + k_1 V_2,
    V_j' = -k_{j-1} V_{j-1} + k_j V_{j+1} with V_1 := beta and V_{N1+1} := 0."""

    def rhs(t, y):
        k = curvatures(t)
        lam, W = y[0], y[1:]  # W = (beta, V_2, .., V_N1)
        nW = W.shape[0]
        kk = jnp.concatenate([k, jnp.zeros(1)])
        up = jnp.concatenate([W[1:], jnp.zeros(1)]) * kk
        down = jnp.concatenate([jnp.zeros(1), W[:-1] * k])
        dW = up - down
        dW = dW.at[0].add(lam)
        return jnp.concatenate([W[:1], dW[:nW]])

    return rhs


def first_integral(y) -> jnp.ndarray:
    return y[0] ** 2 - jnp.sum(y[1:] ** 2)


def darboux_curve_factor(curve: Callable | FrenetData, t0: float, t1: float, g2: ImmersionChart,
                         initial: DarbouxODEState, resolution: int = 17, tol: float = 1e-9,
                         project: bool = False) -> CombescureData:
    """F = gamma o pi_1, phi = lambda o pi_1 on f = alpha x g_2.

    alpha is a unit-speed curve in R^{N1} with nowhere vanishing Frenet
    curvatures; (lambda, beta, V) solve the Frenet system from ``initial``
    (which must satisfy K = 0, or is projected onto it with ``project``) and
    gamma = lambda' alpha' + sum V_j e_j, so gamma' = lambda alpha'.
    """
    alpha = curve.curve if isinstance(curve, FrenetData) else curve
    tt = np.linspace(t0, t1, 4 * resolution + 1)
    fd = frenet_frame(alpha, tt)
    if np.max(np.abs(fd.speed - 1.0)) > 1e-8:
        raise DomainError("alpha must have unit speed")
    if np.any(np.abs(fd.curvatures) <= 1e-8):
        raise FrenetDegeneracy("a Frenet curvature vanishes")
    N1 = fd.N1
    if len(initial.V) != N1 - 1:
        raise DomainError(f"initial state needs {N1 - 1} V components")
    if project:
        initial = initial.project()
    if abs(initial.K) > K_TOL:
        raise DomainError(f"initial K = {initial.K:.3e} is not zero")
    kfn, Efn = fd.curvature_fn(), fd.frame_fn()
    # curvatures are tabulated with exact slopes on a fine grid; the cubic
    # Hermite interpolant keeps jets of the solution cheap
    tk = np.linspace(t0, t1, 64 * resolution + 1)
    ktab = hermite_interpolant(tk, jax.vmap(kfn)(jnp.asarray(tk)), jax.vmap(jax.jacfwd(kfn))(jnp.asarray(tk)))
    kerr = float(np.max(np.abs(np.asarray(jax.vmap(lambda t: ktab(t) - kfn(t))(jnp.asarray(0.5 * (tk[1:] + tk[:-1])))))))
    traj = integrate_linear_ode(darboux_ode_rhs(ktab), initial.as_array(), tt, monitor=first_integral, tol=tol)
    ev = traj.evaluator()
    dalpha = jax.jacfwd(alpha)

    def gamma_frenet(t):
        y = ev(t)
        E = Efn(t)
        return y[1] * E[0] + y[2:] @ E[1:]

    # the derivative gamma' = lambda alpha' holds along solutions; it is
    # declared here (keeping jets cheap) and checked by differences below
    @jax.custom_jvp
    def gamma(t):
        return gamma_frenet(t)

    @gamma.defjvp
    def _gamma_jvp(primals, tangents):
        (t,), (dt,) = primals, tangents
        return gamma(t), ev(t)[0] * dalpha(t) * dt

    gchart = curve_chart(alpha, t0, t1, resolution, name="alpha")
    host = extrinsic_product([gchart, g2], name=f"alpha x {g2.name}")
    n2 = g2.ambient_dim

    def F(u):
        return jnp.concatenate([gamma(u[0]), jnp.zeros(n2)])

    def phi(u):
        return ev(u[0])[0]

    h = 1e-4 * (t1 - t0)
    ti = jnp.asarray(tt[2:-2])
    G = lambda s: jax.vmap(gamma_frenet)(s)
    fd_dgamma = (8 * (G(ti + h) - G(ti - h)) - (G(ti + 2 * h) - G(ti - 2 * h))) / (12 * h)
    target = jax.vmap(lambda t: ev(t)[0] * dalpha(t))(ti)
    gres = float(np.max(np.abs(np.asarray(fd_dgamma - target))))
    lres = float(np.max(np.abs(np.asarray(jax.vmap(lambda t: gamma(t) @ dalpha(t) - ev(t)[1])(jnp.asarray(tt))))))
    Kvals = np.asarray(jax.vmap(first_integral)(jnp.asarray(traj.fine_y)))
    meta = {"kind": "darboux_curve_factor", "trajectory": traj, "gamma": gamma, "gamma_residual": gres,
            "lambda_prime_residual": lres, "curvature_interpolation_error": kerr, "K_drift": float(np.max(np.abs(Kvals - Kvals[0]))),
            "initial": initial.as_array().tolist()}
    return CombescureData.from_transform_field(host, phi, F, meta)


def darboux_warped(g1: ImmersionChart, g2: ImmersionChart) -> CombescureData:
    """F = (0, .., 0, g_2), phi = h_m on f = Phi o (g_1 x g_2), g_1 = (h_1..h_m)
    into R^m_+ and g_2 into the unit sphere; S = h_m^{-1} Pi_2."""
    host = warped_product(g1, g2, name=f"warped({g1.name}, {g2.name})")
    m = g1.ambient_dim
    n1 = g1.dim
    f1, fs = g1.func, g2.func
    zeros = jnp.zeros(m - 1)

    def F(u):
        return jnp.concatenate([zeros, fs(u[n1:])])

    def phi(u):
        return f1(u[:n1])[-1]

    return CombescureData.from_transform_field(host, phi, F, {"kind": "darboux_warped"})


def reflected_sphere_factor(data: CombescureData) -> Callable:
    """Closed form g_1 x (2 P_2 - g_2) of the Ribaucour transform of
    sphere-factor data."""
    P2 = np.asarray(data.meta["P2"])
    D = data.host.ambient_dim
    m1 = D - len(P2)
    f = data.host.func
    sign = jnp.asarray(np.r_[np.ones(m1), -np.ones(len(P2))])
    shift = jnp.asarray(np.r_[np.zeros(m1), 2 * P2])
    return lambda u: sign * f(u) + shift


__all__ = [
    "DarbouxODEState",
    "christoffel_product",
    "christoffel_warped",
    "curve_chart",
    "cyclide",
    "darboux_curve_factor",
    "darboux_ode_rhs",
    "darboux_sphere_factor",
    "darboux_warped",
    "extrinsic_product",
    "first_integral",
    "hyperbolic_chart",
    "moore_family",
    "perturb_beta",
    "perturbation",
    "reflected_sphere_factor",
    "shrink",
    "sphere_chart",
    "theta_family",
    "torus_curvatures",
    "trivial_data",
    "warped_product",
]
