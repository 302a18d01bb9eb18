import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from isothermic.charts import ImmersionChart
from isothermic.errors import DomainError, FrameError, NoIntersection, ProjectionSingular
from isothermic.geometry import conformality_check, sample_geometry
from isothermic.lightcone import (
    ConformalMapSpec,
    MoebiusFrame,
    apply_moebius,
    build_map,
    drop_to_euclidean,
    frame_change,
    hyperboloid_from_halfspace,
    halfspace_from_hyperboloid,
    hyperplane_from_normal_offset,
    intersection_angle,
    lift_conformal,
    lorentz_from_similarity,
    project_to_model,
    psi_embed,
    psi_invert,
    sphere_from_center_radius,
    stereographic_map,
    theta_halfspace,
    theta_map,
    theta_omitted_residual,
)
from isothermic.minkowski import inner

F3 = MoebiusFrame.canonical(3)
coords = st.floats(-5, 5, allow_nan=False)


def test_canonical_frame_basics():
    assert np.allclose(psi_embed(F3, np.zeros(3)), F3.p0)
    assert np.allclose(psi_invert(F3, F3.p0), np.zeros(3))
    with pytest.raises(FrameError):
        MoebiusFrame(F3.p0, 2 * F3.w, F3.A)


def test_psi_invert_off_slice():
    with pytest.raises(DomainError):
        psi_invert(F3, F3.p0 + 0.3 * F3.A[:, 0])  # <p,p> != 0
    with pytest.raises(DomainError):
        psi_invert(F3, 2 * F3.p0)  # <p,w> = 2


def test_project_to_model():
    assert np.allclose(project_to_model(F3, 2 * F3.p0), F3.p0)
    with pytest.raises(ProjectionSingular):
        project_to_model(F3, F3.w)


def test_unit_sphere_vector():
    s = sphere_from_center_radius(F3, np.zeros(3), 1.0)
    assert np.allclose(s.v, F3.p0 + 0.5 * F3.w)
    assert s.h == pytest.approx(1.0)
    assert np.allclose(s.center, 0.0, atol=1e-14)
    assert s.radius == pytest.approx(1.0)
    assert s.contains(np.array([[1.0, 0, 0], [0, 0.6, 0.8]])).all()
    assert not s.contains(np.array([0.5, 0, 0]))


def test_sphere_roundtrip_center_radius():
    s = sphere_from_center_radius(F3, [1.0, -2.0, 0.5], 2.5, orient=-1)
    assert np.allclose(s.center, [1.0, -2.0, 0.5])
    assert s.radius == pytest.approx(2.5)
    assert s.h == pytest.approx(-0.4)


def test_hyperplane_vector():
    s = hyperplane_from_normal_offset(F3, [0, 0, 1.0], 2.0)
    assert s.is_hyperplane and s.radius == float("inf")
    assert s.contains(np.array([3.0, -1.0, 2.0]))
    with pytest.raises(DomainError):
        s.center


def test_intersection_angles():
    a = sphere_from_center_radius(F3, np.zeros(3), 1.0)
    b = sphere_from_center_radius(F3, [np.sqrt(2), 0, 0], 1.0)
    assert intersection_angle(a, b) == pytest.approx(0.0, abs=1e-14)  # orthogonal
    tangent = sphere_from_center_radius(F3, [2.0, 0, 0], 1.0)
    assert abs(intersection_angle(a, tangent)) == pytest.approx(1.0)
    with pytest.raises(NoIntersection):
        intersection_angle(a, sphere_from_center_radius(F3, np.zeros(3), 3.0))


def test_inversion_spec():
    x = np.array([[2.0, 0, 0], [1.0, 1.0, 1.0]])
    y = apply_moebius(F3, ConformalMapSpec("inversion", {}), x)
    assert np.allclose(y, x / np.sum(x * x, axis=1)[:, None])


def test_similarity_spec_and_factor():
    Q = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
    spec = ConformalMapSpec("similarity", {"ratio": 2.0, "Q": Q, "b": [1.0, 0, -1.0]})
    x = np.array([0.3, -0.2, 0.7])
    assert np.allclose(apply_moebius(F3, spec, x), 2.0 * Q @ x + [1.0, 0, -1.0])
    assert float(build_map(F3, spec).factor(x)) == pytest.approx(2.0)


def test_lorentz_spec_validation():
    with pytest.raises(DomainError):
        ConformalMapSpec("lorentz", {"T": 2 * np.eye(5)})
    with pytest.raises(ValueError):
        ConformalMapSpec("bogus")


def test_lift_homothety():
    f = ImmersionChart(lambda u: 2.0 * u, [-1, -1, -1], [1, 1, 1], resolution=3)
    F = lift_conformal(F3, f, 2.0)
    g = sample_geometry(F).g
    assert np.allclose(g, np.eye(3), atol=1e-12)
    vals = F.evaluate(F.grid())
    assert np.allclose(inner(vals, vals), 0.0, atol=1e-12)
    back, factor = drop_to_euclidean(F3, F)
    assert np.allclose(back.evaluate(back.grid()), f.evaluate(f.grid()))


def test_drop_requires_positive_w_component():
    f = ImmersionChart(lambda u: u, [-1, -1, -1], [1, 1, 1], resolution=3)
    F = lift_conformal(F3, f, -1.0)
    with pytest.raises(ProjectionSingular):
        drop_to_euclidean(F3, F)


def test_theta_halfspace_example():
    T = theta_halfspace(1, 2)
    Y = np.array([0.6, 0.8])
    assert np.allclose(T(jnp.asarray(np.r_[1.0, Y])), Y)
    assert float(T.factor(jnp.asarray(np.r_[2.0, Y]))) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        T(jnp.asarray(np.r_[-1.0, Y]))
    with pytest.raises(DomainError):
        theta_halfspace(2, 2)


def test_stereographic_pole_formula():
    S = stereographic_map(F3, c=4.0)
    X = np.array([0.3, 0.0, 0.0, 0.4])  # |X| = 1/2
    assert np.allclose(S(X), X[:3] / (X[3] + 0.5))


def test_stereographic_is_conformal():
    sph = ImmersionChart(lambda u: jnp.array([jnp.cos(u[0]) * jnp.cos(u[1]), jnp.cos(u[0]) * jnp.sin(u[1]),
                                              jnp.sin(u[0])]) / 2.0, [-1, 0], [1, 2], resolution=5)
    S = stereographic_map(MoebiusFrame.canonical(2), c=4.0)
    img = sph.replace(func=lambda u: S.fn(sph.func(u)), conformal_factor=lambda u: S.factor(sph.func(u)),
                      base_metric=lambda u: jnp.diag(jnp.array([1.0, jnp.cos(u[0]) ** 2])) / 4.0)
    res = conformality_check(img)
    assert res.residual < 1e-12 and res.factor_residual < 1e-12


def test_theta_map_omits_nothing_on_generic_points():
    fr = MoebiusFrame.canonical(2)
    th = theta_map(fr, 1)
    z = np.array([np.sinh(0.3), np.cosh(0.3), 0.6, 0.8])  # H^1 x S^1
    assert abs(theta_omitted_residual(fr, 1, z)) > 0.1
    y = np.asarray(th(jnp.asarray(z)))
    assert y.shape == (2,) and np.all(np.isfinite(y))


@given(arrays(float, 2, elements=st.floats(-3, 3)), st.floats(0.1, 4.0), st.floats(0.2, 3.0))
def test_halfspace_hyperboloid_roundtrip(x, xm, c):
    X = np.r_[x, xm]
    H = np.asarray(hyperboloid_from_halfspace(X, c))
    assert abs(inner(H, H) + 1.0 / c) < 1e-9 * max(1.0, H @ H)
    assert np.allclose(halfspace_from_hyperboloid(H, c), X, rtol=1e-9, atol=1e-9)


@given(st.sampled_from([2, 3, 5]), st.integers(0, 2**32 - 1))
def test_psi_distance_identity(N, seed):
    rng = np.random.default_rng(seed)
    fr = MoebiusFrame.random(rng, N)
    x, y = rng.normal(size=(2, 50, N))
    lhs = inner(psi_embed(fr, x), psi_embed(fr, y)) + 0.5 * np.sum((x - y) ** 2, axis=-1)
    scale = np.abs(fr.basis_matrix).max() ** 2
    assert np.max(np.abs(lhs)) < 1e-10 * scale * 100
    assert np.allclose(psi_invert(fr, psi_embed(fr, x)), x, atol=1e-10 * scale)


@given(st.integers(0, 2**32 - 1))
def test_similarity_lorentz_relation(seed):
    rng = np.random.default_rng(seed)
    fr = MoebiusFrame.random(rng, 3, scale=0.3)
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    ratio, b = rng.uniform(0.5, 2.0), rng.normal(size=3)
    T = lorentz_from_similarity(fr, ratio, Q, b)
    x = rng.normal(size=(20, 3))
    lhs = psi_embed(fr, ratio * x @ Q.T + b)
    rhs = ratio * psi_embed(fr, x) @ T.T
    assert np.allclose(lhs, rhs, atol=1e-8 * max(1.0, np.abs(lhs).max()))


def _invert_unit(y, center):
    d = y - center
    return center + d / np.sum(d * d, axis=-1, keepdims=True)


@given(st.integers(0, 2**32 - 1))
def test_frame_change_decomposition(seed):
    rng = np.random.default_rng(seed)
    a, b = MoebiusFrame.random(rng, 3, 0.4), MoebiusFrame.random(rng, 3, 0.4)
    fc = frame_change(a, b)
    assert fc["ratio"] == pytest.approx(-0.5 * inner(b.w, a.w))
    x = rng.normal(size=(30, 3))
    direct = np.asarray(a.drop_point(psi_embed(b, x)))
    sim = np.asarray(a.drop_point(psi_embed(a, x) @ fc["T"].T))
    # the similarity part scales every distance by the ratio
    dx = np.linalg.norm(x[1:] - x[:-1], axis=1)
    ds = np.linalg.norm(sim[1:] - sim[:-1], axis=1)
    assert np.allclose(ds, fc["ratio"] * dx, rtol=1e-8)
    assert np.allclose(direct, _invert_unit(sim, fc["center"]), rtol=1e-7, atol=1e-7)
