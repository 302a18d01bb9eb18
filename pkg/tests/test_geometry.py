import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isothermic.charts import ImmersionChart, ProductNet
from isothermic.errors import ClusterAmbiguity, RankDeficiency
from isothermic.geometry import (
    adaptedness_check,
    christoffel,
    cluster_eigenvalues,
    conformality_check,
    first_fundamental_form,
    metric_chart,
    net_geometry_report,
    principal_curvature_fields,
    sample_geometry,
    second_fundamental_form,
    verify_alpha_F_split,
)
from isothermic.lightcone import MoebiusFrame


def _sphere(u):
    return jnp.array([jnp.cos(u[0]) * jnp.cos(u[1]), jnp.cos(u[0]) * jnp.sin(u[1]), jnp.sin(u[0])])


def _cylinder(u):
    return jnp.array([jnp.cos(u[0]), jnp.sin(u[0]), u[1]])


SPHERE = ImmersionChart(_sphere, [-1, 0], [1, 2], resolution=5)
CYLINDER = ImmersionChart(_cylinder, [0, 0], [2, 1], resolution=5, net=ProductNet.from_sizes(1, 1))


def test_cylinder_metric_is_identity():
    assert np.allclose(first_fundamental_form(CYLINDER, [0.4, 0.2]), np.eye(2))


def test_homothety_metric():
    f = ImmersionChart(lambda u: 2.0 * u, [0, 0], [1, 1], resolution=3)
    assert np.allclose(first_fundamental_form(f, [0.3, 0.3]), 4 * np.eye(2))


def test_degenerate_chart_raises():
    f = ImmersionChart(lambda u: jnp.array([u[0], u[0], 0.0]), [0, 0], [1, 1], resolution=3)
    with pytest.raises(RankDeficiency):
        first_fundamental_form(f, [0.3, 0.3])


def test_sphere_second_form_is_minus_metric_times_position():
    u = np.array([0.3, 0.5])
    sf = second_fundamental_form(SPHERE, u)
    x = np.asarray(SPHERE(u))
    g = first_fundamental_form(SPHERE, u)
    assert np.max(np.abs(sf.ambient + g[None] * x[:, None, None])) < 1e-12


def test_autodiff_and_fd_agree():
    a = sample_geometry(SPHERE, method="auto")
    b = sample_geometry(SPHERE, method="fd")
    assert np.max(np.abs(a.g - b.g)) < 1e-9
    assert np.max(np.abs(a.alpha - b.alpha)) < 1e-6


def test_christoffel_closed_form_warped():
    # du^2 + e^{2u} dv^2: Gamma^u_vv = -e^{2u}, Gamma^v_uv = 1
    u = 0.7
    g = jnp.diag(jnp.array([1.0, np.exp(2 * u)]))
    dg = np.zeros((2, 2, 2))
    dg[1, 1, 0] = 2 * np.exp(2 * u)
    G = np.asarray(christoffel(g, jnp.asarray(dg)))
    expected = np.zeros((2, 2, 2))
    expected[0, 1, 1] = -np.exp(2 * u)
    expected[1, 0, 1] = expected[1, 1, 0] = 1.0
    assert np.allclose(G, expected)


def test_principal_curvatures():
    pc = principal_curvature_fields(SPHERE)
    assert pc.multiplicities == (2,)
    pc = principal_curvature_fields(CYLINDER)
    assert pc.multiplicities == (1, 1)
    assert np.allclose(np.sort(np.abs(pc.values), axis=1), [0.0, 1.0], atol=1e-10)
    assert pc.dupin_residual < 1e-8


def test_cluster_eigenvalues():
    assert cluster_eigenvalues(np.array([1.0, 1.0, 2.0]))[0] == [[0, 1], [2]]
    assert cluster_eigenvalues(np.array([0.0, 0.0]))[0] == [[0, 1]]
    clusters, ambiguous = cluster_eigenvalues(np.array([1.0, 1.0 + 1e-4]))
    assert ambiguous


def test_ambiguous_clusters_raise():
    f = ImmersionChart(lambda u: jnp.array([u[0], u[1], 0.5 * u[0] ** 2 + 0.5 * (1 + 1e-4) * u[1] ** 2]),
                       [-1e-3, -1e-3], [1e-3, 1e-3], resolution=3)
    with pytest.raises(ClusterAmbiguity):
        principal_curvature_fields(f, dupin=False).multiplicities


def test_conformality_of_homothety():
    f = ImmersionChart(lambda u: 3.0 * u, [0, 0, 0], [1, 1, 1], resolution=3)
    res = conformality_check(f)
    assert res.residual < 1e-12
    assert np.allclose(res.phi, 3.0)


def test_cylinder_adapted_and_conformal():
    assert adaptedness_check(CYLINDER) < 1e-12
    assert conformality_check(CYLINDER).residual < 1e-12


def test_sphere_not_adapted_in_coordinate_net():
    # the sphere is umbilic so alpha is g times the normal; the off-diagonal
    # term vanishes in orthogonal coordinates, so take skewed coordinates
    skew = SPHERE.replace(func=lambda u: _sphere(jnp.array([u[0], u[1] + u[0]])), net=ProductNet.from_sizes(1, 1))
    assert adaptedness_check(skew) > 1e-2


def test_warped_twist_residual():
    wm = metric_chart(lambda u: jnp.diag(jnp.array([1.0, jnp.exp(2 * u[0])])), [0, 0], [1, 1],
                      ProductNet.from_sizes(1, 1))
    r = net_geometry_report(wm, twist=lambda u: jnp.array([1.0, jnp.exp(u[0])]))
    assert r.twist_residual < 1e-8
    assert r.wp_residual < 1e-8


def test_conformally_scaled_product_is_cp():
    cm = metric_chart(lambda u: jnp.exp(2 * (u[0] * u[1] + u[2] ** 2)) * jnp.eye(3), [0, 0, 0], [1, 1, 1],
                      ProductNet(((0,), (1, 2))), resolution=3)
    assert net_geometry_report(cm).passes_cp(1e-7)


def test_non_cp_metric_fails():
    # du^2 + e^{2uv} dv^2: the ratio of the coefficients does not separate
    cm = metric_chart(lambda u: jnp.diag(jnp.array([1.0, jnp.exp(2 * u[0] * u[1])])), [0, 0], [1, 1],
                      ProductNet.from_sizes(1, 1), resolution=3)
    assert not net_geometry_report(cm).passes_cp(1e-7)


def test_alpha_split_unit_factor():
    res = verify_alpha_F_split(MoebiusFrame.canonical(3), SPHERE, 1.0)
    assert res.residual < 1e-6
    assert res.plane_gram_det < 0  # span{F, eta} is Lorentzian
    assert res.normality < 1e-6


@settings(max_examples=8)
@given(st.floats(0.3, 5.0))
def test_conformal_factor_scales(s):
    f = ImmersionChart(lambda u: s * _sphere(u), [-1, 0], [1, 2], resolution=3,
                       base_metric=lambda u: jnp.diag(jnp.array([1.0, jnp.cos(u[0]) ** 2])))
    res = conformality_check(f)
    assert res.residual < 1e-10
    assert np.allclose(res.phi, s, rtol=1e-10)
