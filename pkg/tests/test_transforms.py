import jax.numpy as jnp
import numpy as np
import pytest

from isothermic.constructions import (
    DarbouxODEState,
    christoffel_product,
    christoffel_warped,
    curve_chart,
    darboux_curve_factor,
    darboux_sphere_factor,
    darboux_warped,
    perturb_beta,
    reflected_sphere_factor,
    trivial_data,
)
from isothermic.curves import circle
from isothermic.errors import CompatibilityError, DomainError, NullCongruence
from isothermic.geometry import sample_geometry
from isothermic.transforms import (
    CombescureData,
    check_christoffel,
    check_darboux,
    codazzi_tensor,
    gnorm_residual,
    ribaucour_transform,
    verify_combescure,
    verify_ribaucour_relations,
)

RES = 5


def line_chart(res=RES):
    return curve_chart(lambda t: jnp.array([t]), -1.0, 1.0, res, name="line")


@pytest.fixture(scope="module")
def sphere_factor():
    g2 = curve_chart(circle(2.0, (1.0, 0.5)), 0.0, 5.0, RES, name="circle")
    return darboux_sphere_factor(line_chart(), g2, [1.0, 0.5], 2.0)


def test_sphere_factor_tensor(sphere_factor):
    assert gnorm_residual(sphere_factor) < 1e-12
    cf = codazzi_tensor(sphere_factor)
    assert np.allclose(cf.S, np.diag([0.0, 1.0]), atol=1e-12)
    assert max(cf.symmetry, cf.commuting, cf.codazzi) < 1e-10
    clusters, ambiguous = cf.clusters()
    assert all(len(c) == 2 for c in clusters) and not ambiguous.any()


def test_sphere_factor_ribaucour(sphere_factor):
    ft, rd = ribaucour_transform(sphere_factor)
    ref = reflected_sphere_factor(sphere_factor)
    pts = sphere_factor.host.grid()
    expected = np.array([np.asarray(ref(jnp.asarray(p))) for p in pts])
    assert np.max(np.abs(ft.evaluate(pts) - expected)) < 1e-12
    rep = verify_ribaucour_relations(sphere_factor, ft, rd)
    assert max(rep.metric, rep.connection, rep.second_form) < 1e-10
    assert rep.reflection < 1e-10 and rep.commuting < 1e-10
    v = check_darboux(sphere_factor, rd)
    assert v.verdict == "darboux" and v.residual < 1e-10
    assert check_christoffel(sphere_factor).verdict == "neither"


def test_christoffel_product():
    c1 = curve_chart(circle(1.0), 0.0, 5.0, RES, name="circle")
    ch, data = christoffel_product(c1, line_chart(), a=1.0)
    v = check_christoffel(data)
    assert v.verdict == "christoffel"
    assert verify_combescure(data).differential < 1e-7
    assert np.allclose(sample_geometry(ch).g, sample_geometry(data.host).g)
    with pytest.raises(DomainError):
        christoffel_product(c1, line_chart(), a=0.0)


def test_christoffel_warped_exponential_profile():
    g = curve_chart(circle(1.0), 0.0, 5.0, RES)
    ch, data = christoffel_warped(lambda t: jnp.array([0.0, jnp.exp(t)]), 0.0, 1.0, g, a=1.0, resolution=RES)
    v = check_christoffel(data)
    assert v.verdict == "christoffel"
    gt = data.meta["gamma_tilde"]
    for t in np.linspace(0, 1, 5):
        assert np.allclose(np.asarray(gt(t)), [0.0, -np.exp(-t)], atol=1e-9)
    # S = rho^{-2} diag(1, -1) at rho = e^t
    cf = codazzi_tensor(data)
    u = cf.points[:, 0]
    assert np.allclose(cf.S[:, 0, 0], np.exp(-2 * u)) and np.allclose(cf.S[:, 1, 1], -np.exp(-2 * u))


@pytest.fixture(scope="module")
def curve_factor():
    st = DarbouxODEState(np.sqrt(2), 0.0, (np.sqrt(2),))
    return darboux_curve_factor(circle(1.0), 0.0, 1.5, line_chart(7), st, resolution=7)


def test_curve_factor_closed_form(curve_factor):
    tr = curve_factor.meta["trajectory"]
    t = tr.t
    assert np.allclose(tr.y[:, 0], np.sqrt(2) * (1 + t**2), atol=1e-9)
    assert np.allclose(tr.y[:, 1], 2 * np.sqrt(2) * t, atol=1e-9)
    assert np.allclose(tr.y[:, 2], np.sqrt(2) * (1 - t**2), atol=1e-9)
    assert curve_factor.meta["K_drift"] <= 1e-9
    assert curve_factor.meta["gamma_residual"] < 1e-7


def test_curve_factor_darboux(curve_factor):
    ft, rd = ribaucour_transform(curve_factor)
    v = check_darboux(curve_factor, rd)
    assert v.verdict == "darboux" and v.residual < 1e-7


def test_ode_state_projection():
    st = DarbouxODEState(2.0, 0.5, (1.0, 1.0))
    assert abs(st.K) > 0.1
    assert abs(st.project().K) < 1e-12


def test_darboux_warped():
    g1 = curve_chart(lambda t: jnp.array([t, 1.5 + 0.5 * jnp.sin(t)]), 0.0, 2.0, RES, name="profile")
    d = darboux_warped(g1, curve_chart(circle(1.0), 0.0, 5.0, RES))
    ft, rd = ribaucour_transform(d)
    assert check_darboux(d, rd).verdict == "darboux"


def test_trivial_data_verdicts(sphere_factor):
    host = sphere_factor.host
    for a in (0.0, 3.0):
        td = trivial_data(host, a, b=[0.3, 0.0, 0.0], const=1.0)
        assert check_christoffel(td).verdict == "trivial"
    zero = trivial_data(host, 0.0)
    with pytest.raises(NullCongruence):
        ribaucour_transform(zero)


def test_perturbed_beta_is_incompatible(sphere_factor):
    bad = perturb_beta(sphere_factor, 1e-2)
    assert gnorm_residual(bad) > 1e-4
    assert check_christoffel(bad).verdict == "neither"
    with pytest.raises(CompatibilityError):
        codazzi_tensor(bad)


def test_transform_field_route_matches_beta(sphere_factor):
    # rebuilding the data from F alone recovers the same normal field
    F = sphere_factor.transform_field
    again = CombescureData.from_transform_field(sphere_factor.host, sphere_factor.phi, F)
    assert gnorm_residual(again) < 1e-10
