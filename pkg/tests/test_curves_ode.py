import jax
import jax.numpy as jnp
import numpy as np
import pytest

from isothermic.curves import circle, frenet_frame, helix, helix_curvatures, line
from isothermic.errors import FrenetDegeneracy, IntegratorAccuracy
from isothermic.ode import hermite_interpolant, integrate_linear_ode, linear_rhs, rk4


def test_circle_curvature():
    fd = frenet_frame(circle(2.0), np.linspace(0, 3, 7))
    assert np.allclose(fd.curvatures, 0.5)
    assert np.allclose(fd.speed, 1.0)
    assert fd.frenet_residual() < 1e-12


def test_helix_curvature_and_torsion():
    a, b = 1.0, 0.7
    fd = frenet_frame(helix(a, b), np.linspace(0, 2, 5))
    k, tau = helix_curvatures(a, b)
    assert np.allclose(fd.curvatures, [k, tau])
    assert np.allclose(np.einsum("mij,mkj->mik", fd.frame, fd.frame), np.eye(3))
    assert fd.frenet_residual() < 1e-12


def test_non_unit_speed_curvature():
    # ellipse (2 cos t, sin t): k(0) = a / b^2 = 2
    fd = frenet_frame(lambda t: jnp.array([2 * jnp.cos(t), jnp.sin(t)]), [0.0])
    assert fd.curvatures[0, 0] == pytest.approx(2.0)


def test_straight_line_is_degenerate():
    with pytest.raises(FrenetDegeneracy):
        frenet_frame(line([0.0, 0.0], [1.0, 1.0]), [0.0, 1.0])


def test_rk4_exponential():
    ts = np.linspace(0, 1, 101)
    ys = rk4(lambda t, y: y, [1.0], ts)
    assert np.allclose(ys[:, 0], np.exp(ts), rtol=1e-9)


def test_rotation_first_integral():
    M = jnp.array([[0.0, 1.0], [-1.0, 0.0]])
    traj = integrate_linear_ode(linear_rhs(lambda t: M), [1.0, 0.0], np.linspace(0, 6, 13),
                                monitor=lambda y: y @ y, tol=1e-11)
    assert traj.drift <= 1e-11
    assert np.allclose(traj.y[:, 0], np.cos(traj.t), atol=1e-9)
    # derivative of the interpolant is the vector field exactly
    y = traj.evaluator()
    dy = np.asarray(jax.jacfwd(y)(1.234))
    assert np.allclose(dy, M @ np.asarray(y(1.234)), atol=1e-15)


def test_integrator_gives_up():
    with pytest.raises(IntegratorAccuracy):
        integrate_linear_ode(lambda t, y: 50 * y, [1.0], [0.0, 1.0], tol=1e-14, max_halvings=2)


def test_integrator_rejects_bad_grid():
    with pytest.raises(ValueError):
        integrate_linear_ode(lambda t, y: y, [1.0], [1.0, 0.0])


def test_hermite_reproduces_cubics():
    ts = np.linspace(0, 2, 5)
    f = lambda t: t**3 - 2 * t
    df = lambda t: 3 * t**2 - 2
    h = hermite_interpolant(ts, f(ts)[:, None], df(ts)[:, None])
    for t in (0.1, 0.77, 1.9):
        assert float(h(t)[0]) == pytest.approx(f(t), abs=1e-13)
