"""Fixed-step RK4 with step halving, and differentiable trajectories.

The integrator refines a user time grid by an integer number of substeps,
doubling it until a monitored first integral (or, without a monitor, the
change between successive refinements) drifts by less than the tolerance.
The resulting trajectory is a cubic Hermite interpolant on the fine grid
whose jax derivative is defined to be rhs(t, y(t)), so derivatives of
composed quantities follow the ODE exactly rather than the spline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from isothermic.errors import IntegratorAccuracy

DEFAULT_TOL = 1e-7


def _rk4_scan(rhs: Callable, y0, ts):
    def step(y, tt):
        t0, t1 = tt
        h = t1 - t0
        k1 = rhs(t0, y)
        k2 = rhs(t0 + h / 2, y + h / 2 * k1)
        k3 = rhs(t0 + h / 2, y + h / 2 * k2)
        k4 = rhs(t1, y + h * k3)
        y1 = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return y1, y1

    _, ys = jax.lax.scan(step, y0, (ts[:-1], ts[1:]))
    return jnp.concatenate([y0[None], ys], axis=0)


_rk4_jit = jax.jit(_rk4_scan, static_argnums=0)


def rk4(rhs: Callable, y0, ts) -> np.ndarray:
    """Classical RK4 on the given grid; returns the states at every node."""
    return np.asarray(_rk4_jit(rhs, jnp.asarray(y0, dtype=float), jnp.asarray(ts, dtype=float)))


def _refine(t_grid: np.ndarray, sub: int) -> np.ndarray:
    pieces = [np.linspace(a, b, sub + 1)[:-1] for a, b in zip(t_grid[:-1], t_grid[1:])]
    return np.concatenate(pieces + [t_grid[-1:]])


def hermite_interpolant(ts, ys, dys) -> Callable:
    """Piecewise cubic Hermite interpolant through (ts, ys) with slopes dys."""
    ts, ys, dys = jnp.asarray(ts), jnp.asarray(ys), jnp.asarray(dys)

    def y_of(t):
        i = jnp.clip(jnp.searchsorted(ts, t) - 1, 0, ts.shape[0] - 2)
        t0, t1 = ts[i], ts[i + 1]
        h = t1 - t0
        s = (t - t0) / h
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * ys[i] + h10 * h * dys[i] + h01 * ys[i + 1] + h11 * h * dys[i + 1]

    return y_of


@dataclass(frozen=True, eq=False)
class Trajectory:
    rhs: Callable
    t: np.ndarray  # user grid
    y: np.ndarray  # states on the user grid
    fine_t: np.ndarray
    fine_y: np.ndarray
    substeps: int
    drift: float

    def __post_init__(self):
        object.__setattr__(self, "_fine_dy", np.asarray(jax.vmap(self.rhs)(jnp.asarray(self.fine_t),
                                                                             jnp.asarray(self.fine_y))))

    def __call__(self, t):
        return self.evaluator()(t)

    def evaluator(self) -> Callable:
        """Scalar-time jax function t -> y(t)."""
        rhs = self.rhs
        spline = hermite_interpolant(self.fine_t, self.fine_y, self._fine_dy)

        @jax.custom_jvp
        def y_of(t):
            return spline(t)

        @y_of.defjvp
        def y_jvp(primals, tangents):
            (t,), (dt,) = primals, tangents
            y = y_of(t)
            return y, rhs(t, y) * dt

        return y_of


def integrate_linear_ode(rhs: Callable, initial, t_grid, monitor: Callable | None = None,
                         tol: float = DEFAULT_TOL, max_halvings: int = 14,
                         initial_substeps: int = 1) -> Trajectory:
    """Integrate y' = rhs(t, y) over ``t_grid``.

    The step is halved until successive refinements agree to ``tol``
    (relative to max(1, |y|)) and, with a ``monitor`` (a first integral
    y -> scalar), until max |monitor(y) - monitor(y0)| <= tol.  Raises
    IntegratorAccuracy when ``max_halvings`` is exhausted.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 2 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing with at least two nodes")
    y0 = np.asarray(initial, dtype=float)
    sub = int(initial_substeps)
    prev = None
    mon = None if monitor is None else jax.jit(jax.vmap(monitor))
    for _ in range(max_halvings + 1):
        fine_t = _refine(t_grid, sub)
        fine_y = rk4(rhs, y0, fine_t)
        coarse = fine_y[::sub]
        if not np.all(np.isfinite(fine_y)):
            raise IntegratorAccuracy("integration diverged")
        change = float("inf") if prev is None else float(
            np.max(np.abs(coarse - prev)) / max(1.0, float(np.max(np.abs(coarse)))))
        if mon is not None:
            vals = np.asarray(mon(jnp.asarray(fine_y)))
            drift = float(np.max(np.abs(vals - vals[0])))
            ok = drift <= tol and change <= tol
        else:
            drift = change
            ok = drift <= tol
        if ok:
            return Trajectory(rhs, t_grid, coarse, fine_t, fine_y, sub, drift)
        prev = coarse
        sub *= 2
    raise IntegratorAccuracy(f"step floor reached with drift {drift:.3e} > {tol:.1e}")


def linear_rhs(matrix_fn: Callable) -> Callable:
    """rhs(t, y) = M(t) y."""
    return lambda t, y: matrix_fn(t) @ y
