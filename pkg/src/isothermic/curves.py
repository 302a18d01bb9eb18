"""Curve presets and Frenet frames.

Curves are scalar-parameter jax functions ``t -> R^N1``.  Frenet frames come
from Gram-Schmidt on the first N1 derivatives (nested forward-mode jets),
so every curvature k_j = <e_j', e_{j+1}> / |alpha'| is positive where the
curve is nondegenerate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from isothermic.errors import FrenetDegeneracy

FRENET_EPS = 1e-8


def circle(radius: float = 1.0, center=(0.0, 0.0)) -> Callable:
    """Unit-speed circle in the plane."""
    c = jnp.asarray(center, dtype=float)
    return lambda t: c + radius * jnp.array([jnp.cos(t / radius), jnp.sin(t / radius)])


def helix(a: float = 1.0, b: float = 1.0) -> Callable:
    """Unit-speed helix (a cos s, a sin s, b s), s = t / sqrt(a^2 + b^2)."""
    c = float(np.hypot(a, b))
    return lambda t: jnp.array([a * jnp.cos(t / c), a * jnp.sin(t / c), b * t / c])


def line(point, direction) -> Callable:
    p, d = jnp.asarray(point, dtype=float), jnp.asarray(direction, dtype=float)
    return lambda t: p + t * d


def helix_curvatures(a: float, b: float) -> tuple[float, float]:
    c2 = a * a + b * b
    return a / c2, b / c2


def derivatives(curve: Callable, order: int) -> list[Callable]:
    """[curve, curve', ..., curve^(order)] as jax functions of scalar t."""
    out = [curve]
    for _ in range(order):
        out.append(jax.jacfwd(out[-1]))
    return out


def _frame_point(curve: Callable, N1: int):
    ders = derivatives(curve, N1)[1:]

    def frame(t):
        vecs = [d(t) for d in ders]
        es, residuals = [], []
        for v in vecs:
            for e in es:
                v = v - (v @ e) * e
            for e in es:
                v = v - (v @ e) * e
            r = jnp.linalg.norm(v)
            residuals.append(r)
            es.append(v / r)
        return jnp.stack(es), jnp.stack(residuals)

    return frame


@dataclass(frozen=True, eq=False)
class FrenetData:
    curve: Callable
    t: np.ndarray
    alpha: np.ndarray  # (M, N1)
    frame: np.ndarray  # (M, N1, N1), rows e_1..e_N1
    curvatures: np.ndarray  # (M, N1 - 1)
    speed: np.ndarray

    @property
    def N1(self) -> int:
        return self.alpha.shape[-1]

    def frame_fn(self) -> Callable:
        return lambda t: _frame_point(self.curve, self.N1)(t)[0]

    def curvature_fn(self) -> Callable:
        return _curvature_point(self.curve, self.N1)

    def frenet_residual(self) -> float:
        """max |e_j' - |alpha'| (-k_{j-1} e_{j-1} + k_j e_{j+1})| over samples."""
        E, k, v = self.frame_fn(), self.curvature_fn(), jax.jacfwd(self.curve)
        dE = jax.jacfwd(E)
        N1 = self.N1

        def res(t):
            e, de, kk, sp = E(t), dE(t), k(t), jnp.linalg.norm(v(t))
            out = []
            for j in range(N1):
                pred = jnp.zeros(N1)
                if j > 0:
                    pred = pred - kk[j - 1] * e[j - 1]
                if j < N1 - 1:
                    pred = pred + kk[j] * e[j + 1]
                out.append(jnp.max(jnp.abs(de[j] - sp * pred)))
            return jnp.max(jnp.stack(out))

        return float(np.max(np.asarray(jax.vmap(res)(jnp.asarray(self.t)))))


def _curvature_point(curve: Callable, N1: int) -> Callable:
    frame = _frame_point(curve, N1)
    dframe = jax.jacfwd(lambda t: frame(t)[0])
    v = jax.jacfwd(curve)

    def k(t):
        e, de = frame(t)[0], dframe(t)
        sp = jnp.linalg.norm(v(t))
        return jnp.stack([de[j] @ e[j + 1] / sp for j in range(N1 - 1)])

    return k


def frenet_frame(curve: Callable, t, N1: int | None = None, eps: float = FRENET_EPS) -> FrenetData:
    """Frenet frame and curvatures of ``curve`` sampled at ``t``.

    Raises FrenetDegeneracy where the first N1 derivatives lose rank.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    alpha = np.asarray(jax.vmap(curve)(jnp.asarray(t)))
    N1 = alpha.shape[-1] if N1 is None else N1
    if N1 < 2:
        raise ValueError("Frenet frames need N1 >= 2")
    frame = _frame_point(curve, N1)
    E, R = (np.asarray(a) for a in jax.vmap(frame)(jnp.asarray(t)))
    ders = np.asarray(jax.vmap(lambda s: jnp.stack([d(s) for d in derivatives(curve, N1)[1:]]))(jnp.asarray(t)))
    scale = np.maximum(1.0, np.linalg.norm(ders, axis=-1))
    bad = np.argwhere(~(R > eps * scale))
    if bad.size:
        m, j = bad[0]
        raise FrenetDegeneracy(f"derivative {j + 1} is dependent at t = {t[m]}")
    k = np.asarray(jax.vmap(_curvature_point(curve, N1))(jnp.asarray(t)))
    speed = np.linalg.norm(ders[:, 0], axis=-1)
    return FrenetData(curve, t, alpha, E, k, speed)
