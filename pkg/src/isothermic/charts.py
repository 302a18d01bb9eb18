"""Sampled parametric immersions over box domains, with jet access.

A chart wraps a jax-traceable point function ``u -> x``.  Jets come either
from forward-mode autodiff (``jets="auto"``) or from a Richardson-extrapolated
central difference (``jets="fd"``), whose step is ``1e-4`` of the box extent
per axis.  Both providers compose, so Hessians are derivatives of Jacobians
in either mode.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from isothermic.errors import RankDeficiency
from isothermic.minkowski import metric_matrix

FD_RELATIVE_STEP = 1e-4
EPS_RANK = 1e-8


@dataclass(frozen=True)
class ProductNet:
    """Partition of the coordinate indices into the blocks E_1..E_k."""

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(tuple(int(i) for i in b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if len(blocks) < 2:
            raise ValueError("a product net needs at least two blocks")
        if any(len(b) == 0 for b in blocks):
            raise ValueError("empty block")
        flat = [i for b in blocks for i in b]
        if sorted(flat) != list(range(len(flat))):
            raise ValueError(f"blocks must partition 0..n-1, got {blocks}")

    @classmethod
    def from_sizes(cls, *sizes: int) -> "ProductNet":
        out, start = [], 0
        for s in sizes:
            out.append(tuple(range(start, start + s)))
            start += s
        return cls(tuple(out))

    @property
    def n(self) -> int:
        return sum(len(b) for b in self.blocks)

    def block_of(self, i: int) -> int:
        for k, b in enumerate(self.blocks):
            if i in b:
                return k
        raise IndexError(i)

    def complement(self, k: int) -> tuple[int, ...]:
        return tuple(i for j, b in enumerate(self.blocks) if j != k for i in b)

    def to_json(self):
        return [list(b) for b in self.blocks]


class Differentiator:
    """Jacobian provider: autodiff or 5-point Richardson central differences.

    ``jac(fn)`` returns a point function whose output has one extra trailing
    axis of length n (the derivative direction).
    """

    def __init__(self, method: str, steps):
        if method not in ("auto", "fd"):
            raise ValueError(f"unknown jet method {method!r}")
        self.method = method
        self.steps = np.asarray(steps, dtype=float)

    def jac(self, fn: Callable) -> Callable:
        if self.method == "auto":
            return jax.jacfwd(fn)
        steps = self.steps

        def d(u):
            cols = []
            for i, h in enumerate(steps):
                e = jnp.zeros(len(steps)).at[i].set(h)
                cols.append((-fn(u + 2 * e) + 8 * fn(u + e) - 8 * fn(u - e) + fn(u - 2 * e)) / (12 * h))
            return jnp.stack(cols, axis=-1)

        return d

    def hess(self, fn: Callable) -> Callable:
        return self.jac(self.jac(fn))


def batch(fn: Callable) -> Callable:
    """jit + vmap over a leading sample axis."""
    return jax.jit(jax.vmap(fn))


def euclidean_metric(n: int) -> Callable:
    return lambda u: jnp.eye(n)


def product_metric(*parts: tuple[int, Callable | None]) -> Callable:
    """Block-diagonal metric from ``(dim, metric_fn)`` parts; ``None`` means flat.
    Each part metric receives only its own coordinates."""
    dims = [d for d, _ in parts]
    offsets = np.cumsum([0] + dims)

    def g(u):
        out = jnp.zeros((offsets[-1], offsets[-1]))
        for (d, fn), o in zip(parts, offsets[:-1]):
            blk = jnp.eye(d) if fn is None else fn(u[o:o + d])
            out = out.at[o:o + d, o:o + d].set(blk)
        return out

    return g


def warped_metric(n1: int, n2: int, rho: Callable, g1=None, g2=None) -> Callable:
    """g1 + rho(u1)^2 g2 on the product of an n1- and an n2-dimensional factor."""

    def g(u):
        u1, u2 = u[:n1], u[n1:]
        b1 = jnp.eye(n1) if g1 is None else g1(u1)
        b2 = jnp.eye(n2) if g2 is None else g2(u2)
        out = jnp.zeros((n1 + n2, n1 + n2))
        out = out.at[:n1, :n1].set(b1)
        return out.at[n1:, n1:].set(rho(u1) ** 2 * b2)

    return g


@dataclass(frozen=True, eq=False)
class ImmersionChart:
    """A parametric immersion ``func`` sampled on ``[lower, upper]``.

    ``ambient`` is ``"euclidean"`` or ``"lorentz"``.  ``base_metric`` is the
    declared metric on the domain (``None`` means flat).  ``conformal_factor``
    optionally carries the analytic factor of ``func`` against ``base_metric``.
    """

    func: Callable
    lower: Sequence[float]
    upper: Sequence[float]
    resolution: Sequence[int] | int = 17
    ambient: str = "euclidean"
    base_metric: Callable | None = None
    net: ProductNet | None = None
    jets: str = "auto"
    conformal_factor: Callable | None = None
    name: str = "chart"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lo = tuple(float(x) for x in np.atleast_1d(self.lower))
        hi = tuple(float(x) for x in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or any(h <= l for l, h in zip(lo, hi)):
            raise ValueError(f"invalid box {lo} .. {hi}")
        res = self.resolution
        res = tuple([int(res)] * len(lo)) if np.isscalar(res) else tuple(int(r) for r in res)
        if len(res) != len(lo) or min(res) < 2:
            raise ValueError(f"invalid resolution {res}")
        if self.ambient not in ("euclidean", "lorentz"):
            raise ValueError(f"unknown ambient form {self.ambient!r}")
        if self.net is not None and self.net.n != len(lo):
            raise ValueError("net does not partition the chart coordinates")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "resolution", res)

    # -- shape ---------------------------------------------------------------

    @property
    def dim(self) -> int:
        return len(self.lower)

    @cached_property
    def center(self) -> np.ndarray:
        return 0.5 * (np.array(self.lower) + np.array(self.upper))

    @cached_property
    def ambient_dim(self) -> int:
        return int(np.asarray(self.func(jnp.asarray(self.center))).shape[-1])

    @cached_property
    def G(self) -> np.ndarray:
        if self.ambient == "lorentz":
            return metric_matrix(self.ambient_dim)
        return np.eye(self.ambient_dim)

    @property
    def extent(self) -> np.ndarray:
        return np.array(self.upper) - np.array(self.lower)

    @property
    def fd_steps(self) -> np.ndarray:
        return FD_RELATIVE_STEP * self.extent

    def differentiator(self, method: str | None = None) -> Differentiator:
        return Differentiator(method or self.jets, self.fd_steps)

    def metric_fn(self) -> Callable:
        return self.base_metric if self.base_metric is not None else euclidean_metric(self.dim)

    # -- sampling ------------------------------------------------------------

    def axes(self, resolution=None) -> list[np.ndarray]:
        res = self.resolution if resolution is None else (
            tuple([int(resolution)] * self.dim) if np.isscalar(resolution) else tuple(resolution))
        return [np.linspace(l, h, r) for l, h, r in zip(self.lower, self.upper, res)]

    def grid(self, resolution=None) -> np.ndarray:
        """Sample points, row-major (last axis fastest), shape (M, n)."""
        mesh = np.meshgrid(*self.axes(resolution), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def grid_shape(self, resolution=None) -> tuple[int, ...]:
        return tuple(len(a) for a in self.axes(resolution))

    def interior_grid(self, resolution=None, margin: float = 0.0) -> np.ndarray:
        if margin == 0.0:
            return self.grid(resolution)
        lo = np.array(self.lower) + margin * self.extent
        hi = np.array(self.upper) - margin * self.extent
        return self.replace(lower=lo, upper=hi).grid(resolution)

    @cached_property
    def _batched(self) -> Callable:
        return batch(self.func)

    def evaluate(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self._batched(jnp.asarray(pts)))

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            return self.evaluate(u[None])[0]
        return self.evaluate(u)

    @cached_property
    def _jac_batched(self) -> Callable:
        return batch(self.differentiator().jac(self.func))

    def jacobian(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self._jac_batched(jnp.asarray(pts)))

    def replace(self, **changes) -> "ImmersionChart":
        return dataclasses.replace(self, **changes)

    def check_rank(self, points=None, eps: float = EPS_RANK) -> None:
        """Raise RankDeficiency where the differential drops rank."""
        pts = self.grid() if points is None else np.atleast_2d(points)
        Js = self.jacobian(pts)
        sv = np.linalg.svd(Js, compute_uv=False)[:, -1]
        scale = np.max(np.linalg.svd(Js, compute_uv=False)[:, 0])
        bad = np.flatnonzero(sv <= eps * max(1.0, scale))
        if bad.size:
            raise RankDeficiency(f"differential drops rank at {pts[bad[0]]}")

