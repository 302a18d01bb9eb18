"""Lorentzian linear algebra on L^{N+2} with signature (+, ..., +, -).

The timelike coordinate is always the last one.  Vectors are plain arrays
(numpy or jax); the functions broadcast over leading axes so the same code
serves single vectors, sample grids and traced jax closures.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from isothermic.errors import FrameError, NonDegeneracyFailure

EPS_LIGHT = 1e-10


class CausalType(enum.Enum):
    SPACELIKE = "spacelike"
    LIGHTLIKE = "lightlike"
    TIMELIKE = "timelike"


def _arr(x):
    return x if hasattr(x, "shape") else np.asarray(x, dtype=float)


def signature(dim: int) -> np.ndarray:
    s = np.ones(dim)
    s[-1] = -1.0
    return s


def metric_matrix(dim: int) -> np.ndarray:
    return np.diag(signature(dim))


def inner(u, v):
    """Lorentz inner product sum_{i<last} u_i v_i - u_last v_last."""
    u, v = _arr(u), _arr(v)
    if u.shape[-1] != v.shape[-1]:
        raise ValueError(f"dimension mismatch: {u.shape[-1]} vs {v.shape[-1]}")
    return (u[..., :-1] * v[..., :-1]).sum(-1) - u[..., -1] * v[..., -1]


def norm2(v):
    return inner(v, v)


def light_tolerance(v, eps: float = EPS_LIGHT) -> float:
    v = np.asarray(v, dtype=float)
    return eps * max(1.0, float(v @ v))


def causal_type(v, eps: float = EPS_LIGHT) -> CausalType:
    """Classify ``v``; the null band is relative to its Euclidean size."""
    q = float(norm2(np.asarray(v, dtype=float)))
    tol = light_tolerance(v, eps)
    if q > tol:
        return CausalType.SPACELIKE
    if q < -tol:
        return CausalType.TIMELIKE
    return CausalType.LIGHTLIKE


def gram(vectors) -> np.ndarray:
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    return V @ np.diag(signature(V.shape[-1])) @ V.T


def reflect(v, p, tol: float = 1e-10):
    """Reflection R(p) = p - 2<p, v> v in the hyperplane orthogonal to the unit
    spacelike vector ``v``."""
    v = _arr(v)
    q = float(norm2(np.asarray(v, dtype=float)))
    if abs(q - 1.0) > tol * max(1.0, float(np.asarray(v) @ np.asarray(v))):
        raise FrameError(f"reflection vector must be unit spacelike, <v,v> = {q}")
    p = _arr(p)
    return p - 2.0 * inner(p, v)[..., None] * v


def reflection_matrix(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    reflect(v, v)  # validates
    return np.eye(v.size) - 2.0 * np.outer(v, v) @ metric_matrix(v.size)


@dataclass(frozen=True)
class LorentzForm:
    """The form of L^{ambient_dim}; ambient_dim = N + 2 >= 4."""

    ambient_dim: int

    def __post_init__(self):
        if self.ambient_dim < 4:
            raise ValueError("ambient_dim must be at least 4 (N >= 2)")

    @property
    def matrix(self) -> np.ndarray:
        return metric_matrix(self.ambient_dim)

    def basis(self, i: int) -> np.ndarray:
        e = np.zeros(self.ambient_dim)
        e[i] = 1.0
        return e

    def inner(self, u, v):
        if _arr(u).shape[-1] != self.ambient_dim:
            raise ValueError("vector does not live in this space")
        return inner(u, v)

    def causal_type(self, v, eps: float = EPS_LIGHT) -> CausalType:
        return causal_type(v, eps)


def is_lorentz_transform(T, tol: float = 1e-10) -> bool:
    T = np.asarray(T, dtype=float)
    J = metric_matrix(T.shape[0])
    return bool(np.max(np.abs(T.T @ J @ T - J)) <= tol * max(1.0, np.max(np.abs(T)) ** 2))


def random_lorentz_transform(dim: int, rng: np.random.Generator, scale: float = 0.5) -> np.ndarray:
    """A random element of the identity component of O_1(dim) (time orientation
    preserved), obtained as expm of a random Lie algebra element J K."""
    K = rng.normal(scale=scale, size=(dim, dim))
    K = K - K.T
    return scipy.linalg.expm(metric_matrix(dim) @ K)


def _project_out(v, frame, signs):
    for e, s in zip(frame, signs):
        v = v - s * inner(v, e) * e
    return v


def _orthonormalize(candidates, target=None, eps=EPS_LIGHT, skip_dependent=False):
    """Pivoted Lorentz Gram-Schmidt.

    At every step the remaining candidates are projected off the frame built
    so far (twice).  The most spacelike candidate is taken first; a timelike
    one only when no spacelike candidate is left.  When every candidate is
    null, a pair with nonzero mutual product is combined into a spacelike
    vector; if no such pair exists the span is degenerate.
    """
    remaining = [np.asarray(c, dtype=float) for c in candidates]
    scales = [max(1.0, float(c @ c)) for c in remaining]
    frame, signs = [], []
    while remaining and (target is None or len(frame) < target):
        proj = [_project_out(_project_out(c, frame, signs), frame, signs) for c in remaining]
        keep = []
        for p, s in zip(proj, scales):
            if float(p @ p) <= 1e-20 * s:
                if not skip_dependent:
                    raise ValueError("input vectors are linearly dependent")
                continue
            keep.append((p, s))
        if not keep:
            break
        proj = [p for p, _ in keep]
        scales = [s for _, s in keep]
        qs = np.array([float(norm2(p)) for p in proj])
        tols = np.array([eps * max(1.0, float(p @ p)) for p in proj])
        spacelike = np.flatnonzero(qs > tols)
        timelike = np.flatnonzero(qs < -tols)
        if spacelike.size:
            i = spacelike[np.argmax(qs[spacelike])]
        elif timelike.size:
            if any(s < 0 for s in signs):
                raise NonDegeneracyFailure("more than one timelike direction")
            i = timelike[np.argmin(qs[timelike])]
        else:
            pair = None
            for a in range(len(proj)):
                for b in range(a + 1, len(proj)):
                    m = float(inner(proj[a], proj[b]))
                    if abs(m) > eps * max(1.0, np.sqrt(float(proj[a] @ proj[a]) * float(proj[b] @ proj[b]))):
                        pair = (a, b, m)
                        break
                if pair:
                    break
            if pair is None:
                raise NonDegeneracyFailure("span contains a null direction in its radical")
            a, b, m = pair
            proj[a] = proj[a] + np.sign(m) * proj[b]
            remaining = proj
            continue
        p, q = proj[i], qs[i]
        frame.append(p / np.sqrt(abs(q)))
        signs.append(1.0 if q > 0 else -1.0)
        remaining = proj[:i] + proj[i + 1:]
        scales = scales[:i] + scales[i + 1:]
    return np.array(frame).reshape(len(frame), -1), np.array(signs)


def lorentz_gram_schmidt(vectors, eps: float = EPS_LIGHT):
    """Orthonormalize ``vectors`` (rows).  Returns ``(frame, signs)`` with
    ``signs[i] = <frame[i], frame[i]> = +-1``; the span is preserved."""
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    return _orthonormalize(list(V), eps=eps)


def orthogonal_complement(frame, eps: float = EPS_LIGHT):
    """Orthonormal basis of the orthogonal complement of an orthonormal set."""
    F = np.asarray(frame, dtype=float)
    if F.size == 0:
        raise ValueError("empty frame: pass the ambient dimension via an explicit basis")
    F = np.atleast_2d(F)
    k, dim = F.shape
    G = gram(F)
    s = np.diag(G)
    if np.max(np.abs(G - np.diag(s))) > 1e-9 or np.max(np.abs(np.abs(s) - 1.0)) > 1e-9:
        raise FrameError("input frame is not orthonormal")
    if k == dim:
        return np.zeros((0, dim)), np.zeros(0)
    cands = [_project_out(e, F, s) for e in np.eye(dim)]
    out, signs = _orthonormalize(cands, target=dim - k, eps=eps, skip_dependent=True)
    if len(out) != dim - k:
        raise NonDegeneracyFailure("orthogonal complement is degenerate")
    return out, signs

