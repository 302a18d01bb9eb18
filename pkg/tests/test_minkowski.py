import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from isothermic.errors import FrameError, NonDegeneracyFailure
from isothermic.minkowski import (
    CausalType,
    LorentzForm,
    causal_type,
    gram,
    inner,
    is_lorentz_transform,
    lorentz_gram_schmidt,
    norm2,
    orthogonal_complement,
    random_lorentz_transform,
    reflect,
    reflection_matrix,
)

E5 = np.eye(5)
finite = st.floats(-10, 10, allow_nan=False)
vec5 = arrays(float, 5, elements=finite)


def test_basis_products():
    assert inner(E5[0], E5[0]) == 1.0
    assert inner(E5[4], E5[4]) == -1.0
    assert inner(E5[0], E5[1]) == 0.0


def test_causal_types():
    assert causal_type([1, 0, 0, 0, 1]) is CausalType.LIGHTLIKE
    assert causal_type(E5[0]) is CausalType.SPACELIKE
    assert causal_type(E5[4]) is CausalType.TIMELIKE
    # the null band scales with the vector
    assert causal_type([1e6, 0, 0, 0, 1e6 + 1e-6]) is CausalType.LIGHTLIKE


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        inner(np.ones(4), np.ones(5))


def test_lorentz_form_rejects_small_space():
    with pytest.raises(ValueError):
        LorentzForm(3)
    form = LorentzForm(4)
    assert np.array_equal(form.matrix, np.diag([1, 1, 1, -1.0]))
    with pytest.raises(ValueError):
        form.inner(np.ones(5), np.ones(5))


def test_reflect_basis():
    assert np.allclose(reflect(E5[0], E5[0]), -E5[0])
    assert np.allclose(reflect(E5[0], E5[1]), E5[1])


def test_reflect_requires_unit_spacelike():
    with pytest.raises(FrameError):
        reflect(E5[4], E5[0])
    with pytest.raises(FrameError):
        reflect(2 * E5[0], E5[0])


def test_gram_schmidt_mixed():
    frame, signs = lorentz_gram_schmidt([E5[0] + E5[1], E5[1]])
    assert np.allclose(gram(frame), np.diag(signs))
    assert np.allclose(frame[0], (E5[0] + E5[1]) / np.sqrt(2))
    frame, signs = lorentz_gram_schmidt([E5[4]])
    assert list(signs) == [-1.0]


def test_gram_schmidt_null_input():
    with pytest.raises(NonDegeneracyFailure):
        lorentz_gram_schmidt([[1, 0, 0, 0, 1.0]])


def test_orthogonal_complement():
    comp, signs = orthogonal_complement(np.eye(4)[:1])
    assert comp.shape == (3, 4)
    assert sorted(signs) == [-1.0, 1.0, 1.0]
    assert np.allclose(gram(np.vstack([np.eye(4)[:1], comp])), np.diag([1.0, *signs]))
    comp, signs = orthogonal_complement(np.eye(4))
    assert comp.shape == (0, 4)


def test_orthogonal_complement_rejects_non_orthonormal():
    with pytest.raises(FrameError):
        orthogonal_complement([[2.0, 0, 0, 0]])


@given(vec5, vec5, st.integers(0, 2**32 - 1))
def test_lorentz_transforms_preserve_form(u, v, seed):
    T = random_lorentz_transform(5, np.random.default_rng(seed))
    assert is_lorentz_transform(T)
    scale = max(1.0, np.abs(T).max() ** 2) * max(1.0, u @ u, v @ v)
    assert abs(inner(T @ u, T @ v) - inner(u, v)) <= 1e-9 * scale
    assert T[-1, -1] > 0  # time orientation preserved


@given(vec5, vec5)
def test_reflection_is_isometric_involution(p, q):
    v = E5[1] * np.sqrt(2) + E5[4]  # <v,v> = 1
    R = reflection_matrix(v)
    scale = max(1.0, p @ p, q @ q)
    assert abs(inner(R @ p, R @ q) - inner(p, q)) <= 1e-12 * scale * 10
    assert np.allclose(R @ R, np.eye(5), atol=1e-12)
    assert abs(inner(reflect(v, p), v) + inner(p, v)) <= 1e-12 * scale * 10


@given(arrays(float, (3, 5), elements=finite))
def test_gram_schmidt_spans_and_orthonormal(V):
    if abs(np.linalg.det(gram(V))) < 1e-3 or np.linalg.matrix_rank(V, tol=1e-3) < 3:
        return
    try:
        frame, signs = lorentz_gram_schmidt(V)
    except NonDegeneracyFailure:
        return
    assert np.allclose(gram(frame), np.diag(signs), atol=1e-8)
    # same span: every input is a combination of the frame rows
    coef = np.linalg.lstsq(frame.T, V.T, rcond=None)[0]
    assert np.allclose(frame.T @ coef, V.T, atol=1e-8 * max(1.0, np.abs(V).max()))


def test_norm2_broadcasts():
    V = np.stack([E5[0], E5[4], E5[0] + E5[4]])
    assert np.allclose(norm2(V), [1.0, -1.0, 0.0])
