import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finsler import DomainError, RandersDatum, cartan_tensor, fundamental_tensor, legendre, randers_norm
from finsler.minkowski import cartan_tensor_fd, fundamental_tensor_fd, randers_norm_fixed_point

CONE = RandersDatum(np.eye(2), [0.0, 0.5])


@st.composite
def data_and_vector(draw):
    n = draw(st.integers(1, 4))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    h = M @ M.T + 0.2 * np.eye(n)
    w = rng.normal(size=n)
    w *= draw(st.floats(0.0, 0.9)) / math.sqrt(w @ h @ w)
    v = rng.normal(size=n)
    return RandersDatum(h, w), v


# --- worked values -----------------------------------------------------------------

def test_norm_of_horizontal_unit_vector():
    F = randers_norm(CONE, [1.0, 0.0])
    assert F == pytest.approx(2 / math.sqrt(3), abs=1e-15)
    r = np.array([1.0, 0.0]) - F * CONE.w
    assert abs(np.linalg.norm(r) - F) <= 1e-12


def test_zero_wind_is_riemannian(rng):
    d = RandersDatum(np.eye(3), np.zeros(3))
    for v in rng.normal(size=(20, 3)):
        assert randers_norm(d, v) == pytest.approx(np.linalg.norm(v), rel=1e-15)


def test_up_and_down_are_not_reversible():
    assert randers_norm(CONE, [0.0, 1.0]) == pytest.approx(2 / 3, abs=1e-15)
    assert randers_norm(CONE, [0.0, -1.0]) == pytest.approx(2.0, abs=1e-15)


def test_norm_of_zero_is_zero():
    assert randers_norm(CONE, [0.0, 0.0]) == 0.0


def test_fundamental_tensor_riemannian_case():
    h = np.array([[2.0, 0.3], [0.3, 1.0]])
    d = RandersDatum(h, [0.0, 0.0])
    np.testing.assert_allclose(fundamental_tensor(d, [0.4, -1.2]), h, atol=1e-14)


def test_fundamental_tensor_against_finite_differences():
    g = fundamental_tensor(CONE, [1.0, 0.0])
    v = np.array([1.0, 0.0])
    assert v @ g @ v == pytest.approx(4 / 3, abs=1e-13)
    np.testing.assert_allclose(g, fundamental_tensor_fd(CONE, v), atol=1e-7)


def test_fundamental_tensor_zero_homogeneous():
    v = np.array([0.3, -0.7])
    np.testing.assert_allclose(fundamental_tensor(CONE, 7 * v), fundamental_tensor(CONE, v), atol=1e-9)


def test_cartan_vanishes_without_wind(rng):
    d = RandersDatum(np.diag([1.0, 3.0]), [0.0, 0.0])
    for _ in range(10):
        v, a, b, c = rng.normal(size=(4, 2))
        assert abs(cartan_tensor(d, v, a, b, c)) <= 1e-13


def test_cartan_v_slot_by_finite_differences():
    v = np.array([1.0, 0.0])
    e1, e2 = np.eye(2)
    assert abs(cartan_tensor_fd(CONE, v, v, e1, e2)) <= 1e-6
    assert abs(cartan_tensor(CONE, v, v, e1, e2)) <= 1e-14


def test_cartan_matches_third_derivative_oracle():
    v = np.array([1.0, 0.0])
    e2 = np.array([0.0, 1.0])
    assert cartan_tensor(CONE, v, e2, e2, e2) == pytest.approx(cartan_tensor_fd(CONE, v, e2, e2, e2), abs=1e-6)


def test_legendre_values():
    d = RandersDatum(np.diag([2.0, 1.0]), [0.0, 0.0])
    np.testing.assert_allclose(legendre(d, [1.0, 3.0]), [2.0, 3.0], atol=1e-14)
    v, u = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    p = legendre(CONE, v)
    assert p @ v == pytest.approx(randers_norm(CONE, v) ** 2, abs=1e-12)
    assert p @ u <= (2 / math.sqrt(3)) * (2 / 3)


@pytest.mark.parametrize("op", [fundamental_tensor, legendre])
def test_zero_vector_is_a_domain_error(op):
    with pytest.raises(DomainError):
        op(CONE, [0.0, 0.0])


def test_cartan_zero_vector_is_a_domain_error():
    e = np.eye(2)
    with pytest.raises(DomainError):
        cartan_tensor(CONE, [0.0, 0.0], e[0], e[0], e[1])


@pytest.mark.parametrize(
    "h, w",
    [
        (np.eye(2), [0.0, 1.0]),
        (np.eye(2), [0.0, 1.0 - 1e-9]),
        (np.array([[1.0, 2.0], [2.0, 1.0]]), [0.0, 0.0]),
        (np.array([[1.0, 0.1], [0.0, 1.0]]), [0.0, 0.0]),
        (np.eye(2), [np.nan, 0.0]),
    ],
)
def test_invalid_data_rejected(h, w):
    with pytest.raises(DomainError):
        RandersDatum(h, w)


# --- properties -------------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(data_and_vector())
def test_intrinsic_equation(dv):
    d, v = dv
    F = randers_norm(d, v)
    r = v - F * d.w
    assert abs(math.sqrt(r @ d.h @ r) - F) <= 1e-10 * (1 + F)
    assert F == pytest.approx(randers_norm_fixed_point(d, v), rel=1e-10, abs=1e-14)


@settings(max_examples=100, deadline=None)
@given(data_and_vector(), st.sampled_from([1e-3, 1.0, 1e3]))
def test_positive_homogeneity(dv, lam):
    d, v = dv
    assert randers_norm(d, lam * v) == pytest.approx(lam * randers_norm(d, v), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(data_and_vector())
def test_fundamental_tensor_properties(dv):
    d, v = dv
    g = fundamental_tensor(d, v)
    np.linalg.cholesky(g)
    F = randers_norm(d, v)
    assert v @ g @ v == pytest.approx(F * F, rel=1e-8)
    np.testing.assert_allclose(fundamental_tensor(d, 7 * v), g, atol=1e-9 * max(1.0, np.abs(g).max()))
    np.testing.assert_allclose(g, fundamental_tensor_fd(d, v), rtol=1e-5, atol=1e-6 * np.abs(g).max())


@settings(max_examples=100, deadline=None)
@given(data_and_vector(), st.integers(0, 1000))
def test_cartan_symmetric_and_v_slot(dv, seed):
    d, v = dv
    a, b = np.random.default_rng(seed).normal(size=(2, d.dim))
    C = cartan_tensor(d, v, v, a, b)
    assert abs(C) <= 1e-9 * (1 + np.linalg.norm(a) * np.linalg.norm(b))
    c1 = cartan_tensor(d, v, a, b, a)
    assert c1 == pytest.approx(cartan_tensor(d, v, b, a, a), abs=1e-10)
    assert c1 == pytest.approx(cartan_tensor(d, v, a, a, b), abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(data_and_vector(), st.integers(0, 1000))
def test_fundamental_inequality(dv, seed):
    d, v = dv
    u = np.random.default_rng(seed).normal(size=d.dim)
    p = legendre(d, v)
    assert p @ v == pytest.approx(randers_norm(d, v) ** 2, rel=1e-9)
    assert p @ u <= randers_norm(d, v) * randers_norm(d, u) * (1 + 1e-9) + 1e-15
