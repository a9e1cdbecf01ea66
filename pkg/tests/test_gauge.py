import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from errors import CapabilityError, EvaluationError, InputError
from gauge import (
    CATALOG, SU2_BASIS, Connection, commutator, constant_abelian, covariant_curvature_terms,
    covariant_derivative, curvature, curvature_field, field_strength_square, flat_abelian,
    frobenius_inner, frobenius_norm, from_catalog, quadratic_abelian, su2_polynomial, ym_divergence_field,
    ym_residual,
)

POINTS = arrays(np.float64, (2,), elements=st.floats(-2.0, 2.0))
MATRIX_PAIRS = arrays(np.complex128, (2, 2, 2),
                      elements=st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False))


@pytest.fixture
def su2():
    return su2_polynomial(seed=3)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_catalog_is_skew_hermitian(name, rng):
    conn = from_catalog(name)
    assert conn.is_skew_hermitian(rng.uniform(-2, 2, (50, conn.dim_space)))


def test_unknown_catalog_entry():
    with pytest.raises(InputError):
        from_catalog("monopole")


@seed(11)
@settings(max_examples=40, deadline=None)
@given(POINTS)
def test_curvature_is_antisymmetric(x):
    F = curvature(su2_polynomial(seed=1), x).F
    np.testing.assert_array_equal(F, -np.swapaxes(F, 0, 1))


@seed(13)
@settings(max_examples=40, deadline=None)
@given(MATRIX_PAIRS)
def test_frobenius_inner_product(m):
    a, b = m
    assert frobenius_inner(a, b) == pytest.approx(np.conj(frobenius_inner(b, a)))
    assert frobenius_inner(a, a).real == pytest.approx(frobenius_norm(a) ** 2)
    assert frobenius_inner(a, a).real >= 0.0


def test_abelian_closed_forms():
    beta = 1.7
    x = np.array([0.4, -1.1])
    F = curvature(constant_abelian(beta), x)
    assert F.component(0, 1)[0, 0] == pytest.approx(1j * beta)
    assert ym_residual(constant_abelian(beta), x)["is_solution"]

    F = curvature(quadratic_abelian(beta), x)
    assert F.component(0, 1)[0, 0] == pytest.approx(1j * beta * x[0])
    res = ym_residual(quadratic_abelian(beta), x)
    assert res["components"][1, 0, 0] == pytest.approx(1j * beta)
    assert res["components"][0, 0, 0] == 0
    assert res["norm"] == pytest.approx(beta)


def test_flat_abelian_has_no_curvature():
    F = curvature_field(flat_abelian((1.0, -0.3)), np.zeros((5, 2)))
    assert np.all(F == 0)


def test_divergence_matches_finite_differences(su2):
    x = np.array([0.3, -0.7])
    h = 1e-5
    a = su2.value(x)
    F = curvature_field(su2, x)
    expected = np.zeros((2, 2, 2), dtype=complex)
    for mu in range(2):
        e = np.zeros(2)
        e[mu] = h
        dF = (curvature_field(su2, x + e) - curvature_field(su2, x - e)) / (2 * h)
        for nu in range(2):
            expected[nu] += dF[mu, nu] + commutator(a[mu], F[mu, nu])
    np.testing.assert_allclose(ym_divergence_field(su2, x), expected, atol=1e-7)


def test_covariant_terms_vanish_on_the_diagonal(su2):
    T = covariant_curvature_terms(su2, np.array([0.2, 0.5]))
    assert np.all(T[0, 0] == 0) and np.all(T[1, 1] == 0)


def test_covariant_derivative_of_a_component(su2):
    x = np.array([-0.4, 0.9])
    phi = su2.components[0]
    out = covariant_derivative(su2, phi, x)
    a = su2.value(x)
    expected = su2.first_derivatives[1][0].value(x) + commutator(a[1], phi.value(x))
    np.testing.assert_allclose(out[1], expected)


def test_gauge_covariance_of_curvature(su2, rng):
    g = np.tensordot(rng.standard_normal(3), SU2_BASIS, axes=1)
    g = np.linalg.matrix_power(np.eye(2) + g / 8, 8)
    x = np.array([0.6, 0.1])
    F = curvature_field(su2, x)
    Fg = curvature_field(su2.conjugated(g), x)
    np.testing.assert_allclose(Fg, np.linalg.inv(g) @ F @ g, atol=1e-12)


def test_field_strength_square_of_constant_abelian():
    beta = 2.0
    val = field_strength_square(constant_abelian(beta), np.array([[0.1, 0.2], [1.0, 3.0]]))
    np.testing.assert_allclose(val[:, 0, 0], [-2 * beta ** 2] * 2)


def test_opaque_connection_matches_polynomial():
    beta = 0.8
    conn = Connection.from_functions(
        [lambda x: np.zeros((1, 1)), lambda x: np.array([[0.5j * beta * x[0] ** 2]])], dim_gauge=1)
    x = np.array([0.7, 0.2])
    np.testing.assert_allclose(curvature_field(conn, x), curvature_field(quadratic_abelian(beta), x), atol=1e-8)
    np.testing.assert_allclose(ym_divergence_field(conn, x), ym_divergence_field(quadratic_abelian(beta), x),
                               atol=1e-4)


def test_opaque_connection_without_second_derivatives():
    conn = Connection.from_functions([lambda x: np.zeros((1, 1))] * 2, dim_gauge=1, max_order=1)
    curvature_field(conn, np.zeros(2))
    with pytest.raises(CapabilityError):
        covariant_curvature_terms(conn, np.zeros(2))


def test_non_finite_values_name_the_component():
    conn = Connection.from_functions([lambda x: np.array([[np.nan]]), lambda x: np.zeros((1, 1))], dim_gauge=1)
    with pytest.raises(EvaluationError) as info:
        curvature_field(conn, np.zeros(2))
    assert info.value.component == 0


def test_curvature_rejects_non_finite_points():
    with pytest.raises(InputError):
        curvature(constant_abelian(), np.array([np.inf, 0.0]))


def test_connection_json(su2):
    back = Connection.from_json(su2.to_json())
    pts = np.random.default_rng(0).uniform(-1, 1, (10, 2))
    np.testing.assert_allclose(back.value(pts), su2.value(pts))
    with pytest.raises(InputError):
        Connection.from_json('{"dim_space": 2}')
    with pytest.raises(CapabilityError):
        Connection.from_functions([lambda x: np.zeros((1, 1))] * 2, dim_gauge=1).to_json()
