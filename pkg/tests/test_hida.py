import math

import numpy as np
import pytest

from chaos import ChaosVector, SymTensor, contract, diagonal_chaos, random_chaos, to_dense
from errors import OrderError, TruncationError
from hida import (
    GROWTH_SLOPE, NuclearWeights, TestVector, entire_check, hida_levy_laplacian, prop1_check, random_test_vector,
    s_second_derivative, s_transform, u_functional_growth, verify_main_theorem,
)


def _constant(value, J=4, d=2):
    return ChaosVector.from_levels([SymTensor(0, J, d, {(): value})])


# ── S-transform ────────────────────────────────────

def test_s_transform_of_a_constant():
    c = _constant(2.5)
    assert s_transform(c, random_test_vector(1, 4, 2)) == pytest.approx(2.5)


def test_s_transform_of_a_first_chaos_is_linear():
    c = ChaosVector.from_levels([SymTensor(0, 3, 2, {}), SymTensor.unit([(2, 1)], 3, 2)])
    xi = TestVector.from_coeffs({(2, 1): 0.75, (1, 2): -3.0}, 3, 2)
    assert complex(s_transform(c, xi)) == pytest.approx(0.75)
    assert complex(s_transform(c, xi.scaled(2j))) == pytest.approx(1.5j)


def test_test_vector_beyond_truncation():
    c = _constant(1.0, J=3)
    with pytest.raises(TruncationError):
        s_transform(c, TestVector.from_coeffs({(5, 1): 1.0}, 6, 2))
    with pytest.raises(TruncationError):
        TestVector.from_coeffs({(5, 1): 1.0}, 3, 2)


def test_nuclear_weights_norm():
    w = NuclearWeights(p=1.0)
    assert w.norm(TestVector.from_coeffs({(0, 1): 1.0}, 2, 2)) == pytest.approx(2.0)
    assert w.norm(TestVector.from_coeffs({(2, 2): 1j}, 2, 2)) == pytest.approx(4.0)


def test_s_transform_is_entire_along_lines():
    c = random_chaos(6, J=4, n_max=3, keys_per_level=6)
    res = entire_check(c, random_test_vector(2, 4, 2), random_test_vector(3, 4, 2, complex_valued=True))
    assert res["degree"] == 3
    assert res["verdict"] == "pass"


def test_u_functional_growth_of_a_constant():
    res = u_functional_growth(_constant(3.0), NuclearWeights(), samples=8)
    assert res["satisfied"]
    assert res["K_fit"] == pytest.approx(0.0, abs=1e-10)
    assert res["C"] == pytest.approx(3.0)


def test_u_functional_growth_with_a_given_rate():
    c = random_chaos(4, J=4, n_max=3, keys_per_level=6)
    res = u_functional_growth(c, NuclearWeights(), samples=8, K=2.0)
    assert res["K"] == 2.0
    assert res["finite"] and math.isfinite(res["C"])


def test_u_functional_growth_of_a_first_chaos():
    J, d = 4, 2
    f = {(0, 1): 1.0, (2, 2): -0.5j, (4, 1): 2.0}
    c = ChaosVector.from_levels([SymTensor(0, J, d, {}), SymTensor.vector(f, J, d)])
    w = NuclearWeights()
    lam = w.lambdas(J, d)
    dense = to_dense(SymTensor.vector(f, J, d))
    # |⟨f, ξ⟩| ≤ |f|_{−p}·|ξ|_p with r·e^{−r²} < 1
    bound = float(np.sqrt(np.sum(lam ** (-2 * w.p) * np.abs(dense) ** 2)))
    res = u_functional_growth(c, w, samples=16, K=1.0)
    assert res["satisfied"]
    assert 0.0 < res["C"] <= bound * (1 + 1e-12)


# ── second derivative of the S-transform ───────────

def test_second_derivative_of_a_second_chaos():
    J, d = 4, 2
    F = SymTensor(2, J, d, {(0, 3): 1.0 - 2j, (5, 5): 0.5, (2, 7): -1.5})
    c = ChaosVector.from_levels([SymTensor(0, J, d, {}), SymTensor(1, J, d, {}), F])
    K = s_second_derivative(c, random_test_vector(1, J, d))
    np.testing.assert_allclose(to_dense(K), to_dense(F.scaled(2)), atol=1e-12)


def test_second_derivative_of_a_third_chaos():
    J, d = 4, 2
    G = SymTensor(3, J, d, {(0, 3, 3): 1.0, (1, 4, 9): 2.0 - 1j, (2, 2, 2): -0.75})
    coeffs = {(0, 1): 0.5, (1, 2): -1.0, (2, 1): 0.25j, (4, 2): 1.5}
    c = ChaosVector.from_levels([SymTensor(0, J, d, {}), SymTensor(1, J, d, {}), SymTensor(2, J, d, {}), G])
    K = s_second_derivative(c, TestVector.from_coeffs(coeffs, J, d))
    expected = contract(G, SymTensor.vector(coeffs, J, d)).scaled(6)
    np.testing.assert_allclose(to_dense(K), to_dense(expected), atol=1e-12)


# ── Lévy Laplacians ────────────────────────────────

def test_order_must_be_plus_or_minus_one():
    with pytest.raises(OrderError):
        hida_levy_laplacian(diagonal_chaos(J=8), 0, random_test_vector(0, 8, 2), 8)


def test_directions_beyond_truncation_need_opt_in():
    c = diagonal_chaos(J=8)
    xi = random_test_vector(0, 8, 2)
    with pytest.raises(TruncationError):
        hida_levy_laplacian(c, -1, xi, 9)
    series = hida_levy_laplacian(c, -1, xi, 16, extend_beyond_truncation=True)
    np.testing.assert_allclose(series.partials[8:] * np.arange(9, 17), series.partials[7] * 8, rtol=1e-12)


def test_diagonal_example_order_minus_one():
    c = diagonal_chaos(J=16)
    series = hida_levy_laplacian(c, -1, random_test_vector(5, 16, 2), 16)
    np.testing.assert_allclose(math.pi ** 2 * series.partials, 1.0, atol=1e-12)


def test_main_theorem_on_the_diagonal_example():
    res = verify_main_theorem(diagonal_chaos(J=16), random_test_vector(0, 16, 2), 16)
    assert res["verdict"] == "pass"
    assert res["max_gap"] <= 1e-10 * res["scale"]
    np.testing.assert_allclose(res["lhs_partials"], 1.0, atol=1e-12)


def test_main_theorem_on_random_chaos():
    for s in range(20):
        c = random_chaos(100 + s, J=16, n_max=4, keys_per_level=8)
        xi = random_test_vector(s, 16, 2, complex_valued=s % 2 == 1)
        res = verify_main_theorem(c, xi, 16)
        assert res["max_gap"] <= 1e-10 * res["scale"], s
        assert res["verdict"] == "pass"


def test_main_theorem_for_matrix_valued_chaos():
    c = random_chaos(7, J=8, n_max=3, keys_per_level=6, gauge=2)
    res = verify_main_theorem(c, random_test_vector(9, 8, 2), 8)
    assert res["verdict"] == "pass"


def test_order_one_partials_decay():
    for s in range(10):
        c = random_chaos(200 + s, J=256, n_max=4, keys_per_level=8, max_j=16, diagonal_decay=2.0)
        res = prop1_check(c, random_test_vector(s, 256, 2))
        assert res["verdict"] == "pass", s
        assert not res["growth"]
        assert res["slope"] <= GROWTH_SLOPE
        assert np.all(res["scaled"][128:] > 0)
        assert len(res["scaled"]) == 256


def test_order_one_growth_is_detected():
    J = 64
    flat = SymTensor(2, J, 2, {(a, a): 1.0 for a in range((J + 1) * 2)})
    c = ChaosVector.from_levels([SymTensor(0, J, 2, {}), SymTensor(1, J, 2, {}), flat])
    res = prop1_check(c, random_test_vector(0, J, 2), n_max=64)
    assert res["growth"]
    assert res["slope"] == pytest.approx(1.0, abs=1e-6)
    assert res["verdict"] == "fail"


def test_order_one_needs_terms_in_the_second_half(caplog):
    with caplog.at_level("WARNING"):
        prop1_check(diagonal_chaos(J=16), random_test_vector(0, 16, 2), n_max=64)
    assert "second half" in caplog.text


def test_order_one_constant_for_the_diagonal_example():
    res = prop1_check(diagonal_chaos(J=16), random_test_vector(0, 16, 2), n_max=64)
    expected = sum(1.0 / (math.pi ** 2 * k ** 2) for k in range(1, 17))
    assert res["C"] == pytest.approx(expected, rel=1e-12)
