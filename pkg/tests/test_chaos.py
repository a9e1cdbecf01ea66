import math

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from chaos import (
    ChaosLayout, ChaosVector, SymTensor, basis_pair, contract, diagonal_chaos, directional_second_derivative,
    evaluate_chaos, flat_index, malliavin_derivative, malliavin_levy_laplacian, pair, parseval_mc,
    random_chaos, random_tensor, sym_product, tensor_power, to_dense, velocity_tensor,
)
from errors import InputError, RankError, TruncationError, UnsupportedCombinationError
from paths_basis import PathCoeffs


def _random_triple(rng, J, d, max_rank, keys=6):
    n = int(rng.integers(0, max_rank + 1))
    k = int(rng.integers(0, n + 1))
    return (random_tensor(rng, n, J, d, keys), random_tensor(rng, k, J, d, keys),
            random_tensor(rng, n - k, J, d, keys), k)


# ── storage ────────────────────────────────────────

def test_flat_index_round_trip():
    for j in range(5):
        for mu in (1, 2, 3):
            assert basis_pair(flat_index(j, mu, 3), 3) == (j, mu)


def test_tensor_canonicalizes_keys():
    F = SymTensor(2, 3, 2, {(3, 1): 1.0, (1, 3): 2.0, (0, 0): 0.0})
    assert F.entries == {(1, 3): 3.0}


def test_tensor_validation():
    with pytest.raises(RankError):
        SymTensor(2, 3, 2, {(1,): 1.0})
    with pytest.raises(TruncationError):
        SymTensor(1, 3, 2, {(8,): 1.0})
    with pytest.raises(InputError):
        SymTensor(1, 3, 2, {(1,): np.eye(2)})
    with pytest.raises(TruncationError):
        SymTensor.vector({(4, 1): 1.0}, 3, 2)


def test_to_dense_agrees_with_oracle(oracle, rng):
    for rank in range(4):
        F = random_tensor(rng, rank, 3, 2, 6)
        np.testing.assert_allclose(to_dense(F), oracle.dense(F), atol=1e-15)


def test_norm_is_the_raw_norm(oracle, rng):
    F = random_tensor(rng, 3, 3, 2, 10)
    assert F.norm() == pytest.approx(np.linalg.norm(oracle.dense(F)))


# ── products and contractions against the brute-force oracle ──

def test_sym_product_matches_oracle(oracle, rng):
    for _ in range(20):
        F, f, _, _ = _random_triple(rng, 3, 2, 2)
        expected = oracle.sym_product(oracle.dense(F), oracle.dense(f))
        np.testing.assert_allclose(oracle.dense(sym_product(F, f)), expected, atol=1e-12)


def test_contraction_matches_oracle(oracle, rng):
    for _ in range(20):
        F, f, _, k = _random_triple(rng, 3, 2, 4)
        expected = oracle.contract(oracle.dense(F), oracle.dense(f), k)
        np.testing.assert_allclose(oracle.dense(contract(F, f)), expected, atol=1e-12)


def test_contraction_is_adjoint_to_tensoring(oracle):
    rng = np.random.default_rng(99)
    for _ in range(100):
        J = int(rng.integers(1, 7))
        F, f, h, k = _random_triple(rng, J, 2, 4)
        scale = max(1.0, F.norm() * f.norm() * h.norm())
        lhs = complex(pair(F, sym_product(h, f)))
        rhs = complex(pair(contract(F, f), h))
        brute = oracle.pair(oracle.dense(F), oracle.sym_product(oracle.dense(h), oracle.dense(f)))
        assert abs(lhs - rhs) <= 1e-12 * scale
        assert abs(lhs - brute) <= 1e-12 * scale


@seed(5)
@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_norm_bounds(s):
    rng = np.random.default_rng(s)
    F, f, _, _ = _random_triple(rng, 4, 2, 4)
    bound = F.norm() * f.norm() * (1 + 1e-12)
    assert sym_product(F, f).norm() <= bound
    assert contract(F, f).norm() <= bound


def test_unsupported_combinations(rng):
    M = SymTensor(1, 2, 2, {(0,): np.eye(2)}, gauge=2)
    with pytest.raises(UnsupportedCombinationError):
        sym_product(M, M)
    with pytest.raises(UnsupportedCombinationError):
        contract(random_tensor(rng, 2, 2, 2), M)
    with pytest.raises(RankError):
        contract(random_tensor(rng, 1, 2, 2), random_tensor(rng, 2, 2, 2))


def test_matrix_valued_product_is_entrywise(rng):
    f = random_tensor(rng, 1, 2, 2, 3)
    M = SymTensor(1, 2, 2, {(1,): np.array([[1, 2], [3, 4]], dtype=complex)}, gauge=2)
    prod = sym_product(M, f)
    for key, v in prod.entries.items():
        scalar = sym_product(SymTensor(1, 2, 2, {(1,): 1.0}), f).entries[key]
        np.testing.assert_allclose(v, scalar * np.array([[1, 2], [3, 4]]))


def test_tensor_power_of_a_unit_vector():
    e = SymTensor.unit([(1, 1)], 3, 2)
    for n in range(5):
        assert tensor_power(e, n).norm() == pytest.approx(1.0)


# ── chaos vectors ──────────────────────────────────

def test_second_hermite_polynomial():
    c = ChaosVector.from_levels([SymTensor(0, 2, 1, {}), SymTensor(1, 2, 1, {}),
                                 SymTensor.unit([(1, 1), (1, 1)], 2, 1)])
    x = np.linspace(-2, 2, 7)
    zeta = np.zeros((len(x), c.size))
    zeta[:, flat_index(1, 1, 1)] = x
    np.testing.assert_allclose(evaluate_chaos(c, zeta), x ** 2 - 1, atol=1e-14)


def test_evaluation_needs_the_used_coordinates():
    c = ChaosVector.from_levels([SymTensor(0, 2, 1, {}), SymTensor.unit([(2, 1)], 2, 1)])
    with pytest.raises(InputError):
        evaluate_chaos(c, {(1, 1): 0.5})
    assert evaluate_chaos(c, {(2, 1): 0.5}) == pytest.approx(0.5)


def test_layout_norm_is_the_fock_norm():
    c = random_chaos(3, J=4, n_max=3, keys_per_level=5)
    keys = sorted({key for lvl in c.levels for key in lvl.entries}, key=lambda k: (len(k), k))
    layout = ChaosLayout(tuple(keys), c.J, c.d, None, c.n_max)
    flat = layout.flatten(c)
    assert np.linalg.norm(flat) ** 2 == pytest.approx(c.fock_norm_sq())
    back = layout.unflatten(flat)
    for a, b in zip(back.levels, c.levels):
        assert a.entries.keys() == b.entries.keys()


def test_chaos_json():
    c = random_chaos(1, J=3, n_max=2, keys_per_level=4, gauge=2)
    back = ChaosVector.from_json(c.to_json())
    assert back.gauge == 2
    assert back.fock_norm_sq() == pytest.approx(c.fock_norm_sq())
    with pytest.raises(InputError):
        ChaosVector.from_json('{"J": 2}')


# ── Malliavin calculus ─────────────────────────────

def test_derivative_of_a_first_chaos():
    c = ChaosVector.from_levels([SymTensor(0, 4, 2, {}), SymTensor.unit([(3, 2)], 4, 2)])
    d = malliavin_derivative(c, PathCoeffs.unit(3, 2, 2))
    assert complex(d.levels[0].entries[()]) == pytest.approx(3 * math.pi)


def test_velocity_tensor_truncation():
    with pytest.raises(TruncationError):
        velocity_tensor(PathCoeffs.unit(5, 1, 2), 4)


def test_derivative_commutes_with_evaluation(rng):
    c = random_chaos(11, J=4, n_max=3, keys_per_level=8)
    h = PathCoeffs(2, {(1, 1): 0.7, (3, 2): -0.4, (4, 1): 0.2})
    v = np.zeros(c.size)
    for (k, mu), val in h.coeffs.items():
        v[flat_index(k, mu, 2)] = math.pi * k * val
    zeta = rng.standard_normal((5, c.size))
    eps = 1e-5
    fd = (evaluate_chaos(c, zeta + eps * v) - evaluate_chaos(c, zeta - eps * v)) / (2 * eps)
    np.testing.assert_allclose(evaluate_chaos(malliavin_derivative(c, h), zeta), fd, rtol=1e-6, atol=1e-8)


def test_diagonal_example_has_unit_laplacian():
    c = diagonal_chaos(J=16)
    for k in (1, 7, 16):
        second = directional_second_derivative(c, k, 1)
        assert complex(second.levels[0].entries[()]) == pytest.approx(1.0, abs=1e-12)
    res = malliavin_levy_laplacian(c, 16)
    for N in range(1, 17):
        L = res.partial(N)
        assert complex(L.levels[0].entries[()]) == pytest.approx(1.0, abs=1e-12)
        assert sum(lvl.norm_sq() for lvl in L.levels[1:]) == 0.0


def test_laplacian_refuses_directions_beyond_truncation():
    with pytest.raises(TruncationError):
        malliavin_levy_laplacian(diagonal_chaos(J=4), 5)


def test_finite_support_is_annihilated():
    c = random_chaos(2, J=16, n_max=3, keys_per_level=6, max_j=3)
    res = malliavin_levy_laplacian(c, 16)
    n = np.arange(1, 17)
    scaled = n * np.linalg.norm(res.series.partials, axis=1)
    np.testing.assert_allclose(scaled[4:], scaled[4], rtol=1e-12)
    assert res.diagnostics["support_max_j"] <= 3
    assert res.diagnostics["tail_bound"] == pytest.approx(scaled[3:].max())


@pytest.mark.slow
def test_parseval_monte_carlo():
    c = random_chaos(4, J=4, n_max=3, keys_per_level=8)
    res = parseval_mc(c, samples=100_000, seed=17)
    assert res["z"] <= 3.0
    assert res["verdict"] == "pass"
