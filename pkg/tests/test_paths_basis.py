import math

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from scipy.integrate import simpson

from errors import DomainError, InputError
from paths_basis import (
    COSINE, PATH_PRESETS, SINE, STEP_PRESETS, BasisId, PathCoeffs, d_isomorphism, eval_basis,
    inverse_d_isomorphism, orthonormality_defect, path_eval, path_norm_sq, path_velocity,
    preset_path, random_path, sine_table, weak_density_defect,
)


# ── bases ──────────────────────────────────────────

@pytest.mark.parametrize("family", [SINE, COSINE])
def test_bases_are_orthonormal(family):
    assert orthonormality_defect(BasisId(family), 16) <= 1e-10


def test_eval_basis_values():
    assert eval_basis(BasisId(SINE), 1, 0.5) == pytest.approx(math.sqrt(2))
    assert eval_basis(BasisId(COSINE), 0, 0.3) == 1.0
    assert eval_basis(BasisId(COSINE), 2, 0.0) == pytest.approx(math.sqrt(2))


def test_eval_basis_rejects_bad_input():
    with pytest.raises(DomainError):
        eval_basis(BasisId(SINE), 1, 1.5)
    with pytest.raises(DomainError):
        eval_basis(BasisId(SINE), 0, 0.5)
    with pytest.raises(InputError):
        BasisId("legendre")


def test_sine_table_matches_eval_basis():
    t = np.linspace(0, 1, 11)
    table = sine_table(4, t)
    for k in range(1, 5):
        np.testing.assert_allclose(table[k - 1], eval_basis(BasisId(SINE), k, t), atol=1e-15)


# ── paths ──────────────────────────────────────────

def test_path_validation():
    with pytest.raises(InputError):
        PathCoeffs(2, {(0, 1): 1.0})
    with pytest.raises(InputError):
        PathCoeffs(2, {(1, 3): 1.0})
    with pytest.raises(InputError):
        PathCoeffs(2, {(1, 1): float("nan")})
    assert PathCoeffs(2, {(1, 1): 0.0}).coeffs == {}


def test_paths_vanish_at_endpoints():
    p = preset_path("wiggle")
    np.testing.assert_array_equal(path_eval(p, 0.0), np.zeros(2))
    np.testing.assert_allclose(path_eval(p, 1.0), np.zeros(2), atol=1e-12)


def test_velocity_is_the_derivative():
    p = preset_path("gf-test")
    t = np.linspace(0.1, 0.9, 9)
    h = 1e-6
    fd = (path_eval(p, t + h) - path_eval(p, t - h)) / (2 * h)
    np.testing.assert_allclose(path_velocity(p, t), fd, atol=1e-6)


def test_norm_is_the_energy_of_the_velocity():
    p = random_path(3, k_max=4)
    t = np.linspace(0, 1, 4001)
    energy = simpson(np.sum(path_velocity(p, t) ** 2, axis=-1), x=t)
    assert path_norm_sq(p) == pytest.approx(energy, rel=1e-8)


@seed(7)
@settings(max_examples=30, deadline=None)
@given(st.dictionaries(st.tuples(st.integers(1, 12), st.integers(1, 3)),
                       st.floats(-5, 5).filter(lambda x: x == 0 or abs(x) > 1e-6), max_size=8))
def test_d_isomorphism_inverts(coeffs):
    p = PathCoeffs(3, coeffs)
    back = inverse_d_isomorphism(d_isomorphism(p), 3)
    assert back.coeffs.keys() == p.coeffs.keys()
    for key, c in p.coeffs.items():
        assert back.coeffs[key] == pytest.approx(c, rel=1e-14)


def test_inverse_d_rejects_constants():
    with pytest.raises(DomainError):
        inverse_d_isomorphism({(0, 1): 1.0}, 2)
    assert inverse_d_isomorphism({(0, 1): 0.0}, 2).coeffs == {}


def test_path_json_infers_dimension():
    p = PathCoeffs.from_json("[[1, 1, 0.5], [2, 3, -1.0]]")
    assert p.dim == 3
    assert p.coeffs == {(1, 1): 0.5, (2, 3): -1.0}
    with pytest.raises(InputError):
        PathCoeffs.from_json('{"k": 1}')


def test_presets():
    assert set(PATH_PRESETS) >= {"gf-test", "straight", "zero", "small"}
    assert preset_path("gf-test").coeffs == {(1, 1): 1.0, (2, 2): 0.5}
    with pytest.raises(InputError):
        preset_path("spiral")


# ── weak uniform density ───────────────────────────

@pytest.mark.parametrize("family", [SINE, COSINE])
def test_density_defect_of_constant_is_zero(family):
    assert weak_density_defect(BasisId(family), 37, STEP_PRESETS["one"]) == 0.0


def test_density_half_indicator_decays():
    basis = BasisId(SINE)
    for n in (16, 64):
        d_n = weak_density_defect(basis, n, STEP_PRESETS["half"])
        d_4n = weak_density_defect(basis, 4 * n, STEP_PRESETS["half"])
        assert abs(d_4n) <= 0.5 * abs(d_n)


@pytest.mark.parametrize("family", [SINE, COSINE])
def test_density_third_indicator_decays_like_one_over_n(family):
    basis = BasisId(family)
    for n in (16, 64):
        d_n = weak_density_defect(basis, n, STEP_PRESETS["third"])
        d_4n = weak_density_defect(basis, 4 * n, STEP_PRESETS["third"])
        assert d_n != 0.0
        assert abs(d_4n) <= 0.5 * abs(d_n)


def test_density_defect_matches_quadrature():
    basis = BasisId(SINE)
    n = 8
    t = np.linspace(0, 1.0 / 3.0, 20001)
    avg = np.mean(sine_table(n, t) ** 2, axis=0)
    expected = simpson(avg - 1.0, x=t)
    assert weak_density_defect(basis, n, STEP_PRESETS["third"]) == pytest.approx(expected, abs=1e-10)


def test_density_rejects_bad_pieces():
    with pytest.raises(InputError):
        weak_density_defect(BasisId(SINE), 4, [])
    with pytest.raises(InputError):
        weak_density_defect(BasisId(SINE), 4, [(0.5, 1.5, 1.0)])
