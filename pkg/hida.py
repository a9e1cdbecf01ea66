"""
hida.py  ·  S-transform and Hida Lévy Laplacians
─────────────────────────────────────────────────
White-noise side of the chaos picture:

    SΦ(ξ)    = Σ_n ⟨F^n, ξ^{⊗n}⟩
    SΦ''(ξ)  = Σ_n n(n−1) F^n ⊗̂_{n−2} ξ^{⊗(n−2)}        (rank-2 kernel)

and the order ±1 Lévy Laplacians built from the diagonal pairings
k^{1−s}⟨SΦ''(ξ), (l_k⊗p_μ)⊗(l_k⊗p_μ)⟩. The kernel is purely Volterra at
finite truncation, so the order-1 partials decay like 1/N, while the
order −1 partials reproduce the Malliavin Laplacian up to the factor π².

Tensor powers ξ^{⊗m} are never materialized: every contraction against
them reduces to a monomial Π ξ_a^{m_a} over the remaining multiset.
"""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping

import numpy as np

from chaos import (ChaosVector, SymTensor, directional_second_derivative, flat_index,
                   malliavin_levy_laplacian, multiplicity_factorial, multiset_minus, raw_factor)
from errors import InputError, OrderError, TruncationError
from levy_core import CesaroSeries, cesaro_estimate, cesaro_from_terms

logger = logging.getLogger(__name__)

MAIN_TOL = 1e-10
GROWTH_SLOPE = 0.5
PROP1_N = 256


# ──────────────────────────────────────────────
# TEST VECTORS AND WEIGHTS
# ──────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class TestVector:
    """A finitely supported ξ ∈ E_C in the basis l_j ⊗ p_μ, stored densely."""

    __test__ = False  # keep pytest from collecting this class

    xi: np.ndarray
    J: int
    d: int

    @classmethod
    def from_coeffs(cls, coeffs: Mapping[tuple[int, int], complex], J: int, d: int) -> "TestVector":
        xi = np.zeros((J + 1) * d, dtype=complex)
        for (j, mu), v in coeffs.items():
            if not 0 <= j <= J:
                raise TruncationError(f"test vector index j={j} beyond truncation J={J}")
            xi[flat_index(j, mu, d)] = v
        return cls(xi, J, d)

    def scaled(self, r: complex) -> "TestVector":
        return TestVector(r * self.xi, self.J, self.d)

    def plus(self, other: "TestVector") -> "TestVector":
        return TestVector(self.xi + other.xi, self.J, self.d)

    def max_j(self) -> int:
        nz = np.nonzero(self.xi)[0]
        return int(nz.max() // self.d) if len(nz) else -1


def random_test_vector(seed: int, J: int, d: int, max_j: int | None = None,
                       scale: float = 0.5, complex_valued: bool = False) -> TestVector:
    rng = np.random.default_rng(seed)
    top = J if max_j is None else max_j
    xi = np.zeros((J + 1) * d, dtype=complex)
    n = (top + 1) * d
    xi[:n] = scale * rng.standard_normal(n)
    if complex_valued:
        xi[:n] += 1j * scale * rng.standard_normal(n)
    return TestVector(xi, J, d)


@dataclass(frozen=True)
class NuclearWeights:
    """λ_n = offset + n for the n-th basis element (n = j + 1); |ξ|_p² = Σ λ^{2p}|ξ|²."""

    p: float = 1.0
    offset: float = 1.0

    def lambdas(self, J: int, d: int) -> np.ndarray:
        j = np.arange(J + 1)
        return np.repeat(self.offset + (j + 1.0), d)

    def norm(self, xi: TestVector) -> float:
        lam = self.lambdas(xi.J, xi.d)
        return float(np.sqrt(np.sum(lam ** (2 * self.p) * np.abs(xi.xi) ** 2)))


def _embed(c: ChaosVector, xi: TestVector) -> np.ndarray:
    if xi.d != c.d:
        raise InputError(f"test vector dimension {xi.d} does not match d={c.d}")
    if xi.max_j() > c.J:
        raise TruncationError(f"test vector reaches j={xi.max_j()} beyond truncation J={c.J}")
    out = np.zeros(c.size, dtype=complex)
    n = min(c.size, len(xi.xi))
    out[:n] = xi.xi[:n]
    return out


def _monomial(key, xi: np.ndarray):
    """Π_a ξ_a^{m_a}; xi may carry leading batch axes."""
    out = np.ones(xi.shape[:-1], dtype=complex)
    for a, m in Counter(key).items():
        out = out * xi[..., a] ** m
    return out


# ──────────────────────────────────────────────
# S-TRANSFORM
# ──────────────────────────────────────────────

def s_transform_batch(c: ChaosVector, xi: np.ndarray) -> np.ndarray:
    """SΦ at a batch of dense ξ arrays (..., (J+1)·d)."""
    out = np.zeros(xi.shape[:-1] + c.value_shape, dtype=complex)
    for n, lvl in enumerate(c.levels):
        for key, v in lvl.entries.items():
            coef = math.sqrt(math.factorial(n) / multiplicity_factorial(key))
            out += coef * np.multiply.outer(_monomial(key, xi), v)
    return out


def s_transform(c: ChaosVector, xi: TestVector):
    return s_transform_batch(c, _embed(c, xi))


def s_second_derivative(c: ChaosVector, xi: TestVector) -> SymTensor:
    """Σ_n n(n−1) F^n ⊗̂_{n−2} ξ^{⊗(n−2)} as a rank-2 tensor."""
    x = _embed(c, xi)
    raw: dict = defaultdict(complex)
    for n, lvl in enumerate(c.levels):
        if n < 2:
            continue
        for S, v in lvl.entries.items():
            s_raw = v * raw_factor(S)
            for P in set(combinations(S, 2)):
                R = multiset_minus(S, P)
                tuples = math.factorial(n - 2) / multiplicity_factorial(R)
                raw[P] = raw[P] + n * (n - 1) * tuples * s_raw * _monomial(R, x)
    return SymTensor(2, c.J, c.d, {P: v / raw_factor(P) for P, v in raw.items()}, c.gauge)


# ──────────────────────────────────────────────
# LÉVY LAPLACIANS
# ──────────────────────────────────────────────

def _series(table: dict, d: int, n_max: int, s: float, tol: float) -> CesaroSeries:
    if n_max >= 8:
        return cesaro_estimate(lambda k, mu: table[(k, mu)], s, d, n_max, tol)
    rows = np.array([sum(table[(k, mu)] for mu in range(1, d + 1)) for k in range(1, n_max + 1)])
    return cesaro_from_terms(rows, s, tol)


def hida_direction_terms(c: ChaosVector, xi: TestVector, n_max: int) -> dict:
    """⟨SΦ''(ξ), e⊗e⟩ for e = l_k ⊗ p_μ, k = 1..n_max (zero past the truncation)."""
    K = s_second_derivative(c, xi)
    zero = np.zeros(c.value_shape, dtype=complex)
    table = {}
    for k in range(1, n_max + 1):
        for mu in range(1, c.d + 1):
            if k > c.J:
                table[(k, mu)] = zero
                continue
            a = flat_index(k, mu, c.d)
            table[(k, mu)] = np.asarray(K.entries.get((a, a), zero))
    return table


def hida_levy_laplacian(c: ChaosVector, s: int, xi: TestVector, n_max: int,
                        extend_beyond_truncation: bool = False, tol: float = 1e-6) -> CesaroSeries:
    """Partials (1/N) Σ_{k≤N} Σ_μ k^{1−s} ⟨SΦ''(ξ) p_μl_k, p_μl_k⟩ for s ∈ {−1, 1}."""
    if s not in (-1, 1):
        raise OrderError(f"Hida Lévy Laplacian is defined for s = ±1, got {s}")
    if n_max > c.J and not extend_beyond_truncation:
        raise TruncationError(f"N_max={n_max} exceeds truncation J={c.J}")
    return _series(hida_direction_terms(c, xi, n_max), c.d, n_max, float(s), tol)


def prop1_check(c: ChaosVector, xi: TestVector, n_max: int = PROP1_N) -> dict:
    """
    Order-1 decay: N·‖L_N‖ stays bounded. Averages past the truncation, where
    every term is exactly zero. Growth means the log-log slope of N·‖L_N‖ over
    the second half of the window exceeds GROWTH_SLOPE; with J < n_max/2 that
    half holds no terms, so the check only measures something for J near n_max.
    """
    if c.J < n_max // 2:
        logger.warning("prop1 with J=%d and N_max=%d: the second half of the window is empty", c.J, n_max)
    series = hida_levy_laplacian(c, 1, xi, n_max, extend_beyond_truncation=True)
    n = np.arange(1, n_max + 1)
    scaled = n * np.linalg.norm(series.partials.reshape(n_max, -1), axis=1)
    slope = _tail_slope(n, scaled)
    growth = slope > GROWTH_SLOPE
    return {
        "series": series,
        "scaled": scaled,
        "C": float(np.max(scaled)),
        "slope": slope,
        "growth": growth,
        "verdict": "fail" if growth else "pass",
        "explanation": (f"max N·‖L_N‖ = {np.max(scaled):.3g}, tail slope {slope:.3g}; "
                        + ("still growing in the second half" if growth else "bounded over N ≤ %d" % n_max)),
    }


def _tail_slope(n: np.ndarray, scaled: np.ndarray) -> float:
    half = len(n) // 2
    keep = scaled[half:] > 0
    if np.count_nonzero(keep) < 2:
        return 0.0
    slope, _ = np.polyfit(np.log(n[half:][keep]), np.log(scaled[half:][keep]), 1)
    return float(slope)


def verify_main_theorem(c: ChaosVector, xi: TestVector, n_max: int) -> dict:
    """
    S(Malliavin Lévy Laplacian partials)(ξ) against π²·(order −1 Hida partials),
    per N and per direction (k, μ).
    """
    mall = malliavin_levy_laplacian(c, n_max)
    lhs = np.array([s_transform(mall.partial(N), xi) for N in range(1, n_max + 1)])
    rhs = math.pi ** 2 * hida_levy_laplacian(c, -1, xi, n_max).partials
    gaps = np.linalg.norm((lhs - rhs).reshape(n_max, -1), axis=1)

    hida_terms = hida_direction_terms(c, xi, n_max)
    direction_gaps = {}
    dir_scale = 1.0
    for (k, mu), pairing in hida_terms.items():
        left = s_transform(directional_second_derivative(c, k, mu), xi)
        right = math.pi ** 2 * k ** 2 * pairing
        direction_gaps[(k, mu)] = float(np.linalg.norm(left - right))
        dir_scale = max(dir_scale, float(np.linalg.norm(right)))

    scale = max(1.0, float(np.max(np.linalg.norm(rhs.reshape(n_max, -1), axis=1))),
                float(np.max(np.linalg.norm(lhs.reshape(n_max, -1), axis=1))))
    max_gap = float(np.max(gaps))
    max_dir = max(direction_gaps.values(), default=0.0)
    tol = MAIN_TOL * scale
    passed = max_gap <= tol and max_dir <= MAIN_TOL * dir_scale
    logger.info("verify-main: max gap %.3g (tol %.3g), direction gap %.3g", max_gap, tol, max_dir)
    return {
        "lhs_partials": lhs,
        "rhs_partials": rhs,
        "gaps": gaps,
        "max_gap": max_gap,
        "direction_gaps": direction_gaps,
        "max_direction_gap": max_dir,
        "scale": scale,
        "tol": tol,
        "verdict": "pass" if passed else "fail",
        "explanation": f"max |LHS − RHS| over N ≤ {n_max} is {max_gap:.3g} against tol {tol:.3g}",
    }


# ──────────────────────────────────────────────
# U-FUNCTIONAL DIAGNOSTICS
# ──────────────────────────────────────────────

def u_functional_growth(c: ChaosVector, w: NuclearWeights, samples: int = 32,
                        scale_grid=(0.25, 0.5, 1.0, 1.5, 2.0), seed: int = 0,
                        K: float | None = None) -> dict:
    """
    Fit log‖SΦ(rξ)‖ ≈ log C + K·r²|ξ|_p² over random unit-|·|_p directions ξ.
    With K given, C is the smallest constant satisfying the bound on the sample.
    """
    rng = np.random.default_rng(seed)
    lam = w.lambdas(c.J, c.d)
    rows, values = [], []
    finite = True
    for _ in range(samples):
        raw = rng.standard_normal(c.size)
        xi = raw / np.sqrt(np.sum(lam ** (2 * w.p) * raw ** 2))
        for r in scale_grid:
            val = s_transform_batch(c, r * xi.astype(complex))
            mag = float(np.sqrt(np.sum(np.abs(val) ** 2)))
            if not math.isfinite(mag):
                finite = False
                continue
            rows.append(r ** 2)
            values.append(mag)
    values = np.array(values)
    r2 = np.array(rows)
    positive = values > 0
    if np.count_nonzero(positive) >= 2 and np.ptp(r2[positive]) > 0:
        A = np.column_stack([np.ones(np.count_nonzero(positive)), r2[positive]])
        (log_c, k_fit), *_ = np.linalg.lstsq(A, np.log(values[positive]), rcond=None)
    else:
        log_c, k_fit = (math.log(values.max()) if np.any(positive) else 0.0), 0.0
    k_used = max(0.0, float(k_fit)) if K is None else float(K)
    c_min = float(np.max(values * np.exp(-k_used * r2), initial=0.0))
    return {
        "K_fit": float(k_fit),
        "C_fit": float(math.exp(log_c)),
        "K": k_used,
        "C": c_min,
        "finite": finite,
        "satisfied": finite and math.isfinite(c_min),
        "samples": samples,
    }


def entire_check(c: ChaosVector, zeta: TestVector, eta: TestVector, held_out: float = 0.37) -> dict:
    """
    z ↦ SΦ(zη + ζ) is a polynomial of degree ≤ n_max: interpolate through
    n_max+1 Chebyshev nodes and compare at a held-out point.
    """
    deg = c.n_max
    nodes = np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1))
    base, direction = _embed(c, zeta), _embed(c, eta)
    vals = s_transform_batch(c, base[None, :] + nodes[:, None] * direction[None, :]).reshape(deg + 1, -1)
    V = np.vander(nodes, deg + 1, increasing=True)
    coeffs = np.linalg.solve(V, vals)
    predicted = np.vander(np.array([held_out]), deg + 1, increasing=True) @ coeffs
    actual = s_transform_batch(c, base + held_out * direction).reshape(1, -1)
    gap = float(np.max(np.abs(predicted - actual)))
    scale = max(1.0, float(np.max(np.abs(actual))))
    return {"gap": gap, "degree": deg, "verdict": "pass" if gap <= 1e-10 * scale else "fail"}
