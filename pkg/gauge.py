"""
gauge.py  ·  Gauge fields on R^d
─────────────────────────────────
u(N)-valued connections on the trivial bundle R^d × C^N, their curvature,
covariant derivatives and Yang–Mills residuals.

Connections are stored as matrix-valued polynomials so that first and second
partial derivatives are exact. Opaque user functions are accepted through
FunctionField, which differentiates by central differences.

Index conventions
─────────────────
Greek indices are 0-based in code (μ = 0 … d−1). The metric is the Euclidean
identity, so ∇^μ = ∇_μ and F^{μν} = F_{μν}.

Builtin catalog
───────────────
zero                 A = 0
flat-abelian(a)      A_μ = i a_μ                       (flat, F = 0)
constant-abelian(β)  A_1 = 0, A_2 = iβx¹               (F_12 = iβ, Yang–Mills)
quadratic-abelian(β) A_1 = 0, A_2 = iβ(x¹)²/2          (∇^1F_12 = iβ, not YM)
su2-polynomial(seed) random su(2)-valued polynomial, degree ≤ 2
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from errors import CapabilityError, EvaluationError, InputError

logger = logging.getLogger(__name__)

# ──────────────────────────────────────────────
# CONSTANTS
# ──────────────────────────────────────────────

SKEW_TOL = 1e-12
FD_REL_STEP = 1e-5

PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)

# iσ_a/2 spans su(2)
SU2_BASIS = 0.5j * PAULI


# ──────────────────────────────────────────────
# MATRIX HELPERS
# ──────────────────────────────────────────────

def frobenius_inner(m1: np.ndarray, m2: np.ndarray) -> complex:
    """(M1, M2) = tr(M1 · M2*)."""
    return complex(np.trace(m1 @ np.conj(m2).T))


def frobenius_norm(m: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(m) ** 2)))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def is_skew_hermitian(m: np.ndarray, tol: float = SKEW_TOL) -> bool:
    return bool(np.max(np.abs(m + dagger(m)), initial=0.0) <= tol)


# ──────────────────────────────────────────────
# MATRIX FIELDS
# ──────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class PolyMatrixField:
    """
    Matrix-valued polynomial Σ_t coeffs[t] · Π_ν x_ν^exponents[t, ν].

    exponents: (T, d) non-negative ints, coeffs: (T, N, N) complex.
    """

    exponents: np.ndarray
    coeffs: np.ndarray
    dim_space: int
    dim_gauge: int

    max_order = None  # exact derivatives of every order

    @classmethod
    def from_terms(cls, terms: Sequence[tuple[Sequence[int], np.ndarray]],
                   dim_space: int, dim_gauge: int) -> "PolyMatrixField":
        if not terms:
            return cls.zero(dim_space, dim_gauge)
        exps = np.array([list(e) for e, _ in terms], dtype=int).reshape(-1, dim_space)
        mats = np.array([np.asarray(m, dtype=complex).reshape(dim_gauge, dim_gauge)
                         for _, m in terms])
        return cls(exps, mats, dim_space, dim_gauge)

    @classmethod
    def zero(cls, dim_space: int, dim_gauge: int) -> "PolyMatrixField":
        return cls(np.zeros((0, dim_space), dtype=int),
                   np.zeros((0, dim_gauge, dim_gauge), dtype=complex),
                   dim_space, dim_gauge)

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        n = self.dim_gauge
        if len(self.exponents) == 0:
            return np.zeros(lead + (n, n), dtype=complex)
        mono = np.prod(x[..., None, :] ** self.exponents, axis=-1)
        flat = mono.reshape(-1, len(self.exponents)) @ self.coeffs.reshape(len(self.exponents), n * n)
        return flat.reshape(lead + (n, n))

    def derivative(self, nu: int) -> "PolyMatrixField":
        keep = self.exponents[:, nu] > 0
        if not np.any(keep):
            return PolyMatrixField.zero(self.dim_space, self.dim_gauge)
        exps = self.exponents[keep].copy()
        factor = exps[:, nu].astype(float)
        exps[:, nu] -= 1
        coeffs = self.coeffs[keep] * factor[:, None, None]
        return PolyMatrixField(exps, coeffs, self.dim_space, self.dim_gauge)

    def conjugated(self, g: np.ndarray) -> "PolyMatrixField":
        """Coefficients replaced by g⁻¹ · c · g."""
        g_inv = np.linalg.inv(g)
        return PolyMatrixField(self.exponents, g_inv @ self.coeffs @ g,
                               self.dim_space, self.dim_gauge)

    def to_json(self) -> list:
        return [
            {"exponent": [int(e) for e in exp],
             "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in mat]}
            for exp, mat in zip(self.exponents, self.coeffs)
        ]

    @classmethod
    def from_json(cls, terms: list, dim_space: int, dim_gauge: int) -> "PolyMatrixField":
        parsed = []
        for term in terms:
            mat = np.array([[complex(re, im) for re, im in row] for row in term["matrix"]])
            parsed.append((term["exponent"], mat))
        return cls.from_terms(parsed, dim_space, dim_gauge)


@dataclass(frozen=True, eq=False)
class FunctionField:
    """
    Opaque matrix field x ↦ fn(x) with central-difference derivatives.

    max_order bounds how many nested derivatives may be requested.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    dim_space: int
    dim_gauge: int
    max_order: int = 2

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        pts = x.reshape(-1, self.dim_space)
        out = np.array([np.asarray(self.fn(p), dtype=complex) for p in pts])
        return out.reshape(lead + (self.dim_gauge, self.dim_gauge))

    def derivative(self, nu: int) -> "FunctionField":
        if self.max_order < 1:
            raise CapabilityError("opaque field has no derivative of the requested order")
        parent = self

        def d_fn(p: np.ndarray) -> np.ndarray:
            h = FD_REL_STEP * (1.0 + float(np.linalg.norm(p)))
            e = np.zeros(parent.dim_space)
            e[nu] = h
            return (parent.value(p + e) - parent.value(p - e)) / (2.0 * h)

        return FunctionField(d_fn, self.dim_space, self.dim_gauge, self.max_order - 1)


MatrixField = PolyMatrixField | FunctionField


# ──────────────────────────────────────────────
# CONNECTION
# ──────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class Connection:
    """A u(N)-valued 1-form A = A_μ dx^μ on R^d."""

    components: tuple
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def dim_space(self) -> int:
        return len(self.components)

    @property
    def dim_gauge(self) -> int:
        return self.components[0].dim_gauge

    @property
    def is_polynomial(self) -> bool:
        return all(isinstance(c, PolyMatrixField) for c in self.components)

    @classmethod
    def from_functions(cls, fns: Sequence[Callable], dim_gauge: int,
                       max_order: int = 2, name: str = "opaque") -> "Connection":
        d = len(fns)
        return cls(tuple(FunctionField(f, d, dim_gauge, max_order) for f in fns), name=name)

    def value(self, x) -> np.ndarray:
        """A_μ(x) stacked as (..., d, N, N)."""
        return np.stack([c.value(x) for c in self.components], axis=-3)

    @cached_property
    def first_derivatives(self) -> tuple:
        # [mu][nu] = ∂_mu A_nu
        return tuple(tuple(c.derivative(mu) for c in self.components)
                     for mu in range(self.dim_space))

    @cached_property
    def second_derivatives(self) -> tuple:
        # [mu][rho][nu] = ∂_mu ∂_rho A_nu
        try:
            return tuple(tuple(tuple(f.derivative(mu) for f in row)
                               for row in self.first_derivatives)
                         for mu in range(self.dim_space))
        except CapabilityError as exc:
            raise CapabilityError(f"connection '{self.name}' lacks second derivatives") from exc

    def conjugated(self, g: np.ndarray) -> "Connection":
        """The globally gauge-transformed connection g⁻¹ A g (g constant)."""
        if not self.is_polynomial:
            raise CapabilityError("gauge conjugation needs a polynomial connection")
        return Connection(tuple(c.conjugated(g) for c in self.components),
                          name=f"{self.name}^g", params=dict(self.params))

    def is_skew_hermitian(self, points: np.ndarray, tol: float = SKEW_TOL) -> bool:
        return is_skew_hermitian(self.value(points), tol)

    def to_json(self) -> str:
        if not self.is_polynomial:
            raise CapabilityError("only polynomial connections serialize")
        return json.dumps({
            "name": self.name,
            "dim_space": self.dim_space,
            "dim_gauge": self.dim_gauge,
            "components": [c.to_json() for c in self.components],
        })

    @classmethod
    def from_json(cls, text: str) -> "Connection":
        data = json.loads(text)
        try:
            d, n = int(data["dim_space"]), int(data["dim_gauge"])
            comps = tuple(PolyMatrixField.from_json(t, d, n) for t in data["components"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed connection JSON: {exc}") from exc
        if len(comps) != d:
            raise InputError(f"expected {d} components, got {len(comps)}")
        return cls(comps, name=data.get("name", "custom"))


# ──────────────────────────────────────────────
# CURVATURE AND COVARIANT DERIVATIVES
# ──────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class CurvatureValue:
    """F_{μν}(x) as a (d, d, N, N) array, antisymmetric in (μ, ν)."""

    F: np.ndarray

    def component(self, mu: int, nu: int) -> np.ndarray:
        return self.F[mu, nu]


def _checked(values: np.ndarray, component: int, what: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise EvaluationError(f"non-finite {what} in component {component}", component=component)
    return values


def _derivative_table(conn: Connection, x: np.ndarray) -> np.ndarray:
    """dA[..., mu, nu] = ∂_mu A_nu(x), shape (..., d, d, N, N)."""
    d = conn.dim_space
    rows = []
    for mu in range(d):
        rows.append(np.stack([
            _checked(conn.first_derivatives[mu][nu].value(x), nu, f"∂_{mu}A")
            for nu in range(d)
        ], axis=-3))
    return np.stack(rows, axis=-4)


def curvature_field(conn: Connection, x) -> np.ndarray:
    """
    F_{μν}(x) = ∂_μA_ν − ∂_νA_μ + [A_μ, A_ν] for a batch of points.

    Returns (..., d, d, N, N); only μ < ν is computed, the rest is filled by
    antisymmetry so F_{μν} + F_{νμ} = 0 holds exactly.
    """
    x = np.asarray(x, dtype=float)
    d = conn.dim_space
    a = conn.value(x)
    for mu in range(d):
        _checked(a[..., mu, :, :], mu, "A")
    da = _derivative_table(conn, x)
    F = np.zeros(x.shape[:-1] + (d, d, conn.dim_gauge, conn.dim_gauge), dtype=complex)
    for mu, nu in itertools.combinations(range(d), 2):
        f = (da[..., mu, nu, :, :] - da[..., nu, mu, :, :]
             + commutator(a[..., mu, :, :], a[..., nu, :, :]))
        F[..., mu, nu, :, :] = f
        F[..., nu, mu, :, :] = -f
    return F


def curvature(conn: Connection, x) -> CurvatureValue:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InputError("curvature point must be finite")
    return CurvatureValue(curvature_field(conn, x))


def covariant_derivative(conn: Connection, phi: MatrixField, x) -> np.ndarray:
    """∇_μφ(x) = ∂_μφ(x) + [A_μ(x), φ(x)], returned as (d, N, N)."""
    x = np.asarray(x, dtype=float)
    a = conn.value(x)
    p = phi.value(x)
    out = []
    for mu in range(conn.dim_space):
        dphi = _checked(phi.derivative(mu).value(x), mu, "∂φ")
        out.append(dphi + commutator(a[..., mu, :, :], p))
    return np.stack(out, axis=-3)


def covariant_curvature_terms(conn: Connection, x) -> np.ndarray:
    """
    T[..., μ, ν] = ∇_μF_{μν}(x) with no sum over μ, shape (..., d, d, N, N).

    ∂_μF_{μν} = ∂_μ∂_μA_ν − ∂_μ∂_νA_μ + [∂_μA_μ, A_ν] + [A_μ, ∂_μA_ν]
    """
    x = np.asarray(x, dtype=float)
    d = conn.dim_space
    second = conn.second_derivatives
    a = conn.value(x)
    da = _derivative_table(conn, x)
    F = curvature_field(conn, x)
    out = np.zeros(x.shape[:-1] + (d, d, conn.dim_gauge, conn.dim_gauge), dtype=complex)
    for mu, nu in itertools.permutations(range(d), 2):
        dd_nu = _checked(second[mu][mu][nu].value(x), nu, "∂∂A")
        dd_mu = _checked(second[mu][nu][mu].value(x), mu, "∂∂A")
        out[..., mu, nu, :, :] = (dd_nu - dd_mu
                                  + commutator(da[..., mu, mu, :, :], a[..., nu, :, :])
                                  + commutator(a[..., mu, :, :], da[..., mu, nu, :, :])
                                  + commutator(a[..., mu, :, :], F[..., mu, nu, :, :]))
    return out


def ym_divergence_field(conn: Connection, x) -> np.ndarray:
    """(∇^μF_{μν}(x))_ν for a batch of points, shape (..., d, N, N)."""
    return covariant_curvature_terms(conn, x).sum(axis=-4)


def ym_residual(conn: Connection, x) -> dict:
    """
    Yang–Mills residual at a point: components (∇^μF_{μν})_ν plus the
    aggregate Frobenius norm.
    """
    r = ym_divergence_field(conn, np.asarray(x, dtype=float))
    norm = frobenius_norm(r)
    return {"components": r, "norm": norm, "is_solution": norm <= 1e-10}


def field_strength_square(conn: Connection, x) -> np.ndarray:
    """Σ_{μν} F_{μν}F^{μν}(x), shape (..., N, N)."""
    F = curvature_field(conn, x)
    return np.einsum("...abij,...abjk->...ik", F, F)


# ──────────────────────────────────────────────
# CATALOG
# ──────────────────────────────────────────────

def _monomials(d: int, degree: int) -> list[tuple[int, ...]]:
    out = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), total):
            exp = [0] * d
            for i in combo:
                exp[i] += 1
            out.append(tuple(exp))
    return out


def zero_connection(d: int = 2, n: int = 1) -> Connection:
    comps = tuple(PolyMatrixField.zero(d, n) for _ in range(d))
    return Connection(comps, name="zero", params={"d": d, "n": n})


def flat_abelian(a: Sequence[float] = (1.0, 0.5)) -> Connection:
    d = len(a)
    comps = tuple(
        PolyMatrixField.from_terms([((0,) * d, np.array([[1j * a_mu]]))], d, 1)
        for a_mu in a
    )
    return Connection(comps, name="flat-abelian", params={"a": list(map(float, a))})


def constant_abelian(beta: float = 1.0) -> Connection:
    a1 = PolyMatrixField.zero(2, 1)
    a2 = PolyMatrixField.from_terms([((1, 0), np.array([[1j * beta]]))], 2, 1)
    return Connection((a1, a2), name="constant-abelian", params={"beta": float(beta)})


def quadratic_abelian(beta: float = 1.0) -> Connection:
    a1 = PolyMatrixField.zero(2, 1)
    a2 = PolyMatrixField.from_terms([((2, 0), np.array([[0.5j * beta]]))], 2, 1)
    return Connection((a1, a2), name="quadratic-abelian", params={"beta": float(beta)})


def su2_polynomial(seed: int = 0, d: int = 2, scale: float = 0.5) -> Connection:
    rng = np.random.default_rng(seed)
    comps = []
    for _ in range(d):
        terms = []
        for exp in _monomials(d, 2):
            c = scale * rng.standard_normal(3)
            terms.append((exp, np.tensordot(c, SU2_BASIS, axes=1)))
        comps.append(PolyMatrixField.from_terms(terms, d, 2))
    return Connection(tuple(comps), name="su2-polynomial",
                      params={"seed": int(seed), "d": d, "scale": float(scale)})


CATALOG: dict[str, Callable[..., Connection]] = {
    "zero": zero_connection,
    "flat-abelian": flat_abelian,
    "constant-abelian": constant_abelian,
    "quadratic-abelian": quadratic_abelian,
    "su2-polynomial": su2_polynomial,
}

CATALOG_NOTES = {
    "zero": "A = 0",
    "flat-abelian": "A_μ = i a_μ, flat",
    "constant-abelian": "A_2 = iβx¹, constant curvature, Yang–Mills solution",
    "quadratic-abelian": "A_2 = iβ(x¹)²/2, residual iβ in ν=2",
    "su2-polynomial": "random su(2) polynomial of degree ≤ 2",
}


def from_catalog(name: str, **params) -> Connection:
    if name not in CATALOG:
        raise InputError(f"unknown connection '{name}'; choose from {sorted(CATALOG)}")
    conn = CATALOG[name](**params)
    logger.debug("built connection %s with %s", name, params)
    return conn
