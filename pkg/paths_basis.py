"""
paths_basis.py  ·  Trigonometric bases and Cameron–Martin paths
────────────────────────────────────────────────────────────────
Two orthonormal bases of L2([0,1], R):

    sine     h_n(t) = √2 sin(πnt),  n ≥ 1
    cosine   l_0(t) = 1,  l_n(t) = √2 cos(πnt),  n ≥ 1

A path γ ∈ W^{1,2}_0([0,1], R^d) is stored by its coefficients over h_k ⊗ p_μ:

    γ^μ(t) = Σ_k c_{k,μ} h_k(t)

so γ(0) = γ(1) = 0 and the Cameron–Martin norm is ‖γ‖² = Σ π²k² c_{k,μ}².
The πk factor is the whole content of the D isomorphism: ḣ_k = πk·l_k.

Public (k, μ) indices are 1-based, matching the JSON format [[k, μ, c], ...].
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from errors import DomainError, InputError

logger = logging.getLogger(__name__)

SINE = "sine"
COSINE = "cosine"
FAMILIES = (SINE, COSINE)

SQRT2 = math.sqrt(2.0)
ORTHO_POINTS = 2048

# ──────────────────────────────────────────────
# BASIS EVALUATION
# ──────────────────────────────────────────────


@dataclass(frozen=True)
class BasisId:
    family: str = SINE

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown basis family '{self.family}'; choose from {FAMILIES}")

    @property
    def first_index(self) -> int:
        return 1 if self.family == SINE else 0


def _check_time(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > 1.0):
        raise DomainError("time must lie in [0, 1]")
    return t


def eval_basis(basis: BasisId, n: int, t):
    """e_n(t) for the chosen family. Scalars in, scalar out; arrays broadcast."""
    t = _check_time(t)
    if n < basis.first_index:
        raise DomainError(f"{basis.family} index must be ≥ {basis.first_index}, got {n}")
    if basis.family == SINE:
        out = SQRT2 * np.sin(math.pi * n * t)
    elif n == 0:
        out = np.ones_like(t)
    else:
        out = SQRT2 * np.cos(math.pi * n * t)
    return float(out) if out.ndim == 0 else out


def sine_table(k_max: int, t) -> np.ndarray:
    """h_k(t) for k = 1..k_max, shape (k_max, len(t))."""
    t = np.asarray(t, dtype=float)
    k = np.arange(1, k_max + 1)[:, None]
    return SQRT2 * np.sin(math.pi * k * t[None, :])


def cosine_table(k_max: int, t) -> np.ndarray:
    """l_k(t) for k = 1..k_max, shape (k_max, len(t))."""
    t = np.asarray(t, dtype=float)
    k = np.arange(1, k_max + 1)[:, None]
    return SQRT2 * np.cos(math.pi * k * t[None, :])


def orthonormality_defect(basis: BasisId, n: int, points: int = ORTHO_POINTS) -> float:
    """max |∫ e_j e_k dt − δ_jk| over the first n members, by the midpoint rule."""
    t = (np.arange(points) + 0.5) / points
    first = basis.first_index
    rows = np.array([eval_basis(basis, j, t) for j in range(first, first + n)])
    gram = rows @ rows.T / points
    return float(np.max(np.abs(gram - np.eye(n))))


# ──────────────────────────────────────────────
# PATHS
# ──────────────────────────────────────────────


@dataclass(frozen=True)
class PathCoeffs:
    """Finitely supported sine coefficients {(k, μ): c_{k,μ}} of a path in R^d."""

    dim: int
    coeffs: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (k, mu), c in self.coeffs.items():
            if k < 1 or not 1 <= mu <= self.dim:
                raise InputError(f"path coefficient index ({k}, {mu}) out of range for d={self.dim}")
            if not math.isfinite(c):
                raise InputError(f"path coefficient ({k}, {mu}) is not finite")
            if c != 0.0:
                clean[(int(k), int(mu))] = float(c)
        object.__setattr__(self, "coeffs", clean)

    @classmethod
    def unit(cls, k: int, mu: int, dim: int) -> "PathCoeffs":
        return cls(dim, {(k, mu): 1.0})

    @property
    def k_max(self) -> int:
        return max((k for k, _ in self.coeffs), default=0)

    def as_array(self, k_max: int | None = None) -> np.ndarray:
        """Dense (k_max, d) coefficient array, row k−1 holding c_{k,·}."""
        k_max = self.k_max if k_max is None else k_max
        out = np.zeros((k_max, self.dim))
        for (k, mu), c in self.coeffs.items():
            if k <= k_max:
                out[k - 1, mu - 1] = c
        return out

    def plus(self, other: "PathCoeffs", scale: float = 1.0) -> "PathCoeffs":
        merged = dict(self.coeffs)
        for key, c in other.coeffs.items():
            merged[key] = merged.get(key, 0.0) + scale * c
        return PathCoeffs(self.dim, merged)

    def to_json(self) -> str:
        return json.dumps([[k, mu, c] for (k, mu), c in sorted(self.coeffs.items())])

    @classmethod
    def from_json(cls, text: str, dim: int | None = None) -> "PathCoeffs":
        try:
            rows = [(int(k), int(mu), float(c)) for k, mu, c in json.loads(text)]
        except (TypeError, ValueError) as exc:
            raise InputError(f"path JSON must be a list of [k, mu, c]: {exc}") from exc
        if dim is None:
            dim = max((mu for _, mu, _ in rows), default=1)
        return cls(dim, {(k, mu): c for k, mu, c in rows})


def path_eval(p: PathCoeffs, t) -> np.ndarray:
    """γ(t), shape (..., d). γ(0) = 0 exactly."""
    t = _check_time(t)
    if not p.coeffs:
        return np.zeros(t.shape + (p.dim,))
    c = p.as_array()
    table = sine_table(len(c), t.reshape(-1))
    return (table.T @ c).reshape(t.shape + (p.dim,))


def path_velocity(p: PathCoeffs, t) -> np.ndarray:
    """γ̇(t) = Σ c_{k,μ} πk l_k(t), shape (..., d)."""
    t = _check_time(t)
    if not p.coeffs:
        return np.zeros(t.shape + (p.dim,))
    c = p.as_array()
    k = np.arange(1, len(c) + 1)
    table = cosine_table(len(c), t.reshape(-1)) * (math.pi * k)[:, None]
    return (table.T @ c).reshape(t.shape + (p.dim,))


def path_norm_sq(p: PathCoeffs) -> float:
    return float(sum((math.pi * k * c) ** 2 for (k, _), c in p.coeffs.items()))


# ──────────────────────────────────────────────
# D ISOMORPHISM
# ──────────────────────────────────────────────

def d_isomorphism(p: PathCoeffs) -> dict[tuple[int, int], float]:
    """h-coefficients of γ → l-coefficients of γ̇ (c ↦ πk·c). l_0 is never hit."""
    return {(k, mu): math.pi * k * c for (k, mu), c in p.coeffs.items()}


def inverse_d_isomorphism(l_coeffs: Mapping[tuple[int, int], float], dim: int) -> PathCoeffs:
    """Inverse of d_isomorphism on the orthogonal complement of the constants."""
    out = {}
    for (k, mu), v in l_coeffs.items():
        if k == 0:
            if v != 0.0:
                raise DomainError("l_0 component has no preimage under D")
            continue
        out[(k, mu)] = v / (math.pi * k)
    return PathCoeffs(dim, out)


# ──────────────────────────────────────────────
# WEAK UNIFORM DENSITY
# ──────────────────────────────────────────────

def _sin2pi(x: np.ndarray) -> np.ndarray:
    """sin(2πx), exact at quarter-period points."""
    frac = np.mod(x, 1.0)
    out = np.sin(2.0 * math.pi * frac)
    out = np.where((frac == 0.0) | (frac == 0.5), 0.0, out)
    out = np.where(frac == 0.25, 1.0, out)
    return np.where(frac == 0.75, -1.0, out)


def weak_density_defect(basis: BasisId, n: int,
                        pieces: Sequence[tuple[float, float, float]]) -> float:
    """
    ∫ h(t)·((1/n)Σ_{k≤n} e_k(t)² − 1) dt for a step function h given as
    (a, b, value) pieces on [0, 1].

    Uses ∫_a^b 2sin²(πkt) dt = (b−a) − [sin 2πkb − sin 2πka]/(2πk) and the
    matching cosine identity; the cosine family is enumerated e_k = l_{k−1}.
    """
    if not pieces:
        raise InputError("step function needs at least one piece")
    if n < 1:
        raise InputError("n must be ≥ 1")
    if basis.family == SINE:
        k = np.arange(1, n + 1, dtype=float)
        sign = -1.0
    else:
        k = np.arange(1, n, dtype=float)  # l_0² = 1 contributes nothing
        sign = 1.0
    total = 0.0
    for a, b, value in pieces:
        if not 0.0 <= a <= b <= 1.0:
            raise InputError(f"piece [{a}, {b}] is not inside [0, 1]")
        if value == 0.0 or a == b or len(k) == 0:
            continue
        osc = (_sin2pi(k * b) - _sin2pi(k * a)) / (2.0 * math.pi * k)
        total += value * sign * float(np.sum(osc)) / n
    return total


# ──────────────────────────────────────────────
# PRESETS
# ──────────────────────────────────────────────

PATH_PRESETS: dict[str, dict[tuple[int, int], float]] = {
    "gf-test": {(1, 1): 1.0, (2, 2): 0.5},
    "straight": {(1, 1): 1.0},
    "zero": {},
    "wiggle": {(1, 1): 0.8, (2, 2): 0.4, (3, 1): -0.3, (3, 2): 0.2},
    "loop": {(1, 1): 0.6, (2, 2): 0.6},
    # Volterra residual ~ c²/N: constant-abelian stays under 1e-3 at N=200
    "small": {(1, 1): 0.1},
}

STEP_PRESETS: dict[str, list[tuple[float, float, float]]] = {
    "one": [(0.0, 1.0, 1.0)],
    "zero": [(0.0, 1.0, 0.0)],
    "half": [(0.0, 0.5, 1.0)],
    "third": [(0.0, 1.0 / 3.0, 1.0)],
}


def preset_path(name: str, dim: int = 2) -> PathCoeffs:
    if name not in PATH_PRESETS:
        raise InputError(f"unknown path preset '{name}'; choose from {sorted(PATH_PRESETS)}")
    return PathCoeffs(dim, PATH_PRESETS[name])


def random_path(seed: int, dim: int = 2, k_max: int = 3, scale: float = 0.5) -> PathCoeffs:
    """Smooth random path with coefficients decaying like 1/k."""
    rng = np.random.default_rng(seed)
    c = scale * rng.standard_normal((k_max, dim)) / np.arange(1, k_max + 1)[:, None]
    return PathCoeffs(dim, {(k + 1, mu + 1): float(c[k, mu])
                            for k in range(k_max) for mu in range(dim)})
