"""
chaos.py  ·  Truncated Fock algebra and Malliavin calculus
───────────────────────────────────────────────────────────
Symmetric tensors over the finite basis {l_j ⊗ p_μ : j = 0..J, μ = 1..d} of
H = L2([0,1], R^d), chaos vectors Ψ = Σ I_n(F^n), contractions, Malliavin
derivatives and the Malliavin Lévy Laplacian on chaos coefficients.

Storage convention
──────────────────
A basis pair (j, μ) is flattened to a = j·d + (μ−1). A rank-n tensor stores,
for each sorted multiset S of n flat indices with multiplicities m, the
coefficient c_S in the orthonormal symmetrized basis

    ê_S = sqrt(n!/Πm!) · Sym(e_{a1} ⊗ … ⊗ e_{an})

so |F|² = Σ|c_S|² and every raw coordinate of S equals c_S·sqrt(Πm!/n!).
With this storage

    I_n(ê_S) = sqrt(n!/Πm!) Π_a He_{m_a}(ζ_a)          (probabilists' Hermite)
    E‖Ψ‖²    = Σ_n n!·|F^n|²
    ∂_h Ψ    = Σ_n n·I_{n−1}(F^n ⊗̂₁ ḣ)

Values are complex scalars, or N×N complex matrices when gauge is set.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from itertools import combinations, permutations
from typing import Mapping

import numpy as np
from scipy.special import eval_hermitenorm

from errors import InputError, RankError, TruncationError, UnsupportedCombinationError
from levy_core import CesaroSeries, cesaro_estimate, cesaro_from_terms
from paths_basis import PathCoeffs, d_isomorphism

logger = logging.getLogger(__name__)

# ──────────────────────────────────────────────
# CONSTANTS
# ──────────────────────────────────────────────

DEFAULT_J = 16
DEFAULT_N_MAX = 4
DEFAULT_D = 2
RANDOM_KEYS_PER_LEVEL = 32
PARSEVAL_SAMPLES = 100_000
PARSEVAL_WORKERS = 4

Key = tuple[int, ...]


# ──────────────────────────────────────────────
# MULTISET HELPERS
# ──────────────────────────────────────────────

def flat_index(j: int, mu: int, d: int) -> int:
    return j * d + (mu - 1)


def basis_pair(a: int, d: int) -> tuple[int, int]:
    return a // d, a % d + 1


def multiplicities(key: Key) -> Counter:
    return Counter(key)


def multiplicity_factorial(key: Key) -> int:
    return math.prod(math.factorial(m) for m in Counter(key).values())


def raw_factor(key: Key) -> float:
    """Raw coordinate of ê_S at any ordering of S: sqrt(Πm!/n!)."""
    return math.sqrt(multiplicity_factorial(key) / math.factorial(len(key)))


def _sub_multisets(key: Key, k: int) -> set[Key]:
    return set(combinations(key, k))


def multiset_minus(key: Key, sub: Key) -> Key:
    rest = Counter(key)
    rest.subtract(sub)
    return tuple(sorted(rest.elements()))


def _union(a: Key, b: Key) -> Key:
    return tuple(sorted(a + b))


# ──────────────────────────────────────────────
# SYMMETRIC TENSORS
# ──────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class SymTensor:
    rank: int
    J: int
    d: int
    entries: Mapping[Key, object] = field(default_factory=dict)
    gauge: int | None = None

    def __post_init__(self):
        size = (self.J + 1) * self.d
        clean = {}
        for key, value in self.entries.items():
            key = tuple(sorted(int(a) for a in key))
            if len(key) != self.rank:
                raise RankError(f"key {key} does not have rank {self.rank}")
            if key and not 0 <= key[0] <= key[-1] < size:
                raise TruncationError(f"key {key} outside the basis of size {size}")
            value = np.asarray(value, dtype=complex)
            if self.gauge is None and value.shape != ():
                raise InputError("scalar tensor received a matrix value")
            if self.gauge is not None and value.shape != (self.gauge, self.gauge):
                raise InputError(f"expected {self.gauge}×{self.gauge} values")
            if np.any(value != 0):
                clean[key] = clean.get(key, 0) + value
        object.__setattr__(self, "entries", clean)

    @property
    def size(self) -> int:
        return (self.J + 1) * self.d

    @property
    def value_shape(self) -> tuple:
        return () if self.gauge is None else (self.gauge, self.gauge)

    def zero_value(self):
        return np.zeros(self.value_shape, dtype=complex)

    def norm_sq(self) -> float:
        return float(sum(np.sum(np.abs(v) ** 2) for v in self.entries.values()))

    def norm(self) -> float:
        return math.sqrt(self.norm_sq())

    def scaled(self, factor) -> "SymTensor":
        return SymTensor(self.rank, self.J, self.d,
                         {k: factor * v for k, v in self.entries.items()}, self.gauge)

    def plus(self, other: "SymTensor") -> "SymTensor":
        _check_compatible(self, other)
        if self.rank != other.rank:
            raise RankError(f"cannot add ranks {self.rank} and {other.rank}")
        merged = dict(self.entries)
        for k, v in other.entries.items():
            merged[k] = merged.get(k, 0) + v
        return SymTensor(self.rank, self.J, self.d, merged, self.gauge)

    @classmethod
    def unit(cls, pairs: list[tuple[int, int]], J: int, d: int, value=1.0) -> "SymTensor":
        """Coefficient `value` on the multiset of basis pairs (j, μ)."""
        key = tuple(sorted(flat_index(j, mu, d) for j, mu in pairs))
        return cls(len(key), J, d, {key: value})

    @classmethod
    def vector(cls, coeffs: Mapping[tuple[int, int], float], J: int, d: int) -> "SymTensor":
        """Rank-1 tensor from {(j, μ): value}."""
        for j, mu in coeffs:
            if not 0 <= j <= J:
                raise TruncationError(f"basis index j={j} beyond truncation J={J}")
        return cls(1, J, d, {(flat_index(j, mu, d),): v for (j, mu), v in coeffs.items()})


def _check_compatible(a: SymTensor, b: SymTensor) -> None:
    if (a.J, a.d) != (b.J, b.d):
        raise InputError(f"tensor bases differ: (J, d) = {(a.J, a.d)} vs {(b.J, b.d)}")


def _result_gauge(a: SymTensor, b: SymTensor) -> int | None:
    if a.gauge is not None and b.gauge is not None:
        raise UnsupportedCombinationError("cannot multiply two matrix-valued tensors")
    return a.gauge if a.gauge is not None else b.gauge


def sym_product(F: SymTensor, f: SymTensor) -> SymTensor:
    """F ⊗̂ f, rank n + k."""
    _check_compatible(F, f)
    gauge = _result_gauge(F, f)
    n, k = F.rank, f.rank
    norm = math.comb(n + k, n)
    raw: dict[Key, object] = defaultdict(complex)
    for A, a_val in F.entries.items():
        a_raw = a_val * raw_factor(A)
        mA = Counter(A)
        for B, b_val in f.entries.items():
            T = _union(A, B)
            mT = Counter(T)
            weight = math.prod(math.comb(mT[x], mA[x]) for x in mT) / norm
            raw[T] = raw[T] + a_raw * (b_val * raw_factor(B)) * weight
    return SymTensor(n + k, F.J, F.d, {T: v / raw_factor(T) for T, v in raw.items()}, gauge)


def contract(F: SymTensor, f: SymTensor) -> SymTensor:
    """
    F ⊗̂_k f, rank n − k: the adjoint of h ↦ h ⊗̂ f, i.e.
    ⟨F, h ⊗̂ f⟩ = ⟨F ⊗̂_k f, h⟩ for every h.
    """
    _check_compatible(F, f)
    if f.gauge is not None:
        raise UnsupportedCombinationError("contraction needs a scalar-valued right operand")
    n, k = F.rank, f.rank
    if k > n:
        raise RankError(f"cannot contract rank {n} with rank {k}")
    raw: dict[Key, object] = defaultdict(complex)
    f_raw = {B: v * raw_factor(B) for B, v in f.entries.items()}
    tuples_per = {B: math.factorial(k) / multiplicity_factorial(B) for B in f.entries}
    for S, s_val in F.entries.items():
        s_raw = s_val * raw_factor(S)
        for B in _sub_multisets(S, k):
            if B not in f_raw:
                continue
            C = multiset_minus(S, B)
            raw[C] = raw[C] + tuples_per[B] * s_raw * f_raw[B]
    return SymTensor(n - k, F.J, F.d, {C: v / raw_factor(C) for C, v in raw.items()}, F.gauge)


def pair(F: SymTensor, G: SymTensor):
    """Bilinear pairing ⟨F, G⟩ = Σ_S c_S g_S (no conjugation)."""
    _check_compatible(F, G)
    _result_gauge(F, G)
    if F.rank != G.rank:
        raise RankError(f"cannot pair ranks {F.rank} and {G.rank}")
    shape = F.value_shape if F.gauge is not None else G.value_shape
    total = np.zeros(shape, dtype=complex)
    for key, v in F.entries.items():
        if key in G.entries:
            total = total + v * G.entries[key]
    return total


def tensor_power(f: SymTensor, n: int) -> SymTensor:
    out = SymTensor(0, f.J, f.d, {(): 1.0})
    for _ in range(n):
        out = sym_product(out, f)
    return out


def to_dense(F: SymTensor) -> np.ndarray:
    """Raw coordinates, shape (size,)*rank + value shape."""
    out = np.zeros((F.size,) * F.rank + F.value_shape, dtype=complex)
    for key, v in F.entries.items():
        r = v * raw_factor(key)
        for idx in set(permutations(key)):
            out[idx] = r
    return out


# ──────────────────────────────────────────────
# CHAOS VECTORS
# ──────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class ChaosVector:
    levels: tuple
    J: int
    d: int
    gauge: int | None = None

    def __post_init__(self):
        for n, level in enumerate(self.levels):
            if level.rank != n:
                raise RankError(f"level {n} holds a rank-{level.rank} tensor")
            if (level.J, level.d, level.gauge) != (self.J, self.d, self.gauge):
                raise InputError(f"level {n} does not match (J, d, N) of the vector")

    @property
    def n_max(self) -> int:
        return len(self.levels) - 1

    @property
    def size(self) -> int:
        return (self.J + 1) * self.d

    @property
    def value_shape(self) -> tuple:
        return () if self.gauge is None else (self.gauge, self.gauge)

    @classmethod
    def from_levels(cls, levels: list[SymTensor]) -> "ChaosVector":
        first = levels[0]
        return cls(tuple(levels), first.J, first.d, first.gauge)

    @classmethod
    def zeros(cls, n_max: int, J: int, d: int, gauge: int | None = None) -> "ChaosVector":
        return cls(tuple(SymTensor(n, J, d, {}, gauge) for n in range(n_max + 1)), J, d, gauge)

    def fock_norm_sq(self) -> float:
        return float(sum(math.factorial(n) * lvl.norm_sq() for n, lvl in enumerate(self.levels)))

    def scaled(self, factor) -> "ChaosVector":
        return ChaosVector(tuple(l.scaled(factor) for l in self.levels), self.J, self.d, self.gauge)

    def plus(self, other: "ChaosVector") -> "ChaosVector":
        top = max(self.n_max, other.n_max)
        a, b = self.padded(top), other.padded(top)
        return ChaosVector(tuple(x.plus(y) for x, y in zip(a.levels, b.levels)), self.J, self.d, self.gauge)

    def padded(self, n_max: int) -> "ChaosVector":
        extra = tuple(SymTensor(n, self.J, self.d, {}, self.gauge) for n in range(self.n_max + 1, n_max + 1))
        return ChaosVector(self.levels + extra, self.J, self.d, self.gauge)

    def max_j(self) -> int:
        return max((a // self.d for lvl in self.levels for key in lvl.entries for a in key), default=-1)

    def to_json(self) -> str:
        return json.dumps({
            "J": self.J,
            "d": self.d,
            "N": 1 if self.gauge is None else self.gauge,
            "levels": [{
                "rank": lvl.rank,
                "entries": [{
                    "multiset": [list(basis_pair(a, self.d)) for a in key],
                    "value": [[float(z.real), float(z.imag)] for z in np.ravel(v)],
                } for key, v in sorted(lvl.entries.items())],
            } for lvl in self.levels],
        })

    @classmethod
    def from_json(cls, text: str) -> "ChaosVector":
        try:
            data = json.loads(text)
            J, d, N = int(data["J"]), int(data["d"]), int(data.get("N", 1))
            gauge = None if N == 1 else N
            levels = []
            for n, lvl in enumerate(data["levels"]):
                entries = {}
                for e in lvl["entries"]:
                    key = tuple(flat_index(int(j), int(mu), d) for j, mu in e["multiset"])
                    vals = np.array([complex(re, im) for re, im in e["value"]])
                    entries[key] = vals[0] if gauge is None else vals.reshape(N, N)
                levels.append(SymTensor(int(lvl.get("rank", n)), J, d, entries, gauge))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed chaos JSON: {exc}") from exc
        return cls(tuple(levels), J, d, gauge)


# ──────────────────────────────────────────────
# PRESETS
# ──────────────────────────────────────────────

def constant_chaos(value=1.0, J: int = DEFAULT_J, d: int = DEFAULT_D, n_max: int = DEFAULT_N_MAX) -> ChaosVector:
    out = ChaosVector.zeros(n_max, J, d)
    return ChaosVector((SymTensor(0, J, d, {(): value}),) + out.levels[1:], J, d)


def diagonal_chaos(J: int = DEFAULT_J, d: int = DEFAULT_D, n_max: int = 2) -> ChaosVector:
    """F² = Σ_{k≤J} (1/(2π²k²))·(l_k⊗p₁)⊗̂(l_k⊗p₁); every direction term equals 1."""
    entries = {(flat_index(k, 1, d),) * 2: 1.0 / (2.0 * math.pi ** 2 * k ** 2) for k in range(1, J + 1)}
    levels = list(ChaosVector.zeros(max(n_max, 2), J, d).levels)
    levels[2] = SymTensor(2, J, d, entries)
    return ChaosVector(tuple(levels), J, d)


def random_tensor(rng: np.random.Generator, rank: int, J: int, d: int,
                  keys: int = RANDOM_KEYS_PER_LEVEL, gauge: int | None = None,
                  max_j: int | None = None) -> SymTensor:
    """Sparse random tensor with standard complex Gaussian coefficients."""
    size = ((J if max_j is None else max_j) + 1) * d
    shape = () if gauge is None else (gauge, gauge)
    entries = {}
    for _ in range(1 if rank == 0 else keys):
        key = tuple(sorted(rng.integers(0, size, rank).tolist()))
        entries[key] = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return SymTensor(rank, J, d, entries, gauge)


def random_chaos(seed: int, J: int = DEFAULT_J, d: int = DEFAULT_D, n_max: int = DEFAULT_N_MAX,
                 keys_per_level: int = RANDOM_KEYS_PER_LEVEL, gauge: int | None = None,
                 max_j: int | None = None, diagonal_decay: float | None = None) -> ChaosVector:
    """
    Sparse random chaos; level n has coefficients of size ~ 1/n!. With
    `diagonal_decay` set, level 2 also gets a Gaussian coefficient on every
    diagonal key (a, a), scaled by (j+1)^−decay, so every direction k ≤ J
    carries a second-derivative term; `max_j` bounds the sparse keys only.
    """
    rng = np.random.default_rng(seed)
    levels = [random_tensor(rng, n, J, d, keys_per_level, gauge, max_j).scaled(1.0 / math.factorial(n))
              for n in range(n_max + 1)]
    if diagonal_decay is not None and n_max >= 2:
        shape = () if gauge is None else (gauge, gauge)
        diag = {}
        for a in range((J + 1) * d):
            weight = 0.5 * (a // d + 1.0) ** -diagonal_decay
            diag[(a, a)] = weight * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        levels[2] = levels[2].plus(SymTensor(2, J, d, diag, gauge))
    return ChaosVector(tuple(levels), J, d, gauge)


CHAOS_PRESETS = {
    "constant": constant_chaos,
    "diagonal": diagonal_chaos,
    "random": random_chaos,
}


def preset_chaos(name: str, **params) -> ChaosVector:
    if name not in CHAOS_PRESETS:
        raise InputError(f"unknown chaos preset '{name}'; choose from {sorted(CHAOS_PRESETS)}")
    return CHAOS_PRESETS[name](**params)


# ──────────────────────────────────────────────
# MALLIAVIN CALCULUS
# ──────────────────────────────────────────────

def velocity_tensor(h: PathCoeffs, J: int) -> SymTensor:
    """ḣ as a rank-1 tensor over l_k ⊗ p_μ (coefficient πk·c_{k,μ})."""
    lc = d_isomorphism(h)
    too_far = [k for k, _ in lc if k > J]
    if too_far:
        raise TruncationError(f"direction index {max(too_far)} exceeds truncation J={J}")
    return SymTensor.vector(lc, J, h.dim)


def malliavin_derivative(c: ChaosVector, h: PathCoeffs) -> ChaosVector:
    """∂_hΨ: level n−1 receives n·F^n ⊗̂₁ ḣ. Keeps n_max."""
    if h.dim != c.d:
        raise InputError(f"direction dimension {h.dim} does not match d={c.d}")
    hv = velocity_tensor(h, c.J)
    levels = [contract(F, hv).scaled(n) for n, F in enumerate(c.levels) if n >= 1]
    levels.append(SymTensor(c.n_max, c.J, c.d, {}, c.gauge))
    return ChaosVector(tuple(levels), c.J, c.d, c.gauge)


def directional_second_derivative(c: ChaosVector, k: int, mu: int) -> ChaosVector:
    """∂²_{p_μh_k}Ψ."""
    h = PathCoeffs.unit(k, mu, c.d)
    return malliavin_derivative(malliavin_derivative(c, h), h)


@dataclass(frozen=True, eq=False)
class ChaosLayout:
    """Union of keys over levels; flattened entries are scaled by sqrt(n!)."""

    keys: tuple
    J: int
    d: int
    gauge: int | None
    n_max: int

    @property
    def value_size(self) -> int:
        return 1 if self.gauge is None else self.gauge ** 2

    def flatten(self, c: ChaosVector) -> np.ndarray:
        out = np.zeros((len(self.keys), self.value_size), dtype=complex)
        index = {key: i for i, key in enumerate(self.keys)}
        for n, lvl in enumerate(c.levels):
            w = math.sqrt(math.factorial(n))
            for key, v in lvl.entries.items():
                out[index[key]] = w * np.ravel(v)
        return out.reshape(-1)

    def unflatten(self, vec: np.ndarray) -> ChaosVector:
        vec = np.asarray(vec).reshape(len(self.keys), self.value_size)
        per_level: list[dict] = [dict() for _ in range(self.n_max + 1)]
        for key, row in zip(self.keys, vec):
            n = len(key)
            v = row[0] if self.gauge is None else row.reshape(self.gauge, self.gauge)
            per_level[n][key] = v / math.sqrt(math.factorial(n))
        return ChaosVector(tuple(SymTensor(n, self.J, self.d, e, self.gauge) for n, e in enumerate(per_level)),
                           self.J, self.d, self.gauge)


@dataclass(frozen=True, eq=False)
class MalliavinLaplacianResult:
    series: CesaroSeries
    layout: ChaosLayout
    diagnostics: dict

    def partial(self, n: int) -> ChaosVector:
        """L_N as a chaos vector (1-based N)."""
        return self.layout.unflatten(self.series.partials[n - 1])


def malliavin_levy_laplacian(c: ChaosVector, n_max: int, tol: float = 1e-6) -> MalliavinLaplacianResult:
    """
    Cesàro partials of Σ_μ ∂²_{p_μh_k}Ψ over k ≤ N, measured in the Fock norm.
    Directions beyond the truncation J vanish identically and are refused.
    """
    if n_max > c.J:
        raise TruncationError(f"N_max={n_max} exceeds truncation J={c.J}; usable window is N ≤ {c.J}")
    terms = {(k, mu): directional_second_derivative(c, k, mu)
             for k in range(1, n_max + 1) for mu in range(1, c.d + 1)}
    keys = sorted({key for t in terms.values() for lvl in t.levels for key in lvl.entries},
                  key=lambda key: (len(key), key))
    # an all-zero result still needs one slot
    layout = ChaosLayout(tuple(keys) or ((),), c.J, c.d, c.gauge, c.n_max)
    flat = {kmu: layout.flatten(t) for kmu, t in terms.items()}
    if n_max >= 8:
        series = cesaro_estimate(lambda k, mu: flat[(k, mu)], 1.0, c.d, n_max, tol)
    else:
        rows = np.array([sum(flat[(k, mu)] for mu in range(1, c.d + 1)) for k in range(1, n_max + 1)])
        series = cesaro_from_terms(rows, 1.0, tol)
    support = c.max_j()
    diagnostics = {
        "usable_window": c.J,
        "keys": len(keys),
        "support_max_j": support,
        "tail_bound": float(np.max(np.arange(1, n_max + 1)[support:] *
                                   np.linalg.norm(series.partials[support:], axis=1), initial=0.0))
        if 0 <= support < n_max else None,
    }
    logger.debug("malliavin laplacian: %d directions, %d keys", n_max * c.d, len(keys))
    return MalliavinLaplacianResult(series, layout, diagnostics)


# ──────────────────────────────────────────────
# EVALUATION
# ──────────────────────────────────────────────

def _zeta_array(c: ChaosVector, zeta) -> np.ndarray:
    if isinstance(zeta, Mapping):
        arr = np.full(c.size, np.nan)
        for (j, mu), x in zeta.items():
            if 0 <= j <= c.J and 1 <= mu <= c.d:
                arr[flat_index(j, mu, c.d)] = x
        zeta = arr
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape[-1] != c.size:
        raise InputError(f"zeta must have {c.size} coordinates, got {zeta.shape[-1]}")
    used = sorted({a for lvl in c.levels for key in lvl.entries for a in key})
    if used and np.any(np.isnan(zeta[..., used])):
        missing = [basis_pair(a, c.d) for a in used if np.any(np.isnan(zeta[..., a]))]
        raise InputError(f"zeta is missing coordinates {missing}")
    return zeta


def evaluate_chaos(c: ChaosVector, zeta) -> np.ndarray:
    """
    Ψ at Gaussian coordinates ζ: Σ c_S sqrt(n!/Πm!) Π He_{m_a}(ζ_a).
    zeta is a {(j, μ): x} map, a vector of length (J+1)·d, or a batch (S, (J+1)·d).
    """
    z = _zeta_array(c, zeta)
    batch = z.reshape(-1, c.size)
    he = np.stack([eval_hermitenorm(m, batch) for m in range(c.n_max + 1)])
    out = np.zeros((len(batch),) + c.value_shape, dtype=complex)
    for n, lvl in enumerate(c.levels):
        for key, v in lvl.entries.items():
            mult = Counter(key)
            prod = np.ones(len(batch))
            for a, m in mult.items():
                prod = prod * he[m, :, a]
            coef = math.sqrt(math.factorial(n) / multiplicity_factorial(key))
            out += coef * np.multiply.outer(prod, v)
    return out.reshape(z.shape[:-1] + c.value_shape)


def parseval_mc(c: ChaosVector, samples: int = PARSEVAL_SAMPLES, seed: int = 0,
                workers: int = PARSEVAL_WORKERS) -> dict:
    """Monte Carlo E‖Ψ‖² against Σ n!|F^n|², one RNG stream per worker."""
    streams = np.random.SeedSequence(seed).spawn(workers)
    per = [samples // workers + (1 if i < samples % workers else 0) for i in range(workers)]
    values = []
    for ss, count in zip(streams, per):
        rng = np.random.default_rng(ss)
        vals = evaluate_chaos(c, rng.standard_normal((count, c.size)))
        values.append(np.sum(np.abs(vals.reshape(count, -1)) ** 2, axis=1))
    sq = np.concatenate(values)
    mean = float(np.mean(sq))
    se = float(np.std(sq, ddof=1) / math.sqrt(len(sq)))
    exact = c.fock_norm_sq()
    z = abs(mean - exact) / se if se > 0 else (0.0 if mean == exact else math.inf)
    return {"mean": mean, "se": se, "exact": exact, "z": z,
            "verdict": "pass" if z <= 3.0 else "fail"}
