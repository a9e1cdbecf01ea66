"""
levy_core.py  ·  Order-s Cesàro engine
───────────────────────────────────────
Turns per-direction second derivatives q_{k,μ} into Lévy-Laplacian
estimates with power weights:

    L_N = (1/N) Σ_{k≤N} k^{1−s} q_k,         q_k = Σ_μ q_{k,μ}

plus the exotic chain (1/N^s) Σ_{k≤N} q_k and the check relating the two.

Values may be scalars, matrices or flattened coefficient vectors; every
reduction runs in ascending k, then μ, with compensated summation, so a
deterministic oracle gives bit-identical partials.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import pandas as pd

from errors import InputError, OrderError

logger = logging.getLogger(__name__)

# ──────────────────────────────────────────────
# CONSTANTS
# ──────────────────────────────────────────────

DEFAULT_TOL = 1e-6
MIN_TERMS = 8
WINDOW_FRACTION = 8

Oracle = Callable[[int, int], object]


# ──────────────────────────────────────────────
# COMPENSATED SUMMATION
# ──────────────────────────────────────────────

def kahan_cumsum(terms: np.ndarray) -> np.ndarray:
    """Cumulative sum along axis 0 with Kahan compensation, elementwise."""
    terms = np.asarray(terms)
    out = np.empty_like(terms)
    s = np.zeros_like(terms[0])
    c = np.zeros_like(terms[0])
    for i, e in enumerate(terms):
        y = e - c
        t = s + y
        c = (t - s) - y
        s = t
        out[i] = s
    return out


def _norm(x: np.ndarray) -> np.ndarray:
    """Frobenius norm over all trailing axes (absolute value for scalars)."""
    x = np.asarray(x)
    if x.ndim <= 1:
        return np.abs(x)
    return np.sqrt(np.sum(np.abs(x.reshape(len(x), -1)) ** 2, axis=1))


def window_size(n_max: int) -> int:
    return max(MIN_TERMS, n_max // WINDOW_FRACTION)


def windowed_deviation(partials: np.ndarray, window: int) -> float:
    """max over the last `window` partials of ‖L_N − L_{N_max}‖."""
    tail = np.asarray(partials)[-window:]
    return float(np.max(_norm(tail - tail[-1])))


# ──────────────────────────────────────────────
# CESÀRO SERIES
# ──────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class CesaroSeries:
    order_s: float
    terms: np.ndarray
    partials: np.ndarray
    tol: float
    window: int
    converged: bool
    deviation: float

    @property
    def n_max(self) -> int:
        return len(self.partials)

    @property
    def value(self) -> np.ndarray | None:
        return self.partials[-1] if self.converged else None

    @property
    def n_at(self) -> int | None:
        return self.n_max if self.converged else None

    @property
    def last(self) -> np.ndarray:
        return self.partials[-1]

    def verdict(self) -> dict:
        if self.converged:
            return {"label": "converged", "N_at": self.n_at, "deviation": self.deviation,
                    "explanation": f"last {self.window} partials within {self.tol:g} of L_{self.n_max}"}
        return {"label": "not_converged", "N_at": None, "deviation": self.deviation,
                "explanation": f"partials still move by {self.deviation:.3g} over the last {self.window} terms"}

    def running_gap(self) -> np.ndarray:
        """‖L_N − L_{N_max}‖ for every N."""
        return _norm(self.partials - self.partials[-1])

    def truncated(self, n: int) -> "CesaroSeries":
        return cesaro_from_terms(self.terms[:n], self.order_s, self.tol)

    def to_frame(self, project: Callable[[np.ndarray], complex] | None = None) -> pd.DataFrame:
        """One row per N: value_re, value_im, gap. Matrices project to (1/n)·trace."""
        project = project or _scalar_view
        vals = np.array([complex(project(p)) for p in self.partials])
        return pd.DataFrame({
            "N": np.arange(1, self.n_max + 1),
            "value_re": vals.real,
            "value_im": vals.imag,
            "gap": self.running_gap(),
        })

    def to_csv(self, path, project=None) -> None:
        self.to_frame(project).to_csv(path, index=False)

    def to_dict(self) -> dict:
        return {
            "order_s": self.order_s,
            "n_max": self.n_max,
            "tol": self.tol,
            "window": self.window,
            "verdict": self.verdict(),
            "partials": _complex_json(self.partials),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _scalar_view(x) -> complex:
    x = np.asarray(x)
    if x.ndim == 0:
        return complex(x)
    if x.ndim == 2 and x.shape[0] == x.shape[1]:
        return complex(np.trace(x) / x.shape[0])
    return complex(x.reshape(-1)[0])


def _complex_json(a: np.ndarray):
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return np.stack([a.real, a.imag], axis=-1).tolist()
    return a.tolist()


# ──────────────────────────────────────────────
# ESTIMATORS
# ──────────────────────────────────────────────

def direction_terms(oracle: Oracle, d: int, n_max: int) -> np.ndarray:
    """q_k = Σ_μ q_{k,μ} for k = 1..n_max, μ = 1..d, in that order."""
    rows = []
    for k in range(1, n_max + 1):
        acc = None
        for mu in range(1, d + 1):
            try:
                q = np.asarray(oracle(k, mu))
            except Exception as exc:
                exc.add_note(f"while evaluating direction (k={k}, mu={mu})")
                raise
            acc = q.astype(np.result_type(q, float)) if acc is None else acc + q
        rows.append(acc)
    return np.array(rows)


def cesaro_from_terms(terms, s: float, tol: float = DEFAULT_TOL) -> CesaroSeries:
    """Build the order-s series from precomputed direction sums q_1..q_N."""
    terms = np.asarray(terms)
    n_max = len(terms)
    if n_max < 1:
        raise InputError("need at least one direction term")
    k = np.arange(1, n_max + 1, dtype=float)
    w = (k ** (1.0 - s)).reshape((-1,) + (1,) * (terms.ndim - 1))
    cums = kahan_cumsum(w * terms)
    partials = cums / k.reshape(w.shape)
    window = min(window_size(n_max), n_max)
    dev = windowed_deviation(partials, window)
    converged = bool(np.isfinite(dev) and dev <= tol)
    logger.debug("cesaro s=%g N=%d deviation=%.3g converged=%s", s, n_max, dev, converged)
    return CesaroSeries(float(s), terms, partials, float(tol), window, converged, dev)


def cesaro_estimate(oracle: Oracle, s: float, d: int, n_max: int,
                    tol: float = DEFAULT_TOL) -> CesaroSeries:
    if n_max < MIN_TERMS:
        raise InputError(f"N_max must be ≥ {MIN_TERMS}, got {n_max}")
    return cesaro_from_terms(direction_terms(oracle, d, n_max), s, tol)


def exotic_from_terms(terms, s: float) -> np.ndarray:
    """Exotic partials (1/N^s) Σ_{k≤N} q_k for every N."""
    if s < 0:
        raise OrderError(f"exotic Laplacian needs s ≥ 0, got {s}")
    terms = np.asarray(terms)
    k = np.arange(1, len(terms) + 1, dtype=float)
    return kahan_cumsum(terms) / (k ** s).reshape((-1,) + (1,) * (terms.ndim - 1))


def exotic_estimate(oracle: Oracle, s: float, d: int, n: int):
    """(1/N^s) Σ_{k≤N} Σ_μ q_{k,μ}; s = 0 is the plain Gross–Volterra sum."""
    if s < 0:
        raise OrderError(f"exotic Laplacian needs s ≥ 0, got {s}")
    return exotic_from_terms(direction_terms(oracle, d, n), s)[-1]


# ──────────────────────────────────────────────
# SEQUENCE LEMMA
# ──────────────────────────────────────────────

class SeqLemmaResult(NamedTuple):
    lhs: float
    rhs: float
    gap: float
    settled: bool


def _seq_sides(a: Callable, s: float, n: int) -> tuple[float, float]:
    k = np.arange(1, n + 1, dtype=float)
    vals = np.broadcast_to(np.asarray(a(k), dtype=float), k.shape)
    lhs = kahan_cumsum(vals * k ** (1.0 - s))[-1] / n
    rhs = s * kahan_cumsum(vals)[-1] / n ** s
    return float(lhs), float(rhs)


def seq_lemma_check(a: Callable, s: float, n: int) -> SeqLemmaResult:
    """
    lhs = (1/N)Σ a_k k^{1−s},  rhs = s·(1/N^s)Σ a_k.

    `a` receives the float array k = 1..N. `settled` is False when either
    side still moves by more than 1e-2 between N/2 and N.
    """
    if s <= 0:
        raise OrderError(f"sequence identity needs s > 0, got {s}")
    lhs, rhs = _seq_sides(a, s, n)
    lhs_half, rhs_half = _seq_sides(a, s, max(1, n // 2))
    scale = max(1.0, abs(lhs), abs(rhs))
    settled = abs(lhs - lhs_half) <= 1e-2 * scale and abs(rhs - rhs_half) <= 1e-2 * scale
    if not settled:
        logger.warning("sequence sides not settled at N=%d (s=%g)", n, s)
    return SeqLemmaResult(lhs, rhs, abs(lhs - rhs), settled)
