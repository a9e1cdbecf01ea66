"""Shared fixtures and the raw-coordinate brute-force tensor oracle."""

from __future__ import annotations

import math
from collections import Counter
from itertools import permutations

import numpy as np
import pytest


class RawOracle:
    """
    Dense raw coordinates built from scratch: a canonical coefficient c_S on
    a sorted multiset S of rank n sits at every ordering of S with value
    c_S·sqrt(Πm!/n!). Products, contractions and pairings are then plain
    numpy operations on full arrays.
    """

    @staticmethod
    def dense(F) -> np.ndarray:
        out = np.zeros((F.size,) * F.rank + F.value_shape, dtype=complex)
        for key, value in F.entries.items():
            mult = math.prod(math.factorial(m) for m in Counter(key).values())
            raw = value * math.sqrt(mult / math.factorial(len(key)))
            for idx in set(permutations(key)):
                out[idx] = raw
        return out

    @staticmethod
    def sym_product(Fd: np.ndarray, fd: np.ndarray) -> np.ndarray:
        full = np.multiply.outer(Fd, fd)
        rank = full.ndim
        if rank == 0:
            return full
        perms = list(permutations(range(rank)))
        return sum(np.transpose(full, p) for p in perms) / len(perms)

    @staticmethod
    def contract(Fd: np.ndarray, fd: np.ndarray, k: int) -> np.ndarray:
        return np.tensordot(Fd, fd, axes=k)

    @staticmethod
    def pair(Fd: np.ndarray, Gd: np.ndarray) -> complex:
        return complex(np.sum(Fd * Gd))


@pytest.fixture
def oracle() -> RawOracle:
    return RawOracle()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
