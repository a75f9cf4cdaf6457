"""Deterministic observation-feedback policies.

A policy is a list of lookup tables, one per decision stage t = 0..T, mapping
the observation history (y0, ..., yt) to an action index.  Tables are stored
flat with y0 as the most significant digit, so a history's flat index can be
updated incrementally as ``idx * n_y + y``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


@dataclass
class Policy:
    n_y: int
    n_a: int
    tables: list  # tables[t]: int array of length n_y ** (t + 1)
    name: str = ""

    def __post_init__(self):
        self.tables = [np.asarray(tb, dtype=np.int64).ravel() for tb in self.tables]
        for t, tb in enumerate(self.tables):
            if tb.shape != (self.n_y ** (t + 1),):
                raise ValueError(f"stage {t} table has {tb.size} entries, expected {self.n_y ** (t + 1)}")
            if tb.size and (tb.min() < 0 or tb.max() >= self.n_a):
                raise ValueError(f"stage {t} table has an action index outside [0, {self.n_a})")

    @property
    def horizon_T(self) -> int:
        return len(self.tables) - 1

    def flat_index(self, obs) -> int:
        idx = 0
        for y in obs:
            idx = idx * self.n_y + int(y)
        return idx

    def action(self, obs) -> int:
        t = len(obs) - 1
        if t < 0 or t >= len(self.tables):
            raise KeyError(f"policy undefined on observation history {tuple(obs)}")
        return int(self.tables[t][self.flat_index(obs)])

    def signature(self) -> bytes:
        return b"".join(tb.tobytes() for tb in self.tables)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Policy) and self.n_y == other.n_y
                and len(self.tables) == len(other.tables)
                and all(np.array_equal(a, b) for a, b in zip(self.tables, other.tables)))

    def truncate(self, T: int) -> "Policy":
        return Policy(self.n_y, self.n_a, self.tables[: T + 1], self.name)

    def histories(self):
        """Yield (observation history, interleaved observation-action history)."""
        for t in range(len(self.tables)):
            for obs in itertools.product(range(self.n_y), repeat=t + 1):
                hist = []
                for k, y in enumerate(obs):
                    hist.append(y)
                    if k < t:
                        hist.append(self.action(obs[: k + 1]))
                yield obs, tuple(hist)

    @classmethod
    def constant(cls, T: int, n_y: int, n_a: int, a: int) -> "Policy":
        return cls(n_y, n_a, [np.full(n_y ** (t + 1), a) for t in range(T + 1)], name=f"const_{a}")

    @classmethod
    def random(cls, T: int, n_y: int, n_a: int, rng: np.random.Generator, name: str = "random") -> "Policy":
        return cls(n_y, n_a, [rng.integers(0, n_a, size=n_y ** (t + 1)) for t in range(T + 1)], name=name)

    @classmethod
    def from_function(cls, T: int, n_y: int, n_a: int, fn) -> "Policy":
        tables = [[fn(obs) for obs in itertools.product(range(n_y), repeat=t + 1)] for t in range(T + 1)]
        return cls(n_y, n_a, tables)


def count_policies(T: int, n_y: int, n_a: int) -> int:
    return n_a ** sum(n_y ** (t + 1) for t in range(T + 1))


def enumerate_policies(T: int, n_y: int, n_a: int):
    """Every deterministic observation-feedback policy (use on tiny instances only)."""
    sizes = [n_y ** (t + 1) for t in range(T + 1)]
    for flat in itertools.product(range(n_a), repeat=sum(sizes)):
        tables, pos = [], 0
        for sz in sizes:
            tables.append(flat[pos: pos + sz])
            pos += sz
        yield Policy(n_y, n_a, tables)
