"""Measure flows over augmented states (original state, accumulated cost level)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

LEVEL_TOL = 1e-12
NORM_TOL = 1e-10


@dataclass(frozen=True)
class StageDistribution:
    """Finite-support distribution over (state index, cost level) atoms.

    Atoms are kept sorted by (state, level) with levels of equal state more
    than ``LEVEL_TOL`` apart.
    """

    states: np.ndarray
    levels: np.ndarray
    mass: np.ndarray

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[int, float, float]], tol: float = LEVEL_TOL,
                   drop_zero: bool = True) -> "StageDistribution":
        atoms = [(int(s), float(c), float(p)) for s, c, p in atoms if not (drop_zero and p == 0.0)]
        atoms.sort(key=lambda x: (x[0], x[1]))
        states, levels, mass = [], [], []
        for s, c, p in atoms:
            if states and states[-1] == s and abs(c - levels[-1]) <= tol:
                mass[-1] += p
            else:
                states.append(s)
                levels.append(c)
                mass.append(p)
        return cls(np.array(states, dtype=int), np.array(levels, dtype=float),
                   np.array(mass, dtype=float))

    def atoms(self):
        return list(zip(self.states.tolist(), self.levels.tolist(), self.mass.tolist()))

    def total(self) -> float:
        return float(self.mass.sum())

    def state_marginal(self, n_s: int) -> np.ndarray:
        return np.bincount(self.states, weights=self.mass, minlength=n_s)[:n_s].astype(float)

    def mix(self, other: "StageDistribution", theta: float) -> "StageDistribution":
        """(1 - theta) * self + theta * other on the merged atom set."""
        a = [(s, c, (1.0 - theta) * p) for s, c, p in self.atoms()]
        b = [(s, c, theta * p) for s, c, p in other.atoms()]
        return StageDistribution.from_atoms(a + b)


@dataclass(frozen=True)
class MeasureFlow:
    """Stage distributions mu_0, ..., mu_{T+1}."""

    stages: tuple

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))

    def __len__(self) -> int:
        return len(self.stages)

    def __getitem__(self, t: int) -> StageDistribution:
        return self.stages[t]

    def marginals(self, n_s: int) -> np.ndarray:
        """State marginals, shape [T+2, n_s]."""
        return np.stack([st.state_marginal(n_s) for st in self.stages])

    def mix(self, other: "MeasureFlow", theta: float) -> "MeasureFlow":
        if len(self) != len(other):
            raise ValueError("flows have different horizons")
        return MeasureFlow(a.mix(b, theta) for a, b in zip(self.stages, other.stages))

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return all(abs(st.total() - 1.0) <= tol and np.all(st.mass >= 0.0) for st in self.stages)


def initial_stage(kappa0: Sequence[float]) -> StageDistribution:
    """kappa0 (x) delta_0."""
    return StageDistribution.from_atoms((s, 0.0, p) for s, p in enumerate(kappa0))


def static_flow(kappa0: Sequence[float], horizon_T: int) -> MeasureFlow:
    """kappa0 (x) delta_0 repeated at every stage; used as the solver's seed."""
    st = initial_stage(kappa0)
    return MeasureFlow([st] * (horizon_T + 2))


def stage_l1(a: StageDistribution, b: StageDistribution, tol: float = LEVEL_TOL) -> float:
    """L1 distance with atoms matched on equal state and levels within ``tol``.

    Unmatched atoms contribute their full mass.
    """
    total = 0.0
    ia = ib = 0
    na, nb = len(a.mass), len(b.mass)
    while ia < na or ib < nb:
        if ia < na and ib < nb and a.states[ia] == b.states[ib] \
                and abs(a.levels[ia] - b.levels[ib]) <= tol:
            total += abs(a.mass[ia] - b.mass[ib])
            ia += 1
            ib += 1
        elif ib >= nb or (ia < na and (a.states[ia], a.levels[ia]) < (b.states[ib], b.levels[ib])):
            total += abs(a.mass[ia])
            ia += 1
        else:
            total += abs(b.mass[ib])
            ib += 1
    return total


def nce_residual(flow_a: MeasureFlow, flow_b: MeasureFlow) -> float:
    """max over stages of the matched-atom L1 distance."""
    if len(flow_a) != len(flow_b):
        raise ValueError("flows have different horizons")
    return max(stage_l1(a, b) for a, b in zip(flow_a.stages, flow_b.stages))
