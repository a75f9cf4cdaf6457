"""Additive-cost reformulation of the risk-sensitive game.

The augmented state is (s, c) where c is the discounted cost accumulated so
far.  All stage costs vanish except the terminal one, exp(lambda * c), so the
risk-sensitive objective becomes an ordinary expected total cost.  Reachable
cost levels are enumerated exactly against a given measure flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .flows import LEVEL_TOL, MeasureFlow
from .game_model import GameSpec, cost_matrix, transition_tensor

DEFAULT_LEVEL_CAP = 10**6


class CapExceededError(RuntimeError):
    """A size guard (levels, tree nodes, joint trajectories) was exceeded."""


class ConsistencyError(RuntimeError):
    """Two computations that must agree did not."""


def _dedup_first_seen(values: np.ndarray, tol: float = LEVEL_TOL):
    """Cluster values within ``tol``; representative is the first-seen value.

    Returns (sorted representatives, index of each input's representative).
    """
    order = np.argsort(values, kind="stable")
    reps = []
    rep_of = np.empty(len(values), dtype=np.int64)
    cluster_start = None
    cluster_members = []
    clusters = []
    for i in order:
        v = values[i]
        if cluster_start is not None and v - cluster_start <= tol:
            cluster_members.append(i)
        else:
            if cluster_members:
                clusters.append(cluster_members)
            cluster_start = v
            cluster_members = [i]
    if cluster_members:
        clusters.append(cluster_members)
    for j, members in enumerate(clusters):
        reps.append(values[min(members)])
        rep_of[members] = j
    return np.array(reps, dtype=float), rep_of


@dataclass
class CostLevelTable:
    levels: list  # levels[t]: strictly increasing array, t = 0..T+1
    next_index: list  # next_index[t][c, s, a] -> index into levels[t+1], t = 0..T
    bound_L: float

    def count(self, t: int) -> int:
        return len(self.levels[t])


def _flow_marginals(spec: GameSpec, flow) -> np.ndarray:
    if isinstance(flow, MeasureFlow):
        return flow.marginals(spec.n_s)
    marg = np.asarray(flow, dtype=float)
    if marg.shape != (spec.horizon_T + 2, spec.n_s):
        raise ValueError(f"flow marginals shape {marg.shape}, expected {(spec.horizon_T + 2, spec.n_s)}")
    return marg


def enumerate_cost_levels(spec: GameSpec, flow, cap: int = DEFAULT_LEVEL_CAP) -> CostLevelTable:
    """Reachable accumulated discounted costs for every stage 0..T+1.

    ``flow`` is a MeasureFlow or an array of state marginals [T+2, n_s].
    """
    marg = _flow_marginals(spec, flow)
    T = spec.horizon_T
    levels = [np.zeros(1)]
    next_index = []
    for t in range(T + 1):
        m_t = cost_matrix(spec, marg[t]) * spec.beta**t
        cand = levels[t][:, None, None] + m_t[None, :, :]  # [c, s, a]
        if cand.size > cap * spec.n_s * spec.n_a:
            raise CapExceededError(f"stage {t + 1}: {cand.size} candidate cost levels exceeds cap {cap}")
        reps, rep_of = _dedup_first_seen(cand.ravel())
        if len(reps) > cap:
            raise CapExceededError(
                f"stage {t + 1}: {len(reps)} reachable cost levels exceeds cap {cap} "
                f"(previous stage {len(levels[t])}, n_s={spec.n_s}, n_a={spec.n_a})")
        levels.append(reps)
        next_index.append(rep_of.reshape(cand.shape))
    return CostLevelTable(levels=levels, next_index=next_index, bound_L=spec.cost_bound_L)


def terminal_cost(level: float, lam: float) -> float:
    return math.exp(lam * level)


@dataclass
class AugmentedGame:
    """Augmented model built against a fixed measure flow.

    Augmented states at stage t are pairs (s, c) with c indexing
    ``levels.levels[t]``.  ``trans[t]`` and ``stage_cost[t]`` are q and m
    evaluated at the stage-t state marginal of the flow.
    """

    spec: GameSpec
    marginals: np.ndarray
    levels: CostLevelTable
    trans: list  # trans[t][s, a, s'], t = 0..T
    stage_cost: list  # stage_cost[t][s, a] = m(s, a, mu_{t,1}), undiscounted

    @property
    def horizon(self) -> int:
        """Last stage index, T + 1."""
        return self.spec.horizon_T + 1

    def n_states(self, t: int) -> int:
        return self.spec.n_s * self.levels.count(t)

    def level_value(self, t: int, c: int) -> float:
        return float(self.levels.levels[t][c])

    def initial_distribution(self) -> dict:
        return {(s, 0): float(p) for s, p in enumerate(self.spec.kappa0) if p > 0.0}

    def transition_row(self, t: int, x: tuple, a: int) -> dict:
        """p_t(. | x, a) as a sparse dict over stage-(t+1) augmented states."""
        s, c = x
        c_next = int(self.levels.next_index[t][c, s, a])
        row = self.trans[t][s, a]
        return {(s2, c_next): float(p) for s2, p in enumerate(row) if p > 0.0}

    def transition_matrix(self, t: int, a: int) -> np.ndarray:
        """Dense p_t(. | ., a) of shape [n_states(t), n_states(t+1)]; for small games."""
        n_s = self.spec.n_s
        C0, C1 = self.levels.count(t), self.levels.count(t + 1)
        P = np.zeros((n_s * C0, n_s * C1))
        for s in range(n_s):
            for c in range(C0):
                for (s2, c2), p in self.transition_row(t, (s, c), a).items():
                    P[s * C0 + c, s2 * C1 + c2] += p
        return P

    def observation_row(self, x: tuple) -> np.ndarray:
        return self.spec.observation_kernel[x[0]]

    def stage_cost_aug(self, t: int, x: tuple) -> float:
        """c_t: zero before the terminal stage, exp(lambda * level) at T + 1."""
        if t <= self.spec.horizon_T:
            return 0.0
        return terminal_cost(self.level_value(t, x[1]), self.spec.lam)


def build_augmented(spec: GameSpec, flow, cap: int = DEFAULT_LEVEL_CAP) -> AugmentedGame:
    marg = _flow_marginals(spec, flow)
    table = enumerate_cost_levels(spec, marg, cap=cap)
    trans, costs = [], []
    for t in range(spec.horizon_T + 1):
        q = transition_tensor(spec, marg[t])
        rows = q.sum(axis=-1)
        if np.any(np.abs(rows - 1.0) > 1e-10) or np.any(q < 0.0):
            raise ConsistencyError(f"stage {t}: transition rows are not probability vectors")
        trans.append(q)
        costs.append(cost_matrix(spec, marg[t]))
    return AugmentedGame(spec=spec, marginals=marg, levels=table, trans=trans, stage_cost=costs)


def additive_cost_of_trajectory(spec: GameSpec, trajectory: Sequence[tuple[int, int]],
                                flow, aug: Union[AugmentedGame, None] = None,
                                tol: float = 1e-12) -> float:
    """exp(lambda * sum_t beta^t m(s_t, a_t, mu_t)) computed directly and through
    the augmented state; raises ConsistencyError if they disagree."""
    T = spec.horizon_T
    if len(trajectory) != T + 1:
        raise ValueError(f"trajectory length {len(trajectory)}, expected {T + 1}")
    marg = _flow_marginals(spec, flow)
    direct = 0.0
    for t, (s, a) in enumerate(trajectory):
        direct += spec.beta**t * cost_matrix(spec, marg[t])[s, a]
    direct_val = terminal_cost(direct, spec.lam)

    if aug is None:
        aug = build_augmented(spec, marg)
    c = 0
    for t, (s, a) in enumerate(trajectory):
        c = int(aug.levels.next_index[t][c, s, a])
    aug_val = aug.stage_cost_aug(T + 1, (trajectory[-1][0], c))
    if abs(aug_val - direct_val) > tol * max(1.0, abs(direct_val)):
        raise ConsistencyError(f"direct cost {direct_val!r} != augmented cost {aug_val!r}")
    return direct_val
