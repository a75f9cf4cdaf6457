"""Mean-field equilibrium computation.

Psi: best response to a measure flow, by backward induction on the belief tree
of the augmented POMDP.  Lambda: the flow generated when the generic agent
follows a policy.  The solver iterates the damped map
mu <- (1 - theta) mu + theta Lambda(Psi(mu)) until the flow stops moving.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .belief_engine import (
    DEFAULT_NODE_CAP,
    BeliefNode,
    BeliefTree,
    belief_cost,
    expand_children,
    expand_tree,
    initial_beliefs,
)
from .flows import MeasureFlow, StageDistribution, initial_stage, nce_residual, static_flow
from .game_model import GameSpec, cost_matrix, transition_tensor
from .policies import Policy
from .risk_augmentation import DEFAULT_LEVEL_CAP, AugmentedGame, _dedup_first_seen, build_augmented

log = logging.getLogger(__name__)

TIE_RTOL = 1e-12


def _pick(qvals, tie_break: str) -> int:
    best = min(qvals)
    tol = TIE_RTOL * max(1.0, abs(best))
    tied = [a for a, q in enumerate(qvals) if q <= best + tol]
    return tied[0] if tie_break == "low" else tied[-1]


def q_value(tree: BeliefTree, node: BeliefNode, a: int) -> float:
    """C_t(z, a) + sum_y H(y|z, a) J_{t+1}(F(z, a, y)) using cached child values."""
    H = node.obs_prob[a]
    total = belief_cost(tree.aug, node.belief, a)
    for y in range(len(H)):
        if H[y] > 0.0:
            total += H[y] * node.children[(a, y)].value
    return total


def bellman_backup(tree: BeliefTree, t: int, values_next: Optional[dict] = None,
                   tie_break: str = "low"):
    """Apply the Bellman operator at stage t.

    Returns (values, argmins) keyed by node history; also caches them on the
    nodes.  At the terminal stage the value is C_{T+1}(z) and no action is set.
    """
    if values_next is not None:
        for node in tree.stages[t + 1]:
            node.value = values_next[node.history]
    values, argmins = {}, {}
    for node in tree.stages[t]:
        if t == tree.aug.horizon:
            node.value = belief_cost(tree.aug, node.belief)
            node.action = None
        else:
            qs = [q_value(tree, node, a) for a in range(tree.aug.spec.n_a)]
            node.action = _pick(qs, tie_break)
            node.value = qs[node.action]
        values[node.history] = node.value
        argmins[node.history] = node.action
    return values, argmins


def extract_policy(tree: BeliefTree) -> Policy:
    """Observation-only policy f~ from the node-wise argmin actions.

    Follows f~_t(y0..yt) = f_t(y0, f~_0(y0), ..., yt).  Observation histories
    that have probability zero under the flow get action 0.
    """
    spec = tree.aug.spec
    n_y = spec.n_y
    tables = [np.zeros(n_y ** (t + 1), dtype=np.int64) for t in range(spec.horizon_T + 1)]

    def walk(node: BeliefNode, idx: int, t: int):
        tables[t][idx] = node.action
        if t == spec.horizon_T:
            return
        for y in range(n_y):
            child = node.children.get((node.action, y))
            if child is not None:
                walk(child, idx * n_y + y, t + 1)

    for y0, _, root in tree.roots:
        walk(root, y0, 0)
    return Policy(n_y, spec.n_a, tables)


@dataclass
class PomdpSolution:
    policy: Policy
    value: float
    tree: BeliefTree

    def node_values(self) -> dict:
        return {n.history: n.value for stage in self.tree.stages for n in stage}


def solve_pomdp(aug: AugmentedGame, tie_break: str = "low", node_cap: int = DEFAULT_NODE_CAP) -> PomdpSolution:
    """Optimal deterministic observation-feedback policy against the flow baked into ``aug``."""
    tree = expand_tree(aug, node_cap=node_cap)
    for t in range(aug.horizon, -1, -1):
        bellman_backup(tree, t, tie_break=tie_break)
    value = math.fsum(p * root.value for _, p, root in tree.roots)
    return PomdpSolution(extract_policy(tree), value, tree)


def evaluate_policy(aug: AugmentedGame, policy: Policy) -> float:
    """Exact J_mu(pi) by a forward-expanded belief recursion along the policy's actions."""
    T = aug.spec.horizon_T

    def value(node: BeliefNode) -> float:
        t = node.stage
        if t == T + 1:
            return belief_cost(aug, node.belief)
        a = policy.action(node.observations)
        expand_children(aug, node, actions=[a])
        H = node.obs_prob[a]
        return math.fsum(H[y] * value(node.children[(a, y)]) for y in range(len(H)) if H[y] > 0.0)

    return math.fsum(p * value(BeliefNode((y,), z)) for y, p, z in initial_beliefs(aug))


def propagate_flow(spec: GameSpec, policy: Policy, flow_in: Optional[MeasureFlow] = None) -> MeasureFlow:
    """Lambda(pi): exact forward pass of the joint law of (state, level, observations).

    Kernels at stage t use the state marginal of the flow being generated, so
    the result is the population flow of agents that all follow ``policy``.
    ``flow_in`` is accepted for interface symmetry and is not needed.
    """
    T, n_y = spec.horizon_T, spec.n_y
    L = spec.observation_kernel
    # joint: list of (s, level, obs flat index, mass)
    joint = [(s, 0.0, y, float(spec.kappa0[s] * L[s, y]))
             for s in range(spec.n_s) for y in range(n_y) if spec.kappa0[s] * L[s, y] > 0.0]
    stages = [initial_stage(spec.kappa0)]
    for t in range(T + 1):
        d = np.zeros(spec.n_s)
        for s, _, _, w in joint:
            d[s] += w
        q = transition_tensor(spec, d)
        m = cost_matrix(spec, d) * spec.beta**t
        table = policy.tables[t]
        raw = []
        for s, c, h, w in joint:
            a = int(table[h])
            c2 = c + m[s, a]
            for s2 in range(spec.n_s):
                p = q[s, a, s2]
                if p > 0.0:
                    raw.append((s2, c2, h, w * p))
        reps, rep_of = _dedup_first_seen(np.array([r[1] for r in raw]))
        agg: dict = {}
        for (s2, _, h, w), j in zip(raw, rep_of):
            key = (s2, int(j), h)
            agg[key] = agg.get(key, 0.0) + w
        total = math.fsum(agg.values())
        agg = {k: w / total for k, w in agg.items()}
        st = StageDistribution.from_atoms((s2, reps[j], w) for (s2, j, _), w in agg.items())
        stages.append(StageDistribution(st.states, st.levels, st.mass / math.fsum(st.mass)))
        if t < T:
            joint = [(s2, float(reps[j]), h * n_y + y, w * L[s2, y])
                     for (s2, j, h), w in agg.items() for y in range(n_y) if w * L[s2, y] > 0.0]
    return MeasureFlow(stages)


@dataclass
class StateActionFlow:
    """nu_t over (belief node, action) induced by a policy on a belief tree."""

    stages: list  # stages[t]: dict history -> (action or None, mass)


def state_action_flow(tree: BeliefTree, policy: Policy) -> StateActionFlow:
    T = tree.aug.spec.horizon_T
    stages = [dict() for _ in range(T + 2)]
    frontier = [(root, p) for _, p, root in tree.roots]
    for t in range(T + 2):
        nxt = []
        for node, mass in frontier:
            a = policy.action(node.observations) if t <= T else None
            stages[t][node.history] = (a, mass)
            if a is not None:
                H = node.obs_prob[a]
                for y in range(len(H)):
                    if H[y] > 0.0:
                        nxt.append((node.children[(a, y)], mass * H[y]))
        frontier = nxt
    return StateActionFlow(stages)


def check_pushforward(tree: BeliefTree, nu: StateActionFlow) -> float:
    """Largest violation of nu_{t+1,1} = int eta_t d nu_t over nodes."""
    worst = 0.0
    for t in range(len(nu.stages) - 1):
        pushed: dict = {}
        for hist, (a, mass) in nu.stages[t].items():
            node = tree.node(hist)
            for y, h in enumerate(node.obs_prob[a]):
                if h > 0.0:
                    key = hist + (a, y)
                    pushed[key] = pushed.get(key, 0.0) + mass * h
        keys = set(pushed) | set(nu.stages[t + 1])
        for k in keys:
            worst = max(worst, abs(pushed.get(k, 0.0) - nu.stages[t + 1].get(k, (None, 0.0))[1]))
    total0 = sum(m for _, m in nu.stages[0].values())
    return max(worst, abs(total0 - 1.0))


def argmin_mass(tree: BeliefTree, nu: StateActionFlow) -> float:
    """Mass nu places on (node, action) pairs attaining the Bellman minimum, minimum over stages."""
    worst = 1.0
    for t in range(len(nu.stages) - 1):
        good = 0.0
        for hist, (a, mass) in nu.stages[t].items():
            node = tree.node(hist)
            qs = [q_value(tree, node, b) for b in range(tree.aug.spec.n_a)]
            if qs[a] <= min(qs) + TIE_RTOL * max(1.0, abs(min(qs))):
                good += mass
        worst = min(worst, good)
    return worst


@dataclass
class EquilibriumArtifact:
    policy: Policy
    flow: MeasureFlow
    value: float  # J_{*,0} at the returned flow
    nce_residual: float
    optimality_gap: float
    iterations: int
    converged: bool
    cycle_detected: bool = False
    residual_history: list = field(default_factory=list)
    solution: Optional[PomdpSolution] = None

    @property
    def aug(self) -> AugmentedGame:
        return self.solution.tree.aug

    def node_values(self) -> dict:
        return self.solution.node_values() if self.solution else {}


def find_equilibrium(spec: GameSpec, tol: float = 1e-10, max_iter: int = 500, damping: float = 0.5,
                     level_cap: int = DEFAULT_LEVEL_CAP, node_cap: int = DEFAULT_NODE_CAP) -> EquilibriumArtifact:
    """Damped fixed-point iteration on the measure flow.

    The iterate is seeded with Lambda(Psi(static flow)).  Non-convergence is
    reported through ``converged=False`` together with the best iterate.
    """
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")

    def psi(flow):
        return solve_pomdp(build_augmented(spec, flow, cap=level_cap), node_cap=node_cap).policy

    seed = static_flow(spec.kappa0, spec.horizon_T)
    policy = psi(seed)
    mu = propagate_flow(spec, policy)
    best = (nce_residual(mu, seed), policy, mu)
    history, seen = [], []
    converged = cycle = False
    k = 0
    for k in range(1, max_iter + 1):
        policy = psi(mu)
        new = mu.mix(propagate_flow(spec, policy), damping)
        res = nce_residual(new, mu)
        history.append(res)
        sig = policy.signature()
        if len(seen) >= 2 and sig == seen[-2] and sig != seen[-1]:
            cycle = True
        seen.append(sig)
        log.debug("iteration %d residual %.3e", k, res)
        mu = new
        if res < best[0] or k == 1:
            best = (res, policy, new)
        if res < tol:
            converged = True
            break
    res, policy, mu = best
    sol = solve_pomdp(build_augmented(spec, mu, cap=level_cap), node_cap=node_cap)
    gap = max(0.0, evaluate_policy(sol.tree.aug, policy) - sol.value)
    return EquilibriumArtifact(policy=policy, flow=mu, value=sol.value, nce_residual=res,
                               optimality_gap=gap, iterations=k if max_iter > 0 else 0,
                               converged=converged, cycle_detected=cycle and not converged,
                               residual_history=history, solution=sol)


class UnsupportedDiscount(ValueError):
    pass


def truncation_bound(spec: GameSpec) -> float:
    """theta with |W^inf - W^T| <= theta * beta^(T+1), theta = e^{lam L}(e^{lam L} - 1), L = K/(1-beta)."""
    if spec.beta >= 1.0:
        raise UnsupportedDiscount("truncation bound needs beta < 1")
    L = spec.cost_sup_K / (1.0 - spec.beta)
    x = spec.lam * L
    return math.exp(x) * math.expm1(x)


def choose_horizon(spec: GameSpec, epsilon: float) -> int:
    """Smallest T with theta * beta^(T+1) < epsilon / 3."""
    if spec.beta >= 1.0:
        raise UnsupportedDiscount("horizon selection needs beta < 1")
    if not epsilon > 0.0:
        raise ValueError("epsilon must be positive")
    theta = truncation_bound(spec)
    T = 0
    while theta * spec.beta ** (T + 1) >= epsilon / 3.0:
        T += 1
    return T
