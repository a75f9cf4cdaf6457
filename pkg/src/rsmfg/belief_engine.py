"""Belief-state reduction of the augmented POMDP.

Beliefs are sparse dicts keyed by augmented state ``(s, c)``.  A belief tree
node is identified by its observation-action history
``(y0, a0, y1, ..., yt)``; children are indexed by ``(a, y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .risk_augmentation import AugmentedGame, CapExceededError

DEFAULT_NODE_CAP = 10**7


class ZeroProbabilityObservation(ValueError):
    pass


@dataclass
class Belief:
    stage: int
    probs: dict  # (s, c) -> probability

    def total(self) -> float:
        return math.fsum(self.probs.values())

    def as_dense(self, aug: AugmentedGame) -> np.ndarray:
        C = aug.levels.count(self.stage)
        out = np.zeros(aug.spec.n_s * C)
        for (s, c), p in self.probs.items():
            out[s * C + c] += p
        return out


def initial_beliefs(aug: AugmentedGame) -> list:
    """Posterior of mu_0 given y(0), for every y(0) with positive probability.

    Returns a list of ``(y0, probability, Belief)``.
    """
    prior = aug.initial_distribution()
    out = []
    for y in range(aug.spec.n_y):
        joint = {x: p * aug.observation_row(x)[y] for x, p in prior.items()}
        joint = {x: v for x, v in joint.items() if v > 0.0}
        h = math.fsum(joint.values())
        if h > 0.0:
            out.append((y, h, Belief(0, {x: v / h for x, v in joint.items()})))
    return out


def predict(aug: AugmentedGame, z: Belief, a: int) -> dict:
    """sum_x p_t(x'|x, a) z(x), before conditioning on the next observation."""
    if z.stage > aug.spec.horizon_T:
        raise ValueError(f"no transition out of terminal stage {z.stage}")
    out: dict = {}
    for x, w in z.probs.items():
        for x2, p in aug.transition_row(z.stage, x, a).items():
            out[x2] = out.get(x2, 0.0) + w * p
    return out


def _joint_with_obs(aug: AugmentedGame, pred: dict) -> np.ndarray:
    """Rows of r(y|x') * pred(x'); shape [len(pred), n_y] in dict order."""
    L = aug.spec.observation_kernel
    return np.array([pred[x] * L[x[0]] for x in pred]).reshape(len(pred), aug.spec.n_y)


def observation_marginal(aug: AugmentedGame, z: Belief, a: int) -> np.ndarray:
    """H_t(. | z, a): distribution of the next observation."""
    pred = predict(aug, z, a)
    return _joint_with_obs(aug, pred).sum(axis=0)


def filter_update(aug: AugmentedGame, z: Belief, a: int, y: int) -> Belief:
    """Bayes filter F_t(z, a, y)."""
    pred = predict(aug, z, a)
    keys = list(pred)
    joint = _joint_with_obs(aug, pred)
    h = joint.sum(axis=0)[y]
    if not h > 0.0:
        raise ZeroProbabilityObservation(
            f"observation y={y} has zero probability at stage {z.stage} for action a={a} "
            f"from belief {z.probs}")
    return Belief(z.stage + 1, {x: v / h for x, v in zip(keys, joint[:, y]) if v > 0.0})


def belief_cost(aug: AugmentedGame, z: Belief, a: Optional[int] = None) -> float:
    """C_t(z, a); zero before the terminal stage, independent of a."""
    if z.stage <= aug.spec.horizon_T:
        return 0.0
    lam = aug.spec.lam
    return math.fsum(p * math.exp(lam * aug.level_value(z.stage, c)) for (s, c), p in z.probs.items())


@dataclass
class BeliefNode:
    history: tuple
    belief: Belief
    obs_prob: dict = field(default_factory=dict)  # a -> H(.|z, a)
    children: dict = field(default_factory=dict)  # (a, y) -> BeliefNode
    value: Optional[float] = None
    action: Optional[int] = None

    @property
    def stage(self) -> int:
        return self.belief.stage

    @property
    def observations(self) -> tuple:
        return self.history[0::2]


@dataclass
class BeliefTree:
    aug: AugmentedGame
    roots: list  # (y0, probability, BeliefNode)
    stages: list  # stages[t] = list of nodes in deterministic (history) order

    @property
    def node_count(self) -> int:
        return sum(len(s) for s in self.stages)

    def node(self, history: tuple) -> BeliefNode:
        node = {r.history: r for _, _, r in self.roots}[history[:1]]
        for i in range(1, len(history), 2):
            node = node.children[(history[i], history[i + 1])]
        return node


def expand_children(aug: AugmentedGame, node: BeliefNode, actions=None) -> None:
    """Fill ``node.obs_prob`` and ``node.children`` for the given actions."""
    z = node.belief
    for a in range(aug.spec.n_a) if actions is None else actions:
        if a in node.obs_prob:
            continue
        pred = predict(aug, z, a)
        keys = list(pred)
        joint = _joint_with_obs(aug, pred)
        H = joint.sum(axis=0)
        node.obs_prob[a] = H
        for y in range(aug.spec.n_y):
            if H[y] > 0.0:
                col = joint[:, y]
                probs = {x: v / H[y] for x, v in zip(keys, col) if v > 0.0}
                node.children[(a, y)] = BeliefNode(node.history + (a, y), Belief(z.stage + 1, probs))


def expand_tree(aug: AugmentedGame, node_cap: int = DEFAULT_NODE_CAP) -> BeliefTree:
    """Full reachable belief tree through stage T + 1; zero-probability branches pruned."""
    roots = [(y, p, BeliefNode((y,), z)) for y, p, z in initial_beliefs(aug)]
    stages = [[r for _, _, r in roots]]
    count = len(stages[0])
    for t in range(aug.spec.horizon_T + 1):
        nxt = []
        for node in stages[t]:
            expand_children(aug, node)
            nxt.extend(node.children[k] for k in sorted(node.children))
            count += len(node.children)
            if count > node_cap:
                raise CapExceededError(
                    f"belief tree exceeds node cap {node_cap} while expanding stage {t + 1}")
        stages.append(nxt)
    return BeliefTree(aug=aug, roots=roots, stages=stages)
