"""Pinned toy games and a random small-game generator."""

from __future__ import annotations

import numpy as np

from .game_model import GameSpec


def toy_a() -> GameSpec:
    """Two states, perfect observation, transition to the action's index.

    m(s, a, d) = 1{s = s1} + 0.5 d(s1); beta = 1, lambda = 1, T = 1, start in s0.
    """
    trans = np.zeros((2, 2, 2))
    for s in range(2):
        for a in range(2):
            trans[s, a, a] = 1.0
    cost_couple = np.zeros((2, 2, 2))
    cost_couple[:, :, 1] = 0.5
    return GameSpec(
        states=["s0", "s1"], actions=["a0", "a1"], observations=["y0", "y1"],
        transition_base=trans, observation_kernel=np.eye(2),
        cost_base=np.array([[0.0, 0.0], [1.0, 1.0]]), cost_couple=cost_couple,
        beta=1.0, lam=1.0, horizon_T=1, kappa0=[1.0, 0.0], name="TOY-A",
    )


def toy_b() -> GameSpec:
    """TOY-A with 0.8-accurate observations and a coupled transition kernel.

    The vertex kernel for s1 moves 0.2 of the mass toward s1, so
    q(.|s, a, d) = (1 - 0.2 d(s1)) delta_a + 0.2 d(s1) delta_{s1}.
    """
    base = toy_a()
    q1 = 0.8 * base.transition_base.copy()
    q1[:, :, 1] += 0.2
    couple = np.stack([base.transition_base, q1])
    return GameSpec(**{**base.__dict__, "observation_kernel": np.array([[0.8, 0.2], [0.2, 0.8]]),
                       "transition_couple": couple, "name": "TOY-B"})


def _random_stochastic(rng, shape, sparsity: float = 0.0):
    x = rng.random(shape)
    if sparsity:
        mask = rng.random(shape) < sparsity
        x = np.where(mask, 0.0, x)
        # keep at least one positive entry per row
        rows = x.sum(axis=-1) == 0
        x[rows, ...] = rng.random(x[rows].shape) + 1e-3
    return x / x.sum(axis=-1, keepdims=True)


def random_spec(rng: np.random.Generator, n_s: int = 2, n_a: int = 2, n_y: int = 2, T: int = 1,
                beta: float = 0.9, lam: float = 0.7, coupled: bool = True,
                sparsity: float = 0.0, cost_scale: float = 1.0) -> GameSpec:
    """A random valid spec; coupling uses nonnegative m1 so costs stay nonnegative."""
    trans = _random_stochastic(rng, (n_s, n_a, n_s), sparsity)
    couple = _random_stochastic(rng, (n_s, n_s, n_a, n_s), sparsity) if coupled else None
    cost_couple = cost_scale * 0.5 * rng.random((n_s, n_a, n_s)) if coupled else None
    return GameSpec(
        states=[f"s{i}" for i in range(n_s)], actions=[f"a{i}" for i in range(n_a)],
        observations=[f"y{i}" for i in range(n_y)],
        transition_base=trans, observation_kernel=_random_stochastic(rng, (n_s, n_y), sparsity),
        cost_base=cost_scale * rng.random((n_s, n_a)), cost_couple=cost_couple,
        transition_couple=couple, beta=beta, lam=lam, horizon_T=T,
        kappa0=_random_stochastic(rng, (n_s,)), name="random",
    )
