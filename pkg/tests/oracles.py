"""Brute-force reference computations, deliberately independent of the belief machinery."""

import itertools
import math

import numpy as np

from rsmfg.game_model import cost_matrix, transition_tensor


def flow_cost_brute_force(spec, policy, marginals):
    """E[exp(lam sum_t beta^t m(s_t, a_t, mu_t))] for one agent facing fixed state marginals.

    Sums over every (s_0, y_0, ..., s_T, y_T) path.
    """
    T, n_s, n_y = spec.horizon_T, spec.n_s, spec.n_y
    L = spec.observation_kernel
    q = [transition_tensor(spec, marginals[t]) for t in range(T + 1)]
    m = [cost_matrix(spec, marginals[t]) for t in range(T + 1)]
    total = 0.0
    for path in itertools.product(range(n_s), range(n_y), repeat=T + 1):
        states, obs = path[0::2], path[1::2]
        p = spec.kappa0[states[0]]
        acc = 0.0
        for t in range(T + 1):
            p *= L[states[t], obs[t]]
            a = policy.action(obs[: t + 1])
            acc += spec.beta**t * m[t][states[t], a]
            if t < T:
                p *= q[t][states[t], a, states[t + 1]]
            if p == 0.0:
                break
        if p > 0.0:
            total += p * math.exp(spec.lam * acc)
    return total


def levels_brute_force(spec, marginals, t):
    """Distinct partial sums sum_{k<t} beta^k m(s_k, a_k, mu_k) over all (s, a) sequences."""
    m = [cost_matrix(spec, marginals[k]) for k in range(t)]
    vals = set()
    for seq in itertools.product(range(spec.n_s), range(spec.n_a), repeat=t):
        vals.add(round(sum(spec.beta**k * m[k][seq[2 * k], seq[2 * k + 1]] for k in range(t)), 10))
    return sorted(vals)


def hmm_forward_obs(prior, trans, L):
    """One step of the forward algorithm: distribution of the next observation."""
    return (np.asarray(prior) @ trans) @ L
