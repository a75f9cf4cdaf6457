"""Finite-N simulation, exact small-N oracle and epsilon-Nash gap estimation.

Agents carry (state, accumulated discounted cost, observation history); the
history is stored as a flat table index so policy lookups are vectorized.
Kernels and costs are evaluated at the realized empirical mean field of each
episode, never at the limit flow.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import rng as crng
from .game_model import GameSpec, cost_matrix, transition_tensor
from .mfg_solver import EquilibriumArtifact, solve_pomdp
from .policies import Policy
from .risk_augmentation import CapExceededError

DEFAULT_CHUNK = 1000
DEFAULT_JOINT_CAP = 10**7
BOOTSTRAP_RESAMPLES = 1000


@dataclass
class SimReport:
    n_agents: int
    episodes: int
    seed: int
    agent_mean: np.ndarray  # W_i estimates
    agent_se: np.ndarray
    agent0_costs: np.ndarray  # per-episode realized cost of agent 1
    population_costs: np.ndarray  # per-episode average over agents
    meanfields: np.ndarray  # [episode, stage, state], stages 0..T+1
    deviation: Optional[np.ndarray] = None  # [episode, stage] L1 to a reference flow

    @property
    def population_mean(self) -> float:
        return float(self.population_costs.mean())

    @property
    def population_se(self) -> float:
        return _se(self.population_costs)


def _se(x: np.ndarray) -> float:
    if len(x) < 2:
        return 0.0
    return float(np.std(x, ddof=1) / math.sqrt(len(x)))


def _policy_groups(policies, N: int):
    if isinstance(policies, Policy):
        return [(policies, np.arange(N))]
    if len(policies) != N:
        raise ValueError(f"got {len(policies)} policies for {N} agents")
    groups: dict = {}
    order = []
    for i, p in enumerate(policies):
        key = id(p)
        if key not in groups:
            groups[key] = (p, [])
            order.append(key)
        groups[key][1].append(i)
    return [(groups[k][0], np.array(groups[k][1])) for k in order]


def _check_policy(spec: GameSpec, p: Policy) -> None:
    if p.horizon_T < spec.horizon_T or p.n_y != spec.n_y or p.n_a != spec.n_a:
        raise ValueError(
            f"policy {p.name or ''} (T={p.horizon_T}, n_y={p.n_y}, n_a={p.n_a}) is undefined on "
            f"some histories of the game (T={spec.horizon_T}, n_y={spec.n_y}, n_a={spec.n_a})")


def _simulate_chunk(spec: GameSpec, groups, N: int, seed: int, episodes: np.ndarray,
                    ref_marginals: Optional[np.ndarray]):
    E = len(episodes)
    T, n_s, n_y = spec.horizon_T, spec.n_s, spec.n_y
    keys = crng.stream_keys(seed, episodes, np.arange(N))
    L_cdf = np.cumsum(spec.observation_kernel, axis=1)

    state = crng.categorical(crng.uniforms(keys, 0, crng.INIT), np.cumsum(spec.kappa0))
    hist = np.zeros((E, N), dtype=np.int64)
    acc = np.zeros((E, N))
    meanfields = np.zeros((E, T + 2, n_s))
    rows = np.arange(E)[:, None]
    for t in range(T + 1):
        d = np.stack([(state == s).mean(axis=1) for s in range(n_s)], axis=1)  # [E, n_s]
        meanfields[:, t] = d
        y = crng.categorical(crng.uniforms(keys, t, crng.OBS), L_cdf[state])
        hist = hist * n_y + y
        act = np.empty((E, N), dtype=np.int64)
        for pol, idx in groups:
            act[:, idx] = pol.tables[t][hist[:, idx]]
        if spec.cost_couple is None:
            m = spec.cost_base[state, act]
        else:
            m_e = spec.cost_base[None] + np.einsum("sak,ek->esa", spec.cost_couple, d)
            m = m_e[rows, state, act]
        acc += spec.beta**t * m
        if spec.transition_couple is None:
            q_cdf = np.cumsum(spec.transition_base, axis=-1)[state, act]
        else:
            q_e = np.cumsum(np.einsum("ek,ksat->esat", d, spec.transition_couple), axis=-1)
            q_cdf = q_e[rows, state, act]
        state = crng.categorical(crng.uniforms(keys, t, crng.TRANS), q_cdf)
    meanfields[:, T + 1] = np.stack([(state == s).mean(axis=1) for s in range(n_s)], axis=1)
    costs = np.exp(spec.lam * acc)
    dev = None
    if ref_marginals is not None:
        dev = np.abs(meanfields - ref_marginals[None]).sum(axis=-1)
    return costs.sum(axis=0), (costs**2).sum(axis=0), costs[:, 0].copy(), costs.mean(axis=1), meanfields, dev


def simulate(spec: GameSpec, policies: Union[Policy, Sequence[Policy]], N: int, episodes: int, seed: int,
             workers: int = 1, ref_marginals: Optional[np.ndarray] = None,
             chunk: int = DEFAULT_CHUNK) -> SimReport:
    """Monte Carlo estimate of every agent's risk-sensitive cost in the N-agent game.

    ``policies`` is one shared policy or a list of N.  Results are a function of
    (seed, N, episodes) only; ``workers`` changes scheduling, never values.
    """
    if N < 1 or episodes < 1:
        raise ValueError("need N >= 1 and episodes >= 1")
    groups = _policy_groups(policies, N)
    for p, _ in groups:
        _check_policy(spec, p)
    ref = None if ref_marginals is None else np.asarray(ref_marginals, dtype=float)
    # chunk boundaries depend only on (N, episodes, chunk), never on the worker count
    per_chunk = max(1, min(chunk, (4 * 10**6) // max(N, 1)))
    bounds = [np.arange(lo, min(lo + per_chunk, episodes)) for lo in range(0, episodes, per_chunk)]

    def run(ep):
        return _simulate_chunk(spec, groups, N, seed, ep, ref)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(ep) for ep in bounds]

    s1 = np.zeros(N)
    s2 = np.zeros(N)
    for p in parts:
        s1 += p[0]
        s2 += p[1]
    mean = s1 / episodes
    if episodes > 1:
        var = np.maximum(s2 - episodes * mean**2, 0.0) / (episodes - 1)
        se = np.sqrt(var / episodes)
    else:
        se = np.zeros(N)
    return SimReport(
        n_agents=N, episodes=episodes, seed=seed, agent_mean=mean, agent_se=se,
        agent0_costs=np.concatenate([p[2] for p in parts]),
        population_costs=np.concatenate([p[3] for p in parts]),
        meanfields=np.concatenate([p[4] for p in parts]),
        deviation=None if ref is None else np.concatenate([p[5] for p in parts]),
    )


def exact_cost_small(spec: GameSpec, policies: Union[Policy, Sequence[Policy]], N: int,
                     cap: int = DEFAULT_JOINT_CAP) -> np.ndarray:
    """Exact W_i for every agent by summing over all joint outcomes.

    Enumerates initial states, observations and transitions of all N agents
    with the realized empirical mean field at every stage.
    """
    T, n_s, n_y = spec.horizon_T, spec.n_s, spec.n_y
    count = (n_s * n_y) ** (N * (T + 1))
    if count > cap:
        raise CapExceededError(f"{count} joint trajectories exceeds cap {cap}")
    pols = [policies] * N if isinstance(policies, Policy) else list(policies)
    for p in pols:
        _check_policy(spec, p)
    L = spec.observation_kernel
    kappa0 = spec.kappa0

    # configuration: (states, observation histories, accumulated costs) -> probability
    dist: dict = {}
    for states in itertools.product(range(n_s), repeat=N):
        p0 = math.prod(kappa0[s] for s in states)
        if p0 > 0.0:
            dist[(states, ((),) * N, (0.0,) * N)] = p0
    for t in range(T + 1):
        nxt: dict = {}
        for (states, hists, acc), p in dist.items():
            d = [0.0] * n_s
            for s in states:
                d[s] += 1.0 / N
            m = cost_matrix(spec, d)
            q = transition_tensor(spec, d) if t < T else None
            for ys in itertools.product(range(n_y), repeat=N):
                py = math.prod(L[s, y] for s, y in zip(states, ys))
                if py == 0.0:
                    continue
                new_h = tuple(h + (y,) for h, y in zip(hists, ys))
                acts = [pols[i].action(new_h[i]) for i in range(N)]
                new_acc = tuple(acc[i] + spec.beta**t * m[states[i], acts[i]] for i in range(N))
                if t == T:
                    key = (states, new_h, new_acc)
                    nxt[key] = nxt.get(key, 0.0) + p * py
                    continue
                for nstates in itertools.product(range(n_s), repeat=N):
                    pt = math.prod(q[states[i], acts[i], nstates[i]] for i in range(N))
                    if pt == 0.0:
                        continue
                    key = (nstates, new_h, new_acc)
                    nxt[key] = nxt.get(key, 0.0) + p * py * pt
        dist = nxt
    out = np.zeros(N)
    for (_, _, acc), p in dist.items():
        out += p * np.exp(spec.lam * np.array(acc))
    return out


def meanfield_deviation(spec: GameSpec, equilibrium: EquilibriumArtifact, N: int, episodes: int,
                        seed: int, workers: int = 1) -> dict:
    """Mean over episodes of ||d_t^(N) - mu*_{t,1}||_1 per stage, all agents on pi*."""
    ref = equilibrium.flow.marginals(spec.n_s)
    rep = simulate(spec, equilibrium.policy, N, episodes, seed, workers=workers, ref_marginals=ref)
    per_stage = rep.deviation.mean(axis=0)
    se = rep.deviation.std(axis=0, ddof=1) / math.sqrt(episodes) if episodes > 1 else np.zeros_like(per_stage)
    return {"N": N, "per_stage": per_stage, "per_stage_se": se, "mean_l1": float(per_stage.mean()),
            "report": rep}


def best_response_candidate(spec: GameSpec, equilibrium: EquilibriumArtifact) -> Policy:
    """Frozen-flow best response with ties broken toward the highest action index."""
    pol = solve_pomdp(equilibrium.aug, tie_break="high").policy
    pol.name = "best_response"
    return pol


def default_candidates(spec: GameSpec, equilibrium: EquilibriumArtifact, n_random: int = 2,
                       seed: int = 0) -> list:
    """Frozen-flow best response, every constant-action policy, and random policies."""
    cands = [best_response_candidate(spec, equilibrium)]
    T = spec.horizon_T
    for a in range(spec.n_a):
        p = Policy.constant(T, spec.n_y, spec.n_a, a)
        p.name = f"const_{spec.actions[a]}"
        cands.append(p)
    g = np.random.default_rng(seed)
    for j in range(n_random):
        cands.append(Policy.random(T, spec.n_y, spec.n_a, g, name=f"random_{j}"))
    return cands


@dataclass
class GapReport:
    N: int
    episodes: int
    seed: int
    equilibrium_mean: float
    equilibrium_se: float
    candidate_names: list
    candidate_means: np.ndarray
    candidate_se: np.ndarray
    candidate_gaps: np.ndarray
    candidate_ci: np.ndarray  # [candidate, 2]
    gap: float
    gap_ci: tuple
    baseline: Optional[SimReport] = field(default=None, repr=False)


def _bootstrap(eq_costs: np.ndarray, cand_costs: np.ndarray, seed: int, resamples: int):
    """Percentile CIs for the overall gap and every per-candidate gain."""
    E = len(eq_costs)
    g = np.random.default_rng([seed, 0x6A9])
    stacked = np.vstack([eq_costs[None, :], cand_costs])
    overall = np.empty(resamples)
    per = np.empty((resamples, cand_costs.shape[0]))
    batch = max(1, min(resamples, (2 * 10**6) // max(E, 1)))
    done = 0
    while done < resamples:
        b = min(batch, resamples - done)
        idx = g.integers(0, E, size=(b, E))
        # one reduction for all rows so identical cost streams give identical means
        m = stacked[:, idx].mean(axis=2)
        m_eq, m_c = m[0], m[1:].T  # [b], [b, candidate]
        per[done:done + b] = np.maximum(0.0, m_eq[:, None] - m_c)
        overall[done:done + b] = np.maximum(0.0, m_eq - m_c.min(axis=1))
        done += b
    ci = tuple(np.percentile(overall, [2.5, 97.5]))
    per_ci = np.percentile(per, [2.5, 97.5], axis=0).T
    return ci, per_ci


def nash_gap(spec: GameSpec, pi_star: Policy, candidates: Sequence[Policy], N: int, episodes: int,
             seed: int, workers: int = 1, ref_marginals: Optional[np.ndarray] = None,
             resamples: int = BOOTSTRAP_RESAMPLES) -> GapReport:
    """Estimate how much agent 1 gains by deviating to the best of ``candidates``.

    All runs share the same random streams, so agents 2..N see identical
    draws in every run.  The estimate is a lower bound on the true gap,
    which is a supremum over all observation policies.
    """
    if not candidates:
        raise ValueError("need at least one deviation candidate")
    base = simulate(spec, pi_star, N, episodes, seed, workers=workers, ref_marginals=ref_marginals)
    eq_costs = base.agent0_costs
    cand_costs = []
    for c in candidates:
        rep = simulate(spec, [c] + [pi_star] * (N - 1), N, episodes, seed, workers=workers)
        cand_costs.append(rep.agent0_costs)
    cand_costs = np.array(cand_costs)
    means = cand_costs.mean(axis=1)
    se = np.array([_se(c) for c in cand_costs])
    eq_mean = float(eq_costs.mean())
    gaps = np.maximum(0.0, eq_mean - means)
    gap = float(max(0.0, eq_mean - means.min()))
    ci, per_ci = _bootstrap(eq_costs, cand_costs, seed, resamples)
    return GapReport(N=N, episodes=episodes, seed=seed, equilibrium_mean=eq_mean,
                     equilibrium_se=_se(eq_costs), candidate_names=[c.name for c in candidates],
                     candidate_means=means, candidate_se=se, candidate_gaps=gaps, candidate_ci=per_ci,
                     gap=gap, gap_ci=ci, baseline=base)
