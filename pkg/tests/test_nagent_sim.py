import numpy as np
import pytest

from rsmfg.fixtures import random_spec, toy_a, toy_b
from rsmfg.flows import static_flow
from rsmfg.game_model import GameSpec
from rsmfg.mfg_solver import find_equilibrium, solve_pomdp
from rsmfg.nagent_sim import (
    best_response_candidate,
    default_candidates,
    exact_cost_small,
    meanfield_deviation,
    nash_gap,
    simulate,
)
from rsmfg.policies import Policy
from rsmfg.risk_augmentation import CapExceededError, build_augmented
from rsmfg.rng import stream_keys, uniforms

from oracles import flow_cost_brute_force


def _replace(spec, **kw):
    return GameSpec(**{**spec.__dict__, **kw})


def _small_coupled(seed=5):
    return random_spec(np.random.default_rng(seed), n_s=2, n_a=2, n_y=2, T=1, lam=1.0, cost_scale=1.5)


def test_toy_a_single_agent_deterministic():
    eq = find_equilibrium(toy_a())
    rep = simulate(toy_a(), eq.policy, 1, 200, seed=3)
    assert rep.agent_mean[0] == 1.0 and rep.agent_se[0] == 0.0
    dev = meanfield_deviation(toy_a(), eq, 1, 50, seed=3)
    assert (dev["per_stage"] == 0.0).all()


def test_zero_cost_everyone_pays_one():
    spec = _replace(toy_b(), cost_base=np.zeros((2, 2)), cost_couple=None, kappa0=[0.5, 0.5])
    rep = simulate(spec, Policy.random(1, 2, 2, np.random.default_rng(0)), 3, 100, seed=1)
    assert (rep.agent_mean == 1.0).all()
    np.testing.assert_allclose(exact_cost_small(spec, Policy.constant(1, 2, 2, 1), 3), 1.0, rtol=1e-14)


def test_exact_single_agent_matches_trajectory_enumeration():
    rng = np.random.default_rng(4)
    spec = random_spec(rng, n_s=3, n_a=1, n_y=2, T=2, coupled=False)
    pol = Policy.constant(2, 2, 1, 0)
    exact = exact_cost_small(spec, pol, 1)[0]
    assert abs(exact - flow_cost_brute_force(spec, pol, np.zeros((4, 3)))) <= 1e-12 * exact


def test_exact_symmetric_agents_equal():
    spec = _small_coupled()
    pol = Policy.random(1, 2, 2, np.random.default_rng(9))
    w = exact_cost_small(spec, pol, 2)
    assert w[0] == pytest.approx(w[1], rel=1e-14)


def test_simulation_matches_exact_two_agents():
    spec = _small_coupled()
    pols = [Policy.random(1, 2, 2, np.random.default_rng(s)) for s in (1, 2)]
    exact = exact_cost_small(spec, pols, 2)
    rep = simulate(spec, pols, 2, 20000, seed=17)
    assert (np.abs(rep.agent_mean - exact) <= 3 * rep.agent_se).all()


def test_exchangeability_monte_carlo():
    spec = _small_coupled(8)
    rep = simulate(spec, Policy.random(1, 2, 2, np.random.default_rng(2)), 4, 5000, seed=2)
    joint_se = np.sqrt(rep.agent_se[:, None] ** 2 + rep.agent_se[None, :] ** 2)
    assert (np.abs(rep.agent_mean[:, None] - rep.agent_mean[None, :]) <= 4 * joint_se + 1e-15).all()


def test_exact_cap():
    with pytest.raises(CapExceededError):
        exact_cost_small(_small_coupled(), Policy.constant(1, 2, 2, 0), 6, cap=1000)


def test_workers_do_not_change_results():
    spec = _small_coupled()
    pol = Policy.random(1, 2, 2, np.random.default_rng(0))
    a = simulate(spec, pol, 7, 2500, seed=4, workers=1, chunk=300)
    b = simulate(spec, pol, 7, 2500, seed=4, workers=3, chunk=300)
    c = simulate(spec, pol, 7, 2500, seed=4, workers=8, chunk=300)
    for other in (b, c):
        np.testing.assert_array_equal(a.agent0_costs, other.agent0_costs)
        np.testing.assert_array_equal(a.agent_mean, other.agent_mean)
        np.testing.assert_array_equal(a.meanfields, other.meanfields)


def test_different_seeds_differ():
    spec = _small_coupled()
    pol = Policy.constant(1, 2, 2, 0)
    a = simulate(spec, pol, 5, 500, seed=1)
    b = simulate(spec, pol, 5, 500, seed=2)
    assert not np.array_equal(a.agent0_costs, b.agent0_costs)


def test_counter_streams_are_uniform():
    keys = stream_keys(123, np.arange(200), np.arange(50))
    u = uniforms(keys, 0, 1).ravel()
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.01
    assert not np.array_equal(u, uniforms(keys, 0, 2).ravel())


def test_policy_horizon_mismatch_rejected():
    with pytest.raises(ValueError):
        simulate(toy_a(), Policy.constant(0, 2, 2, 0), 2, 10, seed=0)


def test_decoupled_gap_vanishes():
    spec = random_spec(np.random.default_rng(21), n_s=3, n_a=2, n_y=2, T=1, coupled=False)
    eq = find_equilibrium(spec)
    br = best_response_candidate(spec, eq)
    g = nash_gap(spec, eq.policy, [br], 8, 4000, seed=5)
    se = np.hypot(g.equilibrium_se, g.candidate_se[0])
    assert g.gap <= 3 * se


def test_two_agent_gap_matches_exact():
    spec = _small_coupled()
    eq = find_equilibrium(spec)
    cands = default_candidates(spec, eq, n_random=2, seed=1)
    exact_eq = exact_cost_small(spec, eq.policy, 2)[0]
    exact_c = [exact_cost_small(spec, [c, eq.policy], 2)[0] for c in cands]
    exact_gap = max(0.0, exact_eq - min(exact_c))
    g = nash_gap(spec, eq.policy, cands, 2, 20000, seed=3)
    width = g.gap_ci[1] - g.gap_ci[0]
    assert abs(g.gap - exact_gap) <= max(width, 3 * g.equilibrium_se)


def test_candidates_cover_required_kinds():
    eq = find_equilibrium(toy_b())
    names = [c.name for c in default_candidates(toy_b(), eq, n_random=2)]
    assert names == ["best_response", "const_a0", "const_a1", "random_0", "random_1"]
    with pytest.raises(ValueError):
        nash_gap(toy_b(), eq.policy, [], 4, 10, seed=0)


def test_population_cost_tracks_limit_value():
    spec = toy_b()
    eq = find_equilibrium(spec)
    rep = simulate(spec, eq.policy, 1024, 500, seed=8)
    assert abs(rep.agent_mean[0] - eq.value) <= max(3 * rep.agent_se[0], 0.05 * eq.value)


def test_frozen_flow_value_matches_single_agent_simulation():
    spec = random_spec(np.random.default_rng(13), n_s=2, n_a=2, n_y=2, T=1, coupled=False)
    sol = solve_pomdp(build_augmented(spec, static_flow(spec.kappa0, 1)))
    rep = simulate(spec, sol.policy, 1, 20000, seed=6)
    assert abs(rep.agent_mean[0] - sol.value) <= 3 * rep.agent_se[0]
