import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsmfg import io as mio
from rsmfg.cli import gap_rows, main
from rsmfg.fixtures import random_spec, toy_a, toy_b
from rsmfg.game_model import GameSpec
from rsmfg.mfg_solver import evaluate_policy, find_equilibrium
from rsmfg.risk_augmentation import build_augmented

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def _replace(spec, **kw):
    return GameSpec(**{**spec.__dict__, **kw})


def _model(tmp_path, spec, name="model.json"):
    path = tmp_path / name
    mio.save_model(spec, path)
    return str(path)


def _solve(tmp_path, model, *extra):
    out = str(tmp_path / "eq.json")
    code = main(["solve", model, "--out", out, *extra])
    return code, out


def test_shipped_fixtures_load():
    assert mio.spec_hash(mio.load_model(FIXTURES / "toy_a.json")) == mio.spec_hash(toy_a())
    assert mio.spec_hash(mio.load_model(FIXTURES / "toy_b.json")) == mio.spec_hash(toy_b())


def test_validate_exit_codes(tmp_path, capsys):
    assert main(["validate", str(FIXTURES / "toy_a.json")]) == 0
    doc = mio.spec_to_dict(toy_a())
    doc["transition_base"][1][0] = [0.5, 0.1]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    capsys.readouterr()
    assert main(["validate", str(bad)]) == 1
    assert "transition_base[s=1, a=0]" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "junk.json").write_text("{not json")
    assert main(["validate", str(tmp_path / "junk.json")]) == 2
    del doc["kappa0"]
    (tmp_path / "nokappa.json").write_text(json.dumps(doc))
    assert main(["validate", str(tmp_path / "nokappa.json")]) == 2


def test_near_stochastic_rows_are_renormalized(tmp_path):
    doc = mio.spec_to_dict(toy_b())
    doc["observation_kernel"][0] = [0.8 + 4e-13, 0.2]
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    spec = mio.load_model(path)
    assert spec.observation_kernel[0].sum() == 1.0


def test_solve_toy_a(tmp_path):
    code, out = _solve(tmp_path, str(FIXTURES / "toy_a.json"))
    assert code == 0
    doc = json.loads(Path(out).read_text())
    assert doc["converged"] and doc["value"] == 1.0 and doc["nce_residual"] < 1e-12
    assert set(doc["policy"].values()) == {"a0"}
    assert doc["policy"]["y0"] == "a0" and "y0/a0/y0" in doc["policy"]
    assert doc["flow"] == [[{"state": "s0", "level": 0.0, "mass": 1.0}]] * 3


def test_solve_decoupled_and_max_iter(tmp_path):
    spec = random_spec(np.random.default_rng(3), n_s=2, n_a=2, n_y=2, T=1, coupled=False)
    code, out = _solve(tmp_path, _model(tmp_path, spec))
    assert code == 0 and json.loads(Path(out).read_text())["iterations"] == 1
    code, out = _solve(tmp_path, str(FIXTURES / "toy_a.json"), "--max-iter", "0")
    assert code == 3 and json.loads(Path(out).read_text())["converged"] is False


def test_solve_cap_exit(tmp_path, monkeypatch):
    import rsmfg.cli as cli
    from rsmfg.risk_augmentation import CapExceededError

    def boom(*a, **k):
        raise CapExceededError("stage 3: 2000000 reachable cost levels exceeds cap 1000000")

    monkeypatch.setattr(cli, "find_equilibrium", boom)
    code, _ = _solve(tmp_path, str(FIXTURES / "toy_a.json"))
    assert code == 4


def test_equilibrium_round_trip(tmp_path):
    spec = random_spec(np.random.default_rng(6), n_s=3, n_a=2, n_y=2, T=2, cost_scale=1.3)
    model = _model(tmp_path, spec)
    code, out = _solve(tmp_path, model)
    assert code in (0, 3)
    loaded = mio.load_model(model)
    doc = mio.load_equilibrium(out)
    policy = mio.policy_from_dict(loaded, doc["policy"])
    flow = mio.flow_from_list(loaded, doc["flow"])
    eq = find_equilibrium(spec)
    assert policy == eq.policy
    assert mio.flow_to_list(spec, flow) == mio.flow_to_list(spec, eq.flow)
    val = evaluate_policy(build_augmented(loaded, flow), policy)
    assert abs(val - doc["value"]) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_model_round_trip_lossless(seed):
    spec = random_spec(np.random.default_rng(seed), n_s=3, n_a=2, n_y=2, T=1)
    text = json.dumps(mio.spec_to_dict(spec))
    back = mio.spec_from_dict(json.loads(text))
    assert mio.spec_hash(back) == mio.spec_hash(spec)
    for x in spec.cost_couple.ravel():
        assert float(format(x, ".17g")) == x


def test_hash_ignores_name_only():
    spec = toy_b()
    assert mio.spec_hash(_replace(spec, name="other")) == mio.spec_hash(spec)
    assert mio.spec_hash(_replace(spec, lam=1.0000001)) != mio.spec_hash(spec)


def test_simulate_toy_a_golden(tmp_path):
    _, eq = _solve(tmp_path, str(FIXTURES / "toy_a.json"))
    out = tmp_path / "sim.csv"
    assert main(["simulate", str(FIXTURES / "toy_a.json"), "--policy", eq, "--agents", "1",
                 "--episodes", "50", "--seed", "1", "--out", str(out)]) == 0
    assert out.read_bytes() == (b"N,policy,mean_cost,std_err,gap,gap_ci_lo,gap_ci_hi,meanfield_l1\n"
                                b"1,equilibrium,1,0,0,0,0,0\n")


def test_simulate_zero_cost_and_seed_repeat(tmp_path):
    spec = _replace(toy_b(), cost_base=np.zeros((2, 2)), cost_couple=None, kappa0=[0.3, 0.7])
    model = _model(tmp_path, spec)
    _, eq = _solve(tmp_path, model)
    args = ["simulate", model, "--policy", eq, "--agents", "3", "--episodes", "200", "--seed", "9"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    row = mio.read_sweep_csv(a)[0]
    assert row["mean_cost"] == 1.0 and row["std_err"] == 0.0


def test_hash_mismatch_exit(tmp_path):
    _, eq = _solve(tmp_path, str(FIXTURES / "toy_a.json"))
    other = _model(tmp_path, _replace(toy_a(), lam=2.0))
    assert main(["simulate", other, "--policy", eq, "--agents", "2", "--episodes", "5"]) == 5
    assert main(["nash-gap", other, "--policy", eq, "--sweep", "4", "--episodes", "5"]) == 5
    assert main(["simulate", other, "--policy", str(tmp_path / "nope.json"), "--agents", "2"]) == 2


def test_nash_gap_single_n_rows(tmp_path):
    model = str(FIXTURES / "toy_b.json")
    _, eq = _solve(tmp_path, model)
    out = tmp_path / "gap.csv"
    assert main(["nash-gap", model, "--policy", eq, "--sweep", "8", "--episodes", "300",
                 "--seed", "2", "--out", str(out)]) == 0
    rows = mio.read_sweep_csv(out)
    assert [r["policy"] for r in rows] == ["equilibrium", "best_response", "const_a0", "const_a1",
                                            "random_0", "random_1"]
    assert all(r["N"] == 8 for r in rows)
    assert all(math.isfinite(r[k]) for r in rows for k in mio.SWEEP_HEADER[2:])


def test_decoupled_gaps_vanish_up_to_ci():
    spec = random_spec(np.random.default_rng(21), n_s=3, n_a=2, n_y=2, T=1, coupled=False)
    eq = find_equilibrium(spec)
    rows = gap_rows(spec, eq, [4, 16], 3000, seed=1)
    for r in rows:
        if r["policy"] == "best_response":
            assert r["gap"] <= 3 * math.hypot(r["std_err"], rows[0]["std_err"])


def test_horizon_command(tmp_path, capsys):
    spec = _replace(toy_a(), beta=0.5, lam=1.0, cost_base=[[0.0, 1.0], [1.0, 0.5]], cost_couple=None)
    assert main(["horizon", _model(tmp_path, spec), "--epsilon", "3"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "T=5"
    zero = _replace(spec, cost_base=np.zeros((2, 2)))
    assert main(["horizon", _model(tmp_path, zero, "z.json"), "--epsilon", "0.001"]) == 0
    assert capsys.readouterr().out.splitlines() == ["T=0", "theta=0.0"]
    assert main(["horizon", str(FIXTURES / "toy_a.json"), "--epsilon", "1"]) == 6
