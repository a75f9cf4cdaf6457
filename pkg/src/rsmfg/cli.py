"""Command-line interface: validate | solve | simulate | nash-gap | horizon."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io as mio
from .belief_engine import ZeroProbabilityObservation
from .game_model import validate_spec
from .mfg_solver import (
    EquilibriumArtifact,
    UnsupportedDiscount,
    choose_horizon,
    find_equilibrium,
    solve_pomdp,
    truncation_bound,
)
from .nagent_sim import default_candidates, nash_gap, simulate
from .risk_augmentation import CapExceededError, build_augmented

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_NONCONV, EXIT_CAPS, EXIT_HASH, EXIT_BETA = 0, 1, 2, 3, 4, 5, 6


class CliError(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


def _load_valid(path):
    try:
        spec = mio.load_model(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}")
    except mio.ModelFormatError as exc:
        raise CliError(EXIT_IO, str(exc))
    report = validate_spec(spec)
    if report:
        raise CliError(EXIT_INVALID, f"{path}: invalid model\n{report}")
    return spec


def _load_policy(spec, path):
    try:
        doc = mio.load_equilibrium(path)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_IO, f"cannot read policy file {path}: {exc}")
    if doc.get("spec_hash") != mio.spec_hash(spec):
        raise CliError(EXIT_HASH, f"{path} was computed for a different model (spec_hash mismatch)")
    try:
        policy = mio.policy_from_dict(spec, doc["policy"])
        flow = mio.flow_from_list(spec, doc["flow"])
    except (KeyError, mio.ModelFormatError) as exc:
        raise CliError(EXIT_IO, f"malformed policy file {path}: {exc}")
    return doc, policy, flow


def cmd_validate(args) -> int:
    _load_valid(args.path)
    print(f"{args.path}: ok")
    return EXIT_OK


def cmd_solve(args) -> int:
    spec = _load_valid(args.path)
    try:
        eq = find_equilibrium(spec, tol=args.tol, max_iter=args.max_iter, damping=args.damping)
    except CapExceededError as exc:
        raise CliError(EXIT_CAPS, f"size cap exceeded: {exc}")
    mio.save_equilibrium(spec, eq, args.out)
    print(f"converged={eq.converged} iterations={eq.iterations} value={eq.value!r} "
          f"nce_residual={eq.nce_residual:.3e} optimality_gap={eq.optimality_gap:.3e}")
    if eq.cycle_detected:
        print("warning: best-response iteration is cycling between policies", file=sys.stderr)
    return EXIT_OK if eq.converged else EXIT_NONCONV


def _write(out, text: str) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def cmd_simulate(args) -> int:
    spec = _load_valid(args.model)
    _, policy, flow = _load_policy(spec, args.policy)
    try:
        rep = simulate(spec, policy, args.agents, args.episodes, args.seed, workers=args.workers,
                       ref_marginals=flow.marginals(spec.n_s))
    except ZeroProbabilityObservation as exc:
        raise CliError(EXIT_INVALID, str(exc))
    row = {"N": args.agents, "policy": "equilibrium", "mean_cost": rep.population_mean,
           "std_err": rep.population_se, "gap": 0.0, "gap_ci_lo": 0.0, "gap_ci_hi": 0.0,
           "meanfield_l1": float(rep.deviation.mean(axis=0).mean())}
    _write(args.out, mio.sweep_csv([row]))
    return EXIT_OK


def _artifact_from_file(spec, doc, policy, flow) -> EquilibriumArtifact:
    sol = solve_pomdp(build_augmented(spec, flow))
    return EquilibriumArtifact(policy=policy, flow=flow, value=doc.get("value", sol.value),
                               nce_residual=doc.get("nce_residual", 0.0),
                               optimality_gap=doc.get("optimality_gap", 0.0),
                               iterations=doc.get("iterations", 0), converged=doc.get("converged", True),
                               solution=sol)


def gap_rows(spec, eq: EquilibriumArtifact, sweep, episodes: int, seed: int, workers: int = 1,
             n_random: int = 2) -> list:
    """SweepCSV rows: per N an 'equilibrium' row carrying the overall gap, then one row per candidate."""
    cands = default_candidates(spec, eq, n_random=n_random, seed=seed)
    ref = eq.flow.marginals(spec.n_s)
    rows = []
    for N in sweep:
        g = nash_gap(spec, eq.policy, cands, N, episodes, seed, workers=workers, ref_marginals=ref)
        mf = float(g.baseline.deviation.mean(axis=0).mean())
        rows.append({"N": N, "policy": "equilibrium", "mean_cost": g.equilibrium_mean,
                     "std_err": g.equilibrium_se, "gap": g.gap, "gap_ci_lo": g.gap_ci[0],
                     "gap_ci_hi": g.gap_ci[1], "meanfield_l1": mf})
        for j, name in enumerate(g.candidate_names):
            rows.append({"N": N, "policy": name, "mean_cost": g.candidate_means[j],
                         "std_err": g.candidate_se[j], "gap": g.candidate_gaps[j],
                         "gap_ci_lo": g.candidate_ci[j, 0], "gap_ci_hi": g.candidate_ci[j, 1],
                         "meanfield_l1": mf})
    return rows


def cmd_nash_gap(args) -> int:
    spec = _load_valid(args.model)
    doc, policy, flow = _load_policy(spec, args.policy)
    try:
        sweep = [int(x) for x in args.sweep.split(",") if x.strip()]
    except ValueError:
        raise CliError(EXIT_IO, f"bad --sweep value {args.sweep!r}")
    eq = _artifact_from_file(spec, doc, policy, flow)
    rows = gap_rows(spec, eq, sweep, args.episodes, args.seed, workers=args.workers,
                    n_random=args.random_candidates)
    _write(args.out, mio.sweep_csv(rows))
    return EXIT_OK


def cmd_horizon(args) -> int:
    spec = _load_valid(args.model)
    try:
        T = choose_horizon(spec, args.epsilon)
        theta = truncation_bound(spec)
    except UnsupportedDiscount as exc:
        raise CliError(EXIT_BETA, str(exc))
    print(f"T={T}")
    print(f"theta={theta!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rsmfg", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a model file")
    v.add_argument("path")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("solve", help="compute a mean-field equilibrium")
    s.add_argument("path")
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--max-iter", type=int, default=500)
    s.add_argument("--damping", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_solve)

    def sim_common(q):
        q.add_argument("model")
        q.add_argument("--policy", required=True, help="equilibrium file written by 'solve'")
        q.add_argument("--episodes", type=int, default=1000)
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--workers", type=int, default=1)
        q.add_argument("--out", default="-")

    m = sub.add_parser("simulate", help="Monte Carlo run of the N-agent game under the equilibrium policy")
    sim_common(m)
    m.add_argument("--agents", type=int, required=True)
    m.set_defaults(func=cmd_simulate)

    g = sub.add_parser("nash-gap", help="epsilon-Nash gap estimates over a sweep of N")
    sim_common(g)
    g.add_argument("--sweep", default="16,64,256,1024")
    g.add_argument("--random-candidates", type=int, default=2)
    g.set_defaults(func=cmd_nash_gap)

    h = sub.add_parser("horizon", help="truncation constant and horizon for a target epsilon")
    h.add_argument("model")
    h.add_argument("--epsilon", type=float, required=True)
    h.set_defaults(func=cmd_horizon)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except CliError as exc:
        print(exc, file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
