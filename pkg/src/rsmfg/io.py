"""JSON model/equilibrium files and sweep CSV output."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .flows import MeasureFlow, StageDistribution
from .game_model import GameSpec
from .policies import Policy

SWEEP_HEADER = ["N", "policy", "mean_cost", "std_err", "gap", "gap_ci_lo", "gap_ci_hi", "meanfield_l1"]


class ModelFormatError(ValueError):
    pass


def _renormalize(arr: np.ndarray) -> np.ndarray:
    # Rows within 1e-12 of the simplex are rescaled once at load; rows already
    # within rounding noise are left alone so save/load is lossless and
    # idempotent.  Gross errors pass through for validate_spec to report.
    sums = np.apply_along_axis(math.fsum, -1, arr)[..., None] if arr.size else arr.sum(-1, keepdims=True)
    dev = np.abs(sums - 1.0)
    fix = (dev > 1e-14) & (dev <= 1e-12)
    return np.where(fix, arr / np.where(fix, sums, 1.0), arr)


def spec_from_dict(doc: dict) -> GameSpec:
    required = ["states", "actions", "observations", "transition_base", "observation_kernel",
                "cost_base", "beta", "lambda", "horizon_T", "kappa0"]
    missing = [k for k in required if k not in doc]
    if missing:
        raise ModelFormatError(f"model file is missing keys: {', '.join(missing)}")
    try:
        tc = doc.get("transition_couple")
        cc = doc.get("cost_couple")
        return GameSpec(
            states=[str(s) for s in doc["states"]],
            actions=[str(a) for a in doc["actions"]],
            observations=[str(y) for y in doc["observations"]],
            transition_base=_renormalize(np.array(doc["transition_base"], dtype=float)),
            observation_kernel=_renormalize(np.array(doc["observation_kernel"], dtype=float)),
            cost_base=np.array(doc["cost_base"], dtype=float),
            beta=float(doc["beta"]),
            lam=float(doc["lambda"]),
            horizon_T=int(doc["horizon_T"]),
            kappa0=_renormalize(np.array(doc["kappa0"], dtype=float)),
            transition_couple=None if tc is None else _renormalize(np.array(tc, dtype=float)),
            cost_couple=None if cc is None else np.array(cc, dtype=float),
            name=str(doc.get("name", "")),
        )
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from exc


def spec_to_dict(spec: GameSpec) -> dict:
    doc = {
        "name": spec.name,
        "states": list(spec.states),
        "actions": list(spec.actions),
        "observations": list(spec.observations),
        "transition_base": spec.transition_base.tolist(),
        "observation_kernel": spec.observation_kernel.tolist(),
        "cost_base": spec.cost_base.tolist(),
        "beta": spec.beta,
        "lambda": spec.lam,
        "horizon_T": spec.horizon_T,
        "kappa0": spec.kappa0.tolist(),
    }
    if spec.transition_couple is not None:
        doc["transition_couple"] = spec.transition_couple.tolist()
    if spec.cost_couple is not None:
        doc["cost_couple"] = spec.cost_couple.tolist()
    return doc


def load_model(path) -> GameSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: top-level JSON value must be an object")
    return spec_from_dict(doc)


def save_model(spec: GameSpec, path) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2) + "\n", encoding="utf-8")


def spec_hash(spec: GameSpec) -> str:
    """SHA-256 of the canonical JSON form of the model (name excluded)."""
    doc = spec_to_dict(spec)
    doc.pop("name")
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def history_key(spec: GameSpec, history) -> str:
    """'y0/a0/y1/...' using labels; history alternates observation and action indices."""
    parts = [spec.observations[h] if i % 2 == 0 else spec.actions[h] for i, h in enumerate(history)]
    return "/".join(parts)


def policy_to_dict(spec: GameSpec, policy: Policy) -> dict:
    return {history_key(spec, hist): spec.actions[policy.action(obs)] for obs, hist in policy.histories()}


def policy_from_dict(spec: GameSpec, doc: dict) -> Policy:
    y_idx = {y: i for i, y in enumerate(spec.observations)}
    a_idx = {a: i for i, a in enumerate(spec.actions)}
    T, n_y = spec.horizon_T, spec.n_y
    tables = [np.zeros(n_y ** (t + 1), dtype=np.int64) for t in range(T + 1)]
    filled = [np.zeros(n_y ** (t + 1), dtype=bool) for t in range(T + 1)]
    for key, label in doc.items():
        parts = key.split("/")
        obs = [y_idx[p] for p in parts[0::2]]
        t = len(obs) - 1
        if t > T:
            raise ModelFormatError(f"policy key {key!r} is longer than the horizon")
        idx = 0
        for y in obs:
            idx = idx * n_y + y
        tables[t][idx] = a_idx[label]
        filled[t][idx] = True
    for t, f in enumerate(filled):
        if not f.all():
            raise ModelFormatError(f"policy has no action for some stage-{t} observation histories")
    return Policy(n_y, spec.n_a, tables, name="equilibrium")


def flow_to_list(spec: GameSpec, flow: MeasureFlow) -> list:
    return [[{"state": spec.states[s], "level": c, "mass": p} for s, c, p in st.atoms()]
            for st in flow.stages]


def flow_from_list(spec: GameSpec, doc: list) -> MeasureFlow:
    s_idx = {s: i for i, s in enumerate(spec.states)}
    return MeasureFlow(StageDistribution.from_atoms(
        ((s_idx[a["state"]], float(a["level"]), float(a["mass"])) for a in stage), drop_zero=False)
        for stage in doc)


def equilibrium_to_dict(spec: GameSpec, eq) -> dict:
    return {
        "policy": policy_to_dict(spec, eq.policy),
        "flow": flow_to_list(spec, eq.flow),
        "nce_residual": eq.nce_residual,
        "optimality_gap": eq.optimality_gap,
        "value": eq.value,
        "iterations": eq.iterations,
        "converged": eq.converged,
        "cycle_detected": eq.cycle_detected,
        "spec_hash": spec_hash(spec),
    }


def save_equilibrium(spec: GameSpec, eq, path) -> None:
    Path(path).write_text(json.dumps(equilibrium_to_dict(spec, eq), indent=1) + "\n", encoding="utf-8")


def load_equilibrium(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def fmt_num(x: float) -> str:
    return format(float(x), ".17g")


def sweep_csv(rows) -> str:
    """Render sweep rows (dicts keyed by SWEEP_HEADER) as CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([int(r["N"]), r["policy"]] + [fmt_num(r[k]) for k in SWEEP_HEADER[2:]])
    return buf.getvalue()


def read_sweep_csv(path) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["N"] = int(r["N"])
        for k in SWEEP_HEADER[2:]:
            r[k] = float(r[k])
    return rows
