"""Finite partially observed risk-sensitive game with affine mean-field coupling.

The realized transition kernel and one-stage cost at mean field ``d`` are

    q(s'|s,a,d) = sum_k d(k) Q_k(s'|s,a)        (coupled)
    q(s'|s,a,d) = Q_base(s'|s,a)                (decoupled)
    m(s,a,d)    = m0(s,a) + sum_k d(k) m1(s,a,k)

so every simplex point yields a stochastic kernel and the dependence on ``d``
is Lipschitz with explicit constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

SIMPLEX_TOL = 1e-12


class SpecError(ValueError):
    """Raised for malformed arguments (bad indices, empty inputs)."""


@dataclass(frozen=True)
class GameSpec:
    states: tuple
    actions: tuple
    observations: tuple
    transition_base: np.ndarray  # [s, a, s']
    observation_kernel: np.ndarray  # [s, y]
    cost_base: np.ndarray  # [s, a]
    beta: float
    lam: float
    horizon_T: int
    kappa0: np.ndarray
    transition_couple: Optional[np.ndarray] = None  # [k, s, a, s']
    cost_couple: Optional[np.ndarray] = None  # [s, a, k]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "observations", tuple(self.observations))
        for attr in ("transition_base", "observation_kernel", "cost_base", "kappa0",
                     "transition_couple", "cost_couple"):
            val = getattr(self, attr)
            if val is not None:
                arr = np.array(val, dtype=float)
                arr.setflags(write=False)
                object.__setattr__(self, attr, arr)
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "horizon_T", int(self.horizon_T))

    @property
    def n_s(self) -> int:
        return len(self.states)

    @property
    def n_a(self) -> int:
        return len(self.actions)

    @property
    def n_y(self) -> int:
        return len(self.observations)

    @property
    def transition_coupled(self) -> bool:
        return self.transition_couple is not None

    @property
    def cost_coupled(self) -> bool:
        return self.cost_couple is not None and bool(np.any(self.cost_couple != 0.0))

    @property
    def decoupled(self) -> bool:
        return not self.transition_coupled and not self.cost_coupled

    @property
    def cost_sup_K(self) -> float:
        return float(vertex_costs(self).max())

    @property
    def cost_bound_L(self) -> float:
        """Bound on the accumulated discounted cost over stages 0..T.

        ``K(1-beta^(T+1))/(1-beta)`` for beta < 1 and ``K(T+1)`` for beta = 1.
        """
        K = self.cost_sup_K
        if self.beta < 1.0:
            return K * (1.0 - self.beta ** (self.horizon_T + 1)) / (1.0 - self.beta)
        return K * (self.horizon_T + 1)

    def with_horizon(self, T: int) -> "GameSpec":
        return GameSpec(**{**self.__dict__, "horizon_T": T})

    def with_kappa0(self, kappa0) -> "GameSpec":
        return GameSpec(**{**self.__dict__, "kappa0": kappa0})

    def single_agent_reduction(self) -> "GameSpec":
        """Decoupled spec equal in law to the N = 1 game.

        With one agent the empirical mean field is the Dirac at the agent's own
        state, so q and m collapse to functions of (s, a) alone.
        """
        n_s = self.n_s
        trans = np.empty_like(self.transition_base)
        cost = np.empty_like(self.cost_base)
        for s in range(n_s):
            d = np.zeros(n_s)
            d[s] = 1.0
            for a in range(self.n_a):
                trans[s, a] = eval_transition(self, s, a, d)
                cost[s, a] = eval_cost(self, s, a, d)
        return GameSpec(
            states=self.states, actions=self.actions, observations=self.observations,
            transition_base=trans, observation_kernel=self.observation_kernel,
            cost_base=cost, beta=self.beta, lam=self.lam, horizon_T=self.horizon_T,
            kappa0=self.kappa0, name=(self.name + "|N=1").lstrip("|"),
        )


def vertex_costs(spec: GameSpec) -> np.ndarray:
    """m(s, a, delta_k) for every (s, a, k), shape [s, a, k]."""
    base = spec.cost_base[:, :, None]
    if spec.cost_couple is None:
        return np.broadcast_to(base, (spec.n_s, spec.n_a, spec.n_s)).copy()
    return base + spec.cost_couple


@dataclass
class ValidationReport:
    problems: list = field(default_factory=list)

    def add(self, msg: str) -> None:
        self.problems.append(msg)

    def __bool__(self) -> bool:
        # truthy when there is something to report
        return bool(self.problems)

    def __iter__(self):
        return iter(self.problems)

    def __str__(self) -> str:
        return "\n".join(self.problems)


def _check_rows(report, arr, label, axis_names):
    if np.any(~np.isfinite(arr)):
        report.add(f"{label}: non-finite entries")
        return
    neg = np.argwhere(arr < 0.0)
    for idx in neg[:, :-1] if neg.size else []:
        report.add(f"{label}{_fmt_idx(idx, axis_names)}: negative entry")
    sums = arr.sum(axis=-1)
    bad = np.argwhere(np.abs(sums - 1.0) > SIMPLEX_TOL)
    for idx in bad:
        report.add(f"{label}{_fmt_idx(idx, axis_names)}: row sums to {sums[tuple(idx)]!r}, expected 1")


def _fmt_idx(idx, names) -> str:
    return "[" + ", ".join(f"{n}={int(i)}" for n, i in zip(names, idx)) + "]"


def validate_spec(spec: GameSpec) -> ValidationReport:
    """Collect every violated invariant; an empty report means the spec is valid."""
    report = ValidationReport()
    n_s, n_a, n_y = spec.n_s, spec.n_a, spec.n_y
    if min(n_s, n_a, n_y) == 0:
        report.add("state, action and observation sets must be nonempty")
        return report
    for labels, what in ((spec.states, "states"), (spec.actions, "actions"),
                         (spec.observations, "observations")):
        if len(set(labels)) != len(labels):
            report.add(f"{what}: duplicate labels")

    shapes = {
        "transition_base": (spec.transition_base, (n_s, n_a, n_s)),
        "observation_kernel": (spec.observation_kernel, (n_s, n_y)),
        "cost_base": (spec.cost_base, (n_s, n_a)),
        "kappa0": (spec.kappa0, (n_s,)),
    }
    if spec.transition_couple is not None:
        shapes["transition_couple"] = (spec.transition_couple, (n_s, n_s, n_a, n_s))
    if spec.cost_couple is not None:
        shapes["cost_couple"] = (spec.cost_couple, (n_s, n_a, n_s))
    shape_ok = True
    for name, (arr, shape) in shapes.items():
        if arr.shape != shape:
            report.add(f"{name}: shape {arr.shape}, expected {shape}")
            shape_ok = False
    if not shape_ok:
        return report

    _check_rows(report, spec.transition_base, "transition_base", ("s", "a"))
    if spec.transition_couple is not None:
        _check_rows(report, spec.transition_couple, "transition_couple", ("k", "s", "a"))
    _check_rows(report, spec.observation_kernel, "observation_kernel", ("s",))
    _check_rows(report, spec.kappa0[None, :], "kappa0", ())

    if np.any(~np.isfinite(spec.cost_base)):
        report.add("cost_base: non-finite entries")
    else:
        for s, a in np.argwhere(spec.cost_base < 0.0):
            report.add(f"cost_base[s={s}, a={a}]: negative cost {spec.cost_base[s, a]!r}")
    if spec.cost_couple is not None and np.all(np.isfinite(spec.cost_couple)):
        # affine in d: nonnegative on the simplex iff nonnegative at every vertex
        vc = vertex_costs(spec)
        for s, a, k in np.argwhere(vc < 0.0):
            report.add(f"cost at [s={s}, a={a}, d=delta_{k}]: negative cost {vc[s, a, k]!r}")
    elif spec.cost_couple is not None:
        report.add("cost_couple: non-finite entries")

    if not (0.0 < spec.beta <= 1.0):
        report.add(f"beta={spec.beta!r} outside (0, 1]")
    if not spec.lam > 0.0:
        report.add(f"lambda={spec.lam!r} must be > 0")
    if spec.horizon_T < 0:
        report.add(f"horizon_T={spec.horizon_T} must be >= 0")
    return report


def _check_index(spec: GameSpec, s: int, a: int) -> None:
    if not (0 <= s < spec.n_s):
        raise SpecError(f"state index {s} out of range [0, {spec.n_s})")
    if not (0 <= a < spec.n_a):
        raise SpecError(f"action index {a} out of range [0, {spec.n_a})")


def eval_transition(spec: GameSpec, s: int, a: int, d) -> np.ndarray:
    """Next-state distribution q(.|s, a, d)."""
    _check_index(spec, s, a)
    if spec.transition_couple is None:
        return spec.transition_base[s, a].copy()
    return np.asarray(d, dtype=float) @ spec.transition_couple[:, s, a, :]


def eval_cost(spec: GameSpec, s: int, a: int, d) -> float:
    _check_index(spec, s, a)
    c = spec.cost_base[s, a]
    if spec.cost_couple is not None:
        c = c + float(np.dot(spec.cost_couple[s, a], np.asarray(d, dtype=float)))
    return float(c)


def transition_tensor(spec: GameSpec, d) -> np.ndarray:
    """q(.|s, a, d) for all (s, a) at once, shape [s, a, s']."""
    if spec.transition_couple is None:
        return np.array(spec.transition_base)
    return np.einsum("k,ksat->sat", np.asarray(d, dtype=float), spec.transition_couple)


def cost_matrix(spec: GameSpec, d) -> np.ndarray:
    """m(s, a, d) for all (s, a), shape [s, a]."""
    if spec.cost_couple is None:
        return np.array(spec.cost_base)
    return spec.cost_base + spec.cost_couple @ np.asarray(d, dtype=float)


def empirical_distribution(state_indices: Sequence[int], n_s: Optional[int] = None,
                           exact: bool = False):
    """Empirical mean field of a list of state indices.

    With ``exact=True`` the entries are ``Fraction`` objects.
    """
    idx = np.asarray(state_indices, dtype=int)
    if idx.size == 0:
        raise SpecError("empirical distribution of an empty population")
    if n_s is None:
        n_s = int(idx.max()) + 1
    counts = np.bincount(idx, minlength=n_s)
    if exact:
        return [Fraction(int(c), idx.size) for c in counts]
    return counts / idx.size


def lipschitz_moduli(spec: GameSpec) -> tuple[float, float]:
    """Lipschitz constants of d -> q(.|s,a,d) in TV and d -> m(s,a,d) in sup norm.

    Both are taken with respect to the L1 norm on the mean field; the cost
    constant is the largest coupling coefficient and the kernel constant is the
    largest pairwise total-variation distance between vertex kernels.
    """
    L_q = 0.0
    if spec.transition_couple is not None:
        Q = spec.transition_couple
        # pairwise TV between vertex kernels, maximized over (s, a)
        diff = np.abs(Q[:, None] - Q[None, :]).sum(axis=-1) / 2.0
        L_q = float(diff.max())
    L_m = 0.0
    if spec.cost_couple is not None:
        L_m = float(np.abs(spec.cost_couple).max())
    return L_q, L_m
