"""Tabular imitation from population datasets, the commitment-mixture
construction with its partition response-function oracle, the full
imitate-then-commit agent, and the closed-form bound helpers.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .game_core import GameError, History, check_joint
from .agents import Agent, AgentSpec, BuildContext, register_agent_kind
from .population import Dataset

COMPONENT_TOL = 1e-12


@dataclass
class ImitationPolicy:
    """Empirical action frequencies keyed by (own type, history prefix).

    Lookups of unseen keys return the uniform strategy.  ``seat`` records
    which seat's actions were counted; histories are stored in (row, col)
    order regardless of seat.
    """

    num_actions: int
    tilde_T: int
    seat: str = "row"
    counts: dict[tuple[str, History], np.ndarray] = field(default_factory=dict)
    empty: bool = False

    def strategy(self, own_type: str, history: History) -> np.ndarray:
        c = self.counts.get((own_type, history))
        if c is None:
            return np.full(self.num_actions, 1.0 / self.num_actions)
        return c / c.sum()

    def visit_count(self, own_type: str, history: History) -> int:
        c = self.counts.get((own_type, history))
        return 0 if c is None else int(c.sum())


def fit_imitation(dataset: Dataset, tilde_T: int, seat: str = "row") -> ImitationPolicy:
    """Count one seat's actions conditioned on (type, preceding history) over
    every episode prefix shorter than ``tilde_T``."""
    T = dataset.metadata.get("T", 0)
    n = dataset.metadata.get("N")
    if n is None:
        raise GameError("dataset metadata missing action count N")
    if dataset.episodes and tilde_T > T:
        raise GameError(f"tilde_T={tilde_T} exceeds dataset horizon T={T}")
    policy = ImitationPolicy(
        num_actions=n, tilde_T=tilde_T, seat=seat, empty=not dataset.episodes
    )
    own_idx = 0 if seat == "row" else 1
    type_idx = 0 if seat == "row" else 1
    for theta1, theta2, history in dataset.episodes:
        own_type = (theta1, theta2)[type_idx]
        for t in range(min(tilde_T, len(history))):
            key = (own_type, history[:t])
            c = policy.counts.get(key)
            if c is None:
                c = np.zeros(n)
                policy.counts[key] = c
            c[history[t][own_idx]] += 1.0
    return policy


def empirical_joint(history, up_to: int) -> np.ndarray:
    """Frequency of each (row, col) action pair over the first ``up_to``
    stages."""
    if up_to < 1:
        raise GameError(f"up_to must be >= 1, got {up_to}")
    if up_to > len(history):
        raise GameError(f"up_to={up_to} exceeds history length {len(history)}")
    n = max(max(a, b) for a, b in history[:up_to]) + 1
    return empirical_joint_n(history, up_to, n)


def empirical_joint_n(history, up_to: int, n: int) -> np.ndarray:
    z = np.zeros((n, n))
    for a, b in history[:up_to]:
        z[a, b] += 1.0
    return z / up_to


@dataclass
class CommitmentMixture:
    """Mixture over row strategies: component j is the conditional row
    distribution given column action j under the source joint strategy, and
    carries that column's marginal probability."""

    components: list[tuple[np.ndarray, float]]
    source_joint: np.ndarray

    def sample(self, rng: random.Random) -> np.ndarray:
        r = rng.random()
        acc = 0.0
        for x, w in self.components:
            acc += w
            if r < acc:
                return x
        return self.components[-1][0]


def mixture_from_joint(z) -> CommitmentMixture:
    """Commitment mixture of a joint strategy: x_j(i) = z_ij / z_j with weight
    z_j, columns below tolerance dropped and the rest renormalized."""
    z = check_joint(z)
    marginals = z.sum(axis=0)
    components = []
    for j, zj in enumerate(marginals):
        if zj > COMPONENT_TOL:
            components.append((z[:, j] / zj, float(zj)))
    if not components:
        raise GameError("joint strategy has no column with positive mass")
    total = sum(w for _, w in components)
    components = [(x, w / total) for x, w in components]
    return CommitmentMixture(components=components, source_joint=z)


def _column_partition(z: np.ndarray, tol: float = COMPONENT_TOL) -> list[list[int]]:
    """Group positive-mass columns whose conditional row distributions agree."""
    marginals = z.sum(axis=0)
    support = [j for j in range(z.shape[1]) if marginals[j] > tol]
    groups: list[list[int]] = []
    for j in support:
        xj = z[:, j] / marginals[j]
        for grp in groups:
            x0 = z[:, grp[0]] / marginals[grp[0]]
            if np.all(np.abs(xj - x0) <= 1e-12 + 1e-9 * np.abs(x0)):
                grp.append(j)
                break
        else:
            groups.append([j])
    return groups


def response_function(z, component_index: int) -> np.ndarray:
    """The partition reply y_P for the queried mixture component: column
    probabilities renormalized within the group of columns sharing that
    component's conditional distribution.

    This is the test oracle whose expected payoff exactly recovers the joint
    strategy's payoff for the column player.
    """
    z = check_joint(z)
    marginals = z.sum(axis=0)
    support = [j for j in range(z.shape[1]) if marginals[j] > COMPONENT_TOL]
    if component_index < 0 or component_index >= len(support):
        raise GameError(f"no mixture component {component_index}")
    j = support[component_index]
    for grp in _column_partition(z):
        if j in grp:
            y = np.zeros(z.shape[1])
            total = sum(marginals[l] for l in grp)
            for l in grp:
                y[l] = marginals[l] / total
            return y
    raise AssertionError("column not found in its own partition")


class ImitateThenCommitAgent(Agent):
    """Plays the imitation policy for the first ``tilde_T`` stages, then
    samples one commitment strategy from the mixture built from the realized
    empirical joint play and holds it for the rest of the episode."""

    def __init__(
        self,
        policy: ImitationPolicy,
        tilde_T: int,
        T: int,
        own_type: str,
        seat: str = "row",
        seed: int = 0,
    ):
        if tilde_T >= T:
            raise GameError(f"need tilde_T < T, got {tilde_T} >= {T}")
        if seat != policy.seat:
            raise GameError(
                f"policy was fit for seat {policy.seat!r}, agent seated {seat!r}"
            )
        self.policy = policy
        self.tilde_T = tilde_T
        self.T = T
        self.own_type = own_type
        self.seat = seat
        self.n = policy.num_actions
        self.rng = random.Random(seed)
        self.history: list[tuple[int, int]] = []  # (row, col) order
        self.stage = 0
        self.commitment: np.ndarray | None = None

    def act(self):
        if self.stage < self.tilde_T:
            sigma = self.policy.strategy(self.own_type, tuple(self.history))
            return [float(x) for x in sigma]
        if self.commitment is None:
            z = empirical_joint_n(tuple(self.history), self.tilde_T, self.n)
            if self.seat == "col":
                z = z.T  # condition own actions on the opponent's
            self.commitment = mixture_from_joint(z).sample(self.rng)
        return [float(x) for x in self.commitment]

    def observe(self, own_action, opp_action):
        pair = (
            (own_action, opp_action) if self.seat == "row" else (opp_action, own_action)
        )
        self.history.append(pair)
        self.stage += 1


def ic_strategy(
    dataset: Dataset,
    tilde_T: int,
    T: int,
    own_type: str,
    seat: str = "row",
    seed: int = 0,
    policy: ImitationPolicy | None = None,
) -> ImitateThenCommitAgent:
    if policy is None:
        policy = fit_imitation(dataset, tilde_T, seat=seat)
    return ImitateThenCommitAgent(
        policy, tilde_T, T, own_type=own_type, seat=seat, seed=seed
    )


def _build_ic(spec: AgentSpec, ctx: BuildContext) -> ImitateThenCommitAgent:
    policy = spec.params.get("policy")
    if policy is None:
        from .population import read_dataset

        policy = fit_imitation(
            read_dataset(spec.params["dataset_path"]),
            spec.params["tilde_T"],
            seat=ctx.seat,
        )
    return ImitateThenCommitAgent(
        policy,
        spec.params["tilde_T"],
        ctx.T,
        own_type=ctx.own_type,
        seat=ctx.seat,
        seed=ctx.seed,
    )


register_agent_kind("IC", _build_ic)


# ---------------------------------------------------------------------------
# Closed-form bounds


def delta_K(N: int, tilde_T: int, theta_count: int, K: int) -> float:
    """Total-variation imitation-error bound as a function of dataset size.

    Uses the natural logarithm of K; a log(N) variant of this constant is
    sometimes quoted, which the bound report surfaces as a discrepancy note.
    """
    if N < 1 or tilde_T < 1 or theta_count < 1 or K < 0:
        raise GameError("all arguments must be positive (K may be 0)")
    if K == 0:
        return float(tilde_T)
    return min(
        float(tilde_T),
        N ** (2 * (tilde_T + 1)) * theta_count * tilde_T**2 * math.log(K) / K,
    )


def theorem42_bound(
    delta: float, eps: float, delta_K_value: float, T: int, tilde_T: int
) -> float:
    """Upper bound on mean average altruistic regret of the IC strategy."""
    if tilde_T > T:
        raise GameError(f"need tilde_T <= T, got {tilde_T} > {T}")
    return 2.0 * delta + delta_K_value + (2.0 * (T - tilde_T) / T + 1.0) * eps


class AuthFailure(NamedTuple):
    corrected: float
    as_printed: float


def auth_failure_probability(N: int, k: int, M: int) -> AuthFailure:
    """Probability of failing to authenticate with M unique k-step histories
    observed.

    ``corrected`` is the product form (1 - 1/N^k)(1 - M/N^2k); ``as_printed``
    is the literal expansion 1 - M/N^2k - 1/N + M/N^3k, whose 1/N
    term differs from the product.  Both are reported.
    """
    if not (0 <= M <= N ** (2 * k)):
        raise GameError(f"M must be in [0, N^2k] = [0, {N ** (2 * k)}], got {M}")
    corrected = (1.0 - N ** (-k)) * (1.0 - M / N ** (2 * k))
    as_printed = 1.0 - M / N ** (2 * k) - 1.0 / N + M / N ** (3 * k)
    return AuthFailure(corrected=corrected, as_printed=as_printed)


@dataclass
class BoundReport:
    """Closed-form bound values with their inputs echoed, plus notes on the
    formula discrepancies surfaced by this package."""

    delta_K: float
    theorem42_bound: float
    failure_prob_corrected: float
    failure_prob_as_printed: float
    inputs: dict
    notes: list[str] = field(default_factory=list)

    def render(self) -> str:
        lines = ["bound report"]
        lines.append("  inputs: " + ", ".join(f"{k}={v}" for k, v in self.inputs.items()))
        lines.append(f"  delta(K)                = {self.delta_K:.6g}")
        lines.append(f"  IC regret upper bound   = {self.theorem42_bound:.6g}")
        lines.append(f"  auth failure (product)  = {self.failure_prob_corrected:.6g}")
        lines.append(f"  auth failure (printed)  = {self.failure_prob_as_printed:.6g}")
        for note in self.notes:
            lines.append(f"  note: {note}")
        return "\n".join(lines)


def bound_report(
    N: int,
    k: int,
    M: int,
    K: int,
    tilde_T: int,
    T: int,
    theta_count: int,
    delta: float,
    eps: float,
) -> BoundReport:
    dk = delta_K(N, tilde_T, theta_count, K)
    auth = auth_failure_probability(N, k, M)
    return BoundReport(
        delta_K=dk,
        theorem42_bound=theorem42_bound(delta, eps, dk, T, tilde_T),
        failure_prob_corrected=auth.corrected,
        failure_prob_as_printed=auth.as_printed,
        inputs={
            "N": N,
            "k": k,
            "M": M,
            "K": K,
            "tilde_T": tilde_T,
            "T": T,
            "theta_count": theta_count,
            "delta": delta,
            "eps": eps,
        },
        notes=[
            "delta(K) uses ln(K); a ln(N) variant of the constant is sometimes quoted",
            "auth failure: the printed expansion's 1/N term differs from the product form",
            "the consistency eps includes a sqrt(((T-k)/2) ln(1/delta)) term that grows with T",
        ],
    )
