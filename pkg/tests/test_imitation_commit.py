import math
import random

import numpy as np
import pytest

from cooplab.game_core import GameError, TypeSpace
from cooplab.population import Dataset
from cooplab.imitation_commit import (
    ImitateThenCommitAgent,
    auth_failure_probability,
    bound_report,
    delta_K,
    empirical_joint,
    fit_imitation,
    ic_strategy,
    mixture_from_joint,
    response_function,
    theorem42_bound,
)
from cooplab.harness import fixture_path


def make_dataset(episodes, T, n=2):
    return Dataset(
        episodes=episodes,
        metadata={"version": 1, "T": T, "N": n, "n": len(episodes)},
    )


def test_fit_imitation_counts_frequencies():
    # Type "a" opens with 0 twice and 1 once: the empty-history strategy is
    # (2/3, 1/3).
    episodes = [
        ("a", "x", ((0, 0), (1, 1))),
        ("a", "x", ((0, 1), (0, 0))),
        ("a", "x", ((1, 0), (1, 1))),
    ]
    policy = fit_imitation(make_dataset(episodes, 2), tilde_T=2)
    assert policy.strategy("a", ()) == pytest.approx([2 / 3, 1 / 3])
    # Conditioned on the first stage having been (0, 0), type "a" played 1.
    assert policy.strategy("a", ((0, 0),)) == pytest.approx([0.0, 1.0])
    assert policy.visit_count("a", ()) == 3


def test_fit_imitation_unseen_keys_uniform_and_col_seat():
    episodes = [("a", "b", ((0, 1), (1, 0)))]
    policy = fit_imitation(make_dataset(episodes, 2), tilde_T=2, seat="col")
    # The column player (type "b") played 1 at the empty history.
    assert policy.strategy("b", ()) == pytest.approx([0.0, 1.0])
    assert policy.strategy("b", ((1, 1),)) == pytest.approx([0.5, 0.5])
    assert policy.strategy("never-seen", ()) == pytest.approx([0.5, 0.5])


def test_fit_imitation_rejects_long_cutoff():
    with pytest.raises(GameError):
        fit_imitation(make_dataset([("a", "b", ((0, 0),))], 1), tilde_T=5)


def test_empirical_joint_frequencies():
    h = ((0, 1), (0, 1), (1, 0), (0, 1))
    z = empirical_joint(h, 4)
    assert z[0, 1] == pytest.approx(0.75)
    assert z[1, 0] == pytest.approx(0.25)
    assert z.sum() == pytest.approx(1.0)
    with pytest.raises(GameError):
        empirical_joint(h, 5)
    with pytest.raises(GameError):
        empirical_joint(h, 0)


def test_mixture_from_joint_components():
    z = np.array([[0.3, 0.2], [0.1, 0.4]])
    mix = mixture_from_joint(z)
    assert len(mix.components) == 2
    x0, w0 = mix.components[0]
    x1, w1 = mix.components[1]
    assert w0 == pytest.approx(0.4) and w1 == pytest.approx(0.6)
    assert x0 == pytest.approx([0.75, 0.25])
    assert x1 == pytest.approx([1 / 3, 2 / 3])


def test_mixture_drops_empty_columns_and_renormalizes():
    z = np.array([[0.5, 0.0], [0.5, 0.0]])
    mix = mixture_from_joint(z)
    assert len(mix.components) == 1
    assert mix.components[0][1] == pytest.approx(1.0)
    with pytest.raises(GameError):
        mixture_from_joint(np.zeros((2, 2)) + 1e-15 * np.eye(2))


def test_mixture_sampling_distribution():
    z = np.array([[0.3, 0.2], [0.1, 0.4]])
    mix = mixture_from_joint(z)
    rng = random.Random(8)
    hits = sum(mix.sample(rng)[0] > 0.5 for _ in range(20000))
    # Component 0 (x = (0.75, 0.25)) has weight 0.4.
    assert abs(hits / 20000 - 0.4) < 0.02


def test_response_function_partition_grouping():
    # Columns 0 and 1 share the conditional (0.5, 0.5); the reply mixes them
    # proportionally to their marginals regardless of which is queried.
    z = np.array([[0.2, 0.1, 0.0], [0.2, 0.1, 0.0], [0.0, 0.0, 0.4]])
    y0 = response_function(z, 0)
    y1 = response_function(z, 1)
    assert y0 == pytest.approx([2 / 3, 1 / 3, 0.0])
    assert y1 == pytest.approx(y0)
    y2 = response_function(z, 2)
    assert y2 == pytest.approx([0.0, 0.0, 1.0])
    with pytest.raises(GameError):
        response_function(z, 3)


def test_response_function_payoff_identity_random():
    rng = np.random.default_rng(21)
    for _ in range(50):
        n = int(rng.integers(2, 5))
        z = rng.random((n, n))
        z /= z.sum()
        B = rng.random((n, n))
        direct = sum(z[i, j] * B[j, i] for i in range(n) for j in range(n))
        mix = mixture_from_joint(z)
        via_mixture = sum(
            w * float(response_function(z, c) @ B @ x)
            for c, (x, w) in enumerate(mix.components)
        )
        assert via_mixture == pytest.approx(direct, abs=1e-9)


def test_ic_agent_imitates_then_commits():
    episodes = [("a", "x", ((0, 0), (0, 1), (1, 1)))] * 5
    agent = ic_strategy(make_dataset(episodes, 3), tilde_T=2, T=6, own_type="a", seed=3)
    assert agent.act() == pytest.approx([1.0, 0.0])
    agent.observe(0, 0)
    assert agent.act() == pytest.approx([1.0, 0.0])
    agent.observe(0, 1)
    committed = agent.act()
    assert sum(committed) == pytest.approx(1.0)
    agent.observe(int(np.argmax(committed)), 0)
    assert agent.act() == pytest.approx(committed)  # held for the rest


def test_ic_agent_col_seat_conditions_on_opponent():
    policy = fit_imitation(
        make_dataset([("a", "b", ((0, 1), (1, 0)))], 2), tilde_T=1, seat="col"
    )
    agent = ImitateThenCommitAgent(policy, 1, 4, own_type="b", seat="col", seed=0)
    assert agent.act() == pytest.approx([0.0, 1.0])
    agent.observe(1, 0)  # own=1, opp=0, stored as (row=0, col=1)
    committed = agent.act()
    # Empirical joint is a point mass on (0, 1); transposed for the column
    # seat, the only commitment component is a point mass on action 1.
    assert committed == pytest.approx([0.0, 1.0])


def test_ic_agent_seat_mismatch_and_horizon_checks():
    policy = fit_imitation(make_dataset([("a", "b", ((0, 0),))], 1), tilde_T=1)
    with pytest.raises(GameError):
        ImitateThenCommitAgent(policy, 1, 1, own_type="a")
    with pytest.raises(GameError):
        ImitateThenCommitAgent(policy, 1, 4, own_type="a", seat="col")


def test_delta_K_closed_form():
    # 2^(2*(3+1)) * 2 * 9 * ln(1e5) / 1e5, below the trivial cap of tilde_T.
    assert delta_K(2, 3, 2, 100000) == pytest.approx(0.5305156054258281, abs=1e-12)
    assert delta_K(2, 3, 2, 10) == 3.0  # trivial cap binds
    assert delta_K(2, 3, 2, 0) == 3.0
    with pytest.raises(GameError):
        delta_K(0, 3, 2, 10)


def test_delta_K_eventually_decreasing_in_K():
    values = [delta_K(2, 2, 2, K) for K in (10**3, 10**4, 10**5, 10**6)]
    assert values == sorted(values, reverse=True)


def test_theorem42_bound_closed_form():
    assert theorem42_bound(0.05, 0.1, 0.2, 100, 20) == pytest.approx(0.56, abs=1e-12)
    with pytest.raises(GameError):
        theorem42_bound(0.05, 0.1, 0.2, 10, 20)


def test_auth_failure_probability_values():
    p = auth_failure_probability(2, 2, 8)
    assert p.corrected == pytest.approx(0.375)
    assert p.as_printed == pytest.approx(0.125)
    assert auth_failure_probability(2, 3, 0).corrected == pytest.approx(0.875)
    assert auth_failure_probability(2, 2, 16).corrected == 0.0
    with pytest.raises(GameError):
        auth_failure_probability(2, 2, 17)


def test_bound_report_renders_all_quantities():
    report = bound_report(
        N=2, k=2, M=8, K=1000, tilde_T=10, T=100, theta_count=2, delta=0.05, eps=0.5
    )
    text = report.render()
    assert "delta(K)" in text and "auth failure" in text
    assert report.theorem42_bound == pytest.approx(
        2 * 0.05 + report.delta_K + (2 * 90 / 100 + 1) * 0.5
    )
    assert len(report.notes) == 3
