import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exitbandit.core import BanditState, ContractError, DomainError, ExitProfile
from exitbandit.environment import EnvironmentSpec, SyntheticEnvironment
from exitbandit.policy import (
    UEEUCB,
    FixedExit,
    OracleUCB1,
    PolicyKind,
    RandomExit,
    make_policy,
)


def uee_with_state(costs, N, P1, alpha=1.0):
    policy = UEEUCB(ExitProfile.from_costs(costs), alpha)
    X = [round(p * n) for p, n in zip(P1, N)]
    policy.state = BanditState(list(N), X, list(P1), t=max(N))
    return policy


def play(policy, rows, labels=None):
    for t, row in enumerate(rows, start=1):
        i = policy.select(t)
        if policy.supervised:
            policy.update(row[:i], labels[t - 1])
        else:
            policy.update(row[:i])


def test_init_state_zero():
    p = make_policy(ExitProfile.from_costs([0.1, 0.2, 0.3, 0.4]), PolicyKind.parse("uee_ucb"))
    assert p.state.N == [0] * 4 and p.state.X == [0] * 4 and p.state.P1 == [0.0] * 4


def test_first_decision_is_full_pass():
    p = UEEUCB(ExitProfile.from_costs([0.1, 0.2, 0.3]))
    assert p.decide(1).chosen_exit == 3


def test_single_exit_always_one():
    p = UEEUCB(ExitProfile.from_costs([0.5]))
    for t in range(1, 50):
        assert p.select(t) == 1
        p.update((t % 2,))


def test_fixed_policy_constant():
    p = make_policy(ExitProfile.from_costs([0.1, 0.2, 0.3]), PolicyKind.parse("fixed:2"))
    for t in range(1, 20):
        assert p.select(t) == 2
        p.update((0, 1))
    with pytest.raises(DomainError):
        FixedExit(ExitProfile.from_costs([0.1, 0.2]), 3)


def test_index_example():
    p = uee_with_state((1 / 12, 4 / 12, 9 / 12), (100, 10, 10), (0, 0.2, 0.35))
    d = p.decide(100)
    # P1 + c1 - ck + sqrt(ln 100 / Nk), evaluated by hand
    np.testing.assert_allclose(d.ucb_indices,
                               [0.21459660262893474, 0.6286140424415112, 0.36194737577484454],
                               atol=1e-12)
    assert d.chosen_exit == 2


def test_ties_go_to_smallest_exit():
    p = uee_with_state((0.2, 0.2, 0.2), (50, 50, 50), (0.0, 0.0, 0.0))
    assert p.decide(60).chosen_exit == 1


def test_starved_arm_explored():
    p = uee_with_state((0.0, 0.5), (1000, 1), (0.0, 0.0))
    d = p.decide(1000)
    assert d.ucb_indices[1] == pytest.approx(-0.5 + 2.628260884878466)
    assert d.chosen_exit == 2


def test_decide_contract_errors():
    p = UEEUCB(ExitProfile.from_costs([0.1, 0.2]))
    with pytest.raises(ContractError):
        p.decide(2)
    with pytest.raises(ContractError):
        p.decide(0)
    with pytest.raises(ContractError):
        p.update((0, 0))
    p.decide(1)
    with pytest.raises(ContractError):
        p.update((0,))


def test_update_counts():
    p = UEEUCB(ExitProfile.from_costs([0.1, 0.2, 0.3]))
    p.select(1)
    p.update((1, 1, 0))
    assert p.state.X == [0, 0, 1] and p.state.N == [1, 1, 1]
    p.state = BanditState([5, 5, 5], [0, 1, 1], [0, 0.2, 0.2], 5)
    p._pending = 1
    p.update((1,))
    assert p.state.N == [6, 5, 5] and p.state.X == [0, 1, 1]


def test_disagreement_estimate_converges():
    spec = EnvironmentSpec((0.3, 0.1), seed=17)
    rows = SyntheticEnvironment(spec).take(10_000)[0].tolist()
    p = UEEUCB(ExitProfile.from_costs([0.0, 0.0]))
    # drive the counters along the last exit on every round
    for t, row in enumerate(rows, start=1):
        p._pending = 2
        p.update(row)
    assert abs(p.state.P1[1] - 0.2) <= 3 * math.sqrt(0.2 * 0.8 / 10_000)


def test_fixed_last_exit_disagreement_estimate():
    spec = EnvironmentSpec((0.3, 0.1), seed=18)
    rows = SyntheticEnvironment(spec).take(10_000)[0].tolist()
    profile = ExitProfile.from_costs([0.0, 0.0])
    uee = UEEUCB(profile)
    fixed = make_policy(profile, PolicyKind.parse("fixed:2"))
    for t, row in enumerate(rows, start=1):
        i = fixed.select(t)
        fixed.update(row[:i])
        uee._pending = i
        uee.update(row[:i])
    assert abs(uee.state.P1[1] - 0.2) <= 3 * math.sqrt(0.2 * 0.8 / 10_000)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=5), st.integers(0, 2 ** 32))
def test_state_invariants(raw_gammas, seed):
    gammas = sorted(raw_gammas, reverse=True)
    K = len(gammas)
    profile = ExitProfile.from_costs(np.linspace(0, 0.5, K))
    rows = SyntheticEnvironment(EnvironmentSpec(gammas, seed=seed)).take(300)[0].tolist()
    p = UEEUCB(profile)
    for t, row in enumerate(rows, start=1):
        i = p.select(t)
        p.update(row[:i])
        st_ = p.state
        assert st_.N[0] == t
        assert all(a >= b for a, b in zip(st_.N, st_.N[1:]))
        assert st_.X[0] == 0 and st_.P1[0] == 0
        assert all(0 <= x <= n for x, n in zip(st_.X, st_.N))
        assert all(0 <= q <= 1 for q in st_.P1)
        assert all(q == x / n for q, x, n in zip(st_.P1, st_.X, st_.N) if n)


def test_state_is_pure_function_of_observations():
    rows = SyntheticEnvironment(EnvironmentSpec((0.5, 0.3, 0.2), seed=1)).take(500)[0].tolist()
    profile = ExitProfile.from_costs([0.0, 0.1, 0.2])
    a, b = UEEUCB(profile), UEEUCB(profile)
    play(a, rows)
    play(b, rows)
    assert a.state == b.state


@given(st.integers(1, 500), st.integers(1, 500), st.floats(0, 1), st.integers(2, 10_000))
def test_index_decreases_with_observations(n, extra, p1, t):
    costs = (0.0, 0.3)
    lo = uee_with_state(costs, (10 ** 6, n), (0.0, p1))
    hi = uee_with_state(costs, (10 ** 6, n + extra), (0.0, p1))
    assert hi.indices(t)[1] < lo.indices(t)[1]


def test_random_exit_uniform_and_seeded():
    profile = ExitProfile.from_costs([0.1, 0.2, 0.3, 0.4])
    a, b = RandomExit(profile, seed=3), RandomExit(profile, seed=3)
    picks = []
    for t in range(1, 4001):
        i = a.select(t)
        assert b.select(t) == i
        a.update((0,) * i)
        b.update((0,) * i)
        picks.append(i)
    freq = np.bincount(picks, minlength=5)[1:] / 4000
    assert np.all(np.abs(freq - 0.25) < 3 * math.sqrt(0.25 * 0.75 / 4000))


def test_oracle_needs_labels_and_learns():
    spec = EnvironmentSpec((0.4, 0.1, 0.05), seed=9)
    preds, labels = SyntheticEnvironment(spec).take(5000)
    profile = ExitProfile.from_costs([0.0, 0.1, 0.5])
    p = OracleUCB1(profile)
    p.select(1)
    with pytest.raises(ContractError):
        p.update((0, 0, 0))
    p = OracleUCB1(profile)
    play(p, preds.tolist(), labels.tolist())
    # losses 0.4, 0.2, 0.55: exit 2 should dominate late rounds
    late = [p.select(t) for t in range(5001, 5002)]
    assert late == [2]


@pytest.mark.parametrize("text, label", [
    ("uee_ucb", "uee_ucb:1"),
    ("UEE-UCB:1.5", "uee_ucb:1.5"),
    ("last_exit", "last_exit"),
    ("random_exit", "random_exit"),
    ("fixed:3", "fixed:3"),
    ("oracle_ucb1", "oracle_ucb1:1"),
])
def test_policy_kind_parse(text, label):
    assert PolicyKind.parse(text).label == label


@pytest.mark.parametrize("text", ["greedy", "fixed", "fixed:0", "uee_ucb:-1", "last_exit:2"])
def test_policy_kind_parse_errors(text):
    with pytest.raises(DomainError):
        PolicyKind.parse(text)
