import itertools

import numpy as np
import pytest

from limid import (
    InfluenceDiagram,
    InstanceTooLargeError,
    Policy,
    Strategy,
    Variable,
    brute_force_meu,
    enumerate_pure_policies,
    expected_utility,
    pure_policy,
    pure_policy_count,
    validate_diagram,
)

from conftest import pick_diagram, random_strategy, small_random_diagram, two_agent_diagram


def literal_expected_utility(d: InfluenceDiagram, s: Strategy) -> float:
    """Per-assignment reference sum, kept independent of the vectorized path."""
    ids = sorted(d.chance_ids + d.decision_ids)
    cards = [d.cardinality(x) for x in ids]
    total = 0.0
    for joint in itertools.product(*(range(c) for c in cards)):
        at = dict(zip(ids, joint))
        prob = 1.0
        for var in d.chance_ids:
            prob *= d.cpt(var)[(at[var],) + tuple(at[p] for p in d.parents(var))]
        for p in s.policies:
            prob *= p.table[(at[p.decision],) + tuple(at[q] for q in p.parents)]
        util = 0.0
        for var in d.value_ids:
            util += d.reward(var)[tuple(at[p] for p in d.parents(var))]
        total += prob * util
    return total


# -- variables and validation -------------------------------------------------

def test_variable_invariants():
    with pytest.raises(ValueError):
        Variable("v", "value", 2)
    with pytest.raises(ValueError):
        Variable("c", "chance")
    with pytest.raises(ValueError):
        Variable("c", "chance", 0)
    with pytest.raises(ValueError):
        Variable("x", "utility", 2)


def test_validate_accepts_two_agent_diagram():
    assert validate_diagram(two_agent_diagram()) == []


def test_validate_reports_bad_cpt_column():
    d = InfluenceDiagram(
        [Variable("c", "chance", 2)], [], cpts={"c": [0.6, 0.3]}, rewards={})
    report = validate_diagram(d)
    assert any("'c'" in line and "summing" in line for line in report)


def test_validate_reports_value_child():
    d = InfluenceDiagram(
        [Variable("c1", "chance", 2), Variable("c2", "chance", 2), Variable("v1", "value")],
        [("c1", "v1"), ("v1", "c2")],
        cpts={"c1": [0.5, 0.5], "c2": [0.5, 0.5]},
        rewards={"v1": [1.0, 0.0]},
    )
    assert any("'v1'" in line and "child" in line for line in validate_diagram(d))


def test_validate_reports_missing_tables_and_cycles():
    d = InfluenceDiagram(
        [Variable("a", "chance", 2), Variable("b", "chance", 2)],
        [("a", "b"), ("b", "a")],
        cpts={}, rewards={})
    report = validate_diagram(d)
    assert any("cycle" in line for line in report)
    assert any("'a'" in line and "no cpt" in line for line in report)


# -- pure policy enumeration ---------------------------------------------------

def binary_decision_diagram(card=2, parent_cards=()):
    variables = [Variable("d", "decision", card), Variable("v", "value")]
    arcs = [("d", "v")]
    cpts = {}
    for i, c in enumerate(parent_cards):
        pid = f"p{i}"
        variables.append(Variable(pid, "chance", c))
        arcs.append((pid, "d"))
        cpts[pid] = np.full(c, 1.0 / c)
    return InfluenceDiagram(variables, arcs, cpts, rewards={"v": np.zeros(card)})


@pytest.mark.parametrize("card,parent_cards,expected", [
    (2, (), 2),
    (3, (2,), 9),
    (2, (2, 2), 16),
])
def test_pure_policy_counts(card, parent_cards, expected):
    d = binary_decision_diagram(card, parent_cards)
    assert pure_policy_count(d, "d") == expected
    assert len(enumerate_pure_policies(d, "d")) == expected


def test_enumerate_rejects_non_decision():
    d = pick_diagram()
    with pytest.raises(ValueError):
        enumerate_pure_policies(d, "c")


def test_pure_policies_are_pure_and_ordered():
    d = binary_decision_diagram(3, (2,))
    policies = enumerate_pure_policies(d, "d")
    assert all(p.is_pure() for p in policies)
    # index 0 always picks action 0; the last index always the last action
    assert np.array_equal(policies[0].table, [[1, 1], [0, 0], [0, 0]])
    assert np.array_equal(policies[-1].table, [[0, 0], [0, 0], [1, 1]])
    # lexicographic: the first parent assignment is the most significant digit
    assert np.array_equal(policies[3].table, [[0, 1], [1, 0], [0, 0]])
    again = enumerate_pure_policies(d, "d")
    assert all(np.array_equal(a.table, b.table) for a, b in zip(policies, again))


# -- expected utility -----------------------------------------------------------

def test_expected_utility_frozen_examples():
    d = pick_diagram()
    take_first = Strategy([pure_policy(d, "d", 0)])
    assert expected_utility(d, take_first) == pytest.approx(0.8, abs=1e-12)
    uniform = Strategy([Policy("d", (), [0.5, 0.5])])
    assert expected_utility(d, uniform) == pytest.approx(0.55, abs=1e-12)
    assert literal_expected_utility(d, take_first) == pytest.approx(0.8, abs=1e-12)
    assert literal_expected_utility(d, uniform) == pytest.approx(0.55, abs=1e-12)


def test_expected_utility_zero_rewards():
    d = InfluenceDiagram(
        [Variable("c", "chance", 2), Variable("d", "decision", 2), Variable("v", "value")],
        [("d", "c"), ("c", "v")],
        cpts={"c": [[0.8, 0.3], [0.2, 0.7]]},
        rewards={"v": [0.0, 0.0]},
    )
    assert expected_utility(d, Strategy([pure_policy(d, "d", 1)])) == 0.0


def test_expected_utility_rejects_mismatched_strategies():
    d = two_agent_diagram()
    with pytest.raises(ValueError):
        expected_utility(d, Strategy([pure_policy(d, "d1", 0)]))
    bad_parent = Policy("d1", ("c1",), [[1.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ValueError):
        expected_utility(d, Strategy([bad_parent, pure_policy(d, "d2", 0)]))
    bad_columns = Policy("d1", (), [0.4, 0.4])
    with pytest.raises(ValueError):
        expected_utility(d, Strategy([bad_columns, pure_policy(d, "d2", 0)]))


def test_expected_utility_matches_literal_enumeration(rng):
    for seed in range(8):
        d = small_random_diagram(seed)
        s = random_strategy(d, rng)
        assert expected_utility(d, s) == pytest.approx(
            literal_expected_utility(d, s), abs=1e-12)


def test_expected_utility_within_total_reward_range(rng):
    for seed in range(6):
        d = small_random_diagram(seed)
        lows = highs = 0.0
        for v in d.value_ids:
            lows += float(d.reward(v).min())
            highs += float(d.reward(v).max())
        for _ in range(5):
            e = expected_utility(d, random_strategy(d, rng))
            assert lows - 1e-9 <= e <= highs + 1e-9


def test_expected_utility_linear_in_single_policy(rng):
    for seed in range(5):
        d = small_random_diagram(seed)
        if not d.decision_ids:
            continue
        target = d.decision_ids[0]
        base = random_strategy(d, rng)
        other = random_strategy(d, rng)
        lam = float(rng.uniform())
        mixed_table = (lam * base.policy_for(target).table
                       + (1 - lam) * other.policy_for(target).table)
        mixed = Strategy(
            [Policy(target, d.parents(target), mixed_table)]
            + [p for p in base.policies if p.decision != target])
        swapped = Strategy(
            [other.policy_for(target)]
            + [p for p in base.policies if p.decision != target])
        expected = lam * expected_utility(d, base) + (1 - lam) * expected_utility(d, swapped)
        assert expected_utility(d, mixed) == pytest.approx(expected, abs=1e-12)


# -- brute force ----------------------------------------------------------------

def test_brute_force_frozen_example():
    d = pick_diagram()
    value, strategy = brute_force_meu(d)
    assert value == pytest.approx(0.8, abs=1e-12)
    assert np.array_equal(strategy.policy_for("d").table, [1.0, 0.0])


def test_brute_force_no_decisions():
    d = InfluenceDiagram(
        [Variable("c", "chance", 3), Variable("v", "value")],
        [("c", "v")],
        cpts={"c": [0.2, 0.5, 0.3]},
        rewards={"v": [1.0, 2.0, 4.0]},
    )
    value, strategy = brute_force_meu(d)
    assert strategy.policies == ()
    assert value == pytest.approx(expected_utility(d, strategy), abs=1e-12)
    assert value == pytest.approx(0.2 + 1.0 + 1.2, abs=1e-12)


def test_brute_force_constant_reward_is_strategy_independent(rng):
    u = 0.7
    d = InfluenceDiagram(
        [
            Variable("c1", "chance", 2), Variable("c2", "chance", 2),
            Variable("d1", "decision", 2), Variable("d2", "decision", 2),
            Variable("v1", "value"), Variable("v2", "value"),
        ],
        [("d1", "c1"), ("c1", "v1"), ("c1", "c2"), ("d2", "c2"), ("c2", "v2")],
        cpts={"c1": [[0.5, 0.5], [0.5, 0.5]],
              "c2": [[[0.5, 0.5], [0.5, 0.5]], [[0.5, 0.5], [0.5, 0.5]]]},
        rewards={"v1": [u, u], "v2": [u, u]},
    )
    value, _ = brute_force_meu(d)
    assert value == pytest.approx(2 * u, abs=1e-12)
    assert expected_utility(d, random_strategy(d, rng)) == pytest.approx(2 * u, abs=1e-12)


def test_brute_force_matches_literal_maximization():
    for seed in range(10):
        d = small_random_diagram(seed)
        if not d.decision_ids:
            continue
        value, strategy = brute_force_meu(d)
        spaces = [enumerate_pure_policies(d, dec) for dec in d.decision_ids]
        values = [literal_expected_utility(d, Strategy(combo))
                  for combo in itertools.product(*spaces)]
        assert value == pytest.approx(max(values), abs=1e-10)
        # with a unique maximizer the argmax strategies agree as well
        ordered = sorted(values, reverse=True)
        if len(ordered) > 1 and ordered[0] - ordered[1] > 1e-9:
            best = list(itertools.product(*spaces))[int(np.argmax(values))]
            for got, want in zip(strategy.policies, best):
                assert np.array_equal(got.table, want.table)


def test_brute_force_dominates_random_strategies(rng):
    for seed in range(4):
        d = small_random_diagram(seed)
        value, _ = brute_force_meu(d)
        for _ in range(100):
            assert expected_utility(d, random_strategy(d, rng)) <= value + 1e-9


def test_brute_force_cap():
    d = binary_decision_diagram(3, (3, 3))  # 3 ** 9 pure policies
    with pytest.raises(InstanceTooLargeError):
        brute_force_meu(d, cap=1000)


def test_determinism_bit_identical():
    for seed in (3, 11):
        d = small_random_diagram(seed)
        v1, s1 = brute_force_meu(d)
        v2, s2 = brute_force_meu(d)
        assert v1 == v2
        for a, b in zip(s1.policies, s2.policies):
            assert a.table.tobytes() == b.table.tobytes()
