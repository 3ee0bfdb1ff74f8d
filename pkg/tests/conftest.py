import numpy as np
import pytest

from limid import InfluenceDiagram, Policy, Strategy, Variable
from limid.cli import generate_diagram


def two_agent_diagram() -> InfluenceDiagram:
    """Two decisions feeding a two-link chain of outcomes, one reward each."""
    return InfluenceDiagram(
        [
            Variable("c1", "chance", 2),
            Variable("c2", "chance", 2),
            Variable("d1", "decision", 2),
            Variable("d2", "decision", 2),
            Variable("v1", "value"),
            Variable("v2", "value"),
        ],
        [("d1", "c1"), ("c1", "v1"), ("c1", "c2"), ("d2", "c2"), ("c2", "v2")],
        cpts={
            "c1": [[0.9, 0.4], [0.1, 0.6]],
            # axes (c2, c1, d2)
            "c2": [[[0.7, 0.2], [0.5, 0.1]], [[0.3, 0.8], [0.5, 0.9]]],
        },
        rewards={"v1": [1.0, 0.0], "v2": [0.3, 0.8]},
    )


def pick_diagram() -> InfluenceDiagram:
    """One binary decision, one binary outcome, one reward on the outcome."""
    return InfluenceDiagram(
        [Variable("c", "chance", 2), Variable("d", "decision", 2), Variable("v", "value")],
        [("d", "c"), ("c", "v")],
        cpts={"c": [[0.8, 0.3], [0.2, 0.7]]},
        rewards={"v": [1.0, 0.0]},
    )


def small_random_diagram(seed: int, *, max_values: int = 2) -> InfluenceDiagram:
    """Desk-scale random diagram; decision parents capped so every pure
    strategy space stays brute-forceable."""
    meta = np.random.default_rng([7, seed])
    n_chance = int(meta.integers(1, 6))
    n_decisions = int(meta.integers(0, 4))
    n_values = int(meta.integers(1, max_values + 1))
    return generate_diagram(n_chance, n_decisions, card=3, max_parents=2,
                            n_values=n_values, seed=seed, decision_max_parents=1)


def random_strategy(d: InfluenceDiagram, rng: np.random.Generator,
                    pure: bool = False) -> Strategy:
    policies = []
    for dec in d.decision_ids:
        card = d.cardinality(dec)
        parents = d.parents(dec)
        pa_cards = tuple(d.cardinality(p) for p in parents)
        columns = int(np.prod(pa_cards)) if pa_cards else 1
        if pure:
            table = np.zeros((card, columns))
            table[rng.integers(0, card, size=columns), np.arange(columns)] = 1.0
        else:
            table = rng.dirichlet(np.ones(card), size=columns).T
        policies.append(Policy(dec, parents, table.reshape((card,) + pa_cards)))
    return Strategy(policies)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240831)
