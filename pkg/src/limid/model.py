"""Core data model for limited-memory influence diagrams.

A diagram couples a DAG over chance, decision and value variables with one
conditional probability table per chance variable and one additive reward
table per value variable.  A strategy fixes a policy (conditional
distribution over actions given the decision's parents) for every decision
variable; its expected utility is

    E = sum_x  prod_C P(C|Pa(C))(x) * prod_D P(D|Pa(D))(x) * sum_V U(Pa(V))(x)

over joint assignments x of the chance and decision variables.

Everything in this module is deliberately oracle-grade: expected utilities
are obtained by enumerating joint assignments outright, and the maximum
expected utility by evaluating every pure strategy.  Results are therefore
trustworthy at small scale and independent of the message-passing solver.

Table conventions: parent axes are always ordered by variable id, tables
are dense ndarrays with one axis per variable (conditioned child first),
and flat indices follow C order over those axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Mapping

import numpy as np

CHANCE = "chance"
DECISION = "decision"
VALUE = "value"

#: tolerance for "columns sum to one" checks on probability tables
PROB_TOL = 1e-12

#: hard ceiling on joint assignments enumerated by the oracles
ENUMERATION_CAP = 50_000_000

DEFAULT_STRATEGY_CAP = 10_000_000


class InstanceTooLargeError(RuntimeError):
    """An enumeration would exceed the configured resource cap."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, order="C")
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Variable:
    """A chance, decision or value variable.

    Chance and decision variables carry a cardinality (>= 1); value
    variables carry none, they stand for a reward table over their parents.
    """

    id: str
    kind: str
    cardinality: int | None = None
    state_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in (CHANCE, DECISION, VALUE):
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if self.kind == VALUE:
            if self.cardinality is not None:
                raise ValueError(f"value variable {self.id!r} must not carry a cardinality")
        else:
            if self.cardinality is None or self.cardinality < 1:
                raise ValueError(f"variable {self.id!r} needs a cardinality >= 1")
        if self.state_labels is not None:
            object.__setattr__(self, "state_labels", tuple(self.state_labels))
            if self.cardinality is not None and len(self.state_labels) != self.cardinality:
                raise ValueError(f"variable {self.id!r}: {len(self.state_labels)} labels "
                                 f"for cardinality {self.cardinality}")


@dataclass(frozen=True, eq=False)
class InfluenceDiagram:
    """An immutable influence diagram.

    ``cpts`` maps each chance variable to an array of shape
    ``(card, *parent cards)`` and ``rewards`` maps each value variable to an
    array of shape ``(*parent cards)``, parents sorted by id.  Flat inputs
    are reshaped.  Construction enforces structure only (known ids, table
    shapes); semantic invariants are reported by :func:`validate_diagram`.
    """

    variables: tuple[Variable, ...]
    arcs: tuple[tuple[str, str], ...]
    cpts: Mapping[str, np.ndarray]
    rewards: Mapping[str, np.ndarray]

    def __init__(self, variables: Iterable[Variable], arcs: Iterable[tuple[str, str]],
                 cpts: Mapping[str, object] | None = None,
                 rewards: Mapping[str, object] | None = None) -> None:
        variables = tuple(sorted(variables, key=lambda v: v.id))
        by_id = {v.id: v for v in variables}
        if len(by_id) != len(variables):
            raise ValueError("duplicate variable ids")
        arcs = tuple(sorted({(str(a), str(b)) for a, b in arcs}))
        for a, b in arcs:
            if a not in by_id or b not in by_id:
                raise ValueError(f"arc ({a!r}, {b!r}) references an unknown variable")
            if a == b:
                raise ValueError(f"self-arc on {a!r}")
        parents: dict[str, list[str]] = {v.id: [] for v in variables}
        children: dict[str, list[str]] = {v.id: [] for v in variables}
        for a, b in arcs:
            parents[b].append(a)
            children[a].append(b)
        # value variables never parent tables; offenders are reported by
        # validate_diagram rather than breaking table shapes here
        table_parents = {
            x: tuple(sorted(p for p in parents[x] if by_id[p].kind != VALUE))
            for x in parents
        }

        def shaped(tag: str, var: str, table: object, lead: tuple[int, ...]) -> np.ndarray:
            cards = lead + tuple(by_id[p].cardinality for p in table_parents[var])
            arr = np.asarray(table, dtype=float)
            try:
                arr = arr.reshape(cards)
            except ValueError:
                raise ValueError(f"{tag} for {var!r} has size {arr.size}, "
                                 f"expected shape {cards}") from None
            return _freeze(arr)

        cpt_map: dict[str, np.ndarray] = {}
        for var, table in dict(cpts or {}).items():
            if var not in by_id:
                raise ValueError(f"cpt for unknown variable {var!r}")
            lead = (by_id[var].cardinality,) if by_id[var].kind != VALUE else ()
            cpt_map[var] = shaped("cpt", var, table, lead)
        reward_map: dict[str, np.ndarray] = {}
        for var, table in dict(rewards or {}).items():
            if var not in by_id:
                raise ValueError(f"reward table for unknown variable {var!r}")
            reward_map[var] = shaped("reward table", var, table, ())

        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "arcs", arcs)
        object.__setattr__(self, "cpts", cpt_map)
        object.__setattr__(self, "rewards", reward_map)
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_parents", {x: tuple(sorted(ps)) for x, ps in parents.items()})
        object.__setattr__(self, "_children", {x: tuple(sorted(cs)) for x, cs in children.items()})
        object.__setattr__(self, "_table_parents", table_parents)

    # -- lookups -----------------------------------------------------------

    def variable(self, var: str) -> Variable:
        return self._by_id[var]

    def has_variable(self, var: str) -> bool:
        return var in self._by_id

    def kind(self, var: str) -> str:
        return self._by_id[var].kind

    def cardinality(self, var: str) -> int:
        card = self._by_id[var].cardinality
        if card is None:
            raise ValueError(f"{var!r} is a value variable and has no cardinality")
        return card

    def parents(self, var: str) -> tuple[str, ...]:
        """Sorted chance/decision parents of ``var`` (table scope)."""
        return self._table_parents[var]

    def all_parents(self, var: str) -> tuple[str, ...]:
        """Sorted arc parents, including any (invalid) value parents."""
        return self._parents[var]

    def children(self, var: str) -> tuple[str, ...]:
        return self._children[var]

    @property
    def chance_ids(self) -> tuple[str, ...]:
        return tuple(v.id for v in self.variables if v.kind == CHANCE)

    @property
    def decision_ids(self) -> tuple[str, ...]:
        return tuple(v.id for v in self.variables if v.kind == DECISION)

    @property
    def value_ids(self) -> tuple[str, ...]:
        return tuple(v.id for v in self.variables if v.kind == VALUE)

    def cpt(self, var: str) -> np.ndarray:
        return self.cpts[var]

    def reward(self, var: str) -> np.ndarray:
        return self.rewards[var]


# -- validation -------------------------------------------------------------

def validate_diagram(d: InfluenceDiagram) -> list[str]:
    """Return all invariant violations of ``d``, empty iff the diagram is valid."""
    report: list[str] = []
    try:
        list(TopologicalSorter({v.id: set(d.all_parents(v.id)) for v in d.variables}).static_order())
        acyclic = True
    except CycleError:
        report.append("arcs contain a cycle")
        acyclic = False

    for v in d.variables:
        if v.kind == VALUE and d.children(v.id):
            report.append(f"value variable {v.id!r} has a child")

    for var in d.chance_ids:
        if var not in d.cpts:
            report.append(f"chance variable {var!r} has no cpt")
    for var in d.cpts:
        if d.kind(var) != CHANCE:
            report.append(f"{var!r} is not a chance variable but has a cpt")
    for var in d.value_ids:
        if var not in d.rewards:
            report.append(f"value variable {var!r} has no reward table")
    for var in d.rewards:
        if d.kind(var) != VALUE:
            report.append(f"{var!r} is not a value variable but has a reward table")

    if acyclic:
        for var, table in sorted(d.cpts.items()):
            if d.kind(var) != CHANCE:
                continue
            if np.any(table < 0.0) or np.any(table > 1.0):
                report.append(f"cpt of {var!r} has entries outside [0, 1]")
            sums = table.sum(axis=0)
            if np.any(np.abs(sums - 1.0) > PROB_TOL):
                report.append(f"cpt of {var!r} has columns not summing to 1")
        for var, table in sorted(d.rewards.items()):
            if not np.all(np.isfinite(table)):
                report.append(f"reward table of {var!r} has non-finite entries")
    return report


# -- policies and strategies -------------------------------------------------

@dataclass(frozen=True, eq=False)
class Policy:
    """A conditional distribution over a decision's actions, parents sorted."""

    decision: str
    parents: tuple[str, ...]
    table: np.ndarray  # shape (card, *parent cards)

    def __post_init__(self) -> None:
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "table", _freeze(np.asarray(self.table, dtype=float)))

    def is_pure(self) -> bool:
        t = self.table
        onehot = np.all((t == 0.0) | (t == 1.0))
        return bool(onehot and np.all(t.sum(axis=0) == 1.0))


@dataclass(frozen=True, eq=False)
class Strategy:
    """One policy per decision variable, ordered by decision id."""

    policies: tuple[Policy, ...]

    def __init__(self, policies: Iterable[Policy]) -> None:
        policies = tuple(sorted(policies, key=lambda p: p.decision))
        if len({p.decision for p in policies}) != len(policies):
            raise ValueError("strategy assigns several policies to one decision")
        object.__setattr__(self, "policies", policies)

    def policy_for(self, decision: str) -> Policy:
        for p in self.policies:
            if p.decision == decision:
                return p
        raise KeyError(decision)


def parent_assignment_count(d: InfluenceDiagram, var: str) -> int:
    return math.prod(d.cardinality(p) for p in d.parents(var))


def pure_policy_count(d: InfluenceDiagram, decision: str) -> int:
    """Number of pure policies, card ** (number of parent assignments)."""
    if d.kind(decision) != DECISION:
        raise ValueError(f"{decision!r} is not a decision variable")
    return d.cardinality(decision) ** parent_assignment_count(d, decision)


def pure_policy(d: InfluenceDiagram, decision: str, index: int) -> Policy:
    """The ``index``-th pure policy in deterministic enumeration order.

    Policies are ordered lexicographically by the tuple of chosen actions
    over parent assignments (first assignment most significant, assignments
    in C order over the sorted parents).
    """
    card = d.cardinality(decision)
    gamma = parent_assignment_count(d, decision)
    n = card ** gamma
    if not 0 <= index < n:
        raise ValueError(f"policy index {index} out of range for {decision!r}")
    digits = np.empty(gamma, dtype=np.int64)
    rem = index
    for j in range(gamma - 1, -1, -1):
        digits[j] = rem % card
        rem //= card
    table = np.zeros((card, gamma))
    table[digits, np.arange(gamma)] = 1.0
    parents = d.parents(decision)
    shape = (card,) + tuple(d.cardinality(p) for p in parents)
    return Policy(decision, parents, table.reshape(shape))


def enumerate_pure_policies(d: InfluenceDiagram, decision: str) -> list[Policy]:
    """All pure policies for ``decision``, in deterministic order."""
    return [pure_policy(d, decision, i) for i in range(pure_policy_count(d, decision))]


def pure_policy_tables(d: InfluenceDiagram, decision: str) -> np.ndarray:
    """Stacked tables of every pure policy, shape (count, card, *parent cards)."""
    card = d.cardinality(decision)
    gamma = parent_assignment_count(d, decision)
    n = card ** gamma
    rows = np.arange(n, dtype=np.int64)
    tables = np.zeros((n, card, gamma))
    for j in range(gamma):
        acts = (rows // card ** (gamma - 1 - j)) % card
        tables[rows, acts, j] = 1.0
    shape = (n, card) + tuple(d.cardinality(p) for p in d.parents(decision))
    return tables.reshape(shape)


# -- exact evaluation ---------------------------------------------------------

def _joint_states(d: InfluenceDiagram) -> tuple[tuple[str, ...], dict[str, np.ndarray], int]:
    """Grid of all joint assignments over the chance and decision variables."""
    ids = tuple(sorted(d.chance_ids + d.decision_ids))
    cards = tuple(d.cardinality(x) for x in ids)
    total = math.prod(cards)
    if total > ENUMERATION_CAP:
        raise InstanceTooLargeError(f"{total} joint assignments exceed the enumeration cap")
    if ids:
        grids = np.unravel_index(np.arange(total), cards)
        states = {x: g for x, g in zip(ids, grids)}
    else:
        states = {}
    return ids, states, total


def _gather(table: np.ndarray, idx: tuple[np.ndarray, ...], total: int) -> np.ndarray:
    if not idx:
        return np.full(total, float(table))
    return table[idx]


def _check_strategy(d: InfluenceDiagram, s: Strategy) -> None:
    if tuple(p.decision for p in s.policies) != d.decision_ids:
        raise ValueError("strategy does not cover exactly the diagram's decisions")
    for p in s.policies:
        if p.parents != d.parents(p.decision):
            raise ValueError(f"policy for {p.decision!r} has parents {p.parents}, "
                             f"diagram has {d.parents(p.decision)}")
        shape = (d.cardinality(p.decision),) + tuple(d.cardinality(q) for q in p.parents)
        if p.table.shape != shape:
            raise ValueError(f"policy table for {p.decision!r} has shape {p.table.shape}, "
                             f"expected {shape}")
        if np.any(np.abs(p.table.sum(axis=0) - 1.0) > PROB_TOL):
            raise ValueError(f"policy table for {p.decision!r} has columns not summing to 1")


def expected_utility(d: InfluenceDiagram, s: Strategy) -> float:
    """Expected utility of strategy ``s``, by full enumeration of joint assignments."""
    _check_strategy(d, s)
    _, states, total = _joint_states(d)
    prob = np.ones(total)
    for var in d.chance_ids:
        idx = (states[var],) + tuple(states[p] for p in d.parents(var))
        prob *= _gather(d.cpt(var), idx, total)
    for p in s.policies:
        idx = (states[p.decision],) + tuple(states[q] for q in p.parents)
        prob *= _gather(p.table, idx, total)
    util = np.zeros(total)
    for var in d.value_ids:
        idx = tuple(states[p] for p in d.parents(var))
        util += _gather(d.reward(var), idx, total)
    return float(np.sum(prob * util))


def _base_weights(d: InfluenceDiagram, states: dict[str, np.ndarray], total: int) -> np.ndarray:
    """P(chance | decisions) times total utility, per joint assignment."""
    base = np.ones(total)
    for var in d.chance_ids:
        idx = (states[var],) + tuple(states[p] for p in d.parents(var))
        base *= _gather(d.cpt(var), idx, total)
    util = np.zeros(total)
    for var in d.value_ids:
        idx = tuple(states[p] for p in d.parents(var))
        util += _gather(d.reward(var), idx, total)
    return base * util


def brute_force_meu(d: InfluenceDiagram,
                    cap: int = DEFAULT_STRATEGY_CAP) -> tuple[float, Strategy]:
    """Maximize expected utility over every combination of pure strategies.

    Each pure strategy's expected utility is the defining enumeration sum;
    the sums are evaluated jointly by grouping assignments on the
    (parent assignment, action) cells they hit per decision, which is an
    exact regrouping of the same products.  Ties are broken by the first
    strategy in deterministic enumeration order.
    """
    decisions = d.decision_ids
    counts = [pure_policy_count(d, dec) for dec in decisions]
    total_strategies = math.prod(counts)
    if total_strategies > cap:
        raise InstanceTooLargeError(
            f"instance too large: {total_strategies} pure strategies exceed the cap {cap}")

    _, states, total = _joint_states(d)
    base = _base_weights(d, states, total)
    if not decisions:
        return float(np.sum(base)), Strategy(())

    cards = [d.cardinality(dec) for dec in decisions]
    gammas = [parent_assignment_count(d, dec) for dec in decisions]
    sites = [g * c for g, c in zip(gammas, cards)]
    site_total = math.prod(sites)
    if site_total > ENUMERATION_CAP:
        raise InstanceTooLargeError(f"instance too large: {site_total} policy cells")

    # per-assignment signature: which (parent assignment, action) cell each
    # decision takes, mixed radix over decisions
    sig = np.zeros(total, dtype=np.int64)
    for dec, card, gamma, site in zip(decisions, cards, gammas, sites):
        pa_cards = tuple(d.cardinality(p) for p in d.parents(dec))
        if pa_cards:
            pa_flat = np.ravel_multi_index(tuple(states[p] for p in d.parents(dec)), pa_cards)
        else:
            pa_flat = np.zeros(total, dtype=np.int64)
        sig = sig * site + pa_flat * card + states[dec]
    weights = np.bincount(sig, weights=base, minlength=site_total)

    # contract all decisions but the last against their explicit policy matrices
    acc = weights.reshape(1, site_total)
    rest = site_total
    for dec, card, gamma, site, n in list(zip(decisions, cards, gammas, sites, counts))[:-1]:
        rest //= site
        rows = np.arange(n, dtype=np.int64)
        mat = np.zeros((n, site))
        for j in range(gamma):
            acts = (rows // card ** (gamma - 1 - j)) % card
            mat[rows, j * card + acts] = 1.0
        acc = np.einsum("pcr,nc->pnr", acc.reshape(acc.shape[0], site, rest), mat)
        acc = acc.reshape(acc.shape[0] * n, rest)

    # the last decision separates per parent assignment: pick the best action
    # in every cell (first action on ties)
    card_k, gamma_k = cards[-1], gammas[-1]
    acc = acc.reshape(acc.shape[0], gamma_k, card_k)
    per_site_best = acc.max(axis=2)
    totals = per_site_best.sum(axis=1)
    best = int(np.argmax(totals))
    value = float(totals[best])

    digits = np.argmax(acc[best], axis=1)
    last_index = 0
    for a in digits:
        last_index = last_index * card_k + int(a)
    indices = []
    rem = best
    for n in reversed(counts[:-1]):
        indices.append(rem % n)
        rem //= n
    indices = list(reversed(indices)) + [last_index]
    strategy = Strategy(pure_policy(d, dec, i) for dec, i in zip(decisions, indices))
    return value, strategy
