"""Reduction of a diagram with many value variables to one with a single
value variable of identical expected utility under every strategy.

Each reward table U_i over Pa(V_i) becomes a binary chance variable W_i
with P(W_i = state0 | Pa(V_i)) = (U_i - lo) / (hi - lo), where lo and hi
bound all rewards.  The W_i feed a chain of binary variables O_i that
track the running average of the W probabilities:

    P(O_i = state0 | O_{i-1}, W_i)  =  1            for states (0, 0)
                                    =  (i - 1) / i  for states (0, 1)
                                    =  1 / i        for states (1, 0)
                                    =  0            for states (1, 1)

so that P(O_i = state0 | x) = (1/i) * sum_{j <= i} P(W_j = state0 | x) for
every joint assignment x of the original chance and decision variables.
A single value variable on O_q with rewards (q * hi, q * lo) then yields
exactly the original expected utility.

The accompanying decomposition transform inserts W_i, O_i, O_{i-1} into
the leaf assigned to V_i and threads O_{i-1} through every node the Euler
tour visits between consecutive value leaves, restoring running
intersection while growing no cluster by more than three variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    CHANCE,
    VALUE,
    InfluenceDiagram,
    InstanceTooLargeError,
    Variable,
    _joint_states,
)
from .treedecomp import TreeDecomposition

#: cap on joint assignments enumerated by verify_chain_identity
CHAIN_CHECK_CAP = 1_000_000


@dataclass(frozen=True, eq=False)
class ReductionResult:
    """Outcome of :func:`reduce_to_single_value`.

    ``w_vars`` and ``o_vars`` list the introduced binary variables in chain
    order; ``value_order`` lists the original value variables in the same
    order (the order of their leaves along the tree walk).
    """

    diagram: InfluenceDiagram
    decomposition: TreeDecomposition
    bounds: tuple[float, float]
    w_vars: tuple[str, ...]
    o_vars: tuple[str, ...]
    q: int
    value_order: tuple[str, ...]


def utility_bounds(d: InfluenceDiagram) -> tuple[float, float]:
    """(lo, hi) over all reward entries; a constant reward widens hi by one
    so the ratio (U - lo) / (hi - lo) stays defined."""
    if not d.value_ids:
        raise ValueError("diagram has no value variables")
    lo = min(float(d.reward(v).min()) for v in d.value_ids)
    hi = max(float(d.reward(v).max()) for v in d.value_ids)
    if hi == lo:
        hi = lo + 1.0
    return lo, hi


def _fresh_names(d: InfluenceDiagram, q: int) -> tuple[list[str], list[str], str]:
    prefix = "_"
    while True:
        ws = [f"{prefix}w{i}" for i in range(1, q + 1)]
        os_ = [f"{prefix}o{i}" for i in range(1, q + 1)]
        val = f"{prefix}v"
        if not any(d.has_variable(name) for name in ws + os_ + [val]):
            return ws, os_, val
        prefix += "_"


def _chain_cpt(i: int) -> np.ndarray:
    """P(O_i | O_{i-1}, W_i) for i >= 2, axes (O_i, O_{i-1}, W_i)."""
    row0 = np.array([[1.0, (i - 1) / i],
                     [1.0 / i, 0.0]])
    return np.stack([row0, 1.0 - row0])


def reduce_to_single_value(d: InfluenceDiagram, t: TreeDecomposition) -> ReductionResult:
    """Build the single-value diagram and its widened decomposition.

    ``t`` must be rooted, binary, and carry a value leaf (cluster equal to
    the parent set) for every value variable of ``d``.
    """
    if t.root is None:
        raise ValueError("decomposition must be rooted")
    if any(t.degree(i) > 3 for i in range(t.n)):
        raise ValueError("decomposition must be binary")
    leaf_map = t.value_leaf_map
    for v in d.value_ids:
        if v not in leaf_map:
            raise ValueError(f"decomposition has no value leaf for {v!r}")
        if set(t.clusters[leaf_map[v]]) != set(d.parents(v)):
            raise ValueError(f"value leaf cluster for {v!r} does not equal its parent set")
    if not d.value_ids:
        raise ValueError("diagram has no value variables")

    tour = t.euler_tour()
    first_pos: dict[int, int] = {}
    for pos, node in enumerate(tour):
        first_pos.setdefault(node, pos)
    value_order = tuple(sorted(d.value_ids, key=lambda v: (first_pos[leaf_map[v]], v)))
    q = len(value_order)
    lo, hi = utility_bounds(d)
    w_names, o_names, v_name = _fresh_names(d, q)

    variables = [v for v in d.variables if v.kind != VALUE]
    arcs = [(a, b) for a, b in d.arcs if d.kind(a) != VALUE and d.kind(b) != VALUE]
    cpts: dict[str, np.ndarray] = dict(d.cpts)
    for i, (orig, w, o) in enumerate(zip(value_order, w_names, o_names), start=1):
        variables.append(Variable(w, CHANCE, 2))
        variables.append(Variable(o, CHANCE, 2))
        for p in d.parents(orig):
            arcs.append((p, w))
        arcs.append((w, o))
        row0 = (d.reward(orig) - lo) / (hi - lo)
        cpts[w] = np.stack([row0, 1.0 - row0])
        if i == 1:
            cpts[o] = np.array([[1.0, 0.0], [0.0, 1.0]])
        else:
            arcs.append((o_names[i - 2], o))
            # canonical parent order (_o{i-1}, _w{i}) is already sorted:
            # the o-prefix precedes the w-prefix
            cpts[o] = _chain_cpt(i)
    variables.append(Variable(v_name, VALUE))
    arcs.append((o_names[-1], v_name))
    rewards = {v_name: np.array([q * hi, q * lo])}
    reduced = InfluenceDiagram(variables, arcs, cpts, rewards)

    clusters = [set(c) for c in t.clusters]
    for i, (orig, w, o) in enumerate(zip(value_order, w_names, o_names), start=1):
        leaf = leaf_map[orig]
        clusters[leaf].update({w, o})
        if i > 1:
            clusters[leaf].add(o_names[i - 2])
    for i in range(2, q + 1):
        a = first_pos[leaf_map[value_order[i - 2]]]
        b = first_pos[leaf_map[value_order[i - 1]]]
        for node in tour[a:b + 1]:
            clusters[node].add(o_names[i - 2])
    widened = TreeDecomposition(tuple(tuple(sorted(c)) for c in clusters), t.edges,
                                root=t.root)

    return ReductionResult(reduced, widened, (lo, hi), tuple(w_names), tuple(o_names),
                           q, value_order)


def verify_chain_identity(r: ReductionResult, d: InfluenceDiagram) -> float:
    """Max deviation of P(O_i = state0 | x) from the running average of the
    W probabilities, over all joint assignments x and chain positions i.

    Both sides are obtained by marginalizing the chain: the left by the
    forward recurrence over the chain tables, the right from the W tables
    directly.
    """
    _, states, total = _joint_states(d)
    if total > CHAIN_CHECK_CAP:
        raise InstanceTooLargeError(f"{total} joint assignments exceed the chain check cap")
    red = r.diagram
    w_probs = []
    for orig, w in zip(r.value_order, r.w_vars):
        idx = tuple(states[p] for p in d.parents(orig))
        table = red.cpt(w)[0]
        w_probs.append(table[idx] if idx else np.full(total, float(table)))

    deviation = 0.0
    running = np.zeros(total)
    prev = None
    for i, (w, o) in enumerate(zip(w_probs, r.o_vars), start=1):
        table = red.cpt(o)[0]
        if i == 1:
            prob = table[0] * w + table[1] * (1.0 - w)
        else:
            prob = (table[0, 0] * prev * w
                    + table[0, 1] * prev * (1.0 - w)
                    + table[1, 0] * (1.0 - prev) * w
                    + table[1, 1] * (1.0 - prev) * (1.0 - w))
        running += w
        deviation = max(deviation, float(np.max(np.abs(prob - running / i))))
        prev = prob
    return deviation


def normalize_utilities(d: InfluenceDiagram) -> tuple[InfluenceDiagram, float, float]:
    """Affinely map the single reward table into [0, 1].

    Returns (diagram, offset, scale) with original utilities recovered as
    offset + scale * normalized; maximizing strategies are unaffected.
    """
    if len(d.value_ids) != 1:
        raise ValueError("normalization needs exactly one value variable")
    v = d.value_ids[0]
    table = d.reward(v)
    offset = float(table.min()) if table.size else 0.0
    spread = float(table.max() - table.min()) if table.size else 0.0
    scale = spread if spread > 0.0 else 1.0
    normalized = InfluenceDiagram(d.variables, d.arcs, d.cpts,
                                  {v: (table - offset) / scale})
    return normalized, offset, scale
