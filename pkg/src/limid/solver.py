"""Strategy selection by set-valued message passing over a rooted binary
tree decomposition.

Every node starts with the potentials assigned to it: conditional tables
of chance variables, the full set of pure policies of decision variables,
and the (normalized) utility table.  Messages flow from the leaves to the
root; at each node the incoming sets are combined, the variables leaving
the separator are summed out, and the resulting set is pruned to a
covering within a pointwise factor alpha = 1 + epsilon / (2m).  Every
number surviving at the root is the exact expected utility of the strategy
recorded in its provenance, and the maximum E among them satisfies
MEU <= (1 + epsilon) * E.  With pruning disabled the maximum is the exact
MEU.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .model import (
    InfluenceDiagram,
    InstanceTooLargeError,
    Strategy,
    pure_policy,
    pure_policy_tables,
    validate_diagram,
)
from .potential import (
    CoveringObserver,
    Potential,
    PotentialSet,
    combine_sets,
    covering,
    provenance_key,
    sum_out_set,
)
from .reduction import normalize_utilities, reduce_to_single_value
from .treedecomp import (
    TreeDecomposition,
    binarize,
    build_decomposition,
    default_root,
    ensure_value_leaves,
    root_and_order,
    validate_decomposition,
)

DEFAULT_MAX_SET_SIZE = 1_000_000

#: slack admitted on "utilities lie in [0, 1]" input checks
UTILITY_RANGE_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    """Solver knobs.  ``epsilon == 0`` forces exact mode (no pruning)."""

    epsilon: float = 0.0
    exact_mode: bool = False
    max_set_size: int | None = DEFAULT_MAX_SET_SIZE
    collect_stats: bool = False
    covering_observer: CoveringObserver | None = None

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.epsilon == 0:
            object.__setattr__(self, "exact_mode", True)


@dataclass(frozen=True)
class NodeStats:
    node: int
    cluster: tuple[str, ...]
    k_size: int
    a_size: int
    b_size: int
    c_size: int
    smallest_positive: float | None
    size_bound: int | None


@dataclass(frozen=True)
class SolveStats:
    m: int
    alpha: float
    exact: bool
    wall_time: float
    nodes: tuple[NodeStats, ...] = ()

    @property
    def total_pruned_size(self) -> int:
        return sum(s.c_size for s in self.nodes)


@dataclass(frozen=True, eq=False)
class SolverResult:
    value: float
    strategy: Strategy
    stats: SolveStats


def assign_factors(d: InfluenceDiagram, t: TreeDecomposition) -> dict[str, int]:
    """Node assignment for every variable's table.

    Chance and decision variables go to the smallest node covering their
    family; a value variable goes to its value leaf when the decomposition
    has one, else to the smallest node covering its parents.
    """
    clusters = [set(c) for c in t.clusters]
    leaf_map = t.value_leaf_map
    sigma: dict[str, int] = {}
    for v in d.variables:
        if v.kind == "value" and v.id in leaf_map:
            sigma[v.id] = leaf_map[v.id]
            continue
        need = set(d.parents(v.id))
        if v.kind != "value":
            need.add(v.id)
        nodes = [i for i, c in enumerate(clusters) if need <= c]
        if not nodes:
            raise ValueError(f"no cluster covers the factor of {v.id!r}")
        sigma[v.id] = min(nodes)
    return sigma


def _scalar_unit() -> PotentialSet:
    return PotentialSet((), (), np.ones((1,)), (frozenset(),))


def _cpt_potential_set(d: InfluenceDiagram, var: str) -> PotentialSet:
    parents = d.parents(var)
    scope = tuple(sorted(parents + (var,)))
    table = np.moveaxis(d.cpt(var), 0, scope.index(var))
    cards = tuple(d.cardinality(x) for x in scope)
    return PotentialSet.singleton(Potential(scope, cards, table))


def _policy_potential_set(d: InfluenceDiagram, dec: str,
                          cap: int | None) -> PotentialSet:
    count = 1
    for p in d.parents(dec):
        count *= d.cardinality(p)
    count = d.cardinality(dec) ** count
    if cap is not None and count > cap:
        raise InstanceTooLargeError(
            f"decision {dec!r} has {count} pure policies, over the set-size cap {cap}")
    tables = pure_policy_tables(d, dec)
    scope = tuple(sorted(d.parents(dec) + (dec,)))
    stacked = np.moveaxis(tables, 1, 1 + scope.index(dec))
    cards = tuple(d.cardinality(x) for x in scope)
    provs = tuple(frozenset({(dec, i)}) for i in range(tables.shape[0]))
    return PotentialSet(scope, cards, stacked, provs)


def _utility_potential_set(d: InfluenceDiagram, var: str) -> PotentialSet:
    parents = d.parents(var)
    cards = tuple(d.cardinality(p) for p in parents)
    return PotentialSet.singleton(Potential(parents, cards, d.reward(var)))


def _check_cap(size: int, cap: int | None, node: int, stage: str) -> None:
    if cap is not None and size > cap:
        raise InstanceTooLargeError(
            f"set size {size} at node {node} ({stage}) exceeds the cap {cap}")


def _postorder(t: TreeDecomposition) -> list[int]:
    order: list[int] = []
    stack: list[tuple[int, bool]] = [(t.root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
        else:
            stack.append((node, True))
            for c in reversed(t.children(node)):
                stack.append((c, False))
    return order


def solve(d: InfluenceDiagram, t: TreeDecomposition, cfg: SolverConfig) -> SolverResult:
    """Run the propagation on a single-value diagram with utilities in [0, 1].

    Callers with several value variables or out-of-range utilities should
    use :func:`solve_full`, which reduces and normalizes first.
    """
    started = time.perf_counter()
    if len(d.value_ids) != 1:
        raise ValueError("solve needs a diagram with exactly one value variable")
    value_var = d.value_ids[0]
    reward = d.reward(value_var)
    if reward.size and (reward.min() < -UTILITY_RANGE_TOL
                        or reward.max() > 1.0 + UTILITY_RANGE_TOL):
        raise ValueError("utilities must lie in [0, 1]; normalize the diagram first")
    if t.root is None:
        raise ValueError("decomposition must be rooted")
    if any(t.degree(i) > 3 for i in range(t.n)):
        raise ValueError("decomposition must be binary")
    problems = validate_decomposition(d, t)
    if problems:
        raise ValueError("invalid decomposition: " + "; ".join(problems))

    m = t.n
    epsilon = 0.0 if cfg.exact_mode else cfg.epsilon
    alpha = 1.0 + epsilon / (2 * m)
    cap = cfg.max_set_size
    sigma = assign_factors(d, t)

    hold: dict[int, list[PotentialSet]] = {i: [] for i in range(m)}
    for var in d.chance_ids:
        hold[sigma[var]].append(_cpt_potential_set(d, var))
    for dec in d.decision_ids:
        hold[sigma[dec]].append(_policy_potential_set(d, dec, cap))
    hold[sigma[value_var]].append(_utility_potential_set(d, value_var))

    initial: dict[int, PotentialSet] = {}
    for i in range(m):
        k = combine_sets([_scalar_unit()] + hold[i], on_conflict="error")
        _check_cap(len(k), cap, i, "initialization")
        initial[i] = k

    cluster_sets = [set(c) for c in t.clusters]
    node_stats: list[NodeStats] = []
    messages: dict[int, PotentialSet] = {}
    for i in _postorder(t):
        a = combine_sets([initial[i]] + [messages.pop(c) for c in t.children(i)],
                         on_conflict="error")
        _check_cap(len(a), cap, i, "combination")
        parent = t.parent(i)
        separator = cluster_sets[i] & cluster_sets[parent] if parent is not None else set()
        gone = cluster_sets[i] - separator
        if not gone <= set(a.scope):
            raise RuntimeError(f"variables {sorted(gone - set(a.scope))} reach node {i} "
                               f"without their defining tables")
        b = sum_out_set(a, gone)
        if cfg.exact_mode:
            pruned, smallest, bound = b, None, None
        else:
            pruned, cstats = covering(b, alpha)
            smallest, bound = cstats.smallest_positive, cstats.size_bound
            if cfg.covering_observer is not None:
                cfg.covering_observer(b, pruned, alpha, cstats)
        if cfg.collect_stats:
            node_stats.append(NodeStats(i, t.clusters[i], len(initial[i]), len(a),
                                        len(b), len(pruned), smallest, bound))
        messages[i] = pruned

    final = messages[t.root]
    if final.scope:
        raise RuntimeError("root message still carries variables")
    values = final.values.reshape(len(final))
    best_value = float(values.max())
    ties = np.nonzero(values == best_value)[0]
    winner = min(ties, key=lambda i: provenance_key(final.provenances[i]))
    chosen = dict(final.provenances[winner])
    strategy = Strategy(pure_policy(d, dec, chosen.get(dec, 0)) for dec in d.decision_ids)

    stats = SolveStats(m, alpha, cfg.exact_mode, time.perf_counter() - started,
                       tuple(node_stats))
    return SolverResult(best_value, strategy, stats)


def solve_full(d: InfluenceDiagram, cfg: SolverConfig,
               decomposition: TreeDecomposition | None = None) -> SolverResult:
    """Full pipeline on an arbitrary valid diagram.

    Builds (or adopts) a decomposition, binarizes it, gives every value
    variable a leaf, roots it, reduces to a single value variable,
    normalizes the utilities, solves, and maps the value back to the
    original utility scale.  The returned strategy covers exactly the
    original decision variables.
    """
    started = time.perf_counter()
    problems = validate_diagram(d)
    if problems:
        raise ValueError("invalid diagram: " + "; ".join(problems))

    if not d.value_ids:
        # no rewards anywhere: every strategy has expected utility zero
        strategy = Strategy(pure_policy(d, dec, 0) for dec in d.decision_ids)
        stats = SolveStats(0, 1.0, cfg.exact_mode, time.perf_counter() - started)
        return SolverResult(0.0, strategy, stats)

    if decomposition is None:
        base = build_decomposition(d)
    else:
        problems = validate_decomposition(d, decomposition)
        if problems:
            raise ValueError("invalid decomposition: " + "; ".join(problems))
        base = decomposition
    shaped = ensure_value_leaves(d, binarize(base))
    rooted = root_and_order(shaped, default_root(shaped))
    reduced = reduce_to_single_value(d, rooted)
    normalized, offset, scale = normalize_utilities(reduced.diagram)
    result = solve(normalized, reduced.decomposition, cfg)
    value = offset + scale * result.value
    stats = replace(result.stats, wall_time=time.perf_counter() - started)
    return SolverResult(value, result.strategy, stats)
