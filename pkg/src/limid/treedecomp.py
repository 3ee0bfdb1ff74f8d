"""Tree decompositions of influence diagrams.

Clusters hold chance and decision variables only; reward parent sets enter
the moral graph as cliques so that some cluster covers each of them.  A
decomposition is valid when the edges form a tree, every family (and every
reward parent set) fits in some cluster, and the clusters containing any
given variable induce a connected subtree.

Construction eliminates the moral graph with a min-fill ordering by
default; for small graphs an exact search over all elimination orders
(dynamic programming on vertex subsets) certifies the optimal width.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property

from .model import InfluenceDiagram, VALUE

#: exact ordering search is feasible for this many vertices at most
EXACT_SEARCH_LIMIT = 16


@dataclass(frozen=True)
class TreeDecomposition:
    """A tree of variable clusters, optionally rooted.

    ``value_leaves`` maps value variable ids to leaf nodes whose cluster
    equals the variable's parent set (populated by
    :func:`ensure_value_leaves`).  Instances are canonical: cluster
    contents, edges and the leaf map are sorted, so equal decompositions
    compare equal.
    """

    clusters: tuple[tuple[str, ...], ...]
    edges: tuple[tuple[int, int], ...]
    root: int | None = None
    value_leaves: tuple[tuple[str, int], ...] = ()

    def __post_init__(self) -> None:
        clusters = tuple(tuple(sorted(set(c))) for c in self.clusters)
        n = len(clusters)
        edges = tuple(sorted({(min(i, j), max(i, j)) for i, j in self.edges}))
        for i, j in edges:
            if i == j or not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"bad edge ({i}, {j})")
        if self.root is not None and not 0 <= self.root < n:
            raise ValueError(f"unknown node id {self.root}")
        leaves = tuple(sorted((str(v), int(i)) for v, i in self.value_leaves))
        for _, i in leaves:
            if not 0 <= i < n:
                raise ValueError(f"value leaf index {i} out of range")
        object.__setattr__(self, "clusters", clusters)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "value_leaves", leaves)

    @property
    def n(self) -> int:
        return len(self.clusters)

    @cached_property
    def _adjacency(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return tuple(tuple(sorted(a)) for a in adj)

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self._adjacency[i]

    def degree(self, i: int) -> int:
        return len(self._adjacency[i])

    def width(self) -> int:
        return max((len(c) for c in self.clusters), default=0) - 1

    def is_tree(self) -> bool:
        if self.n == 0 or len(self.edges) != self.n - 1:
            return False
        seen = {0}
        stack = [0]
        while stack:
            for j in self.neighbors(stack.pop()):
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.n

    @property
    def value_leaf_map(self) -> dict[str, int]:
        return dict(self.value_leaves)

    # -- rooted structure ---------------------------------------------------

    @cached_property
    def _orientation(self) -> tuple[tuple[int | None, ...], tuple[tuple[int, ...], ...]]:
        if self.root is None:
            raise ValueError("decomposition is not rooted")
        parent: list[int | None] = [None] * self.n
        children: list[tuple[int, ...]] = [()] * self.n
        seen = {self.root}
        stack = [self.root]
        while stack:
            i = stack.pop()
            kids = tuple(j for j in self.neighbors(i) if j not in seen)
            children[i] = kids
            for j in kids:
                seen.add(j)
                parent[j] = i
                stack.append(j)
        return tuple(parent), tuple(children)

    def parent(self, i: int) -> int | None:
        return self._orientation[0][i]

    def children(self, i: int) -> tuple[int, ...]:
        return self._orientation[1][i]

    def leaf_order(self) -> tuple[int, ...]:
        """Leaves in depth-first order, children visited left to right."""
        order: list[int] = []
        stack = [self.root]
        while stack:
            i = stack.pop()
            kids = self.children(i)
            if not kids:
                order.append(i)
            stack.extend(reversed(kids))
        return tuple(order)

    def euler_tour(self) -> tuple[int, ...]:
        """Walk printing each node once more than its child count (2m - 1 symbols)."""
        tour: list[int] = []

        def walk(i: int) -> None:
            tour.append(i)
            for c in self.children(i):
                walk(c)
                tour.append(i)

        walk(self.root)
        return tuple(tour)


# -- construction -------------------------------------------------------------

def moral_graph(d: InfluenceDiagram) -> tuple[tuple[str, ...], dict[str, set[str]]]:
    """Undirected graph over chance/decision variables with every family
    and every reward parent set completed into a clique."""
    vertices = tuple(sorted(d.chance_ids + d.decision_ids))
    adj: dict[str, set[str]] = {v: set() for v in vertices}
    for v in d.variables:
        group = set(d.parents(v.id))
        if v.kind != VALUE:
            group.add(v.id)
        for a in group:
            for b in group:
                if a != b:
                    adj[a].add(b)
    return vertices, adj


def min_fill_order(vertices: tuple[str, ...], adj: dict[str, set[str]]) -> list[str]:
    work = {v: set(adj[v]) for v in vertices}
    order: list[str] = []
    remaining = set(vertices)
    while remaining:
        best = None
        for v in sorted(remaining):
            nb = sorted(work[v])
            fill = sum(1 for i, a in enumerate(nb) for b in nb[i + 1:] if b not in work[a])
            if best is None or fill < best[0]:
                best = (fill, v)
        v = best[1]
        nb = sorted(work[v])
        for i, a in enumerate(nb):
            for b in nb[i + 1:]:
                work[a].add(b)
                work[b].add(a)
        for a in nb:
            work[a].discard(v)
        del work[v]
        remaining.discard(v)
        order.append(v)
    return order


def exact_order(vertices: tuple[str, ...], adj: dict[str, set[str]]) -> list[str]:
    """Width-optimal elimination order by dynamic programming over subsets."""
    n = len(vertices)
    if n > EXACT_SEARCH_LIMIT:
        raise ValueError(f"exact ordering search limited to {EXACT_SEARCH_LIMIT} vertices")
    if n == 0:
        return []
    index = {v: i for i, v in enumerate(vertices)}
    bits = [0] * n
    for v, nbs in adj.items():
        for u in nbs:
            bits[index[v]] |= 1 << index[u]

    def spread(mask: int) -> int:
        out = 0
        m = mask
        while m:
            low = m & -m
            out |= bits[low.bit_length() - 1]
            m ^= low
        return out

    def q_size(eliminated: int, v: int) -> int:
        inside = eliminated | (1 << v)
        reach = 1 << v
        while True:
            grow = spread(reach) & inside & ~reach
            if not grow:
                break
            reach |= grow
        return (spread(reach) & ~inside).bit_count()

    full = (1 << n) - 1
    width = [0] * (full + 1)
    last = [0] * (full + 1)
    for s in range(1, full + 1):
        best = None
        m = s
        while m:
            low = m & -m
            v = low.bit_length() - 1
            prev = s ^ low
            w = max(width[prev], q_size(prev, v))
            if best is None or w < best[0]:
                best = (w, v)
            m ^= low
        width[s], last[s] = best

    order_rev: list[str] = []
    s = full
    while s:
        v = last[s]
        order_rev.append(vertices[v])
        s ^= 1 << v
    return list(reversed(order_rev))


def _order_to_decomposition(vertices: tuple[str, ...], adj: dict[str, set[str]],
                            order: list[str]) -> TreeDecomposition:
    if not vertices:
        return TreeDecomposition(((),), ())
    work = {v: set(adj[v]) for v in vertices}
    position = {v: i for i, v in enumerate(order)}
    bags: list[tuple[str, ...]] = []
    edges: list[tuple[int, int]] = []
    roots: list[int] = []
    for idx, v in enumerate(order):
        nb = sorted(work[v])
        bags.append(tuple(sorted([v] + nb)))
        if nb:
            # attach to the bag of the neighbor eliminated next
            u = min(nb, key=position.__getitem__)
            edges.append((idx, position[u]))
        else:
            roots.append(idx)
        for i, a in enumerate(nb):
            for b in nb[i + 1:]:
                work[a].add(b)
                work[b].add(a)
        for a in nb:
            work[a].discard(v)
        del work[v]
    # a disconnected moral graph yields one subtree per component: chain them
    for a, b in zip(roots, roots[1:]):
        edges.append((a, b))
    return TreeDecomposition(tuple(bags), tuple(edges))


def build_decomposition(d: InfluenceDiagram, *, exhaustive: bool = False) -> TreeDecomposition:
    """Tree decomposition of the moral graph of ``d``.

    ``exhaustive=True`` searches all elimination orders (small graphs only)
    and certifies the optimal width; the default min-fill heuristic gives a
    valid decomposition of possibly larger width.
    """
    vertices, adj = moral_graph(d)
    order = exact_order(vertices, adj) if exhaustive else min_fill_order(vertices, adj)
    return _order_to_decomposition(vertices, adj, order)


# -- validation ---------------------------------------------------------------

def validate_decomposition(d: InfluenceDiagram, t: TreeDecomposition) -> list[str]:
    """All violations of tree-ness, family preservation and running intersection."""
    report: list[str] = []
    if t.n == 0:
        return ["decomposition has no nodes"]
    if not t.is_tree():
        report.append("decomposition edges do not form a tree")
    cluster_sets = [set(c) for c in t.clusters]
    allowed = set(d.chance_ids) | set(d.decision_ids)
    for i, c in enumerate(cluster_sets):
        for v in sorted(c - allowed):
            report.append(f"cluster {i} contains {v!r}, which is not a chance or "
                          f"decision variable of the diagram")
    for v in d.variables:
        need = set(d.parents(v.id))
        if v.kind != VALUE:
            need.add(v.id)
        if not any(need <= c for c in cluster_sets):
            what = "parent set of value variable" if v.kind == VALUE else "family of"
            report.append(f"{what} {v.id!r} not covered by any cluster")
    if t.is_tree():
        for var in sorted(set().union(*cluster_sets) if cluster_sets else set()):
            holders = [i for i, c in enumerate(cluster_sets) if var in c]
            seen = {holders[0]}
            stack = [holders[0]]
            holder_set = set(holders)
            while stack:
                for j in t.neighbors(stack.pop()):
                    if j in holder_set and j not in seen:
                        seen.add(j)
                        stack.append(j)
            if len(seen) != len(holders):
                report.append(f"running intersection violated for {var!r}")
    return report


# -- shape transforms ----------------------------------------------------------

def binarize(t: TreeDecomposition) -> TreeDecomposition:
    """Split high-degree nodes until every node has at most three neighbors.

    New nodes duplicate existing clusters, so the width is unchanged and the
    original clusters survive verbatim.  Already-binary input is returned
    as is.
    """
    if all(t.degree(i) <= 3 for i in range(t.n)):
        return t
    clusters = [set(c) for c in t.clusters]
    adj: list[set[int]] = [set(t.neighbors(i)) for i in range(t.n)]
    i = 0
    while i < len(clusters):
        if len(adj[i]) <= 3:
            i += 1
            continue
        nbs = sorted(adj[i])
        moved = nbs[2:]
        twin = len(clusters)
        clusters.append(set(clusters[i]))
        adj.append(set(moved) | {i})
        for j in moved:
            adj[j].discard(i)
            adj[j].add(twin)
        adj[i] = set(nbs[:2]) | {twin}
        # the twin may still exceed the degree bound; revisit it later
    edges = {(min(a, b), max(a, b)) for a, nbset in enumerate(adj) for b in nbset}
    return TreeDecomposition(tuple(tuple(sorted(c)) for c in clusters), tuple(sorted(edges)),
                             root=t.root, value_leaves=t.value_leaves)


def ensure_value_leaves(d: InfluenceDiagram, t: TreeDecomposition) -> TreeDecomposition:
    """Give every value variable its own leaf whose cluster equals its parents.

    Unmet requirements are fixed by splitting a covering node i: a twin j
    takes over i's children and a fresh leaf k with cluster Pa(V) hangs off
    i.  Widths and degrees stay within the binary bound.
    """
    for i in range(t.n):
        if t.degree(i) > 3:
            raise ValueError("decomposition must be binary (degree at most three)")
    if not d.value_ids:
        return t

    # orient at a low-degree node so splits never push a degree past three
    orient = min(i for i in range(t.n) if t.degree(i) <= 2) if t.n > 1 else 0
    parent: dict[int, int | None] = {orient: None}
    children: dict[int, list[int]] = {}
    stack = [orient]
    while stack:
        i = stack.pop()
        kids = [j for j in t.neighbors(i) if j != parent[i]]
        children[i] = kids
        for j in kids:
            parent[j] = i
            stack.append(j)

    clusters = [set(c) for c in t.clusters]
    claimed: dict[int, str] = {}
    leaf_of: dict[str, int] = {}
    for v in sorted(d.value_ids):
        pa = set(d.parents(v))
        free = [i for i in children
                if not children[i] and clusters[i] == pa and i not in claimed]
        if free:
            leaf = min(free)
        else:
            covering = [i for i in range(len(clusters)) if pa <= clusters[i]]
            if not covering:
                raise ValueError(f"no cluster covers the parents of value variable {v!r}")
            i = min(covering)
            twin = len(clusters)
            clusters.append(set(clusters[i]))
            leaf = len(clusters)
            clusters.append(set(pa))
            children[twin] = children[i]
            for c in children[twin]:
                parent[c] = twin
            children[leaf] = []
            parent[twin] = i
            parent[leaf] = i
            children[i] = [twin, leaf]
            if i in claimed:
                moved = claimed.pop(i)
                claimed[twin] = moved
                leaf_of[moved] = twin
        claimed[leaf] = v
        leaf_of[v] = leaf

    edges = tuple((min(i, p), max(i, p)) for i, p in parent.items() if p is not None)
    return TreeDecomposition(tuple(tuple(sorted(c)) for c in clusters), edges,
                             root=t.root, value_leaves=tuple(leaf_of.items()))


def root_and_order(t: TreeDecomposition, r: int) -> TreeDecomposition:
    """Root the decomposition at node ``r``."""
    if not 0 <= r < t.n:
        raise ValueError(f"unknown node id {r}")
    return dataclasses.replace(t, root=r)


def default_root(t: TreeDecomposition) -> int:
    """Root choice for the solving pipeline.

    A single value leaf becomes the root; otherwise the smallest node of
    degree at most two that is not a value leaf (such a root keeps every
    node at two children or fewer).
    """
    leaf_nodes = {i for _, i in t.value_leaves}
    if len(leaf_nodes) == 1:
        return next(iter(leaf_nodes))
    candidates = [i for i in range(t.n) if t.degree(i) <= 2 and i not in leaf_nodes]
    if not candidates:
        candidates = [i for i in range(t.n) if t.degree(i) <= 2]
    return min(candidates)
