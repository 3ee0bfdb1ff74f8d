"""Dense potential algebra with set-valued operations and covering pruning.

A potential is a nonnegative table over the joint assignments of its scope
(an id-sorted tuple of discrete variables).  Sets of potentials over a
common scope are combined by pairwise multiplication (Cartesian product)
and marginalized member-wise; every member drags along a provenance record
of the pure policies that produced it, so a maximizing member can later be
turned back into a strategy.

``covering`` prunes a set down to one representative per bucket of the
signature y -> floor(log_alpha P(y)), with a distinct sentinel for zero
entries.  Any two members sharing a signature dominate each other within a
pointwise factor alpha, so every pruned member stays alpha-covered by a
survivor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

#: provenance: the set of (decision id, pure policy index) choices baked
#: into a potential
Provenance = frozenset[tuple[str, int]]

EMPTY_PROVENANCE: Provenance = frozenset()

#: signature value standing in for entries that are exactly zero
_ZERO_SENTINEL = np.iinfo(np.int64).min

#: quotients this close to an integer are snapped to it, keeping bucket
#: signatures stable at bucket boundaries
_LOG_SNAP = 1e-12


def provenance_key(prov: Provenance) -> tuple[tuple[str, int], ...]:
    return tuple(sorted(prov))


def merge_provenance(a: Provenance, b: Provenance) -> Provenance | None:
    """Union of two provenances, or None if they pick conflicting policies."""
    merged = a | b
    seen: dict[str, int] = {}
    for dec, idx in merged:
        if seen.setdefault(dec, idx) != idx:
            return None
    return merged


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, order="C")
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Potential:
    """A nonnegative table over the joint assignments of ``scope``."""

    scope: tuple[str, ...]
    cards: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        scope = tuple(self.scope)
        cards = tuple(int(c) for c in self.cards)
        if list(scope) != sorted(scope):
            raise ValueError("potential scope must be sorted by variable id")
        if len(scope) != len(set(scope)):
            raise ValueError("potential scope has duplicate variables")
        values = np.asarray(self.values, dtype=float).reshape(cards)
        if not np.all(np.isfinite(values)):
            raise ValueError("potential has non-finite entries")
        if np.any(values < 0.0):
            raise ValueError("potential has negative entries")
        object.__setattr__(self, "scope", scope)
        object.__setattr__(self, "cards", cards)
        object.__setattr__(self, "values", _freeze(values))

    def card_of(self, var: str) -> int:
        return self.cards[self.scope.index(var)]


def unit_potential(cards: Mapping[str, int]) -> Potential:
    """The all-ones potential; an empty scope yields the scalar 1."""
    scope = tuple(sorted(cards))
    shape = tuple(cards[v] for v in scope)
    return Potential(scope, shape, np.ones(shape))


def _union_scope(*pots: Potential) -> tuple[tuple[str, ...], tuple[int, ...]]:
    cards: dict[str, int] = {}
    for p in pots:
        for var, card in zip(p.scope, p.cards):
            if cards.setdefault(var, card) != card:
                raise ValueError(f"inconsistent cardinality for {var!r}")
    scope = tuple(sorted(cards))
    return scope, tuple(cards[v] for v in scope)


def _aligned(p: Potential, scope: tuple[str, ...], cards: tuple[int, ...]) -> np.ndarray:
    """View of ``p.values`` broadcastable over the union scope."""
    shape = tuple(c if v in p.scope else 1 for v, c in zip(scope, cards))
    return p.values.reshape(shape)


def multiply(p: Potential, q: Potential) -> Potential:
    """Pointwise product over the union of the scopes."""
    scope, cards = _union_scope(p, q)
    return Potential(scope, cards, _aligned(p, scope, cards) * _aligned(q, scope, cards))


def sum_out(p: Potential, zs: Iterable[str]) -> Potential:
    """Marginalize the variables ``zs`` out of ``p``."""
    zs = set(zs)
    if not zs <= set(p.scope):
        raise ValueError(f"cannot sum out {sorted(zs - set(p.scope))}: not in scope")
    if not zs:
        return p
    axes = tuple(i for i, v in enumerate(p.scope) if v in zs)
    keep = tuple(i for i, v in enumerate(p.scope) if v not in zs)
    scope = tuple(p.scope[i] for i in keep)
    cards = tuple(p.cards[i] for i in keep)
    return Potential(scope, cards, p.values.sum(axis=axes))


@dataclass(frozen=True, eq=False)
class PotentialSet:
    """A set of potentials with provenance over one common scope.

    Members are stored stacked (leading member axis) for vectorized set
    operations; exact duplicates in both values and provenance are dropped,
    first occurrence kept.
    """

    scope: tuple[str, ...]
    cards: tuple[int, ...]
    values: np.ndarray  # shape (n, *cards)
    provenances: tuple[Provenance, ...]

    def __post_init__(self) -> None:
        scope = tuple(self.scope)
        cards = tuple(int(c) for c in self.cards)
        if list(scope) != sorted(scope):
            raise ValueError("potential set scope must be sorted by variable id")
        values = np.ascontiguousarray(self.values, dtype=float)
        values = values.reshape((values.shape[0],) + cards)
        provs = tuple(self.provenances)
        if len(provs) != values.shape[0]:
            raise ValueError("one provenance per member required")
        if not np.all(np.isfinite(values)) or np.any(values < 0.0):
            raise ValueError("potential set entries must be nonnegative and finite")

        seen: set[tuple[bytes, tuple[tuple[str, int], ...]]] = set()
        keep: list[int] = []
        for i in range(values.shape[0]):
            key = (values[i].tobytes(), provenance_key(provs[i]))
            if key not in seen:
                seen.add(key)
                keep.append(i)
        if len(keep) != values.shape[0]:
            values = values[keep]
            provs = tuple(provs[i] for i in keep)
        object.__setattr__(self, "scope", scope)
        object.__setattr__(self, "cards", cards)
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "provenances", provs)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def members(self) -> tuple[tuple[Potential, Provenance], ...]:
        return tuple(
            (Potential(self.scope, self.cards, self.values[i]), self.provenances[i])
            for i in range(len(self))
        )

    @classmethod
    def singleton(cls, p: Potential, prov: Provenance = EMPTY_PROVENANCE) -> "PotentialSet":
        return cls(p.scope, p.cards, p.values[np.newaxis, ...], (prov,))

    @classmethod
    def from_members(cls, members: Iterable[tuple[Potential, Provenance]]) -> "PotentialSet":
        members = list(members)
        if not members:
            raise ValueError("a potential set needs at least one member")
        scope, cards = members[0][0].scope, members[0][0].cards
        for p, _ in members:
            if p.scope != scope or p.cards != cards:
                raise ValueError("all members must share one scope")
        values = np.stack([p.values for p, _ in members])
        return cls(scope, cards, values, tuple(prov for _, prov in members))


def _combine_pair(a: PotentialSet, b: PotentialSet, on_conflict: str) -> PotentialSet:
    pa = Potential(a.scope, a.cards, np.ones(a.cards))
    pb = Potential(b.scope, b.cards, np.ones(b.cards))
    scope, cards = _union_scope(pa, pb)
    shape_a = tuple(c if v in a.scope else 1 for v, c in zip(scope, cards))
    shape_b = tuple(c if v in b.scope else 1 for v, c in zip(scope, cards))
    na, nb = len(a), len(b)
    lhs = a.values.reshape((na, 1) + shape_a)
    rhs = b.values.reshape((1, nb) + shape_b)
    values = (lhs * rhs).reshape((na * nb,) + cards)

    provs: list[Provenance] = []
    keep: list[int] = []
    for i in range(na):
        for j in range(nb):
            merged = merge_provenance(a.provenances[i], b.provenances[j])
            if merged is None:
                if on_conflict == "error":
                    raise RuntimeError("conflicting policy choices met during combination")
                continue
            keep.append(i * nb + j)
            provs.append(merged)
    if len(keep) != na * nb:
        values = values[keep]
    return PotentialSet(scope, cards, values, tuple(provs))


def combine_sets(sets: Sequence[PotentialSet], *, on_conflict: str = "skip") -> PotentialSet:
    """Cartesian-product multiplication of potential sets.

    Member order is the lexicographic product order of the input members.
    Provenances are unioned; pairs whose provenances pick different pure
    policies for the same decision are skipped (or raise, with
    ``on_conflict="error"``).
    """
    if on_conflict not in ("skip", "error"):
        raise ValueError(f"unknown conflict handling {on_conflict!r}")
    if not sets:
        return PotentialSet((), (), np.ones((1,)), (EMPTY_PROVENANCE,))
    out = sets[0]
    for nxt in sets[1:]:
        out = _combine_pair(out, nxt, on_conflict)
    return out


def sum_out_set(k: PotentialSet, zs: Iterable[str]) -> PotentialSet:
    """Marginalize ``zs`` out of every member; provenance is carried through."""
    zs = set(zs)
    if not zs <= set(k.scope):
        raise ValueError(f"cannot sum out {sorted(zs - set(k.scope))}: not in scope")
    if not zs:
        return k
    axes = tuple(1 + i for i, v in enumerate(k.scope) if v in zs)
    keep = tuple(i for i, v in enumerate(k.scope) if v not in zs)
    scope = tuple(k.scope[i] for i in keep)
    cards = tuple(k.cards[i] for i in keep)
    return PotentialSet(scope, cards, k.values.sum(axis=axes), k.provenances)


def floor_log(value: float, alpha: float) -> int:
    """floor(log_alpha(value)) with boundary snapping; ``value`` must be > 0."""
    q = math.log(value) / math.log(alpha)
    r = round(q)
    return int(r) if abs(q - r) <= _LOG_SNAP else int(math.floor(q))


@dataclass(frozen=True)
class CoveringStats:
    """Bookkeeping for a single covering call."""

    input_size: int
    output_size: int
    smallest_positive: float | None
    assignments: int
    size_bound: int | None
    alpha: float
    had_zero: bool


def covering(k: PotentialSet, alpha: float) -> tuple[PotentialSet, CoveringStats]:
    """Prune ``k`` to a subset covering it within a pointwise factor ``alpha``.

    Members are bucketed on the integer signature floor(log_alpha value)
    per assignment (zero entries get their own sentinel); the first member
    of each bucket survives.  The returned stats carry the guaranteed cap
    ``(1 - floor(log_alpha t)) ** assignments`` on the number of survivors,
    valid whenever all entries are positive and at most one.
    """
    if not alpha > 1.0:
        raise ValueError("alpha must be greater than 1")
    n = len(k)
    eta = math.prod(k.cards)
    if n == 0:
        return k, CoveringStats(0, 0, None, eta, None, alpha, False)
    flat = k.values.reshape(n, eta)
    positive = flat > 0.0
    had_zero = bool(np.any(~positive))

    sig = np.full(flat.shape, _ZERO_SENTINEL, dtype=np.int64)
    if np.any(positive):
        q = np.log(flat[positive]) / math.log(alpha)
        r = np.rint(q)
        sig[positive] = np.where(np.abs(q - r) <= _LOG_SNAP, r, np.floor(q)).astype(np.int64)

    keep: list[int] = []
    seen: set[bytes] = set()
    for i in range(n):
        key = sig[i].tobytes()
        if key not in seen:
            seen.add(key)
            keep.append(i)

    smallest = float(flat[positive].min()) if np.any(positive) else None
    bound = None if smallest is None else (1 - floor_log(smallest, alpha)) ** eta
    pruned = PotentialSet(k.scope, k.cards, k.values[keep],
                          tuple(k.provenances[i] for i in keep))
    stats = CoveringStats(n, len(pruned), smallest, eta, bound, alpha, had_zero)
    return pruned, stats


def is_covering(k: PotentialSet, kprime: PotentialSet, alpha: float,
                slack: float = 1e-12) -> bool:
    """Exhaustively check that every member of ``k`` is pointwise dominated
    by ``alpha`` times some member of ``kprime``."""
    if len(k) == 0:
        return True
    eta = math.prod(k.cards)
    covered = k.values.reshape(len(k), 1, eta)
    covers = kprime.values.reshape(1, len(kprime), eta)
    ok = np.all(covered <= alpha * covers * (1.0 + slack), axis=2)
    return bool(ok.any(axis=1).all())


#: callback signature observing each covering call: (before, after, alpha, stats)
CoveringObserver = Callable[[PotentialSet, PotentialSet, float, CoveringStats], None]
