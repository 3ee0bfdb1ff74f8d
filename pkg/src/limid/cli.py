"""JSON interchange format, random instance generator, and the ``limid``
command-line front-end.

Document layout::

    {
      "variables": [{"id": ..., "kind": ..., "cardinality": ..., "states": [...]}],
      "arcs": [[from, to], ...],
      "cpts": {id: {"parents": [ids], "table": [numbers]}},
      "rewards": {id: {"parents": [ids], "table": [numbers]}},
      "decomposition": {"clusters": [[ids]], "edges": [[i, j]], "root": i}   # optional
    }

Tables are flat with the conditioned variable's index moving fastest, then
the listed parents in order: the entry for child state c under parent
assignment (p1, ..., pk) sits at offset c + |C| * (p1 + |P1| * (p2 + ...)).
Reward tables follow the same pattern without the leading child index.
Canonical documents sort keys, ids and parent lists.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Any

import numpy as np

from .model import (
    CHANCE,
    DECISION,
    VALUE,
    InfluenceDiagram,
    InstanceTooLargeError,
    Strategy,
    Variable,
    brute_force_meu,
    validate_diagram,
)
from .solver import DEFAULT_MAX_SET_SIZE, SolverConfig, SolverResult, solve_full
from .treedecomp import (
    TreeDecomposition,
    binarize,
    build_decomposition,
    default_root,
    ensure_value_leaves,
    root_and_order,
    validate_decomposition,
)
from .reduction import reduce_to_single_value

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RESOURCE = 2
EXIT_USAGE = 64

MAX_SET_SIZE_ENV = "LIMID_MAX_SET_SIZE"


class DocumentError(ValueError):
    """The input document is malformed or fails validation."""


# -- table layout -------------------------------------------------------------

def _parse_table(d_vars: dict[str, Variable], owner: str, spec: Any,
                 lead_card: int | None) -> tuple[tuple[str, ...], np.ndarray]:
    if not isinstance(spec, dict) or "parents" not in spec or "table" not in spec:
        raise DocumentError(f"table for {owner!r} needs 'parents' and 'table' keys")
    listed = [str(p) for p in spec["parents"]]
    if len(listed) != len(set(listed)):
        raise DocumentError(f"table for {owner!r} lists a parent twice")
    for p in listed:
        if p not in d_vars:
            raise DocumentError(f"table for {owner!r} references unknown parent {p!r}")
        if d_vars[p].kind == VALUE:
            raise DocumentError(f"table for {owner!r} uses value variable {p!r} as parent")
    cards = [d_vars[p].cardinality for p in listed]
    lead = () if lead_card is None else (lead_card,)
    shape = lead + tuple(cards)
    flat = np.asarray(spec["table"], dtype=float)
    expected = math.prod(shape)
    if flat.ndim != 1 or flat.size != expected:
        raise DocumentError(f"table for {owner!r} has {flat.size} entries, "
                            f"expected {expected}")
    arr = flat.reshape(shape, order="F")
    # reorder listed parents into canonical sorted order
    perm = sorted(range(len(listed)), key=lambda i: listed[i])
    offset = len(lead)
    axes = tuple(range(offset)) + tuple(offset + i for i in perm)
    return tuple(sorted(listed)), np.ascontiguousarray(arr.transpose(axes))


def _emit_table(parents: tuple[str, ...], arr: np.ndarray) -> dict[str, Any]:
    return {"parents": list(parents),
            "table": [float(x) for x in np.asarray(arr).ravel(order="F")]}


# -- documents ----------------------------------------------------------------

def document_to_diagram(doc: Any) -> tuple[InfluenceDiagram, TreeDecomposition | None]:
    if not isinstance(doc, dict):
        raise DocumentError("document must be a JSON object")
    variables: list[Variable] = []
    for entry in doc.get("variables", []):
        if not isinstance(entry, dict) or "id" not in entry or "kind" not in entry:
            raise DocumentError("every variable needs 'id' and 'kind'")
        card = entry.get("cardinality")
        states = entry.get("states")
        try:
            variables.append(Variable(str(entry["id"]), str(entry["kind"]),
                                      None if card is None else int(card),
                                      None if states is None else tuple(states)))
        except ValueError as exc:
            raise DocumentError(str(exc)) from None
    by_id = {v.id: v for v in variables}
    if len(by_id) != len(variables):
        raise DocumentError("duplicate variable ids")

    arcs = []
    for arc in doc.get("arcs", []):
        if not isinstance(arc, (list, tuple)) or len(arc) != 2:
            raise DocumentError(f"arcs must be [from, to] pairs, got {arc!r}")
        arcs.append((str(arc[0]), str(arc[1])))
    arc_parents: dict[str, tuple[str, ...]] = {v.id: () for v in variables}
    for a, b in arcs:
        if b in by_id and a in by_id and by_id[a].kind != VALUE:
            arc_parents[b] = tuple(sorted(arc_parents[b] + (a,)))

    def check_parents(var: str, declared: tuple[str, ...]) -> None:
        if declared != arc_parents.get(var, ()):
            raise DocumentError(f"table for {var!r} declares parents {list(declared)}, "
                                f"arcs give {list(arc_parents.get(var, ()))}")

    cpts: dict[str, np.ndarray] = {}
    for var, spec in dict(doc.get("cpts", {})).items():
        var = str(var)
        if var not in by_id:
            raise DocumentError(f"cpt for unknown variable {var!r}")
        if by_id[var].kind == VALUE:
            raise DocumentError(f"cpt given for value variable {var!r}")
        parents, cpts[var] = _parse_table(by_id, var, spec, by_id[var].cardinality)
        check_parents(var, parents)
    rewards: dict[str, np.ndarray] = {}
    for var, spec in dict(doc.get("rewards", {})).items():
        var = str(var)
        if var not in by_id:
            raise DocumentError(f"reward table for unknown variable {var!r}")
        parents, rewards[var] = _parse_table(by_id, var, spec, None)
        check_parents(var, parents)

    try:
        diagram = InfluenceDiagram(variables, arcs, cpts, rewards)
    except ValueError as exc:
        raise DocumentError(str(exc)) from None

    decomposition = None
    if "decomposition" in doc:
        spec = doc["decomposition"]
        if not isinstance(spec, dict) or "clusters" not in spec:
            raise DocumentError("decomposition needs a 'clusters' key")
        try:
            decomposition = TreeDecomposition(
                tuple(tuple(str(v) for v in c) for c in spec["clusters"]),
                tuple((int(i), int(j)) for i, j in spec.get("edges", [])),
                root=None if spec.get("root") is None else int(spec["root"]))
        except (TypeError, ValueError) as exc:
            raise DocumentError(f"bad decomposition: {exc}") from None
    return diagram, decomposition


def diagram_to_document(d: InfluenceDiagram,
                        decomposition: TreeDecomposition | None = None) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "variables": [
            {"id": v.id, "kind": v.kind}
            | ({} if v.cardinality is None else {"cardinality": v.cardinality})
            | ({} if v.state_labels is None else {"states": list(v.state_labels)})
            for v in d.variables
        ],
        "arcs": [list(arc) for arc in d.arcs],
        "cpts": {var: _emit_table(d.parents(var), d.cpt(var)) for var in sorted(d.cpts)},
        "rewards": {var: _emit_table(d.parents(var), d.reward(var))
                    for var in sorted(d.rewards)},
    }
    if decomposition is not None:
        block: dict[str, Any] = {
            "clusters": [list(c) for c in decomposition.clusters],
            "edges": [list(e) for e in decomposition.edges],
        }
        if decomposition.root is not None:
            block["root"] = decomposition.root
        doc["decomposition"] = block
    return doc


def parse(text: str, *, validate: bool = True) -> tuple[InfluenceDiagram,
                                                        TreeDecomposition | None]:
    """Parse a document; with ``validate`` the diagram must pass all invariants."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"malformed JSON: {exc}") from None
    diagram, decomposition = document_to_diagram(doc)
    if validate:
        problems = validate_diagram(diagram)
        if problems:
            raise DocumentError("invalid diagram: " + "; ".join(problems))
    return diagram, decomposition


def serialize(d: InfluenceDiagram, decomposition: TreeDecomposition | None = None) -> str:
    return _dump(diagram_to_document(d, decomposition))


def _dump(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _strategy_document(s: Strategy) -> dict[str, Any]:
    return {p.decision: _emit_table(p.parents, p.table) for p in s.policies}


# -- random instances ----------------------------------------------------------

def generate_diagram(n_chance: int, n_decisions: int, card: int, max_parents: int,
                     n_values: int, seed: int, *,
                     decision_max_parents: int | None = None) -> InfluenceDiagram:
    """Random valid diagram, deterministic per seed.

    The DAG follows a random topological order with every later variable
    drawing at most ``max_parents`` parents uniformly among its
    predecessors (decisions capped separately when requested); chance
    columns are symmetric Dirichlet, rewards uniform on [0, 1], and
    cardinalities uniform on {2, ..., card}.
    """
    if card < 2:
        raise ValueError("card must be at least 2")
    if min(n_chance, n_decisions, n_values, max_parents) < 0:
        raise ValueError("counts must be nonnegative")
    rng = np.random.default_rng(seed)
    chance = [f"c{i}" for i in range(n_chance)]
    decisions = [f"d{i}" for i in range(n_decisions)]
    values = [f"v{i}" for i in range(n_values)]
    cd = sorted(chance + decisions)
    cards = {v: int(c) for v, c in zip(cd, rng.integers(2, card + 1, size=len(cd)))}
    kinds = {v: (CHANCE if v in set(chance) else DECISION) for v in cd}

    order = [cd[i] for i in rng.permutation(len(cd))]
    arcs: list[tuple[str, str]] = []
    parents: dict[str, list[str]] = {}
    for pos, var in enumerate(order):
        limit = max_parents
        if decision_max_parents is not None and kinds[var] == DECISION:
            limit = min(limit, decision_max_parents)
        k = int(rng.integers(0, min(limit, pos) + 1))
        picks = sorted(order[int(i)] for i in rng.choice(pos, size=k, replace=False)) if k else []
        parents[var] = picks
        arcs.extend((p, var) for p in picks)
    for var in values:
        k = int(rng.integers(1, min(max_parents, len(cd)) + 1)) if cd and max_parents else 0
        picks = sorted(cd[int(i)] for i in rng.choice(len(cd), size=k, replace=False)) if k else []
        parents[var] = picks
        arcs.extend((p, var) for p in picks)

    variables = [Variable(v, kinds[v], cards[v]) for v in cd]
    variables += [Variable(v, VALUE) for v in values]

    cpts: dict[str, np.ndarray] = {}
    for var in sorted(chance):
        pa_cards = [cards[p] for p in sorted(parents[var])]
        columns = math.prod(pa_cards)
        draws = rng.dirichlet(np.ones(cards[var]), size=columns)
        cpts[var] = draws.T.reshape([cards[var]] + pa_cards)
    rewards: dict[str, np.ndarray] = {}
    for var in sorted(values):
        pa_cards = [cards[p] for p in sorted(parents[var])]
        rewards[var] = rng.uniform(0.0, 1.0, size=math.prod(pa_cards)).reshape(pa_cards)
    return InfluenceDiagram(variables, arcs, cpts, rewards)


# -- command line ---------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_input(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, "r", encoding="utf-8") as handle:
        return handle.read()


def _solver_config(args: argparse.Namespace) -> SolverConfig:
    cap: int | None = DEFAULT_MAX_SET_SIZE
    env = os.environ.get(MAX_SET_SIZE_ENV)
    if env:
        cap = int(env)
    exact = bool(args.exact) or args.epsilon == 0.0
    return SolverConfig(epsilon=0.0 if exact else float(args.epsilon),
                        exact_mode=exact, max_set_size=cap,
                        collect_stats=bool(getattr(args, "stats", False)))


def _result_document(result: SolverResult, with_stats: bool) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "value": float(result.value),
        "alpha": float(result.stats.alpha),
        "m": int(result.stats.m),
        "strategy": _strategy_document(result.strategy),
    }
    if with_stats:
        doc["stats"] = [
            {"node": s.node, "cluster": list(s.cluster), "k_size": s.k_size,
             "a_size": s.a_size, "b_size": s.b_size, "c_size": s.c_size,
             "smallest_positive": s.smallest_positive, "size_bound": s.size_bound}
            for s in result.stats.nodes
        ]
    return doc


def _cmd_solve(args: argparse.Namespace) -> int:
    diagram, decomposition = parse(_read_input(args.file))
    cfg = _solver_config(args)
    result = solve_full(diagram, cfg, decomposition=decomposition)
    sys.stdout.write(_dump(_result_document(result, args.stats)))
    return EXIT_OK


def _cmd_reduce(args: argparse.Namespace) -> int:
    diagram, decomposition = parse(_read_input(args.file))
    if not diagram.value_ids:
        raise DocumentError("diagram has no value variables to merge")
    base = decomposition if decomposition is not None else build_decomposition(diagram)
    if decomposition is not None:
        problems = validate_decomposition(diagram, decomposition)
        if problems:
            raise DocumentError("invalid decomposition: " + "; ".join(problems))
    shaped = ensure_value_leaves(diagram, binarize(base))
    rooted = root_and_order(shaped, default_root(shaped))
    reduced = reduce_to_single_value(diagram, rooted)
    doc = diagram_to_document(reduced.diagram, reduced.decomposition)
    doc["reduction"] = {
        "utility_lower": reduced.bounds[0],
        "utility_upper": reduced.bounds[1],
        "value_count": reduced.q,
        "w_vars": list(reduced.w_vars),
        "o_vars": list(reduced.o_vars),
    }
    sys.stdout.write(_dump(doc))
    return EXIT_OK


def _cmd_oracle(args: argparse.Namespace) -> int:
    diagram, _ = parse(_read_input(args.file))
    value, strategy = brute_force_meu(diagram)
    sys.stdout.write(_dump({"value": value, "strategy": _strategy_document(strategy)}))
    return EXIT_OK


def _cmd_gen(args: argparse.Namespace) -> int:
    diagram = generate_diagram(args.chance, args.decisions, args.card,
                               args.max_parents, args.values, args.seed)
    sys.stdout.write(serialize(diagram))
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    diagram, _ = parse(_read_input(args.file), validate=False)
    problems = validate_diagram(diagram)
    sys.stdout.write(_dump({"violations": problems}))
    return EXIT_OK if not problems else EXIT_INVALID


def _build_parser() -> _Parser:
    parser = _Parser(prog="limid",
                     description="Approximate and exact solving of limited-memory "
                                 "influence diagrams.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="compute a provably good strategy")
    p.add_argument("--epsilon", type=float, default=None,
                   help="approximation factor (MEU <= (1+epsilon) * value)")
    p.add_argument("--exact", action="store_true", help="disable pruning")
    p.add_argument("--stats", action="store_true", help="emit per-node statistics")
    p.add_argument("file", help="diagram document, or - for stdin")
    p.set_defaults(handler=_cmd_solve)

    p = sub.add_parser("reduce", help="merge all value variables into one")
    p.add_argument("file", help="diagram document, or - for stdin")
    p.set_defaults(handler=_cmd_reduce)

    p = sub.add_parser("oracle", help="brute-force maximum expected utility")
    p.add_argument("file", help="diagram document, or - for stdin")
    p.set_defaults(handler=_cmd_oracle)

    p = sub.add_parser("gen", help="generate a random diagram")
    p.add_argument("--chance", type=int, required=True)
    p.add_argument("--decisions", type=int, required=True)
    p.add_argument("--card", type=int, required=True)
    p.add_argument("--max-parents", type=int, required=True)
    p.add_argument("--values", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(handler=_cmd_gen)

    p = sub.add_parser("validate", help="report diagram invariant violations")
    p.add_argument("file", help="diagram document, or - for stdin")
    p.set_defaults(handler=_cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "solve" and not args.exact and args.epsilon is None:
        parser.error("solve needs --epsilon or --exact")
    try:
        return args.handler(args)
    except InstanceTooLargeError as exc:
        print(f"limid: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (DocumentError, ValueError, OSError) as exc:
        print(f"limid: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
