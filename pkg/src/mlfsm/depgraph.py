"""Inter-clause dependency graph: cycle detection, topo order, DOT output."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import MlfsmError
from .model import AutomatonCompleted, ClauseAutomaton, ContractSpec, MalformedToken, parse_condition_token


class CycleError(MlfsmError):
    """The dependency graph has a cycle; carries one witness as an id list."""

    def __init__(self, witness: tuple[str, ...]):
        super().__init__("dependency cycle: " + " -> ".join(witness))
        self.witness = witness


class UnknownFocus(MlfsmError):
    """The requested focus clause is not a node of the graph."""


@dataclass(frozen=True)
class DependencyGraph:
    """Nodes are automaton ids in declaration order.

    An edge (x, y) means clause x carries an AutomatonCompleted(y) condition,
    i.e. x depends on y.
    """

    nodes: tuple[str, ...]
    edges: frozenset[tuple[str, str]]

    def __post_init__(self):
        node_set = set(self.nodes)
        if len(node_set) != len(self.nodes):
            raise MlfsmError("graph nodes must be unique")
        for dependent, dependency in self.edges:
            if dependent == dependency:
                raise MlfsmError(f"self-dependency on {dependent!r}")
            if dependent not in node_set or dependency not in node_set:
                raise MlfsmError(f"edge ({dependent!r}, {dependency!r}) references an unknown node")

    def dependencies_of(self, node: str) -> tuple[str, ...]:
        """Dependencies of a node, ordered by node declaration order."""
        wanted = {dep for x, dep in self.edges if x == node}
        return tuple(n for n in self.nodes if n in wanted)

    def dependents_of(self, node: str) -> tuple[str, ...]:
        wanted = {x for x, dep in self.edges if dep == node}
        return tuple(n for n in self.nodes if n in wanted)


def clause_dependencies(clause: ClauseAutomaton) -> tuple[str, ...]:
    """Automaton ids this clause's guards reference, in first-use order.

    Malformed tokens and self-references are skipped; the validator reports
    them (V4/V5) before any consumer relies on this graph.
    """
    seen: dict[str, None] = {}
    for transition in clause.transitions:
        for token in transition.conditions:
            try:
                ref = parse_condition_token(token)
            except MalformedToken:
                continue
            if isinstance(ref, AutomatonCompleted) and ref.automaton != clause.id:
                seen.setdefault(ref.automaton, None)
    return tuple(seen)


def build_graph(spec: ContractSpec) -> DependencyGraph:
    """Dependency graph over the spec's clauses; duplicate guards collapse."""
    nodes = spec.clause_ids()
    node_set = set(nodes)
    edges: set[tuple[str, str]] = set()
    for clause in spec.clauses:
        for dependency in clause_dependencies(clause):
            if dependency in node_set:
                edges.add((clause.id, dependency))
    return DependencyGraph(nodes=nodes, edges=frozenset(edges))


def topo_order(graph: DependencyGraph) -> list[str]:
    """Dependencies-first order; declaration order breaks ties (Kahn's method
    with an ordered frontier). Raises CycleError with a witness cycle."""
    remaining_deps: dict[str, set[str]] = {n: set() for n in graph.nodes}
    for dependent, dependency in graph.edges:
        remaining_deps[dependent].add(dependency)

    order: list[str] = []
    emitted: set[str] = set()
    while len(order) < len(graph.nodes):
        ready = [n for n in graph.nodes if n not in emitted and not (remaining_deps[n] - emitted)]
        if not ready:
            raise CycleError(_find_cycle(graph, emitted))
        node = ready[0]
        order.append(node)
        emitted.add(node)
    return order


def _find_cycle(graph: DependencyGraph, emitted: set[str]) -> tuple[str, ...]:
    # Walk dependency links among the stuck nodes; every stuck node has at
    # least one unemitted dependency, so the walk must revisit a node.
    stuck = [n for n in graph.nodes if n not in emitted]
    deps: dict[str, list[str]] = {
        n: [d for d in graph.dependencies_of(n) if d not in emitted] for n in stuck
    }
    node = stuck[0]
    path: list[str] = []
    positions: dict[str, int] = {}
    while node not in positions:
        positions[node] = len(path)
        path.append(node)
        node = deps[node][0]
    cycle = path[positions[node]:] + [node]
    return tuple(cycle)


# ---------------------------------------------------------------------------
# DOT rendering
# ---------------------------------------------------------------------------


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(graph: DependencyGraph, spec: ContractSpec, focus: str | None = None) -> str:
    """Graphviz digraph of the clause dependencies.

    Each clause is one node labeled with its name; edges are drawn
    dependency -> dependent so arrows read "enables". With a focus clause,
    that clause expands into a cluster of its states with labeled transition
    edges, and dependency edges attach to its states via lhead/ltail.
    """
    if focus is not None and focus not in graph.nodes:
        raise UnknownFocus(f"unknown focus clause {focus!r}")

    lines: list[str] = [f"digraph {_quote(spec.name)} {{"]
    lines.append("    rankdir=LR;")
    if focus is not None:
        lines.append("    compound=true;")
    lines.append("")

    focus_clause = spec.clause_by_id(focus) if focus is not None else None
    for clause in spec.clauses:
        if focus_clause is not None and clause.id == focus_clause.id:
            lines.extend(_cluster_lines(clause))
        else:
            lines.append(f"    {clause.id} [label={_quote(clause.name)}, shape=box];")
    lines.append("")

    for dependent, dependency in sorted(graph.edges, key=lambda e: (spec.index_of(e[1]), spec.index_of(e[0]))):
        attrs: list[str] = []
        tail, head = dependency, dependent
        if focus_clause is not None and dependency == focus_clause.id:
            tail = _state_node(focus_clause.id, focus_clause.initial)
            attrs.append(f"ltail={_quote('cluster_' + focus_clause.id)}")
        if focus_clause is not None and dependent == focus_clause.id:
            head = _state_node(focus_clause.id, focus_clause.initial)
            attrs.append(f"lhead={_quote('cluster_' + focus_clause.id)}")
        suffix = f" [{', '.join(attrs)}]" if attrs else ""
        lines.append(f"    {tail} -> {head}{suffix};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _state_node(clause_id: str, state: str) -> str:
    sanitized = "".join(c if c.isalnum() else "_" for c in state)
    return f"{clause_id}__{sanitized}"


def _cluster_lines(clause: ClauseAutomaton) -> list[str]:
    lines = [f"    subgraph {_quote('cluster_' + clause.id)} {{"]
    lines.append(f"        label={_quote(clause.name)};")
    for state in clause.states:
        attrs = [f"label={_quote(state)}"]
        if state == clause.initial:
            attrs.append("style=bold")
        if state in clause.finals:
            attrs.append("peripheries=2")
        lines.append(f"        {_state_node(clause.id, state)} [{', '.join(attrs)}];")
    for transition in clause.transitions:
        # Triggers and condition tokens are identifier-like, so the label can
        # embed a literal \n line break without further escaping.
        label = transition.trigger
        if transition.conditions:
            label += "\\n[" + " && ".join(transition.conditions) + "]"
        lines.append(
            f"        {_state_node(clause.id, transition.source)} -> "
            f'{_state_node(clause.id, transition.destination)} [label="{label}"];'
        )
    lines.append("    }")
    return lines
