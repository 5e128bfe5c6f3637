"""Undirected graphs, DAGs with a fixed ordering, and edge reports.

Vertices are positional (0-based column indices) in memory and 1-based
in every serialized form.
"""

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import AcyclicityError, InvalidArgumentError


def _default_labels(p):
    return tuple(str(j + 1) for j in range(p))


def _normalize_edge(i, j):
    i, j = int(i), int(j)
    if i == j:
        raise InvalidArgumentError(f"self-loop on vertex {i} is not allowed")
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class UndirectedGraph:
    p: int
    edges: frozenset = frozenset()
    labels: tuple = ()

    def __post_init__(self):
        edges = frozenset(_normalize_edge(i, j) for i, j in self.edges)
        for i, j in edges:
            if not (0 <= i < self.p and 0 <= j < self.p):
                raise InvalidArgumentError(f"edge ({i}, {j}) outside vertex range 0..{self.p - 1}")
        labels = tuple(self.labels) if self.labels else _default_labels(self.p)
        if len(labels) != self.p:
            raise InvalidArgumentError("labels must have one entry per vertex")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_adjacency(cls, adj, labels=(), tol=0.0):
        """Graph with an edge wherever ``|adj[i, j]| > tol`` off the diagonal."""
        p = len(adj)
        edges = [(i, j) for i in range(p) for j in range(i + 1, p) if abs(adj[i][j]) > tol]
        return cls(p, frozenset(edges), tuple(labels))

    def has_edge(self, i, j):
        return _normalize_edge(i, j) in self.edges

    def neighbours(self, j):
        return {b if a == j else a for a, b in self.edges if j in (a, b)}

    def sorted_edges(self):
        return sorted(self.edges)


@dataclass(frozen=True)
class Dag:
    """A DAG whose parents all precede their child in ``ordering``."""

    p: int
    ordering: tuple
    parents: tuple
    labels: tuple = ()

    @property
    def edges(self):
        return frozenset((i, j) for j in range(self.p) for i in self.parents[j])

    def sorted_edges(self):
        return sorted(self.edges)

    def predecessors(self, j):
        pos = self.ordering.index(j)
        return tuple(self.ordering[:pos])


def dag_validate(ordering, parent_sets, labels=()) -> Dag:
    """Check ``ordering`` and ``parent_sets`` and build a :class:`Dag`.

    ``parent_sets`` is either a sequence indexed by vertex or a mapping
    from vertex to its parents.
    """
    ordering = tuple(int(v) for v in ordering)
    p = len(ordering)
    if sorted(ordering) != list(range(p)):
        raise InvalidArgumentError(f"ordering {ordering} is not a permutation of 0..{p - 1}")
    if isinstance(parent_sets, dict):
        parent_sets = [parent_sets.get(j, ()) for j in range(p)]
    if len(parent_sets) != p:
        raise InvalidArgumentError("need one parent set per vertex")
    position = {v: k for k, v in enumerate(ordering)}
    parents = []
    for j, pa in enumerate(parent_sets):
        pa = [int(i) for i in pa]
        if len(set(pa)) != len(pa):
            raise InvalidArgumentError(f"duplicate parents for vertex {j}")
        for i in pa:
            if i not in position:
                raise InvalidArgumentError(f"parent {i} of vertex {j} does not exist")
            if position[i] >= position[j]:
                raise AcyclicityError(f"parent {i} does not precede child {j} in the ordering")
        parents.append(tuple(sorted(pa, key=position.get)))
    labels = tuple(labels) if labels else _default_labels(p)
    if len(labels) != p:
        raise InvalidArgumentError("labels must have one entry per vertex")
    return Dag(p, ordering, tuple(parents), labels)


def separates(g: UndirectedGraph, A: Iterable[int], C: Iterable[int], S: Iterable[int] = ()) -> bool:
    """True iff every path from ``A`` to ``C`` in ``g`` passes through ``S``."""
    A, C, S = set(A), set(C), set(S)
    if not A or not C:
        raise InvalidArgumentError("A and C must be non-empty")
    if A & C or A & S or C & S:
        raise InvalidArgumentError("A, C and S must be pairwise disjoint")
    adj = {v: set() for v in range(g.p)}
    for i, j in g.edges:
        adj[i].add(j)
        adj[j].add(i)
    seen = set(A)
    queue = deque(A)
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w in S or w in seen:
                continue
            if w in C:
                return False
            seen.add(w)
            queue.append(w)
    return True


def markov_blanket(g: UndirectedGraph, j: int) -> set:
    if not 0 <= j < g.p:
        raise InvalidArgumentError(f"vertex {j} out of range")
    return g.neighbours(j)


@dataclass
class EdgeRecord:
    i: int
    j: int
    statistic: float
    p_value: Optional[float] = None
    adjusted_p: Optional[float] = None
    selected: bool = False
    stability: Optional[float] = None
    weight: Optional[float] = None

    def as_dict(self):
        return {
            "i": self.i + 1,
            "j": self.j + 1,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "adjusted_p": self.adjusted_p,
            "selected": self.selected,
            "stability": self.stability,
            "weight": self.weight,
        }


@dataclass
class EdgeReport:
    records: list = field(default_factory=list)

    def selected(self):
        return [(r.i, r.j) for r in self.records if r.selected]

    def get(self, i, j):
        for r in self.records:
            if (r.i, r.j) == (i, j):
                return r
        raise KeyError((i, j))

    def as_list(self):
        return [r.as_dict() for r in self.records]

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def graph_to_dict(g, report: Optional[EdgeReport] = None) -> dict:
    """Graph JSON document; edge annotations are taken from ``report``."""
    directed = isinstance(g, Dag)
    lookup = {}
    if report is not None:
        lookup = {(r.i, r.j): r for r in report.records}
    edges = []
    for i, j in sorted(g.edges):
        rec = lookup.get((i, j))
        if rec is None and not directed:
            rec = lookup.get((j, i))
        edges.append({
            "i": i + 1,
            "j": j + 1,
            "weight": None if rec is None else rec.weight,
            "p_value": None if rec is None else rec.p_value,
            "stability": None if rec is None else rec.stability,
        })
    doc = {"p": g.p, "labels": list(g.labels), "directed": directed, "edges": edges}
    if directed:
        doc["ordering"] = [v + 1 for v in g.ordering]
    return doc


def emit_graph(g, format: str = "json", report: Optional[EdgeReport] = None) -> str:
    """Serialize a graph deterministically as JSON or Graphviz DOT."""
    if format == "json":
        return json.dumps(graph_to_dict(g, report), sort_keys=True)
    if format != "dot":
        raise InvalidArgumentError(f"unknown graph format {format!r}")
    directed = isinstance(g, Dag)
    arrow = "->" if directed else "--"
    lines = ["digraph G {" if directed else "graph G {"]
    for v in range(g.p):
        lines.append(f'  {v + 1} [label={json.dumps(g.labels[v])}];')
    for i, j in sorted(g.edges):
        lines.append(f"  {i + 1} {arrow} {j + 1};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def parse_graph(text: str):
    """Inverse of the JSON form of :func:`emit_graph`."""
    doc = json.loads(text)
    p = int(doc["p"])
    labels = tuple(doc.get("labels") or ())
    pairs = [(e["i"] - 1, e["j"] - 1) for e in doc["edges"]]
    if not doc.get("directed", False):
        return UndirectedGraph(p, frozenset(pairs), labels)
    ordering = [v - 1 for v in doc.get("ordering", range(1, p + 1))]
    parent_sets = [[] for _ in range(p)]
    for i, j in pairs:
        parent_sets[j].append(i)
    return dag_validate(ordering, parent_sets, labels)
