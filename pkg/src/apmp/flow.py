"""Graph-cuts oracle: Edmonds-Karp max-flow on the energy's s-t network.

Node ``i`` stands for variable ``x_i``. Capacities start as
``s -> i: theta_i^1``, ``i -> t: theta_i^0``, ``i -> j: theta_ij^01`` and
``j -> i: theta_ij^10``. After max-flow, the residual energy
``(r_it, r_si)`` / ``[[0, r_ij], [r_ji, 0]]`` plus the pushed flow is a
reparameterization of the original energy, so nodes still reachable from
``s`` prefer label 0 and nodes that still reach ``t`` prefer label 1.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .energy import Energy, ReparamDelta
from .errors import InsufficientCapacity, IterationCap, NotConverged

SOURCE = "s"
SINK = "t"


@dataclass
class Residuals:
    """Residual capacities: ``source[i] = r_si``, ``sink[i] = r_it``,
    ``edge[k] = (r_ij, r_ji)`` for edge ``k = (i, j)``."""

    source: np.ndarray
    sink: np.ndarray
    edge: np.ndarray

    def copy(self):
        return Residuals(self.source.copy(), self.sink.copy(), self.edge.copy())

    def __eq__(self, other):
        if not isinstance(other, Residuals):
            return NotImplemented
        return (
            np.array_equal(self.source, other.source)
            and np.array_equal(self.sink, other.sink)
            and np.array_equal(self.edge, other.edge)
        )

    __hash__ = None


@dataclass(frozen=True)
class AugmentingPath:
    """Shortest s-t path through variables ``vars`` with bottleneck ``bottleneck``.

    ``steps[k] = (edge_index, direction)`` for the hop ``vars[k] -> vars[k+1]``;
    direction 0 follows the stored ``i -> j`` orientation, 1 goes ``j -> i``.
    """

    vars: tuple
    steps: tuple
    bottleneck: float

    @property
    def nodes(self):
        return (SOURCE, *self.vars, SINK)

    @property
    def start(self) -> int:
        return self.vars[0]

    @property
    def end(self) -> int:
        return self.vars[-1]

    def with_bottleneck(self, f):
        return AugmentingPath(self.vars, self.steps, f)


@dataclass
class FlowGraph:
    origin: Energy
    residual: Residuals
    flow_pushed: float = 0.0

    @property
    def num_vars(self):
        return self.origin.num_vars


@dataclass(frozen=True)
class CutDecode:
    labels: np.ndarray
    component_of: np.ndarray
    side_of: tuple


@dataclass
class MaxflowResult:
    decode: CutDecode
    value: float
    augmentations: list = field(default_factory=list)

    @property
    def labels(self):
        return self.decode.labels

    @property
    def flow(self):
        return sum(f for _, f in self.augmentations)


def augmentation_cap(e: Energy) -> int:
    """Edmonds-Karp style bound on augmentations, counting terminal edges."""
    return e.num_vars * (e.num_edges + 2 * e.num_vars)


def build_flow_graph(e: Energy) -> FlowGraph:
    res = Residuals(
        source=e.unaries[:, 1].copy(),
        sink=e.unaries[:, 0].copy(),
        edge=e.pairwise.copy(),
    )
    return FlowGraph(e, res, 0.0)


def _capacity(res, k, direction):
    return res.edge[k, direction]


def shortest_augmenting_path(e: Energy, res: Residuals):
    """BFS for a fewest-hop positive-capacity s-t path.

    Expansion order is deterministic: source arcs by variable index, then
    for each dequeued variable its sink arc first, then neighbors by index.
    Returns ``None`` when ``t`` is unreachable.
    """
    n = e.num_vars
    parent = [None] * n
    queue = deque()
    for i in range(n):
        if res.source[i] > 0:
            parent[i] = (-1, -1, -1)
            queue.append(i)
    while queue:
        u = queue.popleft()
        if res.sink[u] > 0:
            return _trace_back(u, parent, res)
        for v, k, side in e.incidence[u]:
            if parent[v] is None and res.edge[k, side] > 0:
                parent[v] = (u, k, side)
                queue.append(v)
    return None


def _trace_back(last, parent, res):
    vars_, steps = [last], []
    f = res.sink[last]
    v = last
    while parent[v][0] != -1:
        u, k, side = parent[v]
        steps.append((k, side))
        f = min(f, res.edge[k, side])
        vars_.append(u)
        v = u
    f = min(f, res.source[v])
    vars_.reverse()
    steps.reverse()
    return AugmentingPath(tuple(vars_), tuple(steps), float(f))


def find_augmenting_path(g: FlowGraph):
    return shortest_augmenting_path(g.origin, g.residual)


def graph_cut_delta(e: Energy, path: AugmentingPath, f: float) -> ReparamDelta:
    """Potential-space change made by pushing ``f`` units along ``path``."""
    d = ReparamDelta.zeros(e)
    d.d_unary[path.start, 1] -= f
    d.d_unary[path.end, 0] -= f
    for k, direction in path.steps:
        if direction == 0:
            d.d_pairwise[k, 0, 1] -= f
            d.d_pairwise[k, 1, 0] += f
        else:
            d.d_pairwise[k, 1, 0] -= f
            d.d_pairwise[k, 0, 1] += f
    return ReparamDelta(d.d_unary, d.d_pairwise, float(f))


def push_flow(g: FlowGraph, p: AugmentingPath) -> ReparamDelta:
    f = p.bottleneck
    if not f > 0:
        raise InsufficientCapacity(f"bottleneck must be positive, got {f}")
    res = g.residual
    if res.source[p.start] < f:
        raise InsufficientCapacity(f"s -> {p.start} has {res.source[p.start]} < {f}")
    if res.sink[p.end] < f:
        raise InsufficientCapacity(f"{p.end} -> t has {res.sink[p.end]} < {f}")
    for (k, direction), u in zip(p.steps, p.vars):
        if res.edge[k, direction] < f:
            raise InsufficientCapacity(
                f"edge {tuple(g.origin.edges[k])} leaving {u} has {res.edge[k, direction]} < {f}"
            )
    res.source[p.start] -= f
    res.sink[p.end] -= f
    for k, direction in p.steps:
        res.edge[k, direction] -= f
        res.edge[k, 1 - direction] += f
    g.flow_pushed += f
    return graph_cut_delta(g.origin, p, f)


def _grow(e, res, seeds, forward):
    """Union of variables reachable from ``seeds`` over positive residual arcs.

    ``forward=True`` follows arcs out of a node (source side); otherwise it
    follows arcs into a node (sink side).
    """
    reached = set(seeds)
    queue = deque(seeds)
    while queue:
        u = queue.popleft()
        for v, k, side in e.incidence[u]:
            cap = res.edge[k, side] if forward else res.edge[k, 1 - side]
            if v not in reached and cap > 0:
                reached.add(v)
                queue.append(v)
    return reached


def side_components(e: Energy, res: Residuals):
    """Partition of terminal-connected variables into residual components.

    Each seed (variable with a positive terminal arc) grows its reachable
    set; sets that touch are merged. Returns ``(component_of, side_of)``
    with ``-1`` / ``"free"`` for variables connected to neither terminal.
    """
    n = e.num_vars
    owner = list(range(n))

    def find(a):
        while owner[a] != a:
            owner[a] = owner[owner[a]]
            a = owner[a]
        return a

    side = ["free"] * n
    for name, seeds, forward in (
        ("source", [i for i in range(n) if res.source[i] > 0], True),
        ("sink", [i for i in range(n) if res.sink[i] > 0], False),
    ):
        for s in seeds:
            for v in _grow(e, res, [s], forward):
                if side[v] not in ("free", name):
                    raise NotConverged(f"variable {v} is connected to both terminals")
                side[v] = name
                owner[find(v)] = find(s)
    roots = {}
    component = np.full(n, -1, dtype=np.int64)
    for v in range(n):
        if side[v] != "free":
            component[v] = roots.setdefault(find(v), len(roots))
    return component, tuple(side)


def connected_components(g: FlowGraph) -> CutDecode:
    if find_augmenting_path(g) is not None:
        raise NotConverged("an augmenting path still exists")
    component, side = side_components(g.origin, g.residual)
    labels = np.array([1 if s == "sink" else 0 for s in side], dtype=np.int64)
    return CutDecode(labels, component, side)


def maxflow_solve(e: Energy) -> MaxflowResult:
    g = build_flow_graph(e)
    cap = augmentation_cap(e)
    augmentations = []
    while (p := find_augmenting_path(g)) is not None:
        if len(augmentations) >= cap:
            raise IterationCap(f"more than {cap} augmentations")
        push_flow(g, p)
        augmentations.append((p, p.bottleneck))
    decode = connected_components(g)
    return MaxflowResult(decode, e.theta_const + g.flow_pushed, augmentations)
