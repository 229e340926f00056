"""DIMACS max-flow export and import for energies.

Variables ``0..n-1`` become nodes ``1..n``; the source is ``n+1`` and the
sink ``n+2``. Arcs carry the initial capacities of the energy's s-t
network. The energy's constant has no place in the format and travels in a
``c theta_const`` comment line.
"""
from __future__ import annotations

import numpy as np

from .energy import Energy, RawEnergy, canonicalize
from .errors import InvalidEnergy


def _num(v):
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def to_dimacs(e: Energy) -> str:
    n = e.num_vars
    s, t = n + 1, n + 2
    arcs = []
    for i, (u0, u1) in enumerate(e.unaries):
        if u1 > 0:
            arcs.append((s, i + 1, u1))
        if u0 > 0:
            arcs.append((i + 1, t, u0))
    for (i, j), (p01, p10) in zip(e.edges.tolist(), e.pairwise):
        if p01 > 0:
            arcs.append((i + 1, j + 1, p01))
        if p10 > 0:
            arcs.append((j + 1, i + 1, p10))
    lines = [f"c theta_const {_num(e.theta_const)}", f"p max {n + 2} {len(arcs)}", f"n {s} s", f"n {t} t"]
    lines += [f"a {u} {v} {_num(c)}" for u, v, c in arcs]
    return "\n".join(lines) + "\n"


def parse_dimacs(text: str) -> RawEnergy:
    """Parse a DIMACS max-flow problem into an (uncanonicalized) energy.

    Parallel arcs are summed. Arcs into the source, out of the sink, or
    directly from source to sink are rejected.
    """
    num_nodes = s = t = None
    const = 0.0
    arcs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split()
        if not parts:
            continue
        try:
            if parts[0] == "c":
                if len(parts) == 3 and parts[1] == "theta_const":
                    const = float(parts[2])
            elif parts[0] == "p":
                if len(parts) != 4 or parts[1] != "max":
                    raise InvalidEnergy(f"line {lineno}: expected 'p max NODES ARCS'")
                num_nodes = int(parts[2])
            elif parts[0] == "n":
                node, kind = int(parts[1]), parts[2]
                if kind == "s":
                    s = node
                elif kind == "t":
                    t = node
                else:
                    raise InvalidEnergy(f"line {lineno}: node designator must be s or t")
            elif parts[0] == "a":
                arcs.append((int(parts[1]), int(parts[2]), float(parts[3]), lineno))
            else:
                raise InvalidEnergy(f"line {lineno}: unknown record type {parts[0]!r}")
        except InvalidEnergy:
            raise
        except (IndexError, ValueError) as exc:
            raise InvalidEnergy(f"line {lineno}: {exc}") from exc
    if num_nodes is None or s is None or t is None:
        raise InvalidEnergy("missing problem line or terminal designators")
    if s == t:
        raise InvalidEnergy("source and sink must differ")

    others = [v for v in range(1, num_nodes + 1) if v not in (s, t)]
    index = {v: k for k, v in enumerate(others)}
    unaries = np.zeros((len(others), 2))
    tables = {}
    for u, v, cap, lineno in arcs:
        if not (1 <= u <= num_nodes and 1 <= v <= num_nodes):
            raise InvalidEnergy(f"line {lineno}: arc ({u}, {v}) references a missing node")
        if cap < 0:
            raise InvalidEnergy(f"line {lineno}: negative capacity")
        if v == s or u == t:
            raise InvalidEnergy(f"line {lineno}: arc ({u}, {v}) enters the source or leaves the sink")
        if u == s and v == t:
            raise InvalidEnergy(f"line {lineno}: direct source-sink arc")
        if u == v:
            raise InvalidEnergy(f"line {lineno}: self-loop on node {u}")
        if u == s:
            unaries[index[v], 1] += cap
        elif v == t:
            unaries[index[u], 0] += cap
        else:
            i, j = index[u], index[v]
            key = (min(i, j), max(i, j))
            table = tables.setdefault(key, np.zeros((2, 2)))
            if i < j:
                table[0, 1] += cap
            else:
                table[1, 0] += cap
    keys = sorted(tables)
    edges = np.array(keys, dtype=np.int64).reshape(-1, 2)
    stacked = np.array([tables[k] for k in keys]).reshape(-1, 2, 2)
    return RawEnergy(unaries, edges, stacked, const)


def read_dimacs(path) -> Energy:
    with open(path) as fh:
        return canonicalize(parse_dimacs(fh.read()))


def write_dimacs(e: Energy, path) -> None:
    with open(path, "w") as fh:
        fh.write(to_dimacs(e))
