"""Binary submodular energies on simple graphs.

An energy over ``x in {0,1}^n`` is

    E(x) = sum_i U_i(x_i) + sum_(i,j) P_ij(x_i, x_j) + const

and is stored in canonical form: every pairwise table is
``[[0, theta01], [theta10, 0]]`` with both entries non-negative, and every
unary pair has a zero minimum. Edges are stored once with ``i < j``;
``theta01`` is the penalty for ``(x_i, x_j) = (0, 1)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionMismatch, InvalidEnergy, NonSubmodular, TooLarge

RAW_TOL = 1e-12
SUM_TOL = 1e-9
BRUTE_FORCE_MAX_VARS = 25


def _as_float(values, shape, name):
    arr = np.array(values, dtype=np.float64).reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise InvalidEnergy(f"{name} must be finite")
    return arr


def _as_edges(edges):
    arr = np.array(edges, dtype=np.int64).reshape(-1, 2)
    return arr


def _check_graph(num_vars, edges, ordered):
    if num_vars < 0:
        raise InvalidEnergy("num_vars must be non-negative")
    seen = set()
    for k, (i, j) in enumerate(edges.tolist()):
        if not (0 <= i < num_vars and 0 <= j < num_vars):
            raise InvalidEnergy(f"edge {k} ({i}, {j}) references a missing variable")
        if i == j:
            raise InvalidEnergy(f"edge {k} is a self-loop on variable {i}")
        if ordered and i > j:
            raise InvalidEnergy(f"edge {k} ({i}, {j}) must be stored with i < j")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise InvalidEnergy(f"duplicate edge {key}")
        seen.add(key)


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True, eq=False)
class Energy:
    """Canonical-form binary submodular energy.

    ``unaries[i] = (theta_i^0, theta_i^1)``, ``edges[k] = (i, j)`` with
    ``i < j`` and ``pairwise[k] = (theta_ij^01, theta_ij^10)``.
    Arrays are read-only after construction.
    """

    unaries: np.ndarray
    edges: np.ndarray
    pairwise: np.ndarray
    theta_const: float = 0.0

    def __post_init__(self):
        unaries = _as_float(self.unaries, (-1, 2), "unaries")
        edges = _as_edges(self.edges)
        pairwise = _as_float(self.pairwise, (-1, 2), "pairwise")
        if len(pairwise) != len(edges):
            raise InvalidEnergy("pairwise must have one row per edge")
        if not np.isfinite(self.theta_const):
            raise InvalidEnergy("theta_const must be finite")
        _check_graph(len(unaries), edges, ordered=True)
        if np.any(pairwise < 0):
            k = int(np.argwhere(pairwise < 0)[0][0])
            raise InvalidEnergy(
                f"edge {tuple(edges[k])} is not canonical: pairwise entries must be >= 0"
            )
        if len(unaries) and np.any(unaries.min(axis=1) != 0):
            i = int(np.flatnonzero(unaries.min(axis=1) != 0)[0])
            raise InvalidEnergy(f"unary {i} is not normalized: min(theta0, theta1) must be 0")
        _freeze(unaries, edges, pairwise)
        object.__setattr__(self, "unaries", unaries)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "pairwise", pairwise)
        object.__setattr__(self, "theta_const", float(self.theta_const))

    @classmethod
    def build(cls, unaries, edges=(), theta_const=0.0):
        """Build from ``unaries`` and ``[i, j, theta01, theta10]`` edge rows."""
        rows = np.array(edges, dtype=np.float64).reshape(-1, 4)
        return cls(unaries, rows[:, :2].astype(np.int64), rows[:, 2:], theta_const)

    @property
    def num_vars(self) -> int:
        return len(self.unaries)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def incidence(self):
        """Per variable, ``(neighbor, edge_index, side)`` sorted by neighbor.

        ``side`` is 0 when the variable is the edge's ``i`` endpoint.
        """
        adj = [[] for _ in range(self.num_vars)]
        for k, (i, j) in enumerate(self.edges.tolist()):
            adj[i].append((j, k, 0))
            adj[j].append((i, k, 1))
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def edge_index(self):
        return {(int(i), int(j)): k for k, (i, j) in enumerate(self.edges)}

    def tables(self) -> np.ndarray:
        """Pairwise potentials as ``(m, 2, 2)`` tables indexed ``[x_i, x_j]``."""
        t = np.zeros((self.num_edges, 2, 2))
        t[:, 0, 1] = self.pairwise[:, 0]
        t[:, 1, 0] = self.pairwise[:, 1]
        return t

    def max_pairwise(self) -> float:
        return float(self.pairwise.max()) if self.num_edges else 0.0

    def is_integer(self) -> bool:
        vals = np.concatenate([self.unaries.ravel(), self.pairwise.ravel(), [self.theta_const]])
        return bool(np.all(vals == np.round(vals)))

    def __eq__(self, other):
        if not isinstance(other, Energy):
            return NotImplemented
        return (
            np.array_equal(self.unaries, other.unaries)
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.pairwise, other.pairwise)
            and self.theta_const == other.theta_const
        )

    __hash__ = None

    def __repr__(self):
        return f"Energy(num_vars={self.num_vars}, num_edges={self.num_edges}, theta_const={self.theta_const})"


@dataclass(frozen=True, eq=False)
class RawEnergy:
    """Unnormalized energy with full 2x2 pairwise tables ``tables[k][x_i][x_j]``."""

    unaries: np.ndarray
    edges: np.ndarray
    tables: np.ndarray
    theta_const: float = 0.0

    def __post_init__(self):
        unaries = _as_float(self.unaries, (-1, 2), "unaries")
        edges = _as_edges(self.edges)
        tables = _as_float(self.tables, (-1, 2, 2), "tables")
        if len(tables) != len(edges):
            raise InvalidEnergy("tables must have one entry per edge")
        if not np.isfinite(self.theta_const):
            raise InvalidEnergy("theta_const must be finite")
        _check_graph(len(unaries), edges, ordered=False)
        _freeze(unaries, edges, tables)
        object.__setattr__(self, "unaries", unaries)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "tables", tables)
        object.__setattr__(self, "theta_const", float(self.theta_const))

    @property
    def num_vars(self) -> int:
        return len(self.unaries)


def _submodular_gap(tables):
    return tables[:, 0, 0] + tables[:, 1, 1] - tables[:, 0, 1] - tables[:, 1, 0]


def check_submodular(raw: RawEnergy) -> bool:
    return bool(np.all(_submodular_gap(raw.tables) <= RAW_TOL))


def canonicalize(raw: RawEnergy) -> Energy:
    """Rewrite ``raw`` in canonical form without changing any assignment's energy.

    Each table ``[[A, B], [C, D]]`` loses ``A`` to the constant, then the
    remaining ``D - A`` is split between a column shift (into the unary of
    ``j``) and a row shift (into the unary of ``i``) so that both
    off-diagonal entries stay non-negative. Unary minima go to the constant.
    Edges keep their input order, flipped to ``i < j`` where needed.
    """
    gap = _submodular_gap(raw.tables)
    bad = np.flatnonzero(gap > RAW_TOL)
    if len(bad):
        k = int(bad[0])
        raise NonSubmodular(tuple(int(v) for v in raw.edges[k]), raw.tables[k].tolist())

    unaries = raw.unaries.copy()
    const = raw.theta_const
    merged = {}
    for (i, j), table in zip(raw.edges.tolist(), raw.tables):
        if i > j:
            i, j, table = j, i, table.T
        a, b, c, d = table[0, 0], table[0, 1], table[1, 0], table[1, 1]
        const += a
        b, c, d = b - a, c - a, d - a
        x = min(b, max(d - c, 0.0))
        unaries[j, 1] += x
        unaries[i, 1] += d - x
        merged[(i, j)] = (max(b - x, 0.0), max(c - (d - x), 0.0))

    mins = unaries.min(axis=1) if len(unaries) else np.zeros(0)
    unaries -= mins[:, None]
    const += float(mins.sum())
    keys = list(merged)
    edges = np.array(keys, dtype=np.int64).reshape(-1, 2)
    pairwise = np.array([merged[k] for k in keys], dtype=np.float64).reshape(-1, 2)
    return Energy(unaries, edges, pairwise, const)


def to_raw(e: Energy) -> RawEnergy:
    return RawEnergy(e.unaries, e.edges, e.tables(), e.theta_const)


def _check_assignment(n, x):
    x = np.asarray(x)
    if x.ndim != 1 or len(x) != n:
        raise DimensionMismatch(f"assignment has length {x.shape}, energy has {n} variables")
    if not np.all((x == 0) | (x == 1)):
        raise DimensionMismatch("assignment entries must be 0 or 1")
    return x.astype(np.int64)


def evaluate(e: Energy, x) -> float:
    x = _check_assignment(e.num_vars, x)
    return float(evaluate_many(e, x[None, :])[0])


def evaluate_raw(raw: RawEnergy, x) -> float:
    x = _check_assignment(raw.num_vars, x)
    total = raw.theta_const + raw.unaries[np.arange(len(x)), x].sum()
    if len(raw.edges):
        total += raw.tables[np.arange(len(raw.edges)), x[raw.edges[:, 0]], x[raw.edges[:, 1]]].sum()
    return float(total)


def evaluate_many(e: Energy, X) -> np.ndarray:
    """Energies of a batch of assignments, one per row of ``X``."""
    X = np.asarray(X, dtype=np.int64)
    rows = np.arange(e.num_vars)
    vals = e.unaries[rows, X].sum(axis=1) + e.theta_const
    if e.num_edges:
        xi = X[:, e.edges[:, 0]]
        xj = X[:, e.edges[:, 1]]
        vals = vals + ((1 - xi) * xj * e.pairwise[:, 0] + xi * (1 - xj) * e.pairwise[:, 1]).sum(axis=1)
    return vals


def brute_force_map(e: Energy, max_vars: int = BRUTE_FORCE_MAX_VARS):
    """Exact minimizer by enumeration; ties go to the lexicographically smallest labeling.

    Returns ``(labels, value)``.
    """
    n = e.num_vars
    if n > max_vars:
        raise TooLarge(f"brute force is capped at {max_vars} variables, got {n}")
    if n == 0:
        return np.zeros(0, dtype=np.int64), e.theta_const
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    best_val, best_code = np.inf, 0
    chunk = 1 << min(n, 16)
    for start in range(0, 1 << n, chunk):
        codes = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        X = (codes[:, None] >> shifts) & 1
        vals = evaluate_many(e, X)
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val, best_code = float(vals[k]), int(codes[k])
    labels = (np.int64(best_code) >> shifts) & 1
    return labels.astype(np.int64), best_val


def random_instance(n, density, max_unary=10, max_pairwise=10, seed=0) -> Energy:
    """Seeded random canonical energy with integer potentials.

    Each pair ``i < j`` becomes an edge with probability ``density``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 < density <= 1:
        raise ValueError("density must be in (0, 1]")
    rng = np.random.default_rng(seed)
    unaries = np.zeros((n, 2))
    side = rng.integers(0, 2, size=n)
    unaries[np.arange(n), side] = rng.integers(0, int(max_unary) + 1, size=n)
    ii, jj = np.triu_indices(n, k=1)
    keep = rng.random(len(ii)) < density
    edges = np.stack([ii[keep], jj[keep]], axis=1)
    pairwise = rng.integers(0, int(max_pairwise) + 1, size=(len(edges), 2)).astype(np.float64)
    return Energy(unaries, edges, pairwise, 0.0)


@dataclass(frozen=True, eq=False)
class ReparamDelta:
    """Change in potentials: unary ``(n, 2)``, pairwise tables ``(m, 2, 2)``, constant."""

    d_unary: np.ndarray
    d_pairwise: np.ndarray
    d_const: float = 0.0

    @classmethod
    def zeros(cls, e: Energy):
        return cls(np.zeros((e.num_vars, 2)), np.zeros((e.num_edges, 2, 2)), 0.0)

    def __add__(self, other):
        return ReparamDelta(
            self.d_unary + other.d_unary,
            self.d_pairwise + other.d_pairwise,
            self.d_const + other.d_const,
        )

    def __eq__(self, other):
        if not isinstance(other, ReparamDelta):
            return NotImplemented
        return (
            np.array_equal(self.d_unary, other.d_unary)
            and np.array_equal(self.d_pairwise, other.d_pairwise)
            and self.d_const == other.d_const
        )

    __hash__ = None

    def first_difference(self, other, e: Energy):
        """Locate the first entry where two deltas differ, or ``None``."""
        for i in range(len(self.d_unary)):
            if not np.array_equal(self.d_unary[i], other.d_unary[i]):
                return {"kind": "unary", "var": i,
                        "apmp": self.d_unary[i].tolist(), "oracle": other.d_unary[i].tolist()}
        for k in range(len(self.d_pairwise)):
            if not np.array_equal(self.d_pairwise[k], other.d_pairwise[k]):
                return {"kind": "pairwise", "edge": [int(v) for v in e.edges[k]],
                        "apmp": self.d_pairwise[k].tolist(), "oracle": other.d_pairwise[k].tolist()}
        if self.d_const != other.d_const:
            return {"kind": "const", "apmp": self.d_const, "oracle": other.d_const}
        return None

    def apply(self, e: Energy) -> Energy:
        """Add this delta to ``e``; the result must stay canonical."""
        tables = e.tables() + self.d_pairwise
        if np.any(tables[:, 0, 0] != 0) or np.any(tables[:, 1, 1] != 0):
            raise InvalidEnergy("delta leaves a non-zero diagonal in a pairwise table")
        pairwise = np.stack([tables[:, 0, 1], tables[:, 1, 0]], axis=1)
        return Energy(e.unaries + self.d_unary, e.edges, pairwise, e.theta_const + self.d_const)

    def to_dict(self, e: Energy) -> dict:
        """Sparse JSON-ready form listing only non-zero entries."""
        unary = [[i, *self.d_unary[i].tolist()] for i in range(len(self.d_unary))
                 if np.any(self.d_unary[i])]
        pairwise = [[int(e.edges[k, 0]), int(e.edges[k, 1]),
                     float(self.d_pairwise[k, 0, 1]), float(self.d_pairwise[k, 1, 0])]
                    for k in range(len(self.d_pairwise)) if np.any(self.d_pairwise[k])]
        return {"unary": unary, "pairwise": pairwise, "const": self.d_const}

    @classmethod
    def from_dict(cls, d: dict, e: Energy):
        out = cls.zeros(e)
        for i, d0, d1 in d.get("unary", []):
            out.d_unary[int(i)] = (d0, d1)
        for i, j, d01, d10 in d.get("pairwise", []):
            k = e.edge_index[(int(i), int(j))]
            out.d_pairwise[k, 0, 1] = d01
            out.d_pairwise[k, 1, 0] = d10
        return cls(out.d_unary, out.d_pairwise, float(d.get("const", 0.0)))


# JSON interchange ---------------------------------------------------------


def energy_to_dict(e: Energy) -> dict:
    def num(v):
        v = float(v)
        return int(v) if v.is_integer() else v

    return {
        "num_vars": e.num_vars,
        "unaries": [[num(a), num(b)] for a, b in e.unaries],
        "edges": [[int(i), int(j), num(p), num(q)] for (i, j), (p, q) in zip(e.edges, e.pairwise)],
        "theta_const": num(e.theta_const),
    }


def energy_from_dict(d: dict, canonicalize_input: bool = False) -> Energy:
    """Parse the JSON energy format.

    Without ``canonicalize_input`` the document must already satisfy every
    canonical invariant. With it, unnormalized unaries, negative or
    reversed edges are accepted and converted.
    """
    try:
        n = int(d["num_vars"])
        unaries = np.array(d.get("unaries", [[0, 0]] * n), dtype=np.float64).reshape(-1, 2)
        rows = np.array(d.get("edges", []), dtype=np.float64).reshape(-1, 4)
        const = float(d.get("theta_const", 0.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidEnergy(f"malformed energy document: {exc}") from exc
    if len(unaries) != n:
        raise InvalidEnergy(f"num_vars={n} but {len(unaries)} unaries given")
    if np.any(rows[:, :2] != np.round(rows[:, :2])):
        raise InvalidEnergy("edge endpoints must be integers")
    edges = rows[:, :2].astype(np.int64)
    if not canonicalize_input:
        return Energy(unaries, edges, rows[:, 2:], const)
    tables = np.zeros((len(rows), 2, 2))
    tables[:, 0, 1] = rows[:, 2]
    tables[:, 1, 0] = rows[:, 3]
    return canonicalize(RawEnergy(unaries, edges, tables, const))


def dumps_energy(e: Energy) -> str:
    return json.dumps(energy_to_dict(e), sort_keys=True)


def load_energy(path, canonicalize_input: bool = False) -> Energy:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidEnergy(f"{path}: not valid JSON: {exc}") from exc
    return energy_from_dict(doc, canonicalize_input)
