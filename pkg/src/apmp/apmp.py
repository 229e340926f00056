"""Augmenting-paths max-product.

Phase 1 repeatedly picks a chain of factors along a shortest positive
capacity path of the residual graph read off the current messages, damps
the two unary factors at its ends so their outgoing messages grow by
exactly the path's bottleneck, and passes messages forward then backward
along the chain. Phase 2 runs Strict MP to a fixed point.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .energy import Energy, evaluate
from .errors import (
    ConflictingPolarity,
    IterationCap,
    NoConvergence,
    NotConverged,
    PropagationBroken,
    ZeroDenominator,
)
from .flow import AugmentingPath, Residuals, augmentation_cap, shortest_augmenting_path
from .messages import (
    MessageState,
    compute_beliefs,
    decode,
    factor_to_var_message,
    normalize,
    strict_mp_round,
    var_to_factor_message,
)
from .reparam import canonical_reparam, reparam_difference

log = logging.getLogger(__name__)

ResidualView = Residuals
DAMPING_TOL = 1e-9
ONES, ZEROS = "ones", "zeros"


def residual_view(e: Energy, state: MessageState) -> Residuals:
    """Residual capacities recovered from potentials and messages.

    ``r_ij = theta01 - m_{i->ij}(1) + m_{i->ij}(0)`` and symmetrically for
    ``r_ji``; terminal arcs are what the unary factors have not yet sent.
    """
    state.check_shape(e)
    edge = np.empty((e.num_edges, 2))
    if e.num_edges:
        edge[:, 0] = e.pairwise[:, 0] - state.v2f[:, 0, 1] + state.v2f[:, 0, 0]
        edge[:, 1] = e.pairwise[:, 1] - state.v2f[:, 1, 1] + state.v2f[:, 1, 0]
    return Residuals(
        source=e.unaries[:, 1] - state.unary[:, 1],
        sink=e.unaries[:, 0] - state.unary[:, 0],
        edge=edge,
    )


@dataclass(frozen=True)
class ChainSchedule:
    path: AugmentingPath

    @property
    def f(self) -> float:
        return self.path.bottleneck

    @property
    def chain_vars(self):
        return self.path.vars

    @property
    def chain_factors(self):
        """``("unary", T1)``, the pairwise edge indices in order, ``("unary", TN)``."""
        return (("unary", self.path.start), *(k for k, _ in self.path.steps), ("unary", self.path.end))

    def to_dict(self, e: Energy) -> dict:
        return {"path": list(self.path.vars), "f": self.f}


def chain_bottleneck(e: Energy, state: MessageState, path: AugmentingPath) -> float:
    """Largest admissible increment: min over start unary, end unary and chain factors."""
    caps = [
        e.unaries[path.start, 1] - state.unary[path.start, 1],
        e.unaries[path.end, 0] - state.unary[path.end, 0],
    ]
    for k, d in path.steps:
        caps.append(e.pairwise[k, d] - state.v2f[k, d, 1] + state.v2f[k, d, 0])
    return float(min(caps))


def schedule(e: Energy, state: MessageState):
    path = shortest_augmenting_path(e, residual_view(e, state))
    if path is None:
        return None
    f = chain_bottleneck(e, state, path)
    if f != path.bottleneck or not f > 0:
        raise PropagationBroken(f"bottleneck {f} disagrees with residual search {path.bottleneck}")
    return ChainSchedule(path)


@dataclass(frozen=True)
class DampingPair:
    start: float
    end: float


def damping_coefficient(theta, previous, f):
    """Weight ``lam`` with ``lam * previous + (1 - lam) * theta == previous + f``."""
    denom = theta - previous
    if not denom > 0:
        raise ZeroDenominator(f"unary factor has nothing left to send ({theta} - {previous})")
    return (theta - f - previous) / denom


def damping_for(e: Energy, state: MessageState, sched: ChainSchedule) -> DampingPair:
    f = sched.f
    start, end = sched.path.start, sched.path.end
    lam_start = damping_coefficient(e.unaries[start, 1], state.unary[start, 1], f)
    lam_end = damping_coefficient(e.unaries[end, 0], state.unary[end, 0], f)
    for lam in (lam_start, lam_end):
        if not 0 <= lam < 1:
            raise ZeroDenominator(f"damping {lam} outside [0, 1)")
    return DampingPair(lam_start, lam_end)


def _damped_increment(theta_row, old_row, lam, f, slot):
    """Apply the damping weight and check it lands on the exact ``+f`` increment."""
    damped = lam * old_row + (1 - lam) * theta_row
    exact = old_row.copy()
    exact[slot] += f
    if abs(damped[slot] - exact[slot]) > DAMPING_TOL * max(1.0, abs(theta_row[slot])):
        raise PropagationBroken(f"damping gives {damped.tolist()}, expected {exact.tolist()}")
    return exact


def _send(e, state, src, k, side):
    incoming = var_to_factor_message(e, state, src, k)
    state.v2f[k, side] = incoming
    out = normalize(factor_to_var_message(e.pairwise[k], incoming, direction=side))
    if not np.array_equal(out, incoming):
        raise PropagationBroken(
            f"factor {tuple(e.edges[k])} changed message {incoming.tolist()} into {out.tolist()}"
        )
    state.f2v[k, 1 - side] = out


def phase1_iteration(e: Energy, state: MessageState, sched: ChainSchedule):
    """One chain update. Returns the new state and the induced change in potentials."""
    path = sched.path
    if len(path.vars) < 2:
        raise PropagationBroken("a chain needs distinct start and end variables")
    lam = damping_for(e, state, sched)
    new = state.copy()
    f = sched.f
    new.unary[path.start] = _damped_increment(e.unaries[path.start], state.unary[path.start], lam.start, f, 1)
    new.unary[path.end] = _damped_increment(e.unaries[path.end], state.unary[path.end], lam.end, f, 0)

    for (k, d), u in zip(path.steps, path.vars[:-1]):
        _send(e, new, u, k, d)
    for (k, d), v in zip(reversed(path.steps), reversed(path.vars[1:])):
        _send(e, new, v, k, 1 - d)

    before = normalize(compute_beliefs(e, state, unary_source="message").unary[list(path.vars)])
    after = normalize(compute_beliefs(e, new, unary_source="message").unary[list(path.vars)])
    if not np.array_equal(before, after):
        raise PropagationBroken(f"chain beliefs changed: {before.tolist()} -> {after.tolist()}")

    delta = reparam_difference(canonical_reparam(e, state), canonical_reparam(e, new))
    return new, delta


@dataclass
class Phase1Result:
    state: MessageState
    trace: list = field(default_factory=list)

    @property
    def total_flow(self) -> float:
        return float(sum(s.f for s, _ in self.trace))


def phase1_run(e: Energy, state: MessageState | None = None) -> Phase1Result:
    state = MessageState.zeros(e) if state is None else state.copy()
    cap = augmentation_cap(e)
    trace = []
    while (sched := schedule(e, state)) is not None:
        if len(trace) >= cap:
            raise IterationCap(f"more than {cap} phase-1 iterations")
        state, delta = phase1_iteration(e, state, sched)
        trace.append((sched, delta))
        log.debug("phase 1 iteration %d: path %s, f=%s", len(trace), sched.path.vars, sched.f)
    return Phase1Result(state, trace)


# Islands -----------------------------------------------------------------


@dataclass(frozen=True)
class IslandDecomposition:
    island_id: np.ndarray
    polarity: tuple
    seeds: tuple
    seed_strength: np.ndarray

    @property
    def num_islands(self):
        return len(self.polarity)

    def members(self, island):
        return np.flatnonzero(self.island_id == island)

    def labels(self) -> np.ndarray:
        out = np.zeros(len(self.island_id), dtype=np.int64)
        for idx, pol in enumerate(self.polarity):
            if pol == ONES:
                out[self.island_id == idx] = 1
        return out

    def partition(self):
        return sorted(tuple(self.members(i).tolist()) for i in range(self.num_islands))


def _passes(pair, direction, polarity):
    unit = (1.0, 0.0) if polarity == ONES else (0.0, 1.0)
    out = normalize(factor_to_var_message(pair, unit, direction))
    return bool(np.any(out > 0))


def detect_islands(e: Energy, state: MessageState) -> IslandDecomposition:
    """Group variables into homogeneous islands after Phase 1.

    Seeds are variables whose normalized belief is non-zero. From each seed
    the search crosses an edge iff the reparameterized factor would pass a
    non-zero message of the seed's polarity; everything reached from a
    seed, and any seeds reached on the way, forms one island.
    """
    if schedule(e, state) is not None:
        raise NotConverged("phase 1 is not finished")
    reparam = canonical_reparam(e, state)
    belief = reparam.unaries
    n = e.num_vars
    reached_by = [None] * n
    owner = list(range(n))

    def find(a):
        while owner[a] != a:
            owner[a] = owner[owner[a]]
            a = owner[a]
        return a

    for s in range(n):
        if not np.any(belief[s] > 0):
            continue
        pol = ONES if belief[s, 0] > 0 else ZEROS
        stack, seen = [s], {s}
        while stack:
            u = stack.pop()
            if reached_by[u] not in (None, pol):
                raise ConflictingPolarity(f"variable {u} reached by both polarities")
            reached_by[u] = pol
            owner[find(u)] = find(s)
            for v, k, side in e.incidence[u]:
                if v not in seen and _passes(reparam.pairwise[k], side, pol):
                    seen.add(v)
                    stack.append(v)

    island_id = np.full(n, -1, dtype=np.int64)
    roots = {}
    for v in range(n):
        if reached_by[v] is not None:
            island_id[v] = roots.setdefault(find(v), len(roots))
    polarity = [None] * len(roots)
    seeds = [set() for _ in roots]
    for v in range(n):
        if island_id[v] >= 0:
            polarity[island_id[v]] = reached_by[v]
            if np.any(belief[v] > 0):
                seeds[island_id[v]].add(v)
    strength = belief.max(axis=1) if n else np.zeros(0)
    return IslandDecomposition(island_id, tuple(polarity), tuple(frozenset(s) for s in seeds), strength)


def check_islands(e: Energy, state: MessageState, islands: IslandDecomposition):
    """Assert the decomposition's invariants; raises ConflictingPolarity on failure."""
    reparam = canonical_reparam(e, state)
    for idx, pol in enumerate(islands.polarity):
        for s in islands.seeds[idx]:
            if (pol == ONES) != (reparam.unaries[s, 0] > 0):
                raise ConflictingPolarity(f"seed {s} does not match island polarity {pol}")
    for k, (i, j) in enumerate(e.edges.tolist()):
        for src, dst, side in ((i, j, 0), (j, i, 1)):
            isl = islands.island_id[src]
            if isl < 0 or islands.island_id[dst] == isl:
                continue
            if _passes(reparam.pairwise[k], side, islands.polarity[isl]):
                raise ConflictingPolarity(f"island {isl} leaks through edge {(i, j)}")


# Phase 2 -------------------------------------------------------------------


def phase2_round_cap(e: Energy, islands: IslandDecomposition) -> int:
    """``ceil(M * lambda_max / alpha_min) + 2n`` with ``M`` the number of directed pairwise messages."""
    seeds = [v for s in islands.seeds for v in s]
    if not seeds:
        return 2 * e.num_vars + 1
    alpha_min = float(min(islands.seed_strength[v] for v in seeds))
    return math.ceil(2 * e.num_edges * e.max_pairwise() / alpha_min) + 2 * e.num_vars


def fast_unaries(e: Energy, islands: IslandDecomposition) -> np.ndarray:
    """Potentials with every seed's belief gap raised to the strongest pairwise term."""
    unaries = e.unaries.copy()
    target = e.max_pairwise()
    for isl, pol in enumerate(islands.polarity):
        slot = 0 if pol == ONES else 1
        for v in islands.seeds[isl]:
            gap = islands.seed_strength[v]
            unaries[v, slot] += max(target, gap) - gap
    return unaries


def _homogeneous(beliefs, islands):
    nb = normalize(beliefs)
    for isl, pol in enumerate(islands.polarity):
        rows = nb[islands.island_id == isl]
        bad = rows[:, 1] > 0 if pol == ONES else rows[:, 0] > 0
        if np.any(bad):
            return False
    return True


@dataclass
class Phase2Result:
    state: MessageState
    labels: np.ndarray
    rounds: int
    cap: int
    islands: IslandDecomposition
    unaries: np.ndarray
    max_changes: list = field(default_factory=list)


def phase2_run(e: Energy, state: MessageState, mode="strict", islands=None) -> Phase2Result:
    """Strict MP from the end of Phase 1 until a fixed point.

    ``mode="fast"`` first strengthens every seed (see :func:`fast_unaries`);
    the fixed point then belongs to those strengthened potentials but
    decodes identically.
    """
    if mode not in ("strict", "fast"):
        raise ValueError(f"unknown phase-2 mode {mode!r}")
    islands = detect_islands(e, state) if islands is None else islands
    cap = phase2_round_cap(e, islands)
    unaries = e.unaries if mode == "strict" else fast_unaries(e, islands)
    work = Energy(unaries, e.edges, e.pairwise, e.theta_const) if mode == "fast" else e
    changes = []
    for r in range(1, cap + 1):
        state, report = strict_mp_round(work, state)
        changes.append(report.max_message_change)
        if not _homogeneous(compute_beliefs(work, state).unary, islands):
            raise ConflictingPolarity(f"island beliefs lost their polarity in round {r}")
        log.debug("phase 2 round %d: max change %s", r, report.max_message_change)
        if report.is_fixed_point:
            break
    else:
        raise NoConvergence(f"no fixed point within {cap} rounds")
    labels = decode(compute_beliefs(work, state))
    expected = islands.labels()
    if not np.array_equal(labels, expected):
        raise NoConvergence(f"decoded {labels.tolist()} but islands imply {expected.tolist()}")
    return Phase2Result(state, labels, r, cap, islands, unaries, changes)


@dataclass
class APMPResult:
    labels: np.ndarray
    value: float
    phase1: Phase1Result
    phase2: Phase2Result

    @property
    def trace(self):
        return self.phase1.trace

    @property
    def state(self):
        return self.phase2.state

    @property
    def iterations(self):
        return len(self.phase1.trace) + self.phase2.rounds


def apmp_solve(e: Energy, phase2_mode="strict") -> APMPResult:
    p1 = phase1_run(e)
    p2 = phase2_run(e, p1.state, mode=phase2_mode)
    if phase2_mode == "strict":
        _, report = strict_mp_round(e, p2.state)
        if not report.is_fixed_point:
            raise NoConvergence(f"final state moves by {report.max_message_change} under Strict MP")
    return APMPResult(p2.labels, evaluate(e, p2.labels), p1, p2)
