"""Lockstep comparison of APMP Phase 1 with graph cuts.

Both algorithms are driven by the same shortest-path search. At every
iteration the checker compares the chosen path and bottleneck, the
residual capacities read off the messages against the oracle's, and the
change in potentials produced by message passing against the change
produced by pushing flow.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .apmp import apmp_solve, phase1_iteration, residual_view, schedule
from .energy import Energy, ReparamDelta, brute_force_map, random_instance
from .flow import build_flow_graph, find_augmenting_path, maxflow_solve, push_flow
from .messages import MessageState
from .reparam import pairwise_belief_delta, used_remainder


@dataclass
class Mismatch:
    iteration: int
    kind: str
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {"iteration": self.iteration, "kind": self.kind, **self.detail}


@dataclass
class Theorem1Report:
    iterations: int
    total_flow: float
    maxflow_value: float
    mismatch: Mismatch | None = None

    @property
    def ok(self) -> bool:
        return self.mismatch is None

    def to_dict(self):
        return {
            "ok": self.ok,
            "iterations": self.iterations,
            "total_flow": self.total_flow,
            "maxflow_value": self.maxflow_value,
            "mismatch": None if self.mismatch is None else self.mismatch.to_dict(),
        }


def _residual_mismatch(e, mine, oracle):
    for name in ("source", "sink"):
        a, b = getattr(mine, name), getattr(oracle, name)
        if not np.array_equal(a, b):
            i = int(np.flatnonzero(a != b)[0])
            return {"arc": ["s", i] if name == "source" else [i, "t"], "apmp": float(a[i]), "oracle": float(b[i])}
    if not np.array_equal(mine.edge, oracle.edge):
        k, d = (int(v) for v in np.argwhere(mine.edge != oracle.edge)[0])
        i, j = (int(v) for v in e.edges[k])
        return {"arc": [i, j] if d == 0 else [j, i],
                "apmp": float(mine.edge[k, d]), "oracle": float(oracle.edge[k, d])}
    return None


def lemma_delta(e: Energy, before: MessageState, after: MessageState) -> ReparamDelta:
    """The same change assembled piecewise from Lemmas 2 and 3.

    Unary part: what the unary factors have newly used up. Pairwise part:
    the pairwise belief change with its constant offset removed. The
    constant follows from leaving ``E(0, ..., 0)`` unchanged.
    """
    r0 = used_remainder(e, before).remainder_unary
    r1 = used_remainder(e, after).remainder_unary
    d_pair = np.zeros((e.num_edges, 2, 2))
    for k in range(e.num_edges):
        db = pairwise_belief_delta(e, before, after, k)
        d_pair[k] = db - db[0, 0]
    d_unary = r1 - r0
    const = -float(d_unary[:, 0].sum() + d_pair[:, 0, 0].sum())
    return ReparamDelta(d_unary, d_pair, const)


def theorem1_check(e: Energy, iteration=phase1_iteration) -> Theorem1Report:
    """Run APMP Phase 1 and max-flow side by side and report the first disagreement.

    ``iteration`` can be swapped for a deliberately broken update to make
    sure the checker notices.
    """
    state = MessageState.zeros(e)
    g = build_flow_graph(e)
    total = 0.0
    it = 0
    mf = maxflow_solve(e).flow

    def report(mismatch=None):
        return Theorem1Report(it, total, mf, mismatch)

    while True:
        mine = residual_view(e, state)
        diff = _residual_mismatch(e, mine, g.residual)
        if diff is not None:
            return report(Mismatch(it, "residual", diff))
        sched = schedule(e, state)
        path = find_augmenting_path(g)
        if sched is None or path is None:
            if (sched is None) != (path is None):
                return report(Mismatch(it, "termination", {"apmp": sched is None, "oracle": path is None}))
            break
        if sched.path.vars != path.vars or sched.f != path.bottleneck:
            return report(Mismatch(it, "path", {
                "apmp": {"path": list(sched.path.vars), "f": sched.f},
                "oracle": {"path": list(path.vars), "f": path.bottleneck},
            }))
        before = state
        state, delta = iteration(e, state, sched)
        expected = push_flow(g, path)
        total += sched.f
        it += 1
        loc = delta.first_difference(expected, e)
        if loc is not None:
            return report(Mismatch(it, "delta", loc))
        loc = lemma_delta(e, before, state).first_difference(expected, e)
        if loc is not None:
            return report(Mismatch(it, "lemma_delta", loc))
    if total != mf:
        return report(Mismatch(it, "flow_value", {"apmp": total, "oracle": mf}))
    return report()


def check_trace(e: Energy, records) -> Mismatch | None:
    """Replay graph cuts on ``e`` and compare against exported Phase-1 trace records."""
    g = build_flow_graph(e)
    const = e.theta_const
    records = [r for r in records if r.get("phase", 1) == 1]
    for it, rec in enumerate(records, start=1):
        path = find_augmenting_path(g)
        if path is None:
            return Mismatch(it, "termination", {"trace": rec.get("path"), "oracle": None})
        claimed = [v for v in rec["path"] if v not in ("s", "t")]
        if claimed != list(path.vars) or rec["f"] != path.bottleneck:
            return Mismatch(it, "path", {"trace": {"path": claimed, "f": rec["f"]},
                                         "oracle": {"path": list(path.vars), "f": path.bottleneck}})
        expected = push_flow(g, path)
        got = ReparamDelta.from_dict(rec["delta"], e)
        loc = got.first_difference(expected, e)
        if loc is not None:
            loc = {("trace" if k == "apmp" else k): v for k, v in loc.items()}
            return Mismatch(it, "delta", loc)
        const += path.bottleneck
        if rec["theta_const_so_far"] != const:
            return Mismatch(it, "theta_const", {"trace": rec["theta_const_so_far"], "oracle": const})
    if find_augmenting_path(g) is not None:
        return Mismatch(len(records) + 1, "termination", {"trace": None, "oracle": "path remains"})
    return None


def verification_instances(n_random=200, max_n=10, seed=0):
    rng = np.random.default_rng(seed)
    densities = (0.3, 0.6, 1.0)
    for idx in range(n_random):
        n = int(rng.integers(1, max_n + 1))
        yield idx, random_instance(n, densities[idx % 3], seed=int(rng.integers(2**31)))


def verify(energies, optimality=True) -> dict:
    """Theorem-1 lockstep plus APMP-vs-brute-force optimality over ``(name, energy)`` pairs."""
    out = {"instances": 0, "iterations_total": 0, "mismatches": [], "optimality_failures": []}
    for name, e in energies:
        out["instances"] += 1
        rep = theorem1_check(e)
        out["iterations_total"] += rep.iterations
        if not rep.ok:
            out["mismatches"].append({"instance": name, **rep.mismatch.to_dict()})
        if optimality:
            result = apmp_solve(e)
            _, best = brute_force_map(e)
            if result.value != best:
                out["optimality_failures"].append(
                    {"instance": name, "apmp": result.value, "bruteforce": best,
                     "assignment": result.labels.tolist()})
    out["ok"] = not out["mismatches"] and not out["optimality_failures"]
    return out


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True)

