"""Min-sum (max-product) message passing on the factor graph of an energy.

Every pairwise factor ``k = (i, j)`` holds four 2-vectors:
``v2f[k, s]`` is the message from endpoint ``s`` (0 for ``i``, 1 for ``j``)
into the factor and ``f2v[k, s]`` the message from the factor to that
endpoint. ``unary[i]`` is the message leaving the unary factor of ``x_i``;
Strict MP sets it to the potential, damped schedules may keep less.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .energy import Energy
from .errors import DimensionMismatch

FIXED_POINT_TOL = 1e-9


def normalize(msg: np.ndarray) -> np.ndarray:
    """Shift message vectors (last axis) so the smallest entry is 0."""
    msg = np.asarray(msg, dtype=np.float64)
    return msg - msg.min(axis=-1, keepdims=True)


def factor_to_var_message(pair, incoming, direction=0) -> np.ndarray:
    """``out(x_dst) = min_{x_src} [P(x_src, x_dst) + incoming(x_src)]``.

    ``pair = (theta01, theta10)`` of a canonical edge ``(i, j)``;
    ``direction`` 0 sends ``i -> j``, 1 sends ``j -> i``. Not normalized.
    """
    theta01, theta10 = pair
    if direction == 1:
        theta01, theta10 = theta10, theta01
    a, b = incoming
    return np.array([min(a, theta10 + b), min(b, theta01 + a)], dtype=np.float64)


def _costs(e: Energy):
    # cost[k, s] = (P(x_src=1, x_dst=0), P(x_src=0, x_dst=1)) for messages leaving side s
    cost = np.empty((e.num_edges, 2, 2))
    cost[:, 0, 0] = e.pairwise[:, 1]
    cost[:, 0, 1] = e.pairwise[:, 0]
    cost[:, 1, 0] = e.pairwise[:, 0]
    cost[:, 1, 1] = e.pairwise[:, 1]
    return cost


def _pass_through(cost, v2f):
    """Vectorized factor update; ``result[k, s]`` is what side ``s`` sends onward."""
    a, b = v2f[..., 0], v2f[..., 1]
    out = np.empty_like(v2f)
    out[..., 0] = np.minimum(a, cost[..., 0] + b)
    out[..., 1] = np.minimum(b, cost[..., 1] + a)
    return out


@dataclass
class MessageState:
    unary: np.ndarray
    v2f: np.ndarray
    f2v: np.ndarray

    @classmethod
    def zeros(cls, e: Energy):
        return cls(
            np.zeros((e.num_vars, 2)),
            np.zeros((e.num_edges, 2, 2)),
            np.zeros((e.num_edges, 2, 2)),
        )

    def copy(self):
        return MessageState(self.unary.copy(), self.v2f.copy(), self.f2v.copy())

    def check_shape(self, e: Energy):
        if (
            self.unary.shape != (e.num_vars, 2)
            or self.v2f.shape != (e.num_edges, 2, 2)
            or self.f2v.shape != (e.num_edges, 2, 2)
        ):
            raise DimensionMismatch("message state does not match the energy's topology")

    def max_difference(self, other) -> float:
        diffs = [np.abs(self.unary - other.unary), np.abs(self.v2f - other.v2f),
                 np.abs(self.f2v - other.f2v)]
        return float(max((d.max() for d in diffs if d.size), default=0.0))

    def __eq__(self, other):
        if not isinstance(other, MessageState):
            return NotImplemented
        return (
            np.array_equal(self.unary, other.unary)
            and np.array_equal(self.v2f, other.v2f)
            and np.array_equal(self.f2v, other.f2v)
        )

    __hash__ = None

    def incoming_sum(self, e: Energy) -> np.ndarray:
        """Per variable, the sum of factor-to-variable messages from pairwise factors."""
        total = np.zeros((e.num_vars, 2))
        if e.num_edges:
            np.add.at(total, e.edges[:, 0], self.f2v[:, 0])
            np.add.at(total, e.edges[:, 1], self.f2v[:, 1])
        return total

    def to_dict(self, e: Energy) -> dict:
        return {
            "unary": self.unary.tolist(),
            "edges": [
                {"edge": [int(i), int(j)], "v2f": self.v2f[k].tolist(), "f2v": self.f2v[k].tolist()}
                for k, (i, j) in enumerate(e.edges)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict, e: Energy):
        state = cls.zeros(e)
        state.unary[:] = np.array(d["unary"], dtype=np.float64).reshape(-1, 2)
        for rec in d["edges"]:
            k = e.edge_index[tuple(int(v) for v in rec["edge"])]
            state.v2f[k] = rec["v2f"]
            state.f2v[k] = rec["f2v"]
        state.check_shape(e)
        return state

    def dumps(self, e: Energy) -> str:
        return json.dumps(self.to_dict(e), sort_keys=True)

    @classmethod
    def loads(cls, text: str, e: Energy):
        return cls.from_dict(json.loads(text), e)


def var_to_factor_message(e: Energy, state: MessageState, var: int, target_edge: int) -> np.ndarray:
    """Unary message plus every pairwise message into ``var`` except ``target_edge``, normalized."""
    total = state.unary[var].copy()
    for _, k, side in e.incidence[var]:
        if k != target_edge:
            total += state.f2v[k, side]
    return normalize(total)


@dataclass(frozen=True)
class FixedPointReport:
    is_fixed_point: bool
    max_message_change: float
    violating_edge: tuple | None = None


def strict_mp_round(e: Energy, state: MessageState, unary=None, tol=FIXED_POINT_TOL):
    """One parallel Strict MP round.

    Every variable-to-factor message is rebuilt from the previous round's
    factor-to-variable messages, and every factor-to-variable message from
    those fresh variable messages; nothing reads a value written earlier in
    the same sweep except through that single hop. ``unary`` overrides the
    potentials sent by unary factors.
    """
    state.check_shape(e)
    unary_msg = np.array(e.unaries if unary is None else unary, dtype=np.float64)
    totals = unary_msg + state.incoming_sum(e)
    new_v2f = np.empty_like(state.v2f)
    if e.num_edges:
        new_v2f[:, 0] = totals[e.edges[:, 0]] - state.f2v[:, 0]
        new_v2f[:, 1] = totals[e.edges[:, 1]] - state.f2v[:, 1]
        new_v2f = normalize(new_v2f)
    sent = normalize(_pass_through(_costs(e), new_v2f))
    new_f2v = sent[:, ::-1]
    new = MessageState(unary_msg, new_v2f, np.ascontiguousarray(new_f2v))

    change = 0.0
    violating = None
    if e.num_edges:
        per_edge = np.maximum(
            np.abs(new.v2f - state.v2f).max(axis=(1, 2)),
            np.abs(new.f2v - state.f2v).max(axis=(1, 2)),
        )
        k = int(np.argmax(per_edge))
        change = float(per_edge[k])
        if change > tol:
            violating = (int(e.edges[k, 0]), int(e.edges[k, 1]))
    if e.num_vars:
        change = max(change, float(np.abs(new.unary - state.unary).max()))
    return new, FixedPointReport(change <= tol, change, violating)


@dataclass(frozen=True)
class Beliefs:
    unary: np.ndarray
    pairwise: np.ndarray

    def normalized_unary(self):
        return normalize(self.unary)

    def normalized_pairwise(self):
        flat = self.pairwise.reshape(len(self.pairwise), 4)
        return normalize(flat).reshape(-1, 2, 2)


def compute_beliefs(e: Energy, state: MessageState, unary_source="potential") -> Beliefs:
    """Unary and pairwise beliefs.

    With ``unary_source="potential"`` the unary term is the potential itself;
    ``"message"`` uses the (possibly damped) unary factor message instead,
    which is what a damped execution actually sees.
    """
    state.check_shape(e)
    base = e.unaries if unary_source == "potential" else state.unary
    b_unary = base + state.incoming_sum(e)
    b_pair = e.tables() + state.v2f[:, 0, :, None] + state.v2f[:, 1, None, :]
    return Beliefs(b_unary, b_pair)


def decode(beliefs) -> np.ndarray:
    """Per-variable argmin of the unary beliefs; ties go to 0."""
    b = beliefs.unary if isinstance(beliefs, Beliefs) else np.asarray(beliefs)
    return (b[:, 1] < b[:, 0]).astype(np.int64)


@dataclass
class StrictMPResult:
    state: MessageState
    labels: np.ndarray
    rounds: int
    converged: bool


def run_strict_mp(e: Energy, state: MessageState | None = None, max_rounds=1000):
    """Iterate Strict MP from ``state`` (zeros by default) until a fixed point or ``max_rounds``."""
    state = MessageState.zeros(e) if state is None else state
    for r in range(1, max_rounds + 1):
        state, report = strict_mp_round(e, state)
        if report.is_fixed_point:
            return StrictMPResult(state, decode(compute_beliefs(e, state)), r, True)
    return StrictMPResult(state, decode(compute_beliefs(e, state)), max_rounds, False)
