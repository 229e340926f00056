"""Potentials implied by a message state.

A message state rewrites the energy without changing any assignment's
value (up to one constant): unaries become beliefs and each pairwise table
becomes its pairwise belief minus the two endpoint beliefs. Unary factors
may have been damped, so the part of each unary potential that has been
sent ("used") is kept apart from the part that has not ("remainder").
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import Energy, RawEnergy, ReparamDelta, canonicalize, evaluate, evaluate_raw
from .errors import SplitViolation
from .messages import MessageState, compute_beliefs


def belief_reparam(e: Energy, state: MessageState) -> RawEnergy:
    """Reparameterize ``e`` by the beliefs of ``state``.

    Unary potentials become ``b_i`` (potential plus incoming messages).
    Pairwise tables become ``b_ij - bU_i - bU_j`` where ``bU`` are the
    beliefs built from the unary factor messages, i.e. the beliefs of the
    used part of the energy; the remainder is carried by the unary terms.
    The result equals ``e`` on every assignment up to a shared constant
    provided each stored variable-to-factor message is current up to a
    constant.
    """
    full = compute_beliefs(e, state, unary_source="potential")
    used = compute_beliefs(e, state, unary_source="message")
    tables = full.pairwise.copy()
    if e.num_edges:
        tables -= used.unary[e.edges[:, 0]][:, :, None]
        tables -= used.unary[e.edges[:, 1]][:, None, :]
    return RawEnergy(full.unary, e.edges, tables, e.theta_const)


def canonical_reparam(e: Energy, state: MessageState) -> Energy:
    """:func:`belief_reparam` in canonical form, constant fixed to match ``e`` exactly."""
    raw = belief_reparam(e, state)
    canon = canonicalize(raw)
    zero = np.zeros(e.num_vars, dtype=np.int64)
    offset = evaluate(e, zero) - evaluate_raw(raw, zero)
    return Energy(canon.unaries, canon.edges, canon.pairwise, canon.theta_const + offset)


def reparam_difference(before: Energy, after: Energy) -> ReparamDelta:
    return ReparamDelta(
        after.unaries - before.unaries,
        after.tables() - before.tables(),
        after.theta_const - before.theta_const,
    )


@dataclass(frozen=True)
class UsedRemainderSplit:
    used_unary: np.ndarray
    used_pairwise: np.ndarray
    remainder_unary: np.ndarray
    remainder_pairwise: np.ndarray


def used_remainder(e: Energy, state: MessageState) -> UsedRemainderSplit:
    used = state.unary.copy()
    remainder = e.unaries - used
    if np.any(remainder < 0):
        i = int(np.argwhere(remainder < 0)[0][0])
        raise SplitViolation(
            f"unary message {used[i].tolist()} exceeds potential {e.unaries[i].tolist()} at variable {i}"
        )
    return UsedRemainderSplit(used, e.tables(), remainder, np.zeros((e.num_edges, 2, 2)))


def pairwise_belief_delta(e: Energy, before: MessageState, after: MessageState, edge: int) -> np.ndarray:
    """Change in the pairwise belief table of ``edge`` between two states."""
    b0 = compute_beliefs(e, before).pairwise[edge]
    b1 = compute_beliefs(e, after).pairwise[edge]
    return b1 - b0
