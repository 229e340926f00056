import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apmp.apmp import phase1_iteration, phase1_run, residual_view, schedule
from apmp.energy import Energy, evaluate, evaluate_raw, random_instance
from apmp.errors import SplitViolation
from apmp.messages import MessageState, normalize, run_strict_mp, var_to_factor_message
from apmp.reparam import belief_reparam, canonical_reparam, pairwise_belief_delta, used_remainder

from conftest import energies, min_marginals, random_tree


def assignments(n):
    return [np.array(x) for x in itertools.product((0, 1), repeat=n)]


def energy_offsets(e, raw):
    return {round(evaluate_raw(raw, x) - evaluate(e, x), 9) for x in assignments(e.num_vars)}


def test_zero_messages_give_original(chain):
    raw = belief_reparam(chain, MessageState.zeros(chain))
    assert np.array_equal(raw.unaries, chain.unaries)
    assert np.array_equal(raw.tables, chain.tables())
    assert canonical_reparam(chain, MessageState.zeros(chain)) == chain


@pytest.mark.parametrize("seed", range(15))
def test_tree_fixed_point_gives_min_marginals(seed):
    e = random_tree(2 + seed % 8, 100 + seed)
    raw = belief_reparam(e, run_strict_mp(e).state)
    assert np.array_equal(normalize(raw.unaries), normalize(min_marginals(e)))
    assert len(energy_offsets(e, raw)) == 1


@pytest.mark.parametrize("seed", range(25))
def test_identity_mid_phase1(seed):
    e = random_instance(1 + seed % 8, (0.3, 0.6, 1.0)[seed % 3], seed=seed)
    state = MessageState.zeros(e)
    while (sched := schedule(e, state)) is not None:
        state, _ = phase1_iteration(e, state, sched)
        assert len(energy_offsets(e, belief_reparam(e, state))) == 1
        c = canonical_reparam(e, state)
        assert all(evaluate(c, x) == evaluate(e, x) for x in assignments(e.num_vars))


@settings(max_examples=60, deadline=None)
@given(energies(max_vars=6), st.data())
def test_identity_for_any_current_messages(e, data):
    msg = st.lists(st.integers(0, 9), min_size=2, max_size=2)
    state = MessageState.zeros(e)
    for i in range(e.num_vars):
        state.unary[i] = data.draw(msg)
    for k in range(e.num_edges):
        state.f2v[k] = [data.draw(msg), data.draw(msg)]
    for k, (i, j) in enumerate(e.edges.tolist()):
        state.v2f[k, 0] = var_to_factor_message(e, state, i, k)
        state.v2f[k, 1] = var_to_factor_message(e, state, j, k)
    assert len(energy_offsets(e, belief_reparam(e, state))) == 1


def test_end_of_phase1_is_residual_energy(three_islands):
    state = phase1_run(three_islands).state
    c = canonical_reparam(three_islands, state)
    r = residual_view(three_islands, state)
    assert np.array_equal(c.unaries[:, 0], r.sink)
    assert np.array_equal(c.unaries[:, 1], r.source)
    assert np.array_equal(c.pairwise, r.edge)


class TestUsedRemainder:
    def test_zero_messages(self, chain):
        s = used_remainder(chain, MessageState.zeros(chain))
        assert not s.used_unary.any()
        assert np.array_equal(s.remainder_unary, chain.unaries)
        assert np.array_equal(s.used_pairwise, chain.tables())
        assert not s.remainder_pairwise.any()

    def test_after_iteration(self, chain):
        state, _ = phase1_iteration(chain, MessageState.zeros(chain), schedule(chain, MessageState.zeros(chain)))
        s = used_remainder(chain, state)
        assert s.used_unary.tolist() == [[0, 2], [2, 0]]
        assert s.remainder_unary.tolist() == [[0, 1], [1, 0]]
        assert np.array_equal(s.used_unary + s.remainder_unary, chain.unaries)

    def test_saturated(self):
        e = Energy.build([[0, 2], [2, 0]], [[0, 1, 5, 5]])
        s = used_remainder(e, phase1_run(e).state)
        assert s.remainder_unary.tolist() == [[0, 0], [0, 0]]

    def test_violation(self, chain):
        state = MessageState.zeros(chain)
        state.unary[0] = (0, 4)
        with pytest.raises(SplitViolation):
            used_remainder(chain, state)


class TestPairwiseBeliefDelta:
    def test_chain(self, chain):
        before = MessageState.zeros(chain)
        after, _ = phase1_iteration(chain, before, schedule(chain, before))
        assert pairwise_belief_delta(chain, before, after, 0).tolist() == [[2, 0], [4, 2]]

    def test_off_chain_edge(self, fig5):
        before = MessageState.zeros(fig5)
        sched = schedule(fig5, before)
        after, _ = phase1_iteration(fig5, before, sched)
        on_chain = {k for k, _ in sched.path.steps}
        for k in range(fig5.num_edges):
            if k not in on_chain:
                assert not pairwise_belief_delta(fig5, before, after, k).any()

    def test_no_iteration(self, chain):
        s = MessageState.zeros(chain)
        assert not pairwise_belief_delta(chain, s, s.copy(), 0).any()
