import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apmp.energy import (
    Energy,
    RawEnergy,
    ReparamDelta,
    brute_force_map,
    canonicalize,
    dumps_energy,
    energy_from_dict,
    evaluate,
    evaluate_many,
    evaluate_raw,
    load_energy,
    random_instance,
    to_raw,
)
from apmp.errors import DimensionMismatch, InvalidEnergy, NonSubmodular, TooLarge

from conftest import energies


def all_assignments(n):
    return [np.array(x) for x in itertools.product((0, 1), repeat=n)]


@st.composite
def raw_submodular(draw, max_vars=5):
    n = draw(st.integers(1, max_vars))
    val = st.integers(-6, 6)
    unaries = [[draw(val), draw(val)] for _ in range(n)]
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    edges, tables, seen = [], [], set()
    for i, j in draw(st.lists(st.sampled_from(pairs), max_size=6)) if pairs else []:
        if (min(i, j), max(i, j)) in seen:
            continue
        seen.add((min(i, j), max(i, j)))
        a, b, c = draw(val), draw(val), draw(val)
        d = draw(st.integers(b + c - a - 6, b + c - a))
        edges.append((i, j))
        tables.append([[a, b], [c, d]])
    return RawEnergy(unaries, np.array(edges).reshape(-1, 2), np.array(tables).reshape(-1, 2, 2), draw(val))


class TestEnergy:
    def test_build_and_accessors(self):
        e = Energy.build([[0, 2], [1, 0]], [[0, 1, 3, 4]], 1.5)
        assert e.num_vars == 2 and e.num_edges == 1
        assert e.tables()[0].tolist() == [[0, 3], [4, 0]]
        assert e.incidence == (((1, 0, 0),), ((0, 0, 1),))
        assert e.max_pairwise() == 4

    def test_arrays_are_read_only(self, chain):
        with pytest.raises(ValueError):
            chain.unaries[0, 0] = 1

    @pytest.mark.parametrize("unaries, edges, msg", [
        ([[0, 1], [1, 1]], [], "not normalized"),
        ([[0, 1], [0, 1]], [[1, 0, 1, 1]], "i < j"),
        ([[0, 1], [0, 1]], [[0, 1, -1, 1]], "canonical"),
        ([[0, 1], [0, 1]], [[0, 0, 1, 1]], "self-loop"),
        ([[0, 1], [0, 1]], [[0, 2, 1, 1]], "missing variable"),
        ([[0, 1], [0, 1]], [[0, 1, 1, 1], [0, 1, 2, 2]], "duplicate"),
        ([[0, np.nan]], [], "finite"),
    ])
    def test_invalid(self, unaries, edges, msg):
        with pytest.raises(InvalidEnergy, match=msg):
            Energy.build(unaries, edges)

    def test_evaluate(self, chain):
        assert [evaluate(chain, x) for x in all_assignments(2)] == [3.0, 2.0, 8.0, 3.0]

    def test_evaluate_rejects_bad_assignment(self, chain):
        with pytest.raises(DimensionMismatch):
            evaluate(chain, [0, 1, 0])
        with pytest.raises(DimensionMismatch):
            evaluate(chain, [0, 2])

    @given(energies())
    def test_evaluate_many_matches_loop(self, e):
        X = np.array(all_assignments(e.num_vars))
        loop = [evaluate_raw(to_raw(e), x) for x in X]
        assert np.array_equal(evaluate_many(e, X), loop)


class TestCanonicalize:
    @settings(max_examples=150)
    @given(raw_submodular())
    def test_preserves_every_assignment(self, raw):
        e = canonicalize(raw)
        for x in all_assignments(raw.num_vars):
            assert evaluate(e, x) == evaluate_raw(raw, x)

    def test_non_submodular(self):
        raw = RawEnergy([[0, 0], [0, 0]], [[0, 1]], [[[0, 0], [0, 1]]])
        with pytest.raises(NonSubmodular) as info:
            canonicalize(raw)
        assert info.value.edge == (0, 1)

    def test_reversed_edge_is_flipped(self):
        raw = RawEnergy([[0, 0], [0, 0]], [[1, 0]], [[[0, 5], [2, 0]]])
        e = canonicalize(raw)
        assert e.edges.tolist() == [[0, 1]] and e.pairwise.tolist() == [[2, 5]]

    def test_keeps_edge_order(self):
        raw = RawEnergy([[0, 0]] * 3, [[1, 2], [0, 2], [1, 0]], np.zeros((3, 2, 2)))
        assert canonicalize(raw).edges.tolist() == [[1, 2], [0, 2], [0, 1]]

    @given(energies())
    def test_canonical_is_fixed_point(self, e):
        assert canonicalize(to_raw(e)) == e


class TestBruteForce:
    def test_chain(self, chain):
        labels, value = brute_force_map(chain)
        assert labels.tolist() == [0, 1] and value == 2

    def test_tie_goes_to_lexicographically_smallest(self):
        e = Energy.build([[0, 0], [0, 0]])
        assert brute_force_map(e)[0].tolist() == [0, 0]

    def test_empty(self):
        labels, value = brute_force_map(Energy.build(np.zeros((0, 2)), theta_const=4))
        assert labels.size == 0 and value == 4

    def test_cap(self):
        with pytest.raises(TooLarge):
            brute_force_map(Energy(np.zeros((26, 2)), np.zeros((0, 2)), np.zeros((0, 2))))

    @given(energies())
    def test_is_minimum(self, e):
        labels, value = brute_force_map(e)
        assert value == evaluate(e, labels)
        assert value == min(evaluate(e, x) for x in all_assignments(e.num_vars))


class TestRandomInstance:
    def test_deterministic(self):
        assert random_instance(8, 0.5, seed=3) == random_instance(8, 0.5, seed=3)
        assert random_instance(8, 0.5, seed=3) != random_instance(8, 0.5, seed=4)

    def test_density_one_is_complete(self):
        assert random_instance(6, 1.0, seed=0).num_edges == 15

    @pytest.mark.parametrize("n, density", [(0, 0.5), (3, 0.0), (3, 1.5)])
    def test_rejects(self, n, density):
        with pytest.raises(ValueError):
            random_instance(n, density)

    def test_integer_and_canonical(self):
        e = random_instance(10, 0.6, seed=11)
        assert e.is_integer()
        assert np.all(e.unaries.min(axis=1) == 0)


class TestReparamDelta:
    def test_apply_preserves_energy(self, chain):
        d = ReparamDelta(np.array([[0, -2.0], [-2.0, 0]]), np.array([[[0, -2.0], [2.0, 0]]]), 2.0)
        moved = d.apply(chain)
        for x in all_assignments(2):
            assert evaluate(moved, x) == evaluate(chain, x)

    def test_apply_rejects_diagonal(self, chain):
        d = ReparamDelta(np.zeros((2, 2)), np.array([[[1.0, 0], [0, 0]]]), 0.0)
        with pytest.raises(InvalidEnergy):
            d.apply(chain)

    def test_first_difference(self, chain):
        a = ReparamDelta.zeros(chain)
        b = ReparamDelta(np.zeros((2, 2)), np.array([[[0, 1.0], [0, 0]]]), 0.0)
        assert a.first_difference(a, chain) is None
        assert a.first_difference(b, chain)["edge"] == [0, 1]

    def test_dict_round_trip(self, chain):
        d = ReparamDelta(np.array([[0, -2.0], [0, 0]]), np.array([[[0, -2.0], [2.0, 0]]]), 2.0)
        assert ReparamDelta.from_dict(json.loads(json.dumps(d.to_dict(chain))), chain) == d


class TestJson:
    def test_round_trip(self, tmp_path):
        e = random_instance(7, 0.6, seed=2)
        p = tmp_path / "e.json"
        p.write_text(dumps_energy(e))
        assert load_energy(p) == e

    def test_canonicalize_on_load(self):
        doc = {"num_vars": 2, "unaries": [[2, 5], [0, 0]], "edges": [[1, 0, 3, 1]]}
        with pytest.raises(InvalidEnergy):
            energy_from_dict(doc)
        e = energy_from_dict(doc, canonicalize_input=True)
        assert e.edges.tolist() == [[0, 1]]
        raw = RawEnergy([[2, 5], [0, 0]], [[1, 0]], [[[0, 3], [1, 0]]])
        for x in all_assignments(2):
            assert evaluate(e, x) == evaluate_raw(raw, x)

    @pytest.mark.parametrize("doc", [{}, {"num_vars": 2, "unaries": [[0, 1]]}, {"num_vars": "x"}])
    def test_malformed(self, doc):
        with pytest.raises(InvalidEnergy):
            energy_from_dict(doc)

    def test_bad_file(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{")
        with pytest.raises(InvalidEnergy):
            load_energy(p)
