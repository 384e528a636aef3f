import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pimo.obsgraph import (
    TABLE,
    DirectedGraphObservable,
    canonical_form,
    canonical_set,
    evaluate,
    evaluate_all,
    evaluate_batch,
    evaluate_naive,
    load_observables,
    plan,
    table_row,
)


def brute(node_count, edges, M):
    # independent oracle: explicit loop over every index assignment
    D = M.shape[0]
    total = 0.0
    for idx in np.ndindex(*(D,) * node_count):
        term = 1.0
        for s, t in edges:
            term *= M[idx[s], idx[t]]
        total += term
    return total


def test_table_shape():
    assert len(TABLE) == 28
    assert [o.degree for o in canonical_set("13")] == [1, 1] + [2] * 11
    assert [o.degree for o in canonical_set("15")] == [3] * 8 + [4] * 5 + [3, 3]
    assert TABLE[22].node_count == 8 and TABLE[22].degree == 4
    assert TABLE[13].node_count == 1 and TABLE[13].edges == ((0, 0),) * 3


@pytest.mark.parametrize("name, rows", [("13", range(1, 14)), ("10", range(14, 24)), ("15", range(14, 29)),
                                        ("23", range(1, 24)), ("28", range(1, 29))])
def test_canonical_sets(name, rows):
    s = canonical_set(name)
    assert s.ids == [str(k) for k in rows]


def test_unknown_set():
    with pytest.raises(KeyError):
        canonical_set("12")


def test_validation():
    with pytest.raises(ValueError):
        DirectedGraphObservable(2, ((0, 2),))
    with pytest.raises(ValueError):
        DirectedGraphObservable(3, ((0, 1),))  # node 2 isolated


def test_worked_values(M22):
    assert evaluate_naive(table_row(1), M22) == 5
    assert evaluate(table_row(4), M22) == pytest.approx(29)
    assert evaluate(table_row(9), M22) == pytest.approx(54)
    assert evaluate(table_row(16), M22) == pytest.approx(155)
    assert evaluate(table_row(17), M22) == pytest.approx(180)
    assert evaluate(table_row(23), M22) == pytest.approx(10000)


def test_identity_and_zero():
    vals = evaluate_all(canonical_set("28"), np.eye(3))
    assert vals[:4] == [3, 3, 3, 3]
    assert vals[9] == 9
    assert evaluate_all(canonical_set("13"), np.zeros((3, 3))) == [0.0] * 13
    assert evaluate_naive(table_row(2), np.eye(3)) == 3


def test_plan_structure():
    assert len(plan(table_row(23)).components) == 4
    p26 = plan(table_row(26))
    assert len(p26.components) == 2 and p26.components[0].key == p26.components[1].key
    p16 = plan(table_row(16))
    assert len(p16.components) == 1 and p16.max_exponent == 3
    assert max(plan(o).max_exponent for o in TABLE) <= 3


@pytest.mark.parametrize("k", range(1, 29))
def test_plan_matches_brute_force(k, rng):
    obs = table_row(k)
    M = rng.normal(size=(3, 3))
    assert evaluate(obs, M) == pytest.approx(brute(obs.node_count, obs.edges, M), rel=1e-10, abs=1e-10)


def test_batch_matches_single(rng):
    Ms = rng.normal(size=(7, 4, 4))
    out = evaluate_batch(TABLE, Ms)
    assert out.shape == (7, 28)
    for b in range(7):
        np.testing.assert_allclose(out[b], evaluate_all(TABLE, Ms[b]), rtol=1e-12)


def test_canonical_form_ignores_labels():
    a = canonical_form(3, [(0, 1), (1, 2)])
    b = canonical_form(3, [(2, 0), (1, 2)])
    assert a == b
    assert canonical_form(2, [(0, 1), (1, 0)]) != canonical_form(2, [(0, 1), (0, 1)])
    assert TABLE[26].canonical_key() == TABLE[27].canonical_key()


def test_json_round_trip(tmp_path):
    path = tmp_path / "obs.json"
    path.write_text(json.dumps([o.to_json() for o in TABLE[:5]]))
    loaded = load_observables(path)
    assert [o.edges for o in loaded] == [o.edges for o in TABLE[:5]]


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4).flatmap(lambda n: st.tuples(
    st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), min_size=1, max_size=4))),
    st.integers(0, 2 ** 32 - 1))
def test_random_graphs_plan_vs_naive(graph, seed):
    n, edges = graph
    used = sorted({v for e in edges for v in e})
    relabel = {v: i for i, v in enumerate(used)}
    edges = tuple((relabel[s], relabel[t]) for s, t in edges)
    obs = DirectedGraphObservable(len(used), edges)
    M = np.random.default_rng(seed).normal(size=(3, 3))
    assert evaluate(obs, M) == pytest.approx(evaluate_naive(obs, M), rel=1e-10, abs=1e-10)
