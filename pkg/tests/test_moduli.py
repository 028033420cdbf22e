from __future__ import annotations

import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multiquilt import moduli as M
from multiquilt import trees as T

from conftest import metric


def _row(edges, coeffs: dict) -> list:
    """Coefficient row over ``edges`` from {edge: coeff}."""
    return [coeffs.get(e, 0) for e in edges]


# ---------------------------------------------------------------------------
# relation systems

def test_example_relations(example_tree, example_edges):
    L = example_edges
    rs = M.relations(example_tree)
    edges = rs.variables
    rows = [
        _row(edges, {L[3]: 1, L[4]: -1}),
        _row(edges, {L[4]: 1, L[5]: -1}),
        _row(edges, {L[3]: 1, L[2]: 1, L[6]: -1}),
        _row(edges, {L[6]: 1, L[1]: 1, L[7]: -1}),
    ]
    assert rs.rank == 4
    assert rs.same_solutions(rows)


def test_single_colored_vertex_has_no_relations():
    rs = M.relations(T.top_stratum(3))
    assert rs.rank == 0 and rs.equations == ()


def test_two_colored_children_need_equal_edges():
    tree = T.facet_tree(T.Type2((1, 1)), 2)
    rs = M.relations(tree)
    assert rs.same_solutions([_row(rs.variables, {tree.edges[0]: 1, tree.edges[1]: -1})])


@pytest.mark.parametrize("d", range(1, 6))
def test_relation_rank_is_colored_count_minus_one(d):
    for tree in T.enumerate_strata(d):
        assert M.relations(tree).rank == len(tree.colored) - 1


def _pairwise_matrix(tree) -> np.ndarray:
    cols = sorted(tree.colored)
    base = np.array(M.path_vector(tree, cols[0]))
    rows = [base - np.array(M.path_vector(tree, c)) for c in cols[1:]]
    return np.array(rows, dtype=float).reshape(len(rows), len(tree.edges))


@pytest.mark.parametrize("d", range(2, 7))
def test_relation_system_agrees_with_pairwise_distances(d):
    # small integer lengths hit the cone often enough to exercise both answers
    rng = np.random.default_rng(d)
    hits = 0
    for tree in T.enumerate_strata(d):
        if not tree.edges:
            continue
        rs = M.relations(tree)
        n = 10_000 if d <= 5 else 500
        L = rng.integers(0, 3, size=(n, len(tree.edges))).astype(float)
        pair = _pairwise_matrix(tree)
        ok_pair = np.all(np.abs(L @ pair.T) < 1e-9, axis=1) if pair.size else np.ones(n, bool)
        A = np.array([[float(c) for c in row] for row in rs.equations]).reshape(rs.rank, len(tree.edges))
        ok_sys = np.all(np.abs(L @ A.T) < 1e-9, axis=1) if A.size else np.ones(n, bool)
        assert np.array_equal(ok_pair, ok_sys)
        hits += int(ok_pair.sum())
    assert hits > 0


def test_relation_coefficients_are_exact():
    rs = M.relations(T.from_nested(
        (False, ((False, ((True, (None,)), (True, (None,)))), (True, (None,)))), quilted=True))
    assert all(isinstance(c, Fraction) for row in rs.equations for c in row)


# ---------------------------------------------------------------------------
# admissibility and cones

def test_example_admissible_lengths(example_tree, example_edges):
    L = example_edges
    vals = {1: 1.0, 2: 1.0, 3: 1.0, 4: 1.0, 5: 1.0, 6: 2.0, 7: 3.0, 8: 0.7}
    mt = M.MetricTree.make(example_tree, {L[k]: v for k, v in vals.items()})
    assert M.is_admissible(mt)
    vals[4] = 1.5
    mt = M.MetricTree.make(example_tree, {L[k]: v for k, v in vals.items()})
    assert not M.is_admissible(mt)


def test_all_zero_lengths_are_admissible(example_tree):
    assert M.is_admissible(metric(example_tree, default=0.0))


def test_infinite_lengths_compare_equal():
    tree = T.facet_tree(T.Type2((1, 1)), 2)
    assert M.is_admissible(metric(tree, default=M.INF))
    assert not M.is_admissible(metric(tree, {tree.edges[0]: M.INF}, default=2.0))


def test_cone_dimension(example_tree):
    assert M.cone_dim(example_tree) == 8 - 5 + 1
    assert M.cone_dim(T.top_stratum(4)) == 0
    assert M.cone_dim(T.facet_tree(T.Type2((2, 1)), 3)) == 1


def test_negative_length_rejected():
    tree = T.facet_tree(T.Type1(2, 0), 3)
    with pytest.raises(M.ModuliError):
        metric(tree, default=-1.0)


def test_metric_json_round_trip(example_tree):
    mt = M.sample_admissible(example_tree, random.Random(3))
    assert M.metric_from_dict(mt.to_dict()) == mt


# ---------------------------------------------------------------------------
# gluing parameters

def test_gluing_length_is_minus_log_delta():
    g = M.GluingParameter(math.exp(-5))
    assert g.R == pytest.approx(5.0)
    assert M.GluingParameter.from_length(7.5).R == pytest.approx(7.5)


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 2.0])
def test_gluing_parameter_range(bad):
    with pytest.raises(M.ModuliError):
        M.GluingParameter(bad)


@given(st.floats(1e-6, 0.99), st.floats(1e-6, 0.99))
def test_gluing_length_is_monotone(a, b):
    if a < b:
        assert M.GluingParameter(a).R > M.GluingParameter(b).R


# ---------------------------------------------------------------------------
# Type 1 gluing

def test_type1_example():
    r1 = metric(T.top_stratum(2))
    r2 = metric(T.corolla(2))
    out = M.glue_type1(r1, r2, 1, M.GluingParameter(math.exp(-5)))
    assert out.tree == T.facet_tree(T.Type1(2, 1), 3)
    (length,) = out.lam.values()
    assert length == pytest.approx(5.0)
    lower, upper, leaf, nu = M.cut_metric(out, out.tree.edges[0])
    assert (lower, upper, leaf) == (r1, r2, 2)


def test_type1_index_out_of_range():
    with pytest.raises(M.ModuliError):
        M.glue_type1(metric(T.top_stratum(2)), metric(T.corolla(2)), 2, M.GluingParameter(0.1))


def _random_type1(rng: random.Random, d: int):
    e = rng.randint(2, d)
    lower = rng.choice(T.enumerate_strata(d - e + 1))
    upper = rng.choice(T.enumerate_strata(e, colored=False))
    i = rng.randrange(d - e + 1)
    return M.sample_admissible(lower, rng), M.sample_admissible(upper, rng), i


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10 ** 6), st.floats(1e-6, 0.3))
def test_type1_output_admissible_and_cuts_back(d, seed, delta):
    r1, r2, i = _random_type1(random.Random(seed), d)
    out = M.glue_type1(r1, r2, i, M.GluingParameter(delta))
    assert M.is_admissible(out)
    assert out.tree.d == d
    new = [e for e, v in out.lengths if v == M.GluingParameter(delta).R]
    back = [M.cut_metric(out, e) for e in new]
    assert any(lo == r1 and up == r2 and leaf == i + 1 for lo, up, leaf, _ in back)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 5), st.integers(0, 10 ** 6))
def test_forget_colors_commutes_with_type1_gluing(d, seed):
    r1, r2, i = _random_type1(random.Random(seed), d)
    if r1.tree.d < 2:
        return
    out = M.glue_type1(r1, r2, i, M.GluingParameter(0.01))
    assert T.forget_colors(out.tree) == T.graft(T.forget_colors(r1.tree), i + 1, r2.tree)


def test_type1_lengths_grow_with_R():
    r1 = metric(T.top_stratum(2))
    r2 = metric(T.corolla(2))
    prev = -1.0
    for delta in (0.3, 0.1, 0.01, 1e-4):
        (nu,) = M.glue_type1(r1, r2, 0, M.GluingParameter(delta)).lam.values()
        assert nu > prev
        prev = nu


# ---------------------------------------------------------------------------
# Type 2 gluing

def test_type2_symmetric_case():
    parts = [metric(T.top_stratum(1)), metric(T.top_stratum(1))]
    out = M.glue_type2(metric(T.corolla(2)), parts, M.GluingParameter.from_length(4.0))
    assert sorted(out.lam.values()) == pytest.approx([4.0, 4.0])
    assert M.is_admissible(out)


def test_type2_offsets_equalize_depths():
    deep = T.facet_tree(T.Type2((1, 1)), 2)
    parts = [metric(T.top_stratum(1)), metric(deep, default=2.0)]
    assert M.type2_lengths(metric(T.corolla(2)), parts, 4.0) == pytest.approx([4.0, 2.0])
    out = M.glue_type2(metric(T.corolla(2)), parts, M.GluingParameter.from_length(4.0))
    assert M.is_admissible(out)


def test_type2_short_gluing_length_rejected():
    deep = T.facet_tree(T.Type2((1, 1)), 2)
    parts = [metric(T.top_stratum(1)), metric(deep, default=2.0)]
    with pytest.raises(M.ModuliError, match="too small"):
        M.glue_type2(metric(T.corolla(2)), parts, M.GluingParameter.from_length(1.5))


def test_type2_rejects_inadmissible_part():
    bad = metric(T.facet_tree(T.Type2((1, 1)), 2))
    bad = M.MetricTree.make(bad.tree, {bad.tree.edges[0]: 1.0, bad.tree.edges[1]: 2.0})
    with pytest.raises(M.ModuliError):
        M.glue_type2(metric(T.corolla(2)), [bad, metric(T.top_stratum(1))], M.GluingParameter(0.01))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10 ** 6))
def test_type2_glue_then_cut_round_trip(d, seed):
    rng = random.Random(seed)
    r = rng.randint(2, d)
    comp = sorted(rng.sample(range(1, d), r - 1))
    sizes = [b - a for a, b in zip([0] + comp, comp + [d])]
    r0 = M.sample_admissible(rng.choice(T.enumerate_strata(r, colored=False)), rng)
    # parts with a colored root, so the colored layer sits exactly at the glued edges
    pool = {s: [t for t in T.enumerate_strata(s) if t.vertex(t.root).colored] for s in sizes}
    parts = [M.sample_admissible(rng.choice(pool[s]), rng) for s in sizes]
    g = M.GluingParameter.from_length(30.0)
    out = M.glue_type2(r0, parts, g)
    assert M.is_admissible(out)
    root, back, lengths = M.cut_type2(out)
    assert root == r0 and back == parts
    assert lengths == pytest.approx(M.type2_lengths(r0, parts, g.R))


# ---------------------------------------------------------------------------
# face lattice

@pytest.mark.parametrize("d, f", [
    (2, [2, 1]),
    (3, [6, 6, 1]),
    (4, [21, 32, 13, 1]),
    (5, [80, 165, 110, 25, 1]),
])
def test_f_vectors(d, f):
    assert M.face_lattice(d).f_vector() == f


@pytest.mark.parametrize("d", range(2, 6))
def test_euler_characteristic_is_one(d):
    assert M.face_lattice(d).euler_characteristic() == 1


@pytest.mark.parametrize("d", range(2, 7))
def test_codim_one_count(d):
    lat = M.face_lattice(d)
    assert len(lat.codim_one()) == d * (d - 1) // 2 + 2 ** (d - 1) - 1


@pytest.mark.parametrize("d", range(2, 6))
def test_codim_one_strata_are_exactly_the_labelled_ones(d):
    lat = M.face_lattice(d)
    codim = set(lat.codim_one())
    for t in lat.elements:
        assert (t in codim) == (not isinstance(T.facet_label(t, d), T.NotCodimOne))


@pytest.mark.parametrize("d", range(1, 6))
def test_lattice_is_graded_with_unique_maximum(d):
    lat = M.face_lattice(d)
    assert [lat.elements[k] for k in lat.maxima()] == [T.top_stratum(d)]
    for a, b in lat.covers:
        assert lat.dims[b] == lat.dims[a] + 1
    top = lat.elements.index(T.top_stratum(d))
    assert all(lat.leq(k, top) for k in range(len(lat.elements)))


def test_face_lattice_range():
    with pytest.raises(M.ModuliError):
        M.face_lattice(0)
    with pytest.raises(M.ModuliError):
        M.face_lattice(M.MAX_LATTICE_D + 1)


def test_face_lattice_record():
    rec = M.face_lattice(3).to_dict()
    assert rec["codim_one_count"] == 6
    assert rec["euler_characteristic"] == 1
    labels = [e["label"] for e in rec["elements"] if e["label"]]
    assert len(labels) == 6
