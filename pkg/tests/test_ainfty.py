from __future__ import annotations

import json
import random
from fractions import Fraction
from itertools import product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multiquilt import ainfty as A
from multiquilt import moduli as M
from multiquilt import trees as T
from multiquilt.cli import bundled_dga_path

ZERO = Fraction(0)


def _all_zero(res: dict) -> bool:
    return all(v == 0 for v in res.values())


# ---------------------------------------------------------------------------
# the exterior dga, checked independently of the A-infinity machinery

def _ext_mult(a: str, b: str) -> dict:
    """Product in the exterior algebra on x, y, written as {basis: coeff}."""
    gens = {"1": (), "x": ("x",), "y": ("y",), "xy": ("x", "y")}
    word = gens[a] + gens[b]
    if len(set(word)) < len(word):
        return {}
    sign = 1
    w = list(word)
    for i in range(len(w)):
        for j in range(len(w) - 1 - i):
            if w[j] > w[j + 1]:
                w[j], w[j + 1] = w[j + 1], w[j]
                sign = -sign
    name = "".join(w) or "1"
    return {name: sign}


def _ext_d(a: str) -> dict:
    return {"y": {"xy": 1}}.get(a, {})


def test_exterior_dga_is_a_dga():
    names = ["1", "x", "y", "xy"]
    deg = {"1": 0, "x": 1, "y": 1, "xy": 2}

    def mul(u: dict, v: dict) -> dict:
        out = {}
        for a, ca in u.items():
            for b, cb in v.items():
                for c, cc in _ext_mult(a, b).items():
                    out[c] = out.get(c, 0) + ca * cb * cc
        return {k: v for k, v in out.items() if v}

    def d(u: dict) -> dict:
        out = {}
        for a, ca in u.items():
            for c, cc in _ext_d(a).items():
                out[c] = out.get(c, 0) + ca * cc
        return {k: v for k, v in out.items() if v}

    for a, b, c in product(names, repeat=3):
        assert mul(mul({a: 1}, {b: 1}), {c: 1}) == mul({a: 1}, mul({b: 1}, {c: 1}))
    for a, b in product(names, repeat=2):
        lhs = d(mul({a: 1}, {b: 1}))
        rhs = mul(d({a: 1}), {b: 1})
        for k, v in mul({a: 1}, d({b: 1})).items():
            rhs[k] = rhs.get(k, 0) + (-1) ** deg[a] * v
        assert lhs == {k: v for k, v in rhs.items() if v}
    for a in names:
        assert d(d({a: 1})) == {}


def test_bundled_example_matches_constructor():
    data = A.load_algebra(bundled_dga_path().read_text(encoding="utf-8"))
    ref = A.exterior_dga()
    assert data.names == ref.names and data.degrees == ref.degrees and data.mu == ref.mu


# ---------------------------------------------------------------------------
# terms

@pytest.mark.parametrize("d", range(1, 9))
def test_term_counts(d):
    assert len(A.lhs_terms(d)) == d * (d + 1) // 2
    assert len(A.rhs_terms(d)) == 2 ** (d - 1)


def test_chain_map_terms():
    assert [str(t) for t in A.lhs_terms(1)] == ["Phi^1(mu^1(a1))"]
    assert [str(t) for t in A.rhs_terms(1)] == ["mu^1(Phi^1(a1))"]


def test_arity_two_terms():
    assert sorted(str(t) for t in A.lhs_terms(2)) == sorted(
        ["Phi^2(a2, mu^1(a1))", "Phi^2(mu^1(a2), a1)", "Phi^1(mu^2(a2, a1))"])
    assert sorted(str(t) for t in A.rhs_terms(2)) == sorted(
        ["mu^1(Phi^2(a2, a1))", "mu^2(Phi^1(a2), Phi^1(a1))"])


def test_term_order_is_deterministic():
    assert A.lhs_terms(5) == A.lhs_terms(5)
    assert [t.pattern for t in A.rhs_terms(3)] == [(1, 1, 1), (1, 2), (2, 1), (3,)]


def test_terms_reject_zero_arity():
    with pytest.raises(A.AlgebraError):
        A.lhs_terms(0)
    with pytest.raises(A.AlgebraError):
        A.rhs_terms(0)


def test_sign_exponent():
    term = A.RelationTerm("LHS", (2, 1, 2))  # Phi^2(mu^2(a3, a2), a1)
    assert term.sign([1, 0, 0]) == 1  # |a1| - 1 = 0
    assert term.sign([0, 0, 0]) == -1
    assert A.RelationTerm("RHS", (1, 2)).sign([1, 1, 1]) == 1


# ---------------------------------------------------------------------------
# facet bijection

def _find(terms, text):
    return next(t for t in terms if str(t) == text)


def test_bijection_examples():
    b3 = A.facet_bijection(3)
    assert b3[_find(b3, "Phi^2(a3, mu^2(a2, a1))")] == T.Type1(e=2, i=0)
    assert b3[_find(b3, "mu^2(Phi^1(a3), Phi^2(a2, a1))")] == T.Type2((2, 1))
    b2 = A.facet_bijection(2)
    assert b2[_find(b2, "mu^1(Phi^2(a2, a1))")] == T.FloerOutgoing()
    assert b2[_find(b2, "Phi^2(a2, mu^1(a1))")] == T.FloerIncoming(1)


@pytest.mark.parametrize("d", range(2, 7))
def test_bijection_onto_codim_one_strata(d):
    mapped = [lab for lab in A.facet_bijection(d).values()
              if isinstance(lab, (T.Type1, T.Type2))]
    strata = {T.facet_label(t, d) for t in M.face_lattice(d).codim_one()}
    assert len(mapped) == len(set(mapped)) == len(strata)
    assert set(mapped) == strata


@pytest.mark.parametrize("d", range(1, 7))
def test_floer_labels(d):
    labels = list(A.facet_bijection(d).values())
    incoming = sorted(x.i for x in labels if isinstance(x, T.FloerIncoming))
    assert incoming == list(range(1, d + 1))
    assert sum(isinstance(x, T.FloerOutgoing) for x in labels) == 1


# ---------------------------------------------------------------------------
# relation checks

def test_exterior_dga_relations_hold():
    data = A.exterior_dga()
    assert _all_zero(A.check_ainfty(data, 4))
    assert _all_zero(A.check_bar(data, 4))
    assert _all_zero(A.check_ainfty(data, 4, mod2=True))


def test_zero_differential_associative_algebra():
    data = A.from_dga(["1", "x", "y", "xy"], [0, 1, 1, 2], {},
                      {(a, b): c for a in ["1", "x", "y", "xy"] for b in ["1", "x", "y", "xy"]
                       for c in [_ext_mult(a, b)] if c})
    assert _all_zero(A.check_ainfty(data, 4))
    assert _all_zero(A.check_bar(data, 4))


def _perturbed_unit():
    data = A.exterior_dga()
    data.mu[2][(0, 0)] = {0: Fraction(2)}
    return data


def test_perturbed_product_fails_at_arity_three():
    res = A.check_ainfty(_perturbed_unit(), 3)
    assert res[1] == 0 and res[2] == 0
    assert res[3] >= 1
    assert A.check_bar(_perturbed_unit(), 3)[3] >= 1


def test_two_object_category():
    names = ["e0", "e1", "f"]
    prods = {("e0", "e0"): {"e0": 1}, ("e1", "e1"): {"e1": 1},
             ("f", "e0"): {"f": 1}, ("e1", "f"): {"f": 1}}
    data = A.from_dga(names, [0, 0, 0], {}, prods)
    data.sources = ["0", "1", "0"]
    data.targets = ["0", "1", "1"]
    assert data.objects == ["0", "1"]
    assert not data.composable((0, 1))
    assert _all_zero(A.check_ainfty(data, 4))
    assert _all_zero(A.check_functor(data, data, A.identity_functor(data), 4))


def test_higher_product_is_used():
    # only mu^3 is nonzero and it lands where mu^3 vanishes, so the relations hold
    data = A.AInftyData(["u", "v"], [1, 2], {3: {(0, 0, 0): {1: Fraction(1)}}})
    assert _all_zero(A.check_ainfty(data, 5))
    assert _all_zero(A.check_bar(data, 5))
    # feeding v back in breaks the arity-five relation
    data.mu[3][(1, 0, 0)] = {1: Fraction(1)}
    assert A.check_ainfty(data, 5)[5] >= 1


def test_mismatched_arity_rejected():
    with pytest.raises(A.AlgebraError):
        A.AInftyData(["u"], [0], {2: {(0,): {0: Fraction(1)}}})
    with pytest.raises(A.AlgebraError):
        A.AInftyData(["u"], [0, 1], {})


# ---------------------------------------------------------------------------
# functors

def _graded_map():
    # x -> x, y -> x + 2y, xy -> 2xy: multiplicative and a chain map
    data = A.exterior_dga()
    return data, A.linear_functor(data, {"1": {"1": 1}, "x": {"x": 1},
                                         "y": {"x": 1, "y": 2}, "xy": {"xy": 2}})


def test_identity_functor():
    data = A.exterior_dga()
    F = A.identity_functor(data)
    assert _all_zero(A.check_functor(data, data, F, 4))
    assert _all_zero(A.check_functor_bar(data, data, F, 4))


def test_algebra_homomorphism_is_a_functor():
    data, F = _graded_map()
    assert _all_zero(A.check_functor(data, data, F, 3))
    assert _all_zero(A.check_functor_bar(data, data, F, 3))


def test_broken_multiplicativity_detected_at_arity_two():
    data, F = _graded_map()
    F.phi[1][(0,)] = {0: Fraction(2)}
    res = A.check_functor(data, data, F, 3)
    assert res[1] == 0 and res[2] > 0


def test_object_map_mismatch_rejected():
    data = A.exterior_dga()
    F = A.FunctorData({"*": "elsewhere"}, A.identity_functor(data).phi)
    with pytest.raises(A.AlgebraError):
        A.check_functor(data, data, F, 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_direct_and_bar_functor_residuals_agree(seed):
    data = A.exterior_dga()
    rng = random.Random(seed)
    phi2 = {}
    for a, b in product(range(4), repeat=2):
        deg = data.degrees[a] + data.degrees[b] - 1
        outs = [k for k in range(4) if data.degrees[k] == deg]
        if outs and rng.random() < 0.5:
            phi2[(a, b)] = {rng.choice(outs): Fraction(rng.randint(-2, 2) or 1)}
    F = A.FunctorData({"*": "*"}, {1: {(k,): {k: Fraction(1)} for k in range(4)}, 2: phi2})
    assert A.check_functor(data, data, F, 3) == A.check_functor_bar(data, data, F, 3)


def test_mod2_drops_signs():
    data, F = _graded_map()
    F.phi[1][(0,)] = {0: Fraction(3)}
    res = A.check_functor(data, data, F, 2, mod2=True)
    assert all(v in (0, 1) for v in res.values())


# ---------------------------------------------------------------------------
# serialization

def test_algebra_round_trip():
    data = A.exterior_dga()
    again = A.algebra_from_dict(json.loads(json.dumps(A.algebra_to_dict(data))))
    assert again.mu == data.mu and again.degrees == data.degrees


def test_functor_round_trip():
    data, F = _graded_map()
    rec = A.functor_to_dict(F, data, data)
    again = A.functor_from_dict(json.loads(json.dumps(rec)), data, data)
    assert again.phi == F.phi and again.object_map == F.object_map


def test_unknown_basis_name_rejected():
    rec = A.algebra_to_dict(A.exterior_dga())
    rec["mu"]["2"].append({"in": ["z", "x"], "out": {"x": "1"}})
    with pytest.raises(A.AlgebraError):
        A.algebra_from_dict(rec)
