"""A-infinity algebras, functors between them, and their relations.

Conventions
-----------
Inputs are written right to left, ``mu^n(a_n, ..., a_1)``, and degrees are
cohomological: ``mu^n`` has degree ``2 - n`` and ``Phi^d`` has degree ``1 - d``.
The structure maps satisfy

    sum_{i,j} (-1)^(|a_1| + ... + |a_i| - i)
        mu^{d-j+1}(a_d, ..., a_{i+j+1}, mu^j(a_{i+j}, ..., a_{i+1}), a_i, ..., a_1) = 0

and a functor satisfies

    sum_{i,j} (-1)^(|a_1| + ... + |a_i| - i)
        Phi^{d-j+1}(a_d, ..., mu^j(a_{i+j}, ..., a_{i+1}), a_i, ..., a_1)
      = sum_r sum_{i_1 + ... + i_r = d} mu^r(Phi^{i_r}(...), ..., Phi^{i_1}(a_{i_1}, ..., a_1))

with ``0 <= i``, ``1 <= j`` and ``i + j <= d``.  A differential graded algebra
``(A, d, .)`` becomes A-infinity data through

    mu^1(a) = (-1)^|a| da,    mu^2(a_2, a_1) = (-1)^|a_1| a_2 a_1.

Linear maps are stored sparsely: ``maps[n][(x_n, ..., x_1)] = {y: coeff}`` over
basis indices, with exact ``Fraction`` coefficients.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Optional, Union

from .trees import FloerIncoming, FloerOutgoing, Type1, Type2

Vector = dict  # basis index -> Fraction
Sparse = dict  # inputs tuple -> Vector


class AlgebraError(ValueError):
    pass


@dataclass
class AInftyData:
    names: list[str]
    degrees: list[int]
    mu: dict[int, Sparse]
    sources: Optional[list[str]] = None
    targets: Optional[list[str]] = None

    def __post_init__(self):
        if len(self.names) != len(self.degrees):
            raise AlgebraError("one degree per basis element")
        n = len(self.names)
        if self.sources is None:
            self.sources = ["*"] * n
        if self.targets is None:
            self.targets = ["*"] * n
        for arity, table in self.mu.items():
            for inputs, out in table.items():
                if len(inputs) != arity:
                    raise AlgebraError(f"mu^{arity} entry with {len(inputs)} inputs")
                for k in list(inputs) + list(out):
                    if not 0 <= k < n:
                        raise AlgebraError(f"basis index {k} out of range")

    @property
    def objects(self) -> list[str]:
        return sorted(set(self.sources) | set(self.targets))

    def dim(self) -> int:
        return len(self.names)

    def composable(self, word) -> bool:
        """``word`` is (x_n, ..., x_1); consecutive morphisms must compose."""
        seq = list(reversed(word))
        return all(self.targets[a] == self.sources[b] for a, b in zip(seq, seq[1:]))


@dataclass
class FunctorData:
    object_map: dict[str, str]
    phi: dict[int, Sparse]


# ---------------------------------------------------------------------------
# vectors

def _add(acc: Vector, vec: Vector, c) -> None:
    for k, v in vec.items():
        x = acc.get(k, 0) + c * v
        if x:
            acc[k] = x
        else:
            acc.pop(k, None)


def _reduce(vec: Vector, mod2: bool) -> Vector:
    if not mod2:
        return {k: v for k, v in vec.items() if v}
    out = {}
    for k, v in vec.items():
        v = Fraction(v)
        if v.denominator % 2 == 0:
            raise AlgebraError("mod-2 reduction of a coefficient with even denominator")
        r = (v.numerator * pow(v.denominator, -1, 2)) % 2
        if r:
            out[k] = Fraction(1)
    return out


def apply(table: Sparse, args: list[Vector]) -> Vector:
    """Evaluate a multilinear map on vectors given in written order (a_n, ..., a_1)."""
    out: Vector = {}
    supports = [list(a.items()) for a in args]
    for combo in product(*supports):
        key = tuple(k for k, _ in combo)
        entry = table.get(key)
        if not entry:
            continue
        c = Fraction(1)
        for _, v in combo:
            c *= v
        _add(out, entry, c)
    return out


def _degree(data: AInftyData, vec: Vector) -> Optional[int]:
    degs = {data.degrees[k] for k in vec}
    if len(degs) > 1:
        raise AlgebraError("inhomogeneous vector")
    return degs.pop() if degs else None


# ---------------------------------------------------------------------------
# relation terms and the facet correspondence

@dataclass(frozen=True)
class RelationTerm:
    side: str  # "LHS" or "RHS"
    pattern: tuple  # LHS: (e, i, j); RHS: (i_1, ..., i_r)

    @property
    def sign_inputs(self) -> int:
        """Number of rightmost inputs in the sign exponent |a_1| + ... + |a_i| - i."""
        return self.pattern[1] if self.side == "LHS" else 0

    def sign(self, degrees) -> int:
        """Sign for inputs with degrees listed as (|a_1|, ..., |a_d|)."""
        i = self.sign_inputs
        return -1 if (sum(degrees[:i]) - i) % 2 else 1

    def __str__(self) -> str:
        if self.side == "LHS":
            e, i, j = self.pattern
            d = e + j - 1
            left = [f"a{k}" for k in range(d, i + j, -1)]
            inner = "mu^%d(%s)" % (j, ", ".join(f"a{k}" for k in range(i + j, i, -1)))
            right = [f"a{k}" for k in range(i, 0, -1)]
            return f"Phi^{e}(" + ", ".join(left + [inner] + right) + ")"
        parts = []
        top = 0
        for s in self.pattern:
            parts.append("Phi^%d(%s)" % (s, ", ".join(f"a{k}" for k in range(top + s, top, -1))))
            top += s
        return f"mu^{len(self.pattern)}(" + ", ".join(reversed(parts)) + ")"


def _compositions(n: int):
    if n == 0:
        yield ()
        return
    for first in range(1, n + 1):
        for rest in _compositions(n - first):
            yield (first,) + rest


def lhs_terms(d: int) -> list[RelationTerm]:
    if d < 1:
        raise AlgebraError("d must be positive")
    return [RelationTerm("LHS", (d - j + 1, i, j)) for j in range(1, d + 1) for i in range(d - j + 1)]


def rhs_terms(d: int) -> list[RelationTerm]:
    if d < 1:
        raise AlgebraError("d must be positive")
    return [RelationTerm("RHS", c) for c in _compositions(d)]


def facet_bijection(d: int) -> dict:
    out = {}
    for t in lhs_terms(d):
        e, i, j = t.pattern
        out[t] = Type1(e=j, i=i) if j >= 2 else FloerIncoming(i + 1)
    for t in rhs_terms(d):
        out[t] = Type2(tuple(t.pattern)) if len(t.pattern) >= 2 else FloerOutgoing()
    return out


# ---------------------------------------------------------------------------
# residuals: direct expansion

def _words(data: AInftyData, d: int):
    n = data.dim()
    for word in product(range(n), repeat=d):
        if data.composable(word):
            yield word


def _unit(k: int) -> Vector:
    return {k: Fraction(1)}


def ainfty_relation(data: AInftyData, word, mod2: bool = False) -> Vector:
    """Left-hand side of the A-infinity relation on basis inputs (a_d, ..., a_1)."""
    d = len(word)
    args = [_unit(k) for k in word]  # written order
    degs = [data.degrees[k] for k in reversed(word)]  # |a_1|, ..., |a_d|
    total: Vector = {}
    for j in range(1, d + 1):
        inner_table = data.mu.get(j, {})
        outer_table = data.mu.get(d - j + 1, {})
        if not inner_table or not outer_table:
            continue
        for i in range(d - j + 1):
            lo, hi = d - i - j, d - i  # slice of written order holding a_{i+j}..a_{i+1}
            inner = apply(inner_table, args[lo:hi])
            if not inner:
                continue
            outer = apply(outer_table, args[:lo] + [inner] + args[hi:])
            sign = 1 if mod2 else (-1 if (sum(degs[:i]) - i) % 2 else 1)
            _add(total, outer, sign)
    return _reduce(total, mod2)


def check_ainfty(data: AInftyData, d_max: int, mod2: bool = False) -> dict[int, Fraction]:
    """Max absolute entry of the relation residual for each arity 1..d_max."""
    out = {}
    for d in range(1, d_max + 1):
        worst = Fraction(0)
        for word in _words(data, d):
            vec = ainfty_relation(data, word, mod2)
            if vec:
                worst = max(worst, max(abs(v) for v in vec.values()))
        out[d] = worst
    return out


def _check_object_map(A: AInftyData, B: AInftyData, F: FunctorData):
    for obj in A.objects:
        if obj not in F.object_map:
            raise AlgebraError(f"object {obj} not mapped")
        if F.object_map[obj] not in B.objects:
            raise AlgebraError(f"object {F.object_map[obj]} not in target")
    for table in F.phi.values():
        for inputs, out in table.items():
            src = A.sources[inputs[-1]]
            tgt = A.targets[inputs[0]]
            for y in out:
                if B.sources[y] != F.object_map[src] or B.targets[y] != F.object_map[tgt]:
                    raise AlgebraError("functor component does not respect the object map")


def functor_relation(A: AInftyData, B: AInftyData, F: FunctorData, word,
                     mod2: bool = False) -> Vector:
    """LHS minus RHS of the functor relation on basis inputs (a_d, ..., a_1)."""
    d = len(word)
    args = [_unit(k) for k in word]
    degs = [A.degrees[k] for k in reversed(word)]
    total: Vector = {}
    for term in lhs_terms(d):
        e, i, j = term.pattern
        lo, hi = d - i - j, d - i
        inner = apply(A.mu.get(j, {}), args[lo:hi])
        if not inner:
            continue
        val = apply(F.phi.get(e, {}), args[:lo] + [inner] + args[hi:])
        sign = 1 if mod2 else (-1 if (sum(degs[:i]) - i) % 2 else 1)
        _add(total, val, sign)
    for term in rhs_terms(d):
        blocks = []
        top = d
        for s in reversed(term.pattern):  # written order: the last block first
            blocks.append(apply(F.phi.get(s, {}), args[d - top:d - top + s]))
            top -= s
        if any(not b for b in blocks):
            continue
        val = apply(B.mu.get(len(term.pattern), {}), blocks)
        _add(total, val, 1 if mod2 else -1)
    return _reduce(total, mod2)


def check_functor(A: AInftyData, B: AInftyData, F: FunctorData, d_max: int,
                  mod2: bool = False) -> dict[int, Fraction]:
    _check_object_map(A, B, F)
    out = {}
    for d in range(1, d_max + 1):
        worst = Fraction(0)
        for word in _words(A, d):
            vec = functor_relation(A, B, F, word, mod2)
            if vec:
                worst = max(worst, max(abs(v) for v in vec.values()))
        out[d] = worst
    return out


# ---------------------------------------------------------------------------
# residuals: bar construction

def _bar_once(data: AInftyData, chain: dict) -> dict:
    """Apply the bar differential to a chain ``{word: coeff}``.

    Words live in the tensor coalgebra of the shifted space, where an element
    has degree |a| - 1 and every mu^j has degree +1.  Moving mu^j past the
    letters to its right costs the Koszul sign of their shifted degrees.
    """
    out: dict = {}
    for word, coeff in chain.items():
        d = len(word)
        shifted = [data.degrees[k] - 1 for k in word]  # written order
        for j in range(1, d + 1):
            table = data.mu.get(j)
            if not table:
                continue
            for lo in range(0, d - j + 1):
                hi = lo + j
                right = sum(shifted[hi:])
                sign = -1 if right % 2 else 1
                val = table.get(tuple(word[lo:hi]))
                if not val:
                    continue
                for y, c in val.items():
                    new = word[:lo] + (y,) + word[hi:]
                    x = out.get(new, 0) + sign * coeff * c
                    if x:
                        out[new] = x
                    else:
                        out.pop(new, None)
    return out


def check_bar(data: AInftyData, d_max: int) -> dict[int, Fraction]:
    """Residual of b o b = 0 on words of each length 1..d_max (all output lengths)."""
    out = {}
    for d in range(1, d_max + 1):
        worst = Fraction(0)
        for word in _words(data, d):
            sq = _bar_once(data, _bar_once(data, {tuple(word): Fraction(1)}))
            if sq:
                worst = max(worst, max(abs(v) for v in sq.values()))
        out[d] = worst
    return out


def check_functor_bar(A: AInftyData, B: AInftyData, F: FunctorData, d_max: int) -> dict[int, Fraction]:
    """Length-one component of F o b_A - b_B o F on the bar constructions."""
    out = {}
    for d in range(1, d_max + 1):
        worst = Fraction(0)
        for word in _words(A, d):
            lhs = _push(F, _bar_once(A, {tuple(word): Fraction(1)}), length=1)
            rhs = _bar_to_one(B, _push(F, {tuple(word): Fraction(1)}, length=None))
            diff = dict(lhs)
            for k, v in rhs.items():
                x = diff.get(k, 0) - v
                if x:
                    diff[k] = x
                else:
                    diff.pop(k, None)
            if diff:
                worst = max(worst, max(abs(v) for v in diff.values()))
        out[d] = worst
    return out


def _push(F: FunctorData, chain: dict, length: Optional[int]) -> dict:
    """Coalgebra map induced by F; Phi has shifted degree 0 so no signs appear."""
    out: dict = {}
    for word, coeff in chain.items():
        d = len(word)
        for comp in _compositions(d):
            if length is not None and len(comp) != length:
                continue
            # comp lists block sizes in written order
            pieces = []
            pos = 0
            for s in comp:
                pieces.append(apply(F.phi.get(s, {}), [_unit(k) for k in word[pos:pos + s]]))
                pos += s
            if any(not p for p in pieces):
                continue
            for combo in product(*[list(p.items()) for p in pieces]):
                new = tuple(k for k, _ in combo)
                c = coeff
                for _, v in combo:
                    c *= v
                x = out.get(new, 0) + c
                if x:
                    out[new] = x
                else:
                    out.pop(new, None)
    return out


def _bar_to_one(B: AInftyData, chain: dict) -> dict:
    out: dict = {}
    for word, coeff in chain.items():
        val = B.mu.get(len(word), {}).get(tuple(word))
        if not val:
            continue
        for y, c in val.items():
            x = out.get((y,), 0) + coeff * c
            if x:
                out[(y,)] = x
            else:
                out.pop((y,), None)
    return out


# ---------------------------------------------------------------------------
# constructors

def from_dga(names, degrees, differential: dict, product_table: dict) -> AInftyData:
    """A-infinity data of a dga.

    ``differential[x] = {y: c}`` gives dx; ``product_table[(x2, x1)] = {y: c}``
    gives the product x2 * x1.  Keys are basis names.
    """
    idx = {n: k for k, n in enumerate(names)}
    mu1 = {}
    for x, out in differential.items():
        sign = -1 if degrees[idx[x]] % 2 else 1
        vec = {idx[y]: sign * Fraction(c) for y, c in out.items() if c}
        if vec:
            mu1[(idx[x],)] = vec
    mu2 = {}
    for (x2, x1), out in product_table.items():
        sign = -1 if degrees[idx[x1]] % 2 else 1
        vec = {idx[y]: sign * Fraction(c) for y, c in out.items() if c}
        if vec:
            mu2[(idx[x2], idx[x1])] = vec
    return AInftyData(list(names), list(degrees), {1: mu1, 2: mu2})


def exterior_dga() -> AInftyData:
    """Exterior algebra on x, y (degree 1) with dy = x y and dx = 0."""
    names = ["1", "x", "y", "xy"]
    degrees = [0, 1, 1, 2]
    d = {"y": {"xy": 1}}
    prod = {
        ("1", "1"): {"1": 1}, ("1", "x"): {"x": 1}, ("1", "y"): {"y": 1}, ("1", "xy"): {"xy": 1},
        ("x", "1"): {"x": 1}, ("y", "1"): {"y": 1}, ("xy", "1"): {"xy": 1},
        ("x", "y"): {"xy": 1}, ("y", "x"): {"xy": -1},
    }
    return from_dga(names, degrees, d, prod)


def identity_functor(data: AInftyData) -> FunctorData:
    return FunctorData({o: o for o in data.objects},
                       {1: {(k,): {k: Fraction(1)} for k in range(data.dim())}})


def linear_functor(data: AInftyData, images: dict) -> FunctorData:
    """Functor with Phi^1 given by ``images[name] = {name: coeff}`` and no higher terms."""
    idx = {n: k for k, n in enumerate(data.names)}
    phi1 = {}
    for x, out in images.items():
        vec = {idx[y]: Fraction(c) for y, c in out.items() if c}
        if vec:
            phi1[(idx[x],)] = vec
    return FunctorData({o: o for o in data.objects}, {1: phi1})


# ---------------------------------------------------------------------------
# serialization

def _vec_json(vec: Vector, names) -> dict:
    return {names[k]: str(v) for k, v in sorted(vec.items())}


def _table_json(table: Sparse, names) -> list:
    rows = []
    for inputs in sorted(table):
        rows.append({"in": [names[k] for k in inputs], "out": _vec_json(table[inputs], names)})
    return rows


def algebra_to_dict(data: AInftyData) -> dict:
    return {
        "basis": [
            {"name": n, "degree": g, "source": s, "target": t}
            for n, g, s, t in zip(data.names, data.degrees, data.sources, data.targets)
        ],
        "mu": {str(n): _table_json(data.mu[n], data.names) for n in sorted(data.mu)},
    }


def _table_from(rows, idx) -> Sparse:
    table: Sparse = {}
    for row in rows:
        key = tuple(idx[x] for x in row["in"])
        table[key] = {idx[y]: Fraction(c) for y, c in row["out"].items() if Fraction(c)}
    return table


def algebra_from_dict(data: dict) -> AInftyData:
    basis = data["basis"]
    names = [b["name"] for b in basis]
    idx = {n: k for k, n in enumerate(names)}
    try:
        mu = {int(n): _table_from(rows, idx) for n, rows in data.get("mu", {}).items()}
    except KeyError as exc:
        raise AlgebraError(f"unknown basis element {exc}") from None
    return AInftyData(names, [int(b["degree"]) for b in basis], mu,
                      [b.get("source", "*") for b in basis], [b.get("target", "*") for b in basis])


def functor_to_dict(F: FunctorData, A: AInftyData, B: AInftyData) -> dict:
    out = {"object_map": dict(sorted(F.object_map.items())), "phi": {}}
    for n in sorted(F.phi):
        rows = []
        for inputs in sorted(F.phi[n]):
            rows.append({"in": [A.names[k] for k in inputs], "out": _vec_json(F.phi[n][inputs], B.names)})
        out["phi"][str(n)] = rows
    return out


def functor_from_dict(data: dict, A: AInftyData, B: AInftyData) -> FunctorData:
    ia = {n: k for k, n in enumerate(A.names)}
    ib = {n: k for k, n in enumerate(B.names)}
    phi = {}
    try:
        for n, rows in data.get("phi", {}).items():
            table = {}
            for row in rows:
                key = tuple(ia[x] for x in row["in"])
                if len(key) != int(n):
                    raise AlgebraError(f"Phi^{n} entry with {len(key)} inputs")
                table[key] = {ib[y]: Fraction(c) for y, c in row["out"].items() if Fraction(c)}
            phi[int(n)] = table
    except KeyError as exc:
        raise AlgebraError(f"unknown basis element {exc}") from None
    return FunctorData(dict(data.get("object_map", {o: o for o in A.objects})), phi)


def load_algebra(text: str) -> AInftyData:
    return algebra_from_dict(json.loads(text))
