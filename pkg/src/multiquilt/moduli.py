"""Metric colored trees, their admissibility cones, domain-side gluing and face lattices."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from . import trees as T
from .trees import AnyTree, Edge, TreeError


class _Infinity:
    """Length of a broken (nodal) edge.  Kept apart from float('inf') on purpose."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INF"

    def __reduce__(self):
        return (_Infinity, ())


INF = _Infinity()
Length = Union[float, _Infinity]

ADMISSIBLE_TOL = 1e-9


class ModuliError(ValueError):
    pass


def add_lengths(a: Length, b: Length) -> Length:
    if a is INF or b is INF:
        return INF
    return a + b


def _close(a: Length, b: Length, tol: float = ADMISSIBLE_TOL) -> bool:
    if a is INF or b is INF:
        return a is b
    return abs(a - b) <= tol


@dataclass(frozen=True)
class MetricTree:
    """A tree together with a length for each finite edge."""

    tree: AnyTree
    lengths: tuple[tuple[Edge, Length], ...]

    def __post_init__(self):
        edges = self.tree.edges
        keys = tuple(e for e, _ in self.lengths)
        if sorted(keys) != sorted(edges):
            raise ModuliError("lengths must be given for exactly the finite edges")
        for _, v in self.lengths:
            if v is not INF and (not isinstance(v, (int, float)) or v < 0 or math.isnan(v)):
                raise ModuliError(f"bad edge length {v!r}")

    @classmethod
    def make(cls, tree: AnyTree, lengths: dict) -> "MetricTree":
        order = tree.edges
        return cls(tree, tuple((e, lengths[e]) for e in order))

    @property
    def lam(self) -> dict[Edge, Length]:
        return dict(self.lengths)

    def root_distance(self, vid: int) -> Length:
        lam = self.lam
        parents = self.tree.parent_map()
        dist: Length = 0.0
        while vid in parents:
            p = parents[vid]
            dist = add_lengths(dist, lam[(p, vid)])
            vid = p
        return dist

    def to_dict(self) -> dict:
        out = self.tree.to_dict()
        out["lambda"] = [
            {"edge": [p, c], "len": "inf" if v is INF else v} for (p, c), v in self.lengths
        ]
        return out


# aliases matching the two flavours of trees
MetricColoredTree = MetricTree
MetricRibbonTree = MetricTree


def metric_from_dict(data: dict) -> MetricTree:
    raw = T.from_dict(data)
    diags = [m for m in T.validate(raw) if m.startswith("structure")]
    if diags:
        raise ModuliError("; ".join(diags))
    ids = raw.canonical_map()
    tree = raw.canonical()
    lengths = {}
    for rec in data.get("lambda", []):
        p, c = rec["edge"]
        v = rec["len"]
        lengths[(ids[int(p)], ids[int(c)])] = INF if v == "inf" else float(v)
    missing = set(tree.edges) - set(lengths)
    if missing:
        raise ModuliError(f"missing lengths for edges {sorted(missing)}")
    return MetricTree.make(tree, lengths)


# ---------------------------------------------------------------------------
# metric nested form: node = (colored, kids); kid = None (leaf) or (length, node)

def _mnested(mt: MetricTree):
    lam = mt.lam
    tree = mt.tree

    def build(vid):
        v = tree.vertex(vid)
        kids = []
        for s in v.slots:
            if s.kind == "leaf":
                kids.append(None)
            else:
                kids.append((lam[(vid, s.ref)], build(s.ref)))
        return (v.colored, tuple(kids))

    return build(tree.root)


def _strip(node):
    return (node[0], tuple(None if k is None else _strip(k[1]) for k in node[1]))


def _from_mnested(node, quilted: Optional[bool] = None) -> MetricTree:
    tree = T.from_nested(_strip(node), quilted=quilted)
    lengths = {}
    counter = 0

    def walk(n):
        nonlocal counter
        vid = counter
        counter += 1
        for k in n[1]:
            if k is not None:
                cid = counter
                walk(k[1])
                lengths[(vid, cid)] = k[0]

    walk(node)
    return MetricTree.make(tree, lengths)


# ---------------------------------------------------------------------------
# relations

@dataclass(frozen=True)
class RelationSystem:
    """Homogeneous linear equations sum(coeff * lambda_edge) = 0, reduced row echelon form."""

    variables: tuple[Edge, ...]
    equations: tuple[tuple[Fraction, ...], ...]

    @property
    def rank(self) -> int:
        return len(self.equations)

    def satisfied(self, values: dict[Edge, float], tol: float = ADMISSIBLE_TOL) -> bool:
        for row in self.equations:
            total = sum(float(c) * values[e] for c, e in zip(row, self.variables) if c)
            if abs(total) > tol:
                return False
        return True

    def same_solutions(self, rows) -> bool:
        """True when ``rows`` (sequences of coefficients) span the same row space."""
        other = _rref([tuple(Fraction(x) for x in r) for r in rows])
        return other == list(self.equations)

    def describe(self) -> list[str]:
        out = []
        for row in self.equations:
            terms = []
            for c, (p, q) in zip(row, self.variables):
                if c:
                    terms.append(("+" if c > 0 else "-") + f"{abs(c)} l({p},{q})")
            out.append(" ".join(terms) + " = 0")
        return out


def _rref(rows: list[tuple[Fraction, ...]]) -> list[tuple[Fraction, ...]]:
    m = [list(r) for r in rows]
    if not m:
        return []
    ncol = len(m[0])
    out_rows = []
    r = 0
    for col in range(ncol):
        piv = next((k for k in range(r, len(m)) if m[k][col] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        pv = m[r][col]
        m[r] = [x / pv for x in m[r]]
        for k in range(len(m)):
            if k != r and m[k][col] != 0:
                f = m[k][col]
                m[k] = [a - f * b for a, b in zip(m[k], m[r])]
        r += 1
        if r == len(m):
            break
    for row in m[:r]:
        out_rows.append(tuple(row))
    return out_rows


def path_vector(tree: AnyTree, vid: int) -> tuple[int, ...]:
    """Indicator of the root path of ``vid`` over ``tree.edges``."""
    edges = tree.edges
    parents = tree.parent_map()
    on = set()
    while vid in parents:
        on.add((parents[vid], vid))
        vid = parents[vid]
    return tuple(1 if e in on else 0 for e in edges)


def relations(tree: AnyTree) -> RelationSystem:
    edges = tree.edges
    colored = [v.id for v in tree.vertices if v.colored]
    rows = []
    if colored:
        base = path_vector(tree, colored[0])
        for vid in colored[1:]:
            vec = path_vector(tree, vid)
            rows.append(tuple(Fraction(a - b) for a, b in zip(base, vec)))
    return RelationSystem(tuple(edges), tuple(_rref(rows)))


def is_admissible(mt: MetricTree, tol: float = ADMISSIBLE_TOL) -> bool:
    colored = [v.id for v in mt.tree.vertices if v.colored]
    if not colored:
        return True
    ref = mt.root_distance(colored[0])
    return all(_close(ref, mt.root_distance(v), tol) for v in colored[1:])


def cone_dim(tree: AnyTree) -> int:
    """Dimension |E| - k + 1 of the admissible length cone of one fixed tree."""
    k = len(tree.colored)
    return len(tree.edges) - k + 1


# ---------------------------------------------------------------------------
# gluing

@dataclass(frozen=True)
class GluingParameter:
    delta: float

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ModuliError("gluing parameter must lie in (0, 1)")

    @property
    def R(self) -> float:
        return -math.log(self.delta)

    @classmethod
    def from_length(cls, R: float) -> "GluingParameter":
        if R <= 0:
            raise ModuliError("gluing length must be positive")
        return cls(math.exp(-R))


def _require_admissible(mt: MetricTree, what: str):
    if not is_admissible(mt):
        raise ModuliError(f"{what} is not admissible")


def glue_type1(r1: MetricTree, r2: MetricTree, i: int, g: GluingParameter) -> MetricTree:
    """Graft the uncolored ``r2`` onto leaf i+1 of the colored ``r1`` with a neck of length R."""
    if not 0 <= i < r1.tree.d:
        raise ModuliError(f"leaf slot {i + 1} out of range 1..{r1.tree.d}")
    if r2.tree.colored:
        raise ModuliError("the upper tree of a Type 1 gluing must be uncolored")
    _require_admissible(r1, "lower tree")
    node = _graft_mnested(_mnested(r1), {i + 1: (g.R, _mnested(r2))})
    out = _from_mnested(node, quilted=r1.tree.quilted)
    return out


def _graft_mnested(node, attach: dict):
    count = 0

    def walk(n):
        nonlocal count
        kids = []
        for k in n[1]:
            if k is None:
                count += 1
                kids.append(attach.get(count))
            else:
                kids.append((k[0], walk(k[1])))
        return (n[0], tuple(kids))

    return walk(node)


def leaf_attachment_depths(mt: MetricTree) -> list[Length]:
    """Root distance of the vertex carrying each leaf, in leaf order."""
    depth = {}
    for v in mt.tree.vertices:
        for s in v.slots:
            if s.kind == "leaf":
                depth[s.ref] = mt.root_distance(v.id)
    return [depth[k] for k in range(1, mt.tree.d + 1)]


def colored_depth(mt: MetricTree) -> Length:
    colored = [v.id for v in mt.tree.vertices if v.colored]
    if not colored:
        raise ModuliError("tree has no colored vertex")
    return mt.root_distance(colored[0])


def type2_lengths(r0: MetricTree, parts, R: float) -> list[float]:
    """Neck lengths R + a_j that put every colored vertex at one distance from the root."""
    att = leaf_attachment_depths(r0)
    cols = [colored_depth(p) for p in parts]
    if any(x is INF for x in att + cols):
        raise ModuliError("Type 2 offsets need finite depths")
    ref = att[0] + cols[0]
    nus = [R + (ref - (a + c)) for a, c in zip(att, cols)]
    if min(nus) <= 0:
        raise ModuliError("gluing length too small")
    return nus


def glue_type2(r0: MetricTree, parts, g: GluingParameter) -> MetricTree:
    """Graft colored ``parts`` onto every leaf of the uncolored ``r0``."""
    parts = list(parts)
    if r0.tree.colored:
        raise ModuliError("the root tree of a Type 2 gluing must be uncolored")
    if len(parts) != r0.tree.d:
        raise ModuliError("need one colored tree per leaf of the root tree")
    for p in parts:
        if not p.tree.colored:
            raise ModuliError("Type 2 parts must be colored")
        _require_admissible(p, "part")
    nus = type2_lengths(r0, parts, g.R)
    attach = {j + 1: (nu, _mnested(p)) for j, (nu, p) in enumerate(zip(nus, parts))}
    node = _graft_mnested(_mnested(r0), attach)
    return _from_mnested(node, quilted=True)


def cut_metric(mt: MetricTree, edge: Edge):
    """Cut a finite edge of a metric tree; returns (lower, upper, leaf, length)."""
    if edge not in mt.tree.edges:
        raise TreeError(f"edge {edge} not in tree")
    res = T.cut_edge(mt.tree, edge)
    p, c = edge
    lam = mt.lam
    below, above = _split_edges(mt.tree, c)
    lower_ids = _ids_after_removal(mt.tree, c)
    upper_ids = _subtree_ids(mt.tree, c)
    lo = MetricTree.make(res.lower, {(lower_ids[a], lower_ids[b]): lam[(a, b)] for a, b in below})
    up = MetricTree.make(res.upper, {(upper_ids[a], upper_ids[b]): lam[(a, b)] for a, b in above})
    return lo, up, res.leaf, lam[edge]


def cut_type2(mt: MetricTree):
    """Cut every edge from an uncolored vertex into a colored one.

    Returns (root tree, parts, lengths) with parts and lengths in planar order.
    """
    parts, lengths = [], []

    def walk(n):
        kids = []
        for k in n[1]:
            if k is None:
                kids.append(None)
            elif not n[0] and k[1][0]:
                parts.append(_from_mnested(k[1], quilted=True))
                lengths.append(k[0])
                kids.append(None)
            else:
                kids.append((k[0], walk(k[1])))
        return (n[0], tuple(kids))

    root = walk(_mnested(mt))
    if not parts:
        raise TreeError("no edge enters the colored layer from an uncolored vertex")
    return _from_mnested(root, quilted=False), parts, lengths


def _subtree_ids(tree: AnyTree, c: int) -> dict[int, int]:
    out = {}

    def walk(vid):
        out[vid] = len(out)
        for s in tree.vertex(vid).slots:
            if s.kind == "child":
                walk(s.ref)

    walk(c)
    return out


def _ids_after_removal(tree: AnyTree, c: int) -> dict[int, int]:
    removed = set(_subtree_ids(tree, c))
    keep = [v.id for v in tree._preorder() if v.id not in removed]
    return {old: k for k, old in enumerate(keep)}


def _split_edges(tree: AnyTree, c: int):
    sub = set(_subtree_ids(tree, c))
    below = [e for e in tree.edges if e[1] not in sub]
    above = [e for e in tree.edges if e[0] in sub]
    return below, above


# ---------------------------------------------------------------------------
# face lattice

MAX_LATTICE_D = 8


@dataclass
class FaceLattice:
    """Strata ordered by closure: ``a <= b`` when ``b`` is reached from ``a`` by contractions.

    The top stratum is the unique maximum and the rank of an element is its
    stratum dimension.
    """

    d: int
    elements: list
    dims: list[int]
    covers: list[tuple[int, int]] = field(default_factory=list)  # (lower, upper)

    def f_vector(self) -> list[int]:
        top = max(self.dims)
        out = [0] * (top + 1)
        for k in self.dims:
            out[k] += 1
        return out

    def euler_characteristic(self) -> int:
        return sum((-1) ** k * n for k, n in enumerate(self.f_vector()))

    def maxima(self) -> list[int]:
        has_upper = {a for a, _ in self.covers}
        return [k for k in range(len(self.elements)) if k not in has_upper]

    def codim_one(self) -> list:
        top = max(self.dims)
        return [t for t, k in zip(self.elements, self.dims) if k == top - 1]

    def upper_covers(self, k: int) -> list[int]:
        return [b for a, b in self.covers if a == k]

    def leq(self, a: int, b: int) -> bool:
        if a == b:
            return True
        up = {}
        for x, y in self.covers:
            up.setdefault(x, []).append(y)
        frontier, seen = [a], {a}
        while frontier:
            x = frontier.pop()
            for y in up.get(x, ()):
                if y == b:
                    return True
                if y not in seen:
                    seen.add(y)
                    frontier.append(y)
        return False

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "elements": [
                {"index": k, "tree": str(t), "dim": dim, "label": _label_str(T.facet_label(t))}
                for k, (t, dim) in enumerate(zip(self.elements, self.dims))
            ],
            "covers": [list(c) for c in self.covers],
            "f_vector": self.f_vector(),
            "euler_characteristic": self.euler_characteristic(),
            "codim_one_count": len(self.codim_one()),
        }


def _label_str(label) -> Optional[str]:
    if isinstance(label, T.Type1):
        return f"Type1(e={label.e},i={label.i})"
    if isinstance(label, T.Type2):
        return "Type2(" + ",".join(map(str, label.parts)) + ")"
    return None


def face_lattice(d: int) -> FaceLattice:
    if not 1 <= d <= MAX_LATTICE_D:
        raise ModuliError(f"d must lie in 1..{MAX_LATTICE_D}")
    elems = T.enumerate_strata(d, colored=True)
    index = {t: k for k, t in enumerate(elems)}
    dims = [T.stratum_dim(t) for t in elems]
    covers = set()
    for k, t in enumerate(elems):
        for e in t.edges:
            try:
                u = T.contract_edge(t, e)
            except TreeError:
                continue
            covers.add((k, index[u]))
    return FaceLattice(d, elems, dims, sorted(covers))


def sample_admissible(tree: AnyTree, rng, low: float = 0.5, high: float = 3.0) -> MetricTree:
    """Random strictly positive admissible lengths for ``tree`` (``rng`` is a ``random.Random``)."""
    parents = tree.parent_map()
    below = set()
    for v in tree.vertices:
        if v.colored:
            x = v.id
            while x in parents:
                x = parents[x]
                below.add(x)
    height = rng.uniform(low, high) * (1 + max((tree.depth(v) for v in tree.colored), default=0))
    depth = {tree.root: 0.0}
    lengths = {}
    for p, c in tree.edges:
        if c in below:
            room = height - depth[p]
            lengths[(p, c)] = room * rng.uniform(0.2, 0.6)
        elif tree.vertex(c).colored:
            lengths[(p, c)] = height - depth[p]
        else:
            lengths[(p, c)] = rng.uniform(low, high)
        depth[c] = depth[p] + lengths[(p, c)]
    return MetricTree.make(tree, lengths)
