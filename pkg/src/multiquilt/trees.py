"""Stable rooted ribbon trees, plain and colored.

A tree is stored as a flat list of vertices, each with an ordered list of
slots.  A slot holds either a child vertex id or a leaf index.  Trees built
by this module are in canonical form: vertex ids are assigned in depth-first
preorder (root = 0) and leaves are numbered 1..d in the same traversal, so
two trees are isomorphic as planar trees iff they compare equal.

Internally most operations go through a nested form: a node is a pair
``(colored, children)`` where each child is either ``None`` (a leaf) or
another node.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import NamedTuple, Optional, Union


class Slot(NamedTuple):
    kind: str  # "child" or "leaf"
    ref: int


@dataclass(frozen=True)
class Vertex:
    id: int
    colored: bool
    slots: tuple[Slot, ...]

    @property
    def valency(self) -> int:
        return len(self.slots) + 1


Edge = tuple[int, int]
Node = tuple  # (colored: bool, children: tuple[Optional[Node], ...])


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class RibbonTree:
    d: int
    root: int
    vertices: tuple[Vertex, ...]

    quilted = False

    # -- basic accessors -------------------------------------------------
    def vertex(self, vid: int) -> Vertex:
        for v in self.vertices:
            if v.id == vid:
                return v
        raise TreeError(f"no vertex {vid}")

    @property
    def colored(self) -> frozenset[int]:
        return frozenset(v.id for v in self.vertices if v.colored)

    @property
    def edges(self) -> tuple[Edge, ...]:
        """Finite edges as (parent, child) pairs in preorder."""
        out = []
        for v in self._preorder():
            for s in v.slots:
                if s.kind == "child":
                    out.append((v.id, s.ref))
        return tuple(out)

    def parent_map(self) -> dict[int, int]:
        return {c: p for p, c in self.edges}

    def _preorder(self):
        stack = [self.root]
        seen = set()
        while stack:
            vid = stack.pop()
            if vid in seen:
                raise TreeError("cycle")
            seen.add(vid)
            v = self.vertex(vid)
            yield v
            for s in reversed(v.slots):
                if s.kind == "child":
                    stack.append(s.ref)

    def depth(self, vid: int) -> int:
        parents = self.parent_map()
        n = 0
        while vid in parents:
            vid = parents[vid]
            n += 1
        return n

    # -- nested form -----------------------------------------------------
    def nested(self) -> Node:
        def build(vid, guard):
            if vid in guard:
                raise TreeError("cycle")
            v = self.vertex(vid)
            kids = tuple(None if s.kind == "leaf" else build(s.ref, guard | {vid})
                         for s in v.slots)
            return (v.colored, kids)

        return build(self.root, frozenset())

    def canonical(self) -> "RibbonTree":
        return from_nested(self.nested(), quilted=self.quilted)

    def canonical_map(self) -> dict[int, int]:
        """Old vertex id -> id in the canonical form."""
        return {v.id: k for k, v in enumerate(self._preorder())}

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "root": self.root,
            "vertices": [
                {
                    "id": v.id,
                    "colored": v.colored,
                    "slots": [{s.kind: s.ref} for s in v.slots],
                }
                for v in self.vertices
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)

    def __str__(self) -> str:
        return bracket(self.nested())


class ColoredRibbonTree(RibbonTree):
    quilted = True


AnyTree = Union[RibbonTree, ColoredRibbonTree]


def bracket(node: Node) -> str:
    """Compact text form: ``[..]`` uncolored vertex, ``(..)`` colored, ``*`` leaf."""
    colored, kids = node
    inner = "".join("*" if k is None else bracket(k) for k in kids)
    return f"({inner})" if colored else f"[{inner}]"


def from_nested(node: Node, quilted: bool | None = None) -> AnyTree:
    vertices: list[Vertex] = []
    leaf = 0

    def walk(n):
        nonlocal leaf
        vid = len(vertices)
        vertices.append(None)
        slots = []
        for k in n[1]:
            if k is None:
                leaf += 1
                slots.append(Slot("leaf", leaf))
            else:
                slots.append(Slot("child", walk(k)))
        vertices[vid] = Vertex(vid, bool(n[0]), tuple(slots))
        return vid

    walk(node)
    if quilted is None:
        quilted = any(v.colored for v in vertices)
    cls = ColoredRibbonTree if quilted else RibbonTree
    return cls(leaf, 0, tuple(vertices))


def from_dict(data: dict, quilted: bool | None = None) -> AnyTree:
    """Build a tree from the JSON record, keeping ids as given."""
    vertices = []
    for rec in data["vertices"]:
        slots = []
        for s in rec["slots"]:
            if "child" in s:
                slots.append(Slot("child", int(s["child"])))
            else:
                slots.append(Slot("leaf", int(s["leaf"])))
        vertices.append(Vertex(int(rec["id"]), bool(rec.get("colored", False)), tuple(slots)))
    if quilted is None:
        quilted = any(v.colored for v in vertices)
    cls = ColoredRibbonTree if quilted else RibbonTree
    return cls(int(data["d"]), int(data["root"]), tuple(vertices))


def from_json(text: str, quilted: bool | None = None) -> AnyTree:
    return from_dict(json.loads(text), quilted)


# ---------------------------------------------------------------------------
# validation

def validate(tree: AnyTree) -> list[str]:
    """List of violated invariants; empty when the tree is well formed and stable."""
    diags: list[str] = []
    ids = [v.id for v in tree.vertices]
    byid = {v.id: v for v in tree.vertices}
    if len(set(ids)) != len(ids):
        diags.append("structure: duplicate vertex id")
    if tree.root not in byid:
        diags.append(f"structure: root {tree.root} is not a vertex")
        return diags
    parents: dict[int, int] = {}
    for v in tree.vertices:
        for s in v.slots:
            if s.kind == "child":
                if s.ref not in byid:
                    diags.append(f"structure: vertex {v.id} references missing vertex {s.ref}")
                elif s.ref in parents or s.ref == tree.root:
                    diags.append(f"structure: vertex {s.ref} has more than one parent")
                else:
                    parents[s.ref] = v.id
            elif s.kind != "leaf":
                diags.append(f"structure: bad slot kind {s.kind!r}")
    if diags:
        return diags
    # reachability / acyclicity
    stack = [tree.root]
    seen: set[int] = set()
    while stack:
        vid = stack.pop()
        if vid in seen:
            diags.append("structure: cycle")
            return diags
        seen.add(vid)
        for s in reversed(byid[vid].slots):
            if s.kind == "child":
                stack.append(s.ref)
    if seen != set(byid):
        diags.append("structure: disconnected vertices " + str(sorted(set(byid) - seen)))
        return diags
    leaves: list[int] = []

    def walk(vid):
        for s in byid[vid].slots:
            if s.kind == "leaf":
                leaves.append(s.ref)
            else:
                walk(s.ref)

    walk(tree.root)
    if sorted(leaves) != list(range(1, tree.d + 1)):
        diags.append(f"leaves: indices {sorted(leaves)} are not 1..{tree.d}")
    elif leaves != sorted(leaves):
        diags.append("leaves: not in planar (depth-first) order")

    for v in tree.vertices:
        if v.colored and not tree.quilted:
            diags.append(f"coloring: vertex {v.id} colored in an uncolored tree")
        need = 2 if v.colored else 3
        if v.valency < need:
            kind = "colored" if v.colored else "uncolored"
            diags.append(f"stability: {kind} vertex {v.id} has valency {v.valency} < {need}")

    if tree.quilted:
        def count(vid):
            n = 0
            while True:
                n += byid[vid].colored
                if vid not in parents:
                    return n
                vid = parents[vid]

        for v in tree.vertices:
            for s in v.slots:
                if s.kind == "leaf":
                    n = count(v.id)
                    if n != 1:
                        diags.append(
                            f"coloring: path to leaf {s.ref} has {n} colored vertices")
    return diags


def is_valid(tree: AnyTree) -> bool:
    return not validate(tree)


# ---------------------------------------------------------------------------
# enumeration

def _compositions(n: int, parts_min: int):
    """Ordered compositions of n into at least ``parts_min`` positive parts."""
    if n == 0:
        if parts_min <= 0:
            yield ()
        return
    for first in range(1, n + 1):
        for rest in _compositions(n - first, parts_min - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def _plain(n: int) -> tuple:
    """Nested uncolored stable subtrees with n leaves; n = 1 is a bare leaf."""
    if n == 1:
        return (None,)
    out = []
    for comp in _compositions(n, 2):
        for kids in product(*(_plain(k) for k in comp)):
            out.append((False, kids))
    return tuple(out)


@lru_cache(maxsize=None)
def _quilted(n: int) -> tuple:
    """Nested colored stable trees with n leaves."""
    out = []
    # colored root: children are leaves or uncolored subtrees
    for comp in _compositions(n, 1):
        for kids in product(*(_plain(k) for k in comp)):
            out.append((True, kids))
    # uncolored root: every child must itself be colored-rooted-or-below
    for comp in _compositions(n, 2):
        for kids in product(*(_quilted(k) for k in comp)):
            out.append((False, kids))
    return tuple(out)


def enumerate_strata(d: int, colored: bool = True) -> list[AnyTree]:
    """All stable types with d leaves, in canonical order.

    The order is by stratum dimension (descending), then by bracket string.
    """
    if d < 1:
        raise TreeError("d must be positive")
    if not colored and d < 2:
        raise TreeError("uncolored trees need d >= 2")
    nodes = _quilted(d) if colored else _plain(d)
    trees = [from_nested(n, quilted=colored) for n in nodes]
    trees.sort(key=lambda t: (-stratum_dim(t), str(t)))
    return trees


# ---------------------------------------------------------------------------
# surgery

class CutResult(NamedTuple):
    lower: AnyTree
    upper: AnyTree
    leaf: int  # index of the new leaf of ``lower`` created by the cut


def _subtree_node(tree: AnyTree, vid: int) -> Node:
    v = tree.vertex(vid)
    return (v.colored, tuple(None if s.kind == "leaf" else _subtree_node(tree, s.ref)
                             for s in v.slots))


def _has_color(node: Node) -> bool:
    return node[0] or any(k is not None and _has_color(k) for k in node[1])


def _classify(node: Node, parent: AnyTree) -> bool:
    return parent.quilted and _has_color(node)


def cut_edge(tree: AnyTree, edge: Edge) -> CutResult:
    """Cut a finite edge.

    The edge becomes a new leaf of the lower tree (numbered in planar order)
    and the root edge of the upper tree.
    """
    if edge not in tree.edges:
        raise TreeError(f"edge {edge} not in tree")
    p, c = edge
    upper = _subtree_node(tree, c)

    def rebuild(vid):
        v = tree.vertex(vid)
        kids = []
        for s in v.slots:
            if s.kind == "leaf":
                kids.append(None)
            elif vid == p and s.ref == c:
                kids.append(None)
            else:
                kids.append(rebuild(s.ref))
        return (v.colored, tuple(kids))

    lower = rebuild(tree.root)
    lo = from_nested(lower, quilted=_classify(lower, tree))
    up = from_nested(upper, quilted=_classify(upper, tree))
    return CutResult(lo, up, _leaf_position(tree, p, c))


def _leaf_position(tree: AnyTree, p: int, c: int) -> int:
    """1-based planar position of the edge (p, c) among leaves after cutting it."""
    count = 0

    def walk(vid):
        nonlocal count
        for s in tree.vertex(vid).slots:
            if s.kind == "leaf":
                count += 1
            elif vid == p and s.ref == c:
                count += 1
                return True
            elif walk(s.ref):
                return True
        return False

    walk(tree.root)
    return count


def cut_edges(tree: AnyTree, edges) -> tuple[AnyTree, list[AnyTree]]:
    """Cut several edges that all leave one vertex-free layer at once.

    Returns the lower tree and the upper trees in planar order.  None of the
    edges may lie above another.
    """
    edges = list(edges)
    for e in edges:
        if e not in tree.edges:
            raise TreeError(f"edge {e} not in tree")
    cut = set(edges)
    uppers: list[Node] = []

    def rebuild(vid):
        v = tree.vertex(vid)
        kids = []
        for s in v.slots:
            if s.kind == "leaf":
                kids.append(None)
            elif (vid, s.ref) in cut:
                uppers.append(_subtree_node(tree, s.ref))
                kids.append(None)
            else:
                kids.append(rebuild(s.ref))
        return (v.colored, tuple(kids))

    lower = rebuild(tree.root)
    parents = tree.parent_map()
    for _, c in edges:
        x = c
        while x in parents:
            x = parents[x]
            if any(cc == x for _, cc in edges):
                raise TreeError("cut edges are nested")
    lo = from_nested(lower, quilted=_classify(lower, tree))
    return lo, [from_nested(u, quilted=_classify(u, tree)) for u in uppers]


def graft(lower: AnyTree, leaf_index: int, upper: AnyTree) -> AnyTree:
    """Attach ``upper`` by its root edge at leaf ``leaf_index`` of ``lower``."""
    if not 1 <= leaf_index <= lower.d:
        raise TreeError(f"leaf index {leaf_index} out of range 1..{lower.d}")
    up = upper.nested()
    count = 0

    def walk(n):
        nonlocal count
        kids = []
        for k in n[1]:
            if k is None:
                count += 1
                kids.append(up if count == leaf_index else None)
            else:
                kids.append(walk(k))
        return (n[0], tuple(kids))

    node = walk(lower.nested())
    quilted = lower.quilted or upper.quilted
    out = from_nested(node, quilted=quilted)
    if quilted:
        bad = [m for m in validate(out) if m.startswith("coloring")]
        if bad:
            raise TreeError("graft violates coloring: " + "; ".join(bad))
    return out


def graft_many(lower: AnyTree, uppers) -> AnyTree:
    """Attach ``uppers`` at every leaf of ``lower`` in planar order (Type 2 inverse).

    ``None`` entries leave the leaf in place.
    """
    uppers = list(uppers)
    if len(uppers) != lower.d:
        raise TreeError("need one upper tree per leaf")
    count = 0

    def walk(n):
        nonlocal count
        kids = []
        for k in n[1]:
            if k is None:
                u = uppers[count]
                count += 1
                kids.append(None if u is None else u.nested())
            else:
                kids.append(walk(k))
        return (n[0], tuple(kids))

    quilted = lower.quilted or any(u is not None and u.quilted for u in uppers)
    out = from_nested(walk(lower.nested()), quilted=quilted)
    if quilted:
        bad = [m for m in validate(out) if m.startswith("coloring")]
        if bad:
            raise TreeError("graft violates coloring: " + "; ".join(bad))
    return out


def contract_edge(tree: AnyTree, edge: Edge) -> AnyTree:
    """Collapse a finite edge, splicing slots in planar order.

    Contracting an uncolored parent into a colored child is only legal when
    every child of the parent is colored; admissibility then forces all of
    those sibling edges to zero together, so the whole colored layer merges
    into one colored vertex.
    """
    if edge not in tree.edges:
        raise TreeError(f"edge {edge} not in tree")
    p, c = edge
    pv, cv = tree.vertex(p), tree.vertex(c)
    if pv.colored and cv.colored:
        raise TreeError("illegal contraction: two colored vertices on one path")
    layer = not pv.colored and cv.colored
    if layer:
        kids = [s for s in pv.slots]
        if any(s.kind == "leaf" or not tree.vertex(s.ref).colored for s in kids):
            raise TreeError("illegal contraction: merged vertex cannot be colored "
                            "consistently")

    def build(vid):
        v = tree.vertex(vid)
        kids = []
        colored = v.colored
        for s in v.slots:
            if s.kind == "leaf":
                kids.append(None)
            elif vid == p and (s.ref == c or layer):
                sub = build(s.ref)
                kids.extend(sub[1])
                colored = colored or sub[0]
            else:
                kids.append(build(s.ref))
        return (colored, tuple(kids))

    return from_nested(build(tree.root), quilted=tree.quilted)


def legal_contractions(tree: AnyTree) -> list[Edge]:
    out = []
    for e in tree.edges:
        try:
            contract_edge(tree, e)
        except TreeError:
            continue
        out.append(e)
    return out


# ---------------------------------------------------------------------------
# classification

@dataclass(frozen=True)
class Type1:
    e: int
    i: int


@dataclass(frozen=True)
class Type2:
    parts: tuple[int, ...]


@dataclass(frozen=True)
class FloerIncoming:
    i: int


@dataclass(frozen=True)
class FloerOutgoing:
    pass


@dataclass(frozen=True)
class NotCodimOne:
    pass


FacetLabel = Union[Type1, Type2, FloerIncoming, FloerOutgoing, NotCodimOne]


def facet_label(tree: AnyTree, d: Optional[int] = None) -> FacetLabel:
    d = tree.d if d is None else d
    if tree.d != d or not tree.quilted:
        return NotCodimOne()
    root = tree.vertex(tree.root)
    kids = [tree.vertex(s.ref) for s in root.slots if s.kind == "child"]
    if len(tree.vertices) == 2 and root.colored and len(kids) == 1:
        up = kids[0]
        if not up.colored and all(s.kind == "leaf" for s in up.slots):
            pos = [k for k, s in enumerate(root.slots) if s.kind == "child"][0]
            return Type1(e=len(up.slots), i=pos)
    if (not root.colored and len(root.slots) >= 2
            and len(kids) == len(root.slots)
            and len(tree.vertices) == len(kids) + 1
            and all(k.colored and all(s.kind == "leaf" for s in k.slots) for k in kids)):
        return Type2(tuple(len(k.slots) for k in kids))
    return NotCodimOne()


def facet_tree(label: FacetLabel, d: int) -> ColoredRibbonTree:
    """The unique tree carrying a Type 1 or Type 2 label."""
    if isinstance(label, Type1):
        e, i = label.e, label.i
        if not (2 <= e and 0 <= i and i + e <= d):
            raise TreeError(f"bad Type1 label {label} for d={d}")
        kids = (None,) * i + ((False, (None,) * e),) + (None,) * (d - i - e)
        return from_nested((True, kids), quilted=True)
    if isinstance(label, Type2):
        if len(label.parts) < 2 or sum(label.parts) != d or min(label.parts) < 1:
            raise TreeError(f"bad Type2 label {label} for d={d}")
        return from_nested((False, tuple((True, (None,) * s) for s in label.parts)),
                           quilted=True)
    raise TreeError(f"{label} has no tree")


def stratum_dim(tree: AnyTree) -> int:
    return sum(v.valency - (2 if v.colored else 3) for v in tree.vertices)


def forget_colors(tree: AnyTree) -> RibbonTree:
    """Drop colors and splice out the bivalent vertices this leaves behind."""
    if tree.d < 2:
        raise TreeError("no stable uncolored tree with fewer than 2 leaves")

    def strip(n):
        kids = tuple(None if k is None else strip(k) for k in n[1])
        if len(kids) == 1:
            return kids[0]
        return (False, kids)

    return from_nested(strip(tree.nested()), quilted=False)


def top_stratum(d: int) -> ColoredRibbonTree:
    return from_nested((True, (None,) * d), quilted=True)


def corolla(d: int) -> RibbonTree:
    return from_nested((False, (None,) * d), quilted=False)
