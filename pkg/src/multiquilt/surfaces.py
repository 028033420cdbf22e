"""Quilted surfaces with strip-like ends, built from metric trees.

Coordinates.  Every piece of surface is a rectangle ``[s_lo, s_hi] x [0, 1]``
(``s_lo`` may be ``-inf``, ``s_hi`` may be ``+inf``).  The root end ``end:0``
is ``(-inf, 0]``, leaf ends ``end:k`` are ``[0, inf)`` and the rectangle of an
interior edge is ``[0, length]`` with the parent at ``s = 0``.  Rectangles are
named by the planar path (slot positions from the root) of the vertex above
them, e.g. ``edge:1.0``; vertex holes are ``disk:<path>``.

Vertex rule.  Around a vertex the incident strips ``f_0`` (towards the root)
and ``f_1..f_k`` (slots) are listed in ribbon order.  In vertex-local
coordinates the upper half ``[1/2, 1]`` of ``f_m`` is identified with the lower
half ``[0, 1/2]`` of ``f_{m+1}`` by ``t -> 1 - t``.  Vertex-local coordinates
agree with rectangle coordinates except on an incoming interior edge, where
``t`` is reversed; this is the same reversal used when two ends are truncated
and identified, so a glued neck and a directly built edge agree.

Seams.  Below the colored layer every strip carries two rails ``t = 1/3`` and
``t = 2/3``; at a colored vertex the rails of its incoming strip are closed by
a triangular cap occupying the last unit of the strip (or half the strip when
it is shorter than two units).  This piecewise-linear cap is a normalization.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

from . import trees as T
from .moduli import INF, MetricTree, ModuliError

INFTY = math.inf
RAIL_LOW = 1.0 / 3.0
RAIL_HIGH = 2.0 / 3.0
CAP_WIDTH = 1.0
ROUND = 9


class SurfaceError(ValueError):
    pass


@dataclass(frozen=True)
class Rect:
    id: str
    s_lo: float
    s_hi: float
    tag: str = "thin"  # strips are thin; vertex disks are the thick part


@dataclass(frozen=True)
class Arc:
    rect: str
    side: str  # "lo"/"hi" (vertical segment at s_lo / s_hi) or "top"/"bottom"
    lo: float
    hi: float


@dataclass(frozen=True)
class Ident:
    a: Arc
    b: Arc
    reverse: bool
    kind: str = "vertex"  # "vertex", "neck" or "attach"


@dataclass(frozen=True)
class Seam:
    rect: str
    points: tuple[tuple[float, float], ...]
    label: str = "C"
    branch: Optional[str] = None  # path of the colored vertex whose cap it carries


@dataclass(frozen=True)
class End:
    index: int
    rect: str
    direction: str  # "out" for the root end, "in" for inputs
    vertex: Optional[str] = None  # path of the vertex the end attaches to
    slot: Optional[int] = None


@dataclass(frozen=True)
class VertexDisk:
    id: str
    colored: bool
    sides: tuple[tuple[str, str], ...]  # (rect, side) in ribbon order
    tag: str = "thick"


@dataclass(frozen=True)
class QuiltSurface:
    rects: tuple[Rect, ...]
    idents: tuple[Ident, ...]
    seams: tuple[Seam, ...] = ()
    ends: tuple[End, ...] = ()
    disks: tuple[VertexDisk, ...] = ()
    consumed: tuple[int, ...] = ()  # boundary components already used by attach_strips

    def rect(self, rid: str) -> Rect:
        for r in self.rects:
            if r.id == rid:
                return r
        raise SurfaceError(f"no rectangle {rid}")

    def end(self, k: int) -> End:
        for e in self.ends:
            if e.index == k:
                return e
        raise SurfaceError(f"no end {k}")

    @property
    def d(self) -> int:
        return sum(1 for e in self.ends if e.direction == "in")

    def patches(self) -> list[dict]:
        return _patches(self)

    def thick_thin(self) -> dict[str, str]:
        out = {r.id: r.tag for r in self.rects}
        out.update({dk.id: dk.tag for dk in self.disks})
        return out


# ---------------------------------------------------------------------------
# small geometry helpers

def _path_str(path) -> str:
    return ".".join(str(p) for p in path)


def _flip_interval(lo, hi):
    return (1.0 - hi, 1.0 - lo)


def _vertex_paths(tree) -> dict[int, tuple]:
    out = {tree.root: ()}
    for v in tree._preorder():
        for pos, s in enumerate(v.slots):
            if s.kind == "child":
                out[s.ref] = out[v.id] + (pos,)
    return out


def _below_layer(tree) -> set[int]:
    """Uncolored vertices with a colored vertex above them."""
    out = set()

    def walk(vid):
        v = tree.vertex(vid)
        hit = v.colored
        for s in v.slots:
            if s.kind == "child":
                hit = walk(s.ref) or hit
        if hit and not v.colored:
            out.add(vid)
        return hit

    walk(tree.root)
    return out


def _cap_points(s_end: float, s_start: float, width: float):
    """Rails from ``s_start`` to the cap, cap, and back, for a cap ending at ``s_end``."""
    a = s_end - width
    m = s_end - width / 2.0
    return ((s_start, RAIL_LOW), (a, RAIL_LOW), (m, 0.5), (a, RAIL_HIGH), (s_start, RAIL_HIGH))


def _rails(rid: str, s_lo: float, s_hi: float):
    return (
        Seam(rid, ((s_lo, RAIL_LOW), (s_hi, RAIL_LOW))),
        Seam(rid, ((s_lo, RAIL_HIGH), (s_hi, RAIL_HIGH))),
    )


# ---------------------------------------------------------------------------
# direct construction

def _finite_lengths(mt: MetricTree):
    lam = mt.lam
    for e, v in lam.items():
        if v is INF:
            raise SurfaceError("infinite interior length: glue or cut first")
    return lam


def _build(mt: MetricTree, seam_mode: str) -> QuiltSurface:
    """seam_mode: "none", "colored" (quilted seams) or "inner" (rails on every strip)."""
    tree = mt.tree
    lam = _finite_lengths(mt)
    paths = _vertex_paths(tree)
    parents = tree.parent_map()
    rects: list[Rect] = [Rect("end:0", -INFTY, 0.0)]
    ends: list[End] = [End(0, "end:0", "out", "", None)]
    idents: list[Ident] = []
    disks: list[VertexDisk] = []
    seams: list[Seam] = []
    below = _below_layer(tree) if seam_mode == "colored" else set()

    def strip_into(vid):
        """(rect id, s_lo, s_hi) of the strip whose upper vertex is ``vid``."""
        if vid == tree.root:
            return "end:0", -INFTY, 0.0
        p = parents[vid]
        return "edge:" + _path_str(paths[vid]), 0.0, float(lam[(p, vid)])

    for v in tree._preorder():
        if v.id != tree.root:
            rid, lo, hi = strip_into(v.id)
            rects.append(Rect(rid, lo, hi))
        for pos, s in enumerate(v.slots):
            if s.kind == "leaf":
                rects.append(Rect(f"end:{s.ref}", 0.0, INFTY))
                ends.append(End(s.ref, f"end:{s.ref}", "in", _path_str(paths[v.id]), pos))

    # seams
    for v in tree.vertices:
        rid, lo, hi = strip_into(v.id)
        if seam_mode == "inner" or v.id in below:
            seams.extend(_rails(rid, lo, hi))
        elif seam_mode == "colored" and v.colored:
            width = CAP_WIDTH if lo == -INFTY else min(CAP_WIDTH, (hi - lo) / 2.0)
            seams.append(Seam(rid, _cap_points(hi, lo, width), "C", _path_str(paths[v.id])))
    if seam_mode == "inner":
        for v in tree.vertices:
            for s in v.slots:
                if s.kind == "leaf":
                    seams.extend(_rails(f"end:{s.ref}", 0.0, INFTY))

    # vertex stars
    for v in tree.vertices:
        star = []  # (rect, side, reversed-local-coordinates)
        rid, lo, hi = strip_into(v.id)
        star.append((rid, "hi", v.id != tree.root))
        for s in v.slots:
            if s.kind == "leaf":
                star.append((f"end:{s.ref}", "lo", False))
            else:
                star.append(("edge:" + _path_str(paths[s.ref]), "lo", False))
        idents.extend(_star_idents(star))
        if len(star) >= 3:
            disks.append(VertexDisk("disk:" + _path_str(paths[v.id]), v.colored,
                                    tuple((r, sd) for r, sd, _ in star)))

    surf = QuiltSurface(tuple(rects), tuple(idents), tuple(seams), tuple(ends), tuple(disks))
    return canonical(surf)


def _local_arc(entry, lo, hi) -> tuple[Arc, bool]:
    rid, side, flipped = entry
    if flipped:
        lo, hi = _flip_interval(lo, hi)
    return Arc(rid, side, lo, hi), flipped


def _star_idents(star) -> list[Ident]:
    n = len(star)
    if n == 2:
        a, fa = _local_arc(star[0], 0.0, 1.0)
        b, fb = _local_arc(star[1], 0.0, 1.0)
        return [Ident(a, b, not (fa ^ fb), "vertex")]
    out = []
    for m in range(n):
        a, fa = _local_arc(star[m], 0.5, 1.0)
        b, fb = _local_arc(star[(m + 1) % n], 0.0, 0.5)
        out.append(Ident(a, b, not (fa ^ fb), "vertex"))
    return out


def surface_from_tree(mt: MetricTree, inner: bool = False) -> QuiltSurface:
    """Strip thickening of a metric tree.

    With ``inner=True`` every strip carries the two seam rails; this is how
    the uncolored root component of a Type 2 gluing sits inside the quilt.
    """
    if mt.tree.quilted and mt.tree.colored:
        raise SurfaceError("use surface_from_colored_tree for colored trees")
    return _build(mt, "inner" if inner else "none")


def surface_from_colored_tree(mt: MetricTree) -> QuiltSurface:
    from .moduli import is_admissible

    if not is_admissible(mt):
        raise SurfaceError("tree is not admissible")
    return _build(mt, "colored")


def half_strip(direction: str) -> QuiltSurface:
    """The standard strip-like end: ``[0, inf)`` (direction "in") or ``(-inf, 0]`` ("out")."""
    if direction == "in":
        return QuiltSurface((Rect("end:1", 0.0, INFTY),), (), (), (End(1, "end:1", "in"),))
    if direction == "out":
        return QuiltSurface((Rect("end:0", -INFTY, 0.0),), (), (), (End(0, "end:0", "out"),))
    raise SurfaceError("direction must be 'in' or 'out'")


def standard_strip() -> QuiltSurface:
    """The full strip R x [0, 1] with its two ends."""
    return QuiltSurface((Rect("strip", -INFTY, INFTY),), (), (),
                        (End(0, "strip", "out"), End(1, "strip", "in")))


# ---------------------------------------------------------------------------
# truncation and identification

def _clip_polyline(points, s_lo, s_hi):
    """Clip a polyline to ``s_lo <= s <= s_hi``; returns a list of polylines."""
    pieces = []
    cur: list = []
    for (s0, t0), (s1, t1) in zip(points, points[1:]):
        seg = _clip_segment(s0, t0, s1, t1, s_lo, s_hi)
        if seg is None:
            if cur:
                pieces.append(cur)
                cur = []
            continue
        p, q = seg
        if cur and _same(cur[-1], p):
            cur.append(q)
        else:
            if cur:
                pieces.append(cur)
            cur = [p, q]
    if cur:
        pieces.append(cur)
    return [tuple(pc) for pc in pieces]


def _clip_segment(s0, t0, s1, t1, lo, hi):
    if max(s0, s1) < lo or min(s0, s1) > hi:
        return None

    def at(s):
        if math.isinf(s0) or math.isinf(s1) or s1 == s0:
            return t0 if not math.isinf(s0) or math.isinf(s1) else t1
        return t0 + (t1 - t0) * (s - s0) / (s1 - s0)

    a = (min(max(s0, lo), hi), None)
    b = (min(max(s1, lo), hi), None)
    pa = (a[0], t0 if a[0] == s0 else at(a[0]))
    pb = (b[0], t1 if b[0] == s1 else at(b[0]))
    if _same(pa, pb) and not (s0 == s1):
        return None
    return pa, pb


def _same(p, q, tol=1e-9):
    return all((a == b) or abs(a - b) <= tol for a, b in zip(p, q))


def truncate_and_identify(sA: QuiltSurface, endA: int, sB: QuiltSurface, endB: int,
                          R: float) -> QuiltSurface:
    """Truncate the input end ``endA`` of ``sA`` and the output end ``endB`` of ``sB``
    at length ``R`` and identify ``eps_A(R, t) ~ eps_B(-R, 1 - t)``.

    The result has a finite neck of length ``2R`` made of two rectangles and
    one identification tagged ``neck``; its ends are renumbered in planar order.
    """
    if R <= 0:
        raise SurfaceError("truncation length must be positive")
    ea, eb = sA.end(endA), sB.end(endB)
    if ea.direction != "in" or eb.direction != "out":
        raise SurfaceError("glue an input end of the first surface to the output end of the second")
    ra, rb = sA.rect(ea.rect), sB.rect(eb.rect)
    if not (ra.s_lo == 0.0 and ra.s_hi == INFTY) or not (rb.s_hi == 0.0 and rb.s_lo == -INFTY):
        raise SurfaceError("truncation exceeding a finite rectangle")
    def cap_points(seams, rid):
        # rails on an end run to infinity; any other finite vertex belongs to a cap
        return [p for sm in seams if sm.rect == rid for p in sm.points
                if not math.isinf(p[0]) and p[0] != 0.0]

    if any(p[0] < -R for p in cap_points(sB.seams, rb.id)) or \
            any(p[0] > R for p in cap_points(sA.seams, ra.id)):
        raise SurfaceError("truncation cuts through a seam cap")

    dB = sB.d
    if ea.vertex is not None and eb.vertex is not None:
        prefix = ((ea.vertex + ".") if ea.vertex else "") + str(ea.slot)
        lo_id, hi_id = f"edge:{prefix}#lo", f"edge:{prefix}#hi"
    else:
        prefix = None
        lo_id, hi_id = "neck#lo", "neck#hi"

    def rename_b(rid: str) -> str:
        if rid == rb.id:
            return hi_id
        if rid.startswith("end:"):
            return f"end:{int(rid[4:]) + endA - 1}"
        if prefix is not None:
            kind, _, path = rid.partition(":")
            path = path.split("#")
            base = prefix + ("." + path[0] if path[0] else "")
            return f"{kind}:{base}" + ("#" + path[1] if len(path) > 1 else "")
        return "B." + rid

    def rename_a(rid: str) -> str:
        if rid == ra.id:
            return lo_id
        if rid.startswith("end:"):
            k = int(rid[4:])
            if k > endA:
                return f"end:{k + dB - 1}"
        return rid

    def rename_path_b(path):
        if path is None or prefix is None:
            return path
        return prefix + ("." + path if path else "")

    rects = []
    for r in sA.rects:
        if r.id == ra.id:
            rects.append(Rect(lo_id, 0.0, R, "thin"))
        else:
            rects.append(replace(r, id=rename_a(r.id)))
    for r in sB.rects:
        if r.id == rb.id:
            rects.append(Rect(hi_id, -R, 0.0, "thin"))
        else:
            rects.append(replace(r, id=rename_b(r.id)))

    def ren_arc(arc, fn):
        return replace(arc, rect=fn(arc.rect))

    idents = [Ident(ren_arc(i.a, rename_a), ren_arc(i.b, rename_a), i.reverse, i.kind)
              for i in sA.idents]
    idents += [Ident(ren_arc(i.a, rename_b), ren_arc(i.b, rename_b), i.reverse, i.kind)
               for i in sB.idents]
    idents.append(Ident(Arc(lo_id, "hi", 0.0, 1.0), Arc(hi_id, "lo", 0.0, 1.0), True, "neck"))

    seams = []
    for sm in sA.seams:
        if sm.rect == ra.id:
            for pc in _clip_polyline(sm.points, 0.0, R):
                seams.append(Seam(lo_id, pc, sm.label, sm.branch))
        else:
            seams.append(replace(sm, rect=rename_a(sm.rect)))
    for sm in sB.seams:
        br = rename_path_b(sm.branch)
        if sm.rect == rb.id:
            for pc in _clip_polyline(sm.points, -R, 0.0):
                seams.append(Seam(hi_id, pc, sm.label, br))
        else:
            seams.append(Seam(rename_b(sm.rect), sm.points, sm.label, br))

    ends = []
    for e in sA.ends:
        if e.index == endA:
            continue
        idx = e.index + dB - 1 if e.index > endA else e.index
        ends.append(replace(e, index=idx, rect=rename_a(e.rect)))
    for e in sB.ends:
        if e.index == endB:
            continue
        ends.append(replace(e, index=e.index + endA - 1, rect=rename_b(e.rect),
                            vertex=rename_path_b(e.vertex)))
    ends.sort(key=lambda e: e.index)

    disks = [replace(dk, sides=tuple((rename_a(r), s) for r, s in dk.sides)) for dk in sA.disks]
    for dk in sB.disks:
        disks.append(VertexDisk(rename_b(dk.id), dk.colored,
                                tuple((rename_b(r), s) for r, s in dk.sides), dk.tag))
    return QuiltSurface(tuple(rects), tuple(idents), tuple(seams), tuple(ends), tuple(disks))


# ---------------------------------------------------------------------------
# canonical form

def _merge_necks(surf: QuiltSurface) -> QuiltSurface:
    while True:
        neck = next((i for i in surf.idents if i.kind == "neck"), None)
        if neck is None:
            return surf
        surf = _merge_one(surf, neck)


def _merge_one(surf: QuiltSurface, neck: Ident) -> QuiltSurface:
    ra, rb = surf.rect(neck.a.rect), surf.rect(neck.b.rect)
    if neck.a.side != "hi" or neck.b.side != "lo":
        raise SurfaceError("malformed neck")
    new_id = ra.id.split("#")[0] if "#" in ra.id else ra.id + "+" + rb.id
    shift = ra.s_hi - rb.s_lo
    flip = neck.reverse
    length = rb.s_hi - rb.s_lo

    def map_b_point(s, t):
        return (s + shift, 1.0 - t if flip else t)

    def map_arc(arc: Arc) -> tuple[Arc, bool]:
        if arc.rect == ra.id:
            return replace(arc, rect=new_id), False
        if arc.rect != rb.id:
            return arc, False
        if arc.side in ("lo", "hi"):
            lo, hi = (_flip_interval(arc.lo, arc.hi) if flip else (arc.lo, arc.hi))
            return Arc(new_id, arc.side, lo, hi), flip
        side = arc.side
        if flip:
            side = "top" if side == "bottom" else "bottom"
        return Arc(new_id, side, arc.lo + shift, arc.hi + shift), False

    rects = []
    for r in surf.rects:
        if r.id == ra.id:
            rects.append(Rect(new_id, ra.s_lo, ra.s_hi + length, "thin"))
        elif r.id != rb.id:
            rects.append(r)
    idents = []
    for i in surf.idents:
        if i is neck:
            continue
        a, fa = map_arc(i.a)
        b, fb = map_arc(i.b)
        idents.append(Ident(a, b, i.reverse ^ fa ^ fb, i.kind))
    seams = []
    for sm in surf.seams:
        if sm.rect == ra.id:
            seams.append(replace(sm, rect=new_id))
        elif sm.rect == rb.id:
            seams.append(replace(sm, rect=new_id,
                                 points=tuple(map_b_point(s, t) for s, t in sm.points)))
        else:
            seams.append(sm)
    ends = [replace(e, rect=new_id) if e.rect in (ra.id, rb.id) else e for e in surf.ends]
    disks = []
    for dk in surf.disks:
        disks.append(replace(dk, sides=tuple(((new_id if r in (ra.id, rb.id) else r), s)
                                            for r, s in dk.sides)))
    return QuiltSurface(tuple(rects), tuple(idents), tuple(seams), tuple(ends), tuple(disks),
                        surf.consumed)


def _rnd(x: float) -> float:
    if math.isinf(x):
        return x
    y = round(x, ROUND)
    return 0.0 if y == 0 else y


def _simplify(points):
    pts = [tuple(_rnd(c) for c in p) for p in points]
    out = []
    for p in pts:
        if out and out[-1] == p:
            continue
        out.append(p)
    changed = True
    while changed and len(out) > 2:
        changed = False
        for k in range(1, len(out) - 1):
            a, b, c = out[k - 1], out[k], out[k + 1]
            if a[1] == b[1] == c[1] and (a[0] <= b[0] <= c[0] or a[0] >= b[0] >= c[0]):
                del out[k]
                changed = True
                break
    return tuple(out)


def _join_seams(seams: list[Seam]) -> list[Seam]:
    pool = [list(s.points) for s in seams]
    meta = [(s.rect, s.label, s.branch) for s in seams]
    merged = True
    while merged:
        merged = False
        for i in range(len(pool)):
            for j in range(len(pool)):
                if i == j or meta[i][:2] != meta[j][:2]:
                    continue
                a, b = pool[i], pool[j]
                joined = None
                if _same(a[-1], b[0]):
                    joined = a + b[1:]
                elif _same(a[-1], b[-1]):
                    joined = a + b[::-1][1:]
                elif _same(a[0], b[0]):
                    joined = a[::-1] + b[1:]
                elif _same(a[0], b[-1]):
                    joined = b + a[1:]
                if joined is not None:
                    pool[i] = joined
                    meta[i] = (meta[i][0], meta[i][1], meta[i][2] or meta[j][2])
                    del pool[j], meta[j]
                    merged = True
                    break
            if merged:
                break
    out = []
    for pts, (rect, label, branch) in zip(pool, meta):
        pts = _simplify(pts)
        if pts[0] > pts[-1]:
            pts = pts[::-1]
        out.append(Seam(rect, pts, label, branch))
    return out


def _canon_arc(arc: Arc) -> Arc:
    return Arc(arc.rect, arc.side, _rnd(arc.lo), _rnd(arc.hi))


def _canon_ident(i: Ident) -> Ident:
    a, b = _canon_arc(i.a), _canon_arc(i.b)
    if (b.rect, b.side, b.lo) < (a.rect, a.side, a.lo):
        a, b = b, a
    return Ident(a, b, i.reverse, i.kind)


def _merge_idents(idents: list[Ident]) -> list[Ident]:
    """Fuse identifications between the same two sides that together cover whole sides."""
    out = list(idents)
    changed = True
    while changed:
        changed = False
        for x in range(len(out)):
            for y in range(x + 1, len(out)):
                i, j = out[x], out[y]
                if (i.kind, i.reverse) != (j.kind, j.reverse):
                    continue
                if (i.a.rect, i.a.side, i.b.rect, i.b.side) != (j.a.rect, j.a.side, j.b.rect, j.b.side):
                    continue
                fused = _fuse(i, j) or _fuse(j, i)
                if fused:
                    out[x] = fused
                    del out[y]
                    changed = True
                    break
            if changed:
                break
    return out


def _fuse(i: Ident, j: Ident) -> Optional[Ident]:
    if i.a.hi != j.a.lo:
        return None
    if not i.reverse and i.b.hi == j.b.lo:
        return Ident(Arc(i.a.rect, i.a.side, i.a.lo, j.a.hi),
                     Arc(i.b.rect, i.b.side, i.b.lo, j.b.hi), False, i.kind)
    if i.reverse and j.b.hi == i.b.lo:
        return Ident(Arc(i.a.rect, i.a.side, i.a.lo, j.a.hi),
                     Arc(i.b.rect, i.b.side, j.b.lo, i.b.hi), True, i.kind)
    return None


def canonical(surf: QuiltSurface) -> QuiltSurface:
    """Merge glued necks into single rectangles and sort every record."""
    surf = _merge_necks(surf)
    rects = tuple(sorted((Rect(r.id, _rnd(r.s_lo), _rnd(r.s_hi), r.tag) for r in surf.rects),
                         key=lambda r: r.id))
    idents = _merge_idents([_canon_ident(i) for i in surf.idents])
    idents = tuple(sorted((_canon_ident(i) for i in idents), key=_ident_key))
    seams = tuple(sorted(_join_seams(list(surf.seams)),
                         key=lambda s: (s.rect, s.label, s.points)))
    ends = tuple(sorted(surf.ends, key=lambda e: e.index))
    disks = tuple(sorted(surf.disks, key=lambda dk: dk.id))
    return QuiltSurface(rects, idents, seams, ends, disks, tuple(sorted(surf.consumed)))


def _ident_key(i: Ident):
    return (i.a.rect, i.a.side, i.a.lo, i.a.hi, i.b.rect, i.b.side, i.b.lo, i.kind)


# ---------------------------------------------------------------------------
# compositions used by the gluing compatibility check

def glued_type1_surface(r1: MetricTree, r2: MetricTree, i: int, R: float) -> QuiltSurface:
    """Surface of a Type 1 gluing built by truncating and identifying the pieces."""
    return canonical(truncate_and_identify(surface_from_colored_tree(r1), i + 1,
                                           surface_from_tree(r2), 0, R / 2.0))


def glued_type2_surface(r0: MetricTree, parts, lengths) -> QuiltSurface:
    """Surface of a Type 2 gluing with neck lengths ``lengths`` built piece by piece."""
    surf = surface_from_tree(r0, inner=True)
    for j in range(len(parts), 0, -1):
        surf = truncate_and_identify(surf, j, surface_from_colored_tree(parts[j - 1]), 0,
                                     lengths[j - 1] / 2.0)
    return canonical(surf)


# ---------------------------------------------------------------------------
# boundary components and strip attaching

def _corner_image(surf: QuiltSurface, rid: str, side: str, t: float):
    """Where the corner point ``t`` of the vertical side ``side`` of ``rid`` is glued."""
    for i in surf.idents:
        if i.kind == "attach":
            continue
        for a, b in ((i.a, i.b), (i.b, i.a)):
            if a.rect == rid and a.side == side and a.lo - 1e-12 <= t <= a.hi + 1e-12:
                u = (t - a.lo) / (a.hi - a.lo)
                tt = b.hi - u * (b.hi - b.lo) if i.reverse else b.lo + u * (b.hi - b.lo)
                return b.rect, b.side, round(tt, 12)
    return None


def boundary_components(surf: QuiltSurface) -> list[list[tuple]]:
    """True boundary components as lists of (rect, side, s_from, s_to) segments.

    Components are discovered by walking inward from the top side of each end
    in order, then from bottom sides; for surfaces built from trees component
    ``k`` runs from end ``k`` to end ``k + 1`` (cyclically).
    """
    seen: set = set()
    comps = []
    for horiz in ("top", "bottom"):
        for e in sorted(surf.ends, key=lambda e: e.index):
            comp = _walk(surf, e, horiz)
            key = frozenset((r, sd, min(a, b), max(a, b)) for r, sd, a, b in comp)
            if key in seen:
                continue
            seen.add(key)
            comps.append(comp)
    return comps


def _walk(surf: QuiltSurface, end: End, horiz: str):
    rect = surf.rect(end.rect)
    inward = +1 if end.direction == "out" else -1
    if rect.s_lo == -INFTY and rect.s_hi == INFTY:
        inward = +1 if end.direction == "out" else -1
    start = -INFTY if inward > 0 else INFTY
    segs = []
    rid, side, s_from, direction = rect.id, horiz, start, inward
    for _ in range(10000):
        r = surf.rect(rid)
        s_to = r.s_hi if direction > 0 else r.s_lo
        segs.append((rid, side, s_from, s_to))
        if math.isinf(s_to):
            return segs
        vside = "hi" if direction > 0 else "lo"
        t = 1.0 if side == "top" else 0.0
        img = _corner_image(surf, rid, vside, t)
        if img is None:
            # free vertical segment: walk across it and come back along the other side
            segs.append((rid, vside, t, 1.0 - t))
            side = "bottom" if side == "top" else "top"
            s_from, direction = s_to, -direction
            continue
        rid, vs, tt = img
        nr = surf.rect(rid)
        side = "top" if tt == 1.0 else "bottom"
        s_from = nr.s_hi if vs == "hi" else nr.s_lo
        direction = -1 if vs == "hi" else +1
    raise SurfaceError("boundary walk did not terminate")


def attach_strips(surf: QuiltSurface, component: int, n: int) -> QuiltSurface:
    """Attach ``n`` unit strips along a true boundary component.

    The attached strips use an arclength coordinate along the component with
    the first corner of the component (or ``s = 0`` on a corner-free side)
    identified with 0.
    """
    if n < 0:
        raise SurfaceError("n must be non-negative")
    comps = boundary_components(surf)
    if not 0 <= component < len(comps):
        raise SurfaceError(f"no boundary component {component}")
    if component in surf.consumed:
        raise SurfaceError("component already consumed by a seam")
    if n == 0:
        return surf
    comp = comps[component]
    # arclength parametrization; the first corner (or s = 0 on a bare side) is 0
    sigma = []
    pos = 0.0
    for rid, side, a, b in comp:
        if math.isinf(a) and math.isinf(b):
            sigma.append((-INFTY, INFTY))
        elif math.isinf(a):
            sigma.append((-INFTY, pos))
        elif math.isinf(b):
            sigma.append((pos, INFTY))
        else:
            ln = abs(b - a)
            sigma.append((pos, pos + ln))
            pos += ln
    rects = list(surf.rects)
    idents = list(surf.idents)
    seams = list(surf.seams)
    for m in range(1, n + 1):
        for j, ((rid, side, a, b), (lo, hi)) in enumerate(zip(comp, sigma)):
            new_id = f"attach:{component}.{m}.{j}"
            lo, hi = _rnd(lo), _rnd(hi)
            rects.append(Rect(new_id, lo, hi, "thin"))
            if m == 1:
                base = Arc(rid, side, min(a, b), max(a, b))
                rev = b < a
            else:
                base = Arc(f"attach:{component}.{m - 1}.{j}", "top", lo, hi)
                rev = False
            idents.append(Ident(base, Arc(new_id, "bottom", lo, hi), rev, "attach"))
            seams.append(Seam(new_id, ((lo, 0.0), (hi, 0.0)), f"attach:{component}.{m}"))
    return replace(surf, rects=tuple(rects), idents=tuple(idents), seams=tuple(seams),
                   consumed=tuple(sorted(surf.consumed + (component,))))


# ---------------------------------------------------------------------------
# patches

def _patches(surf: QuiltSurface) -> list[dict]:
    attached = {}
    for r in surf.rects:
        if r.id.startswith("attach:"):
            comp, m, _ = r.id[7:].split(".")
            attached.setdefault((int(comp), int(m)), []).append(r)
    base = [r for r in surf.rects if not r.id.startswith("attach:")]
    quilt_seams = [s for s in surf.seams if s.label == "C"]
    out = []
    if not quilt_seams:
        out.append({"id": "P0", "target": "M0",
                    "rectangles": [[r.id, r.s_lo, r.s_hi, 0.0, 1.0] for r in base]})
    else:
        inner = []
        outer = []
        railed = {}
        for s in quilt_seams:
            ss = [p[0] for p in s.points]
            lo, hi = min(ss), max(ss)
            railed.setdefault(s.rect, []).append((lo, hi))
        for r in base:
            if r.id in railed:
                lo = min(a for a, _ in railed[r.id])
                hi = max(b for _, b in railed[r.id])
                inner.append([r.id, lo, hi, RAIL_LOW, RAIL_HIGH])
                outer.append([r.id, r.s_lo, r.s_hi, 0.0, RAIL_LOW])
                outer.append([r.id, r.s_lo, r.s_hi, RAIL_HIGH, 1.0])
                if hi < r.s_hi:
                    outer.append([r.id, hi, r.s_hi, RAIL_LOW, RAIL_HIGH])
            else:
                outer.append([r.id, r.s_lo, r.s_hi, 0.0, 1.0])
        out.append({"id": "P0", "target": "M0", "rectangles": outer})
        out.append({"id": "P1", "target": "M1", "rectangles": inner})
    for (comp, m), rs in sorted(attached.items()):
        out.append({"id": f"A{comp}.{m}", "target": f"A{m}",
                    "rectangles": [[r.id, r.s_lo, r.s_hi, 0.0, 1.0] for r in rs]})
    return out


# ---------------------------------------------------------------------------
# folding

@dataclass(frozen=True)
class FoldMap:
    """Quilted strip with ``n`` unit patches <-> one strip in the n-fold product.

    Factor ``m`` (1-based) keeps ``t`` for odd ``m`` and uses ``1 - t`` for
    even ``m``.
    """

    n: int

    def reflects(self, m: int) -> bool:
        if not 1 <= m <= self.n:
            raise SurfaceError(f"factor {m} out of range 1..{self.n}")
        return m % 2 == 0

    def to_product(self, m: int, s: float, t: float) -> tuple[float, float]:
        return (s, 1.0 - t) if self.reflects(m) else (s, t)

    def from_product(self, m: int, s: float, t: float) -> tuple[float, float]:
        return self.to_product(m, s, t)

    def fold_arrays(self, arrays):
        """Per-patch grids indexed [s, t] -> list of grids in product coordinates."""
        if len(arrays) != self.n:
            raise SurfaceError("need one array per patch")
        return [a[:, ::-1] if self.reflects(m) else a
                for m, a in enumerate(arrays, start=1)]

    unfold_arrays = fold_arrays


def fold_quilted_strip(n: int) -> FoldMap:
    if n < 1:
        raise SurfaceError("need at least one patch")
    return FoldMap(n)


# ---------------------------------------------------------------------------
# export

def _num(x: float):
    if x == INFTY:
        return "inf"
    if x == -INFTY:
        return "-inf"
    return x


def _unnum(x):
    if x == "inf":
        return INFTY
    if x == "-inf":
        return -INFTY
    return float(x)


def to_dict(surf: QuiltSurface) -> dict:
    return {
        "rects": [{"id": r.id, "s": [_num(r.s_lo), _num(r.s_hi)], "t": [0.0, 1.0], "tag": r.tag}
                  for r in surf.rects],
        "identifications": [
            {"a": [i.a.rect, i.a.side, _num(i.a.lo), _num(i.a.hi)],
             "b": [i.b.rect, i.b.side, _num(i.b.lo), _num(i.b.hi)],
             "reverse": i.reverse, "kind": i.kind}
            for i in surf.idents],
        "seams": [{"rect": s.rect, "points": [[_num(a), b] for a, b in s.points],
                   "label": s.label, "branch": s.branch} for s in surf.seams],
        "ends": [{"index": e.index, "rect": e.rect, "direction": e.direction,
                  "vertex": e.vertex, "slot": e.slot} for e in surf.ends],
        "disks": [{"id": dk.id, "colored": dk.colored, "sides": [list(x) for x in dk.sides],
                   "tag": dk.tag} for dk in surf.disks],
        "consumed": list(surf.consumed),
        "patches": _patches_json(surf),
    }


def _patches_json(surf):
    return [{**p, "rectangles": [[r[0]] + [_num(x) for x in r[1:]] for r in p["rectangles"]]}
            for p in surf.patches()]


def from_dict(data: dict) -> QuiltSurface:
    def arc(x):
        return Arc(x[0], x[1], _unnum(x[2]), _unnum(x[3]))

    return QuiltSurface(
        tuple(Rect(r["id"], _unnum(r["s"][0]), _unnum(r["s"][1]), r["tag"]) for r in data["rects"]),
        tuple(Ident(arc(i["a"]), arc(i["b"]), bool(i["reverse"]), i["kind"])
              for i in data["identifications"]),
        tuple(Seam(s["rect"], tuple((_unnum(a), float(b)) for a, b in s["points"]),
                   s["label"], s["branch"]) for s in data["seams"]),
        tuple(End(e["index"], e["rect"], e["direction"], e["vertex"], e["slot"])
              for e in data["ends"]),
        tuple(VertexDisk(dk["id"], dk["colored"], tuple(tuple(x) for x in dk["sides"]), dk["tag"])
              for dk in data["disks"]),
        tuple(data.get("consumed", [])),
    )


def export(surf: QuiltSurface, fmt: str = "json", clip: float = 10.0) -> bytes:
    if fmt == "json":
        return (json.dumps(to_dict(surf), indent=1) + "\n").encode()
    if fmt == "svg":
        return _svg(surf, clip).encode()
    raise SurfaceError(f"unknown format {fmt!r}")


def load(data: bytes) -> QuiltSurface:
    return from_dict(json.loads(data.decode()))


def _svg(surf: QuiltSurface, clip: float) -> str:
    scale, lane, gap = 20.0, 20.0, 14.0
    rows = {r.id: k for k, r in enumerate(surf.rects)}

    def cl(s):
        return max(-clip, min(clip, s))

    xs = [cl(r.s_lo) for r in surf.rects] + [cl(r.s_hi) for r in surf.rects] + [0.0]
    x0 = min(xs)
    width = (max(xs) - x0) * scale + 80
    height = len(surf.rects) * (lane + gap) + 40

    def X(s):
        return 40 + (cl(s) - x0) * scale

    def Y(rid, t):
        return 20 + rows[rid] * (lane + gap) + (1.0 - t) * lane

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.1f}" '
        f'height="{height:.1f}">',
    ]
    for r in surf.rects:
        fill = "#dde6f0" if r.tag == "thin" else "#f0e0c0"
        out.append(f'<rect class="strip {r.tag}" data-id="{r.id}" x="{X(r.s_lo):.2f}" '
                   f'y="{Y(r.id, 1.0):.2f}" width="{X(r.s_hi) - X(r.s_lo):.2f}" '
                   f'height="{lane:.2f}" fill="{fill}" stroke="black" stroke-width="0.5"/>')
        out.append(f'<text x="{X(r.s_lo) + 2:.2f}" y="{Y(r.id, 1.0) - 2:.2f}" '
                   f'font-size="8">{r.id}</text>')
    for i in surf.idents:
        pa, pb = _arc_mid(i.a, surf, X, Y), _arc_mid(i.b, surf, X, Y)
        out.append(f'<line class="ident {i.kind}" x1="{pa[0]:.2f}" y1="{pa[1]:.2f}" '
                   f'x2="{pb[0]:.2f}" y2="{pb[1]:.2f}" stroke="gray" stroke-dasharray="2,2"/>')
    branches: dict = {}
    rails = []
    for s in surf.seams:
        pts = " ".join(f"{X(a):.2f},{Y(s.rect, b):.2f}" for a, b in s.points)
        line = (f'<polyline class="seam" data-label="{s.label}" points="{pts}" fill="none" '
                f'stroke="crimson" stroke-width="1.5"/>')
        if s.branch is not None:
            branches.setdefault(s.branch, []).append(line)
        else:
            rails.append(line)
    for b in sorted(branches):
        out.append(f'<g class="seam-branch" data-vertex="{b}">')
        out.extend(branches[b])
        out.append("</g>")
    if rails:
        out.append('<g class="seam-rails">')
        out.extend(rails)
        out.append("</g>")
    for e in surf.ends:
        r = surf.rect(e.rect)
        s_far = r.s_lo if e.direction == "out" else r.s_hi
        x = X(s_far)
        y = Y(r.id, 0.5)
        dx = -8 if e.direction == "out" else 8
        out.append(f'<path class="end" data-index="{e.index}" d="M{x:.2f},{y:.2f} l{dx},0" '
                   f'stroke="black" marker-end="none"/>')
    for dk in surf.disks:
        out.append(f'<desc class="vertex-disk {dk.tag}">{dk.id}</desc>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _arc_mid(arc: Arc, surf, X, Y):
    r = surf.rect(arc.rect)
    if arc.side in ("lo", "hi"):
        s = r.s_lo if arc.side == "lo" else r.s_hi
        return X(s), Y(r.id, (arc.lo + arc.hi) / 2)
    lo, hi = arc.lo, arc.hi
    s = (max(lo, -1e6) + min(hi, 1e6)) / 2
    return X(s), Y(r.id, 1.0 if arc.side == "top" else 0.0)
