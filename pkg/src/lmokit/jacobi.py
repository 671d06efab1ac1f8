"""Linear combinations of Jacobi diagrams in a fixed context, the categorical
operations on them, and the quotient by the STU/AS/IHX relations at a bounded
degree.

A context is (skeleton, number of circles, color names).  Vectors are finite
sums of canonical diagram encodings with exact rational coefficients,
truncated at a degree bound: every operation drops terms above the bound.

The quotient is computed per slot (context, degree): starting from the
diagrams that actually occur, the slot is saturated under the local moves
(AS flip, STU slide/contract/expand, IHX), every relation instance found on
the way is row-reduced, and a vector's normal form is its residue.  Because
the saturation closes each relation instance entirely, a vector reduces to
zero exactly when it lies in the full relation span of its slot.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from . import brauer
from .brauer import EMPTY, OrientedBrauerDiagram
from .diagrams import (
    RawDiagram,
    canon,
    decode,
    enc_degree,
    enc_loops,
    enc_strip_loops,
    enc_with_loops,
    encode_str,
)
from .linalg import Echelon, vec_add

ZERO = Fraction(0)
ONE = Fraction(1)

DEGREE_BUDGET = 3
STRETCH_DEGREE_BUDGET = 4


def set_degree_budget(n: int) -> None:
    global DEGREE_BUDGET
    DEGREE_BUDGET = n


class BudgetError(RuntimeError):
    """Raised when an operation would exceed the configured degree budget."""


@dataclass(frozen=True)
class Context:
    skeleton: OrientedBrauerDiagram
    n_cir: int
    colors: tuple

    def __post_init__(self):
        if list(self.colors) != sorted(set(self.colors)):
            raise ValueError("colors must be sorted and distinct")

    @property
    def n_seg(self) -> int:
        return len(self.skeleton.components())

    def key(self) -> tuple:
        sk = self.skeleton
        return (
            sk.p,
            sk.q,
            tuple(sorted(tuple(sorted(pr, key=repr)) for pr in sk.base.pairs)),
            tuple(sorted(sk.begins, key=repr)),
            self.n_cir,
            self.colors,
        )


def ctx(skeleton: OrientedBrauerDiagram = EMPTY, n_cir: int = 0, colors=()) -> Context:
    return Context(skeleton, n_cir, tuple(sorted(colors)))


class DiagramVector:
    """Finite Q-linear combination of canonical diagrams in one context."""

    __slots__ = ("context", "trunc", "terms")

    def __init__(self, context: Context, trunc: int, terms: dict | None = None):
        self.context = context
        self.trunc = trunc
        clean = {}
        for enc, c in (terms or {}).items():
            if c and enc_degree(enc) <= trunc:
                clean[enc] = c
        self.terms = clean

    # -- constructors --------------------------------------------------------

    @staticmethod
    def unit(context: Context, trunc: int) -> "DiagramVector":
        return DiagramVector(context, trunc, {canon(RawDiagram(0, 0, [], [])): ONE})

    @staticmethod
    def zero(context: Context, trunc: int) -> "DiagramVector":
        return DiagramVector(context, trunc, {})

    @staticmethod
    def from_raw(
        context: Context, trunc: int, raw: RawDiagram, coeff: Fraction = ONE
    ) -> "DiagramVector":
        return DiagramVector(context, trunc, {canon(raw): coeff})

    # -- linear structure ----------------------------------------------------

    def __add__(self, other: "DiagramVector") -> "DiagramVector":
        if self.context != other.context:
            raise ValueError("context mismatch in addition")
        return DiagramVector(
            self.context,
            min(self.trunc, other.trunc),
            vec_add(self.terms, other.terms),
        )

    def __sub__(self, other: "DiagramVector") -> "DiagramVector":
        if self.context != other.context:
            raise ValueError("context mismatch in subtraction")
        return DiagramVector(
            self.context,
            min(self.trunc, other.trunc),
            vec_add(self.terms, other.terms, Fraction(-1)),
        )

    def scale(self, c) -> "DiagramVector":
        c = Fraction(c)
        return DiagramVector(
            self.context, self.trunc, {e: c * v for e, v in self.terms.items()}
        )

    def __neg__(self) -> "DiagramVector":
        return self.scale(-1)

    def is_zero(self) -> bool:
        return not self.terms

    def degree_part(self, d: int) -> "DiagramVector":
        return DiagramVector(
            self.context,
            self.trunc,
            {e: c for e, c in self.terms.items() if enc_degree(e) == d},
        )

    def degree_le(self, d: int) -> "DiagramVector":
        return DiagramVector(
            self.context,
            self.trunc,
            {e: c for e, c in self.terms.items() if enc_degree(e) <= d},
        )

    def retruncate(self, trunc: int) -> "DiagramVector":
        return DiagramVector(self.context, trunc, self.terms)

    def max_degree(self) -> int:
        return max((enc_degree(e) for e in self.terms), default=0)

    def coeff(self, raw_or_enc) -> Fraction:
        enc = canon(raw_or_enc) if isinstance(raw_or_enc, RawDiagram) else raw_or_enc
        return self.terms.get(enc, ZERO)

    def __repr__(self):
        if not self.terms:
            return "<0>"
        bits = [
            f"{c}*[{encode_str(e)}]"
            for e, c in sorted(self.terms.items(), key=lambda t: repr(t[0]))
        ]
        return " + ".join(bits)


# ---------------------------------------------------------------------------
# Raw-diagram splicing helpers


def _shift_raw(d: RawDiagram, leg_map) -> RawDiagram:
    """Apply an attachment relabeling function to every leg."""
    return RawDiagram(d.loops, d.nv, [leg_map(a) for a in d.legs], list(d.pairs))


def _union_raws(dx: RawDiagram, dy: RawDiagram) -> tuple[RawDiagram, int, int]:
    """Disjoint union; returns (raw, vertex offset of y, leg offset of y)."""
    voff = dx.nv
    loff = len(dx.legs)

    def remap(h):
        if h[0] == "v":
            return ("v", h[1] + voff, h[2])
        return ("l", h[1] + loff)

    pairs = list(dx.pairs) + [(remap(a), remap(b)) for a, b in dy.pairs]
    return (
        RawDiagram(dx.loops + dy.loops, dx.nv + dy.nv, list(dx.legs) + list(dy.legs), pairs),
        voff,
        loff,
    )


def _renumber_site_ranks(d: RawDiagram) -> RawDiagram:
    """Re-normalize leg positions to consecutive ranks 0..m-1 per site,
    preserving the existing order (ranks may be arbitrary comparables)."""
    by_site: dict = {}
    for li, att in enumerate(d.legs):
        if att[0] in ("S", "C"):
            by_site.setdefault((att[0], att[1]), []).append((att[2], li))
    legs = list(d.legs)
    for (kind, site), lst in by_site.items():
        lst.sort(key=lambda t: t[0])
        for rank, (_old, li) in enumerate(lst):
            legs[li] = (kind, site, rank)
    return RawDiagram(d.loops, d.nv, legs, d.pairs)


# ---------------------------------------------------------------------------
# Tensor product


def tensor(x: DiagramVector, y: DiagramVector) -> DiagramVector:
    cx, cy = x.context, y.context
    if set(cx.colors) & set(cy.colors):
        raise ValueError("tensor requires disjoint color sets")
    sk = brauer.tensor(cx.skeleton, cy.skeleton)
    comps_out = sk.components()
    index_of = {c: i for i, c in enumerate(comps_out)}

    def shift_pair(pr, dp, dq):
        out = set()
        for pt in pr:
            out.add(("b", pt[1] + dp) if pt[0] == "b" else ("t", pt[1] + dq))
        return frozenset(out)

    map_x = [index_of[shift_pair(c, 0, 0)] for c in cx.skeleton.components()]
    map_y = [
        index_of[shift_pair(c, cx.skeleton.p, cx.skeleton.q)]
        for c in cy.skeleton.components()
    ]
    octx = ctx(sk, cx.n_cir + cy.n_cir, cx.colors + cy.colors)
    trunc = min(x.trunc, y.trunc)
    out: dict = {}
    for ex, a in x.terms.items():
        dx = decode(ex)
        dx = _shift_raw(
            dx,
            lambda att: ("S", map_x[att[1]], att[2]) if att[0] == "S" else att,
        )
        degx = enc_degree(ex)
        for ey, b in y.terms.items():
            if degx + enc_degree(ey) > trunc:
                continue
            dy = decode(ey)

            def yleg(att):
                if att[0] == "S":
                    return ("S", map_y[att[1]], att[2])
                if att[0] == "C":
                    return ("C", att[1] + cx.n_cir, att[2])
                return att

            dyy = _shift_raw(dy, yleg)
            u, _, _ = _union_raws(dx, dyy)
            key = canon(u)
            out[key] = out.get(key, ZERO) + a * b
    return DiagramVector(octx, trunc, out)


# ---------------------------------------------------------------------------
# Composition


def compose(x: DiagramVector, y: DiagramVector) -> DiagramVector:
    """y stacked on top of x; merges segment legs and creates new circles."""
    cx, cy = x.context, y.context
    if set(cx.colors) & set(cy.colors):
        raise ValueError("compose requires disjoint color sets")
    comp = brauer.compose(cx.skeleton, cy.skeleton)
    n_new = len(comp.circles)
    octx = ctx(
        comp.diagram, cx.n_cir + cy.n_cir + n_new, tuple(sorted(cx.colors + cy.colors))
    )
    trunc = min(x.trunc, y.trunc)
    out: dict = {}
    for ex, a in x.terms.items():
        dx = decode(ex)
        degx = enc_degree(ex)
        legs_x_by_comp: dict = {}
        for li, att in enumerate(dx.legs):
            if att[0] == "S":
                legs_x_by_comp.setdefault(att[1], []).append((att[2], li))
        for ey, b in y.terms.items():
            if degx + enc_degree(ey) > trunc:
                continue
            dy = decode(ey)
            legs_y_by_comp: dict = {}
            for li, att in enumerate(dy.legs):
                if att[0] == "S":
                    legs_y_by_comp.setdefault(att[1], []).append((att[2], li))

            def count(side, i):
                table = legs_x_by_comp if side == "a" else legs_y_by_comp
                return len(table.get(i, ()))

            # target attachment for each constituent's legs
            seg_target: dict = {}  # (side, comp) -> ('S'|'C', site, offset)
            for new_i, chain in enumerate(comp.merged):
                off = 0
                for side, i in chain:
                    seg_target[(side, i)] = ("S", new_i, off)
                    off += count(side, i)
            for j, cyc in enumerate(comp.circles):
                off = 0
                for side, i in cyc:
                    seg_target[(side, i)] = ("C", cx.n_cir + cy.n_cir + j, off)
                    off += count(side, i)

            def xleg(att):
                if att[0] == "S":
                    kind, site, off = seg_target[("a", att[1])]
                    return (kind, site, off + _rank_index(legs_x_by_comp, att))
                return att

            def yleg(att):
                if att[0] == "S":
                    kind, site, off = seg_target[("b", att[1])]
                    return (kind, site, off + _rank_index(legs_y_by_comp, att))
                if att[0] == "C":
                    return ("C", att[1] + cx.n_cir, att[2])
                return att

            dxx = _shift_raw(dx, xleg)
            dyy = _shift_raw(dy, yleg)
            u, _, _ = _union_raws(dxx, dyy)
            key = canon(u)
            out[key] = out.get(key, ZERO) + a * b
    return DiagramVector(octx, trunc, out)


def _rank_index(table: dict, att) -> int:
    lst = sorted(r for r, _ in table[att[1]])
    return lst.index(att[2])


# ---------------------------------------------------------------------------
# Orientation changes and doubling


def co_circle(x: DiagramVector, cir: int) -> DiagramVector:
    if not 0 <= cir < x.context.n_cir:
        raise ValueError("unknown circle")
    out: dict = {}
    for e, c in x.terms.items():
        d = decode(e)
        m = sum(1 for att in d.legs if att[0] == "C" and att[1] == cir)
        legs = [
            ("C", att[1], m - 1 - att[2])
            if att[0] == "C" and att[1] == cir
            else att
            for att in d.legs
        ]
        key = canon(RawDiagram(d.loops, d.nv, legs, d.pairs))
        sign = ONE if m % 2 == 0 else -ONE
        out[key] = out.get(key, ZERO) + sign * c
    return DiagramVector(x.context, x.trunc, out)


def co_segment(x: DiagramVector, comp: int) -> DiagramVector:
    comps = x.context.skeleton.components()
    if not 0 <= comp < len(comps):
        raise ValueError("unknown component")
    sk2 = brauer.co(x.context.skeleton, comps[comp])
    # component indices are unchanged: co preserves the pairs
    octx = ctx(sk2, x.context.n_cir, x.context.colors)
    out: dict = {}
    for e, c in x.terms.items():
        d = decode(e)
        m = sum(1 for att in d.legs if att[0] == "S" and att[1] == comp)
        legs = [
            ("S", att[1], m - 1 - att[2])
            if att[0] == "S" and att[1] == comp
            else att
            for att in d.legs
        ]
        key = canon(RawDiagram(d.loops, d.nv, legs, d.pairs))
        sign = ONE if m % 2 == 0 else -ONE
        out[key] = out.get(key, ZERO) + sign * c
    return DiagramVector(octx, x.trunc, out)


def dbl(x: DiagramVector, comp_indices: Iterable[int]) -> DiagramVector:
    comp_indices = sorted(set(comp_indices))
    dd = brauer.dbl(x.context.skeleton, comp_indices)
    octx = ctx(dd.diagram, x.context.n_cir, x.context.colors)
    out: dict = {}
    for e, c in x.terms.items():
        d = decode(e)
        targets = [
            (li, att)
            for li, att in enumerate(d.legs)
            if att[0] == "S" and att[1] in comp_indices
        ]
        fixed = {}
        for li, att in enumerate(d.legs):
            if att[0] == "S" and att[1] not in comp_indices:
                fixed[li] = ("S", dd.untouched[att[1]], att[2])
            elif att[0] != "S":
                fixed[li] = att
        for choice in itertools.product((0, 1), repeat=len(targets)):
            legs = list(d.legs)
            for li, att in fixed.items():
                legs[li] = att
            for (li, att), k in zip(targets, choice):
                legs[li] = ("S", dd.copies[att[1]][k], att[2])
            raw = _renumber_site_ranks(RawDiagram(d.loops, d.nv, legs, d.pairs))
            key = canon(raw)
            out[key] = out.get(key, ZERO) + c
    return DiagramVector(octx, x.trunc, out)


def delete_strand(x: DiagramVector, comp: int) -> DiagramVector:
    """Cable a strand to zero copies: terms with legs on it are dropped."""
    comps = x.context.skeleton.components()
    if not 0 <= comp < len(comps):
        raise ValueError("unknown component")
    target = comps[comp]
    sk = x.context.skeleton
    keep_pairs = [c for c in sk.base.pairs if c != target]
    dropped = set(target)

    def shift_pt(pt):
        n_before = sum(1 for d in dropped if d[0] == pt[0] and d[1] < pt[1])
        return (pt[0], pt[1] - n_before)

    new_pairs = frozenset(frozenset(shift_pt(p) for p in c) for c in keep_pairs)
    new_begins = frozenset(shift_pt(p) for p in sk.begins if p not in dropped)
    p2 = sk.p - sum(1 for d in dropped if d[0] == "b")
    q2 = sk.q - sum(1 for d in dropped if d[0] == "t")
    sk2 = OrientedBrauerDiagram(brauer.BrauerDiagram(p2, q2, new_pairs), new_begins)
    comps2 = sk2.components()
    remap = {}
    for i, c in enumerate(comps):
        if i == comp:
            continue
        shifted = frozenset(shift_pt(p) for p in c)
        remap[i] = comps2.index(shifted)
    octx = ctx(sk2, x.context.n_cir, x.context.colors)
    out: dict = {}
    for e, c in x.terms.items():
        d = decode(e)
        if any(att[0] == "S" and att[1] == comp for att in d.legs):
            continue
        legs = [
            ("S", remap[att[1]], att[2]) if att[0] == "S" else att for att in d.legs
        ]
        key = canon(RawDiagram(d.loops, d.nv, legs, d.pairs))
        out[key] = out.get(key, ZERO) + c
    return DiagramVector(octx, x.trunc, out)


def permute_strands(x: DiagramVector, perm: list[int]) -> DiagramVector:
    """Relabel the strands of an identity-skeleton vector; perm[i] is the new
    position of strand i."""
    sk = x.context.skeleton
    comps = sk.components()
    if sk.p != sk.q or len(comps) != sk.p:
        raise ValueError("permute_strands needs an identity-shaped skeleton")
    word = sk.source()
    new_word = [""] * len(word)
    for i, ch in enumerate(word):
        new_word[perm[i]] = ch
    sk2 = brauer.identity("".join(new_word))
    octx = ctx(sk2, x.context.n_cir, x.context.colors)
    out: dict = {}
    for e, c in x.terms.items():
        d = decode(e)
        legs = [
            ("S", perm[att[1]], att[2]) if att[0] == "S" else att for att in d.legs
        ]
        key = canon(RawDiagram(d.loops, d.nv, legs, d.pairs))
        out[key] = out.get(key, ZERO) + c
    return DiagramVector(octx, x.trunc, out)


# ---------------------------------------------------------------------------
# Connected sum along circles


def cs_insert(x: DiagramVector, alpha: DiagramVector) -> DiagramVector:
    """Insert `alpha` (a vector on a single downward strand) into every circle
    of `x` (a vector on circles, empty skeleton)."""
    if x.context.skeleton.base.pairs:
        raise ValueError("cs acts on vectors with empty skeleton")
    actx = alpha.context
    if actx.n_cir or actx.colors or actx.skeleton.source() != "+":
        raise ValueError("the inserted element must live on a single strand")
    trunc = min(x.trunc, alpha.trunc)
    result: dict = {}
    for e, c in x.terms.items():
        pieces = [(decode(e), c)]
        for s in range(x.context.n_cir):
            new_pieces = []
            for d, coeff in pieces:
                m = sum(1 for att in d.legs if att[0] == "C" and att[1] == s)
                for ae, ac in alpha.terms.items():
                    da = decode(ae)
                    if (d.nv + len(d.legs) + da.nv + len(da.legs)) // 2 > trunc:
                        continue

                    def aleg(att, _s=s, _m=m):
                        assert att[0] == "S" and att[1] == 0
                        return ("C", _s, _m + att[2])

                    daa = _shift_raw(da, aleg)
                    u, _, _ = _union_raws(d, daa)
                    new_pieces.append((u, coeff * ac))
            pieces = new_pieces
        for d, coeff in pieces:
            key = canon(d)
            result[key] = result.get(key, ZERO) + coeff
    return DiagramVector(x.context, trunc, result)


# ---------------------------------------------------------------------------
# Pairing along free colors


def _weld_raws(dx: RawDiagram, dy: RawDiagram, welds: list[tuple[int, int]]):
    """Glue leg lx of dx to leg ly of dy for each (lx, ly); returns the raw
    union with those legs removed and closed strut cycles turned into loops."""
    u, voff, loff = _union_raws(dx, dy)
    welded = set()
    fuse = {}
    for lx, ly in welds:
        a = ("l", lx)
        b = ("l", ly + loff)
        fuse[a] = b
        fuse[b] = a
        welded.add(a)
        welded.add(b)
    partner = {}
    for p, q in u.pairs:
        partner[p] = q
        partner[q] = p
    new_pairs = []
    visited = set()
    loops = u.loops
    for h in list(partner):
        if h in visited or h in welded:
            continue
        # walk from h through welds to the other free end
        visited.add(h)
        cur = partner[h]
        while cur in welded:
            visited.add(cur)
            cur = fuse[cur]
            visited.add(cur)
            cur = partner[cur]
        visited.add(cur)
        new_pairs.append((h, cur))
    # remaining unvisited welded legs form closed cycles -> loops
    for h in list(welded):
        if h in visited:
            continue
        loops += 1
        cur = h
        while cur not in visited:
            visited.add(cur)
            nxt = fuse[cur]
            visited.add(nxt)
            cur = partner[nxt]
    # drop welded legs, renumber the rest
    keep = [i for i in range(len(u.legs)) if ("l", i) not in welded]
    lmap = {old: new for new, old in enumerate(keep)}
    legs = [u.legs[i] for i in keep]

    def remap(hh):
        if hh[0] == "l":
            return ("l", lmap[hh[1]])
        return hh

    pairs = [(remap(a), remap(b)) for a, b in new_pairs]
    return RawDiagram(loops, u.nv, legs, pairs)


def pair_colors(x: DiagramVector, y: DiagramVector) -> DiagramVector:
    """Glue the color legs of x and y pairwise along the common color set.

    Both vectors must use every color exactly once in every term.
    """
    cx, cy = x.context, y.context
    if cx.colors != cy.colors:
        raise ValueError("pairing requires identical color sets")
    colors = cx.colors
    sk = brauer.tensor(cx.skeleton, cy.skeleton)
    comps_out = sk.components()
    index_of = {c: i for i, c in enumerate(comps_out)}

    def shift_pair(pr, dp, dq):
        return frozenset(
            ("b", pt[1] + dp) if pt[0] == "b" else ("t", pt[1] + dq) for pt in pr
        )

    map_x = [index_of[shift_pair(c, 0, 0)] for c in cx.skeleton.components()]
    map_y = [
        index_of[shift_pair(c, cx.skeleton.p, cx.skeleton.q)]
        for c in cy.skeleton.components()
    ]
    octx = ctx(sk, cx.n_cir + cy.n_cir, ())
    trunc = min(x.trunc, y.trunc)
    out: dict = {}
    for ex, a in x.terms.items():
        dx = decode(ex)
        dx = _shift_raw(
            dx, lambda att: ("S", map_x[att[1]], att[2]) if att[0] == "S" else att
        )
        cols_x = {att[1]: li for li, att in enumerate(dx.legs) if att[0] == "K"}
        if set(cols_x) != set(colors) or sum(
            1 for att in dx.legs if att[0] == "K"
        ) != len(colors):
            raise ValueError("left factor must use every color exactly once")
        for ey, b in y.terms.items():
            dy = decode(ey)

            def yleg(att):
                if att[0] == "S":
                    return ("S", map_y[att[1]], att[2])
                if att[0] == "C":
                    return ("C", att[1] + cx.n_cir, att[2])
                return att

            dyy = _shift_raw(dy, yleg)
            cols_y = {att[1]: li for li, att in enumerate(dyy.legs) if att[0] == "K"}
            if set(cols_y) != set(colors) or sum(
                1 for att in dyy.legs if att[0] == "K"
            ) != len(colors):
                raise ValueError("right factor must use every color exactly once")
            welds = [(cols_x[c], cols_y[c]) for c in colors]
            raw = _weld_raws(dx, dyy, welds)
            if raw.degree > trunc:
                continue
            key = canon(raw)
            out[key] = out.get(key, ZERO) + a * b
    return DiagramVector(octx, trunc, out)


# ---------------------------------------------------------------------------
# Coproduct (splitting dashed connected components)


def _piece_split(d: RawDiagram):
    """Connected dashed components of d as (vertex set, leg set) index pairs;
    loops are handled separately by the caller."""
    parent = {}

    def find(xx):
        while parent[xx] != xx:
            parent[xx] = parent[parent[xx]]
            xx = parent[xx]
        return xx

    def union(aa, bb):
        ra, rb = find(aa), find(bb)
        if ra != rb:
            parent[ra] = rb

    for v in range(d.nv):
        parent[("v", v)] = ("v", v)
    for i in range(len(d.legs)):
        parent[("l", i)] = ("l", i)
    for a, b in d.pairs:
        na = ("v", a[1]) if a[0] == "v" else ("l", a[1])
        nb = ("v", b[1]) if b[0] == "v" else ("l", b[1])
        union(na, nb)
    groups: dict = {}
    for xx in parent:
        groups.setdefault(find(xx), []).append(xx)
    return sorted(
        (sorted(g, key=repr) for g in groups.values()),
        key=repr,
    )


def _restrict_raw(d: RawDiagram, members: set) -> RawDiagram:
    vs = sorted(i for kind, i in members if kind == "v")
    ls = sorted(i for kind, i in members if kind == "l")
    vmap = {v: i for i, v in enumerate(vs)}
    lmap = {l: i for i, l in enumerate(ls)}
    pairs = []
    for a, b in d.pairs:
        oa = ("v", a[1]) if a[0] == "v" else ("l", a[1])
        if oa not in members:
            continue

        def remap(h):
            if h[0] == "v":
                return ("v", vmap[h[1]], h[2])
            return ("l", lmap[h[1]])

        pairs.append((remap(a), remap(b)))
    legs = [d.legs[l] for l in ls]
    return _renumber_site_ranks(RawDiagram(0, len(vs), legs, pairs))


class TensorVector:
    """Element of a two-fold tensor product of diagram spaces."""

    __slots__ = ("context1", "context2", "trunc", "terms")

    def __init__(self, context1, context2, trunc, terms=None):
        self.context1 = context1
        self.context2 = context2
        self.trunc = trunc
        self.terms = {k: v for k, v in (terms or {}).items() if v}

    def __add__(self, other):
        return TensorVector(
            self.context1,
            self.context2,
            min(self.trunc, other.trunc),
            vec_add(self.terms, other.terms),
        )

    def __sub__(self, other):
        return TensorVector(
            self.context1,
            self.context2,
            min(self.trunc, other.trunc),
            vec_add(self.terms, other.terms, Fraction(-1)),
        )

    def is_zero(self):
        return not self.terms


def coproduct(x: DiagramVector) -> TensorVector:
    """Split the dashed connected components (and loops) into two factors."""
    if x.context.colors:
        raise ValueError("coproduct is defined for color-free vectors")
    out: dict = {}
    for e, c in x.terms.items():
        d = decode(e)
        pieces = [set(p) for p in _piece_split(d)]
        nloops = d.loops
        for subset in itertools.product((0, 1), repeat=len(pieces)):
            left_members = set().union(*(p for p, s in zip(pieces, subset) if s == 0), set())
            right_members = set().union(
                *(p for p, s in zip(pieces, subset) if s == 1), set()
            )
            left = _restrict_raw(d, left_members)
            right = _restrict_raw(d, right_members)
            for lloops in range(nloops + 1):
                mult = _binom(nloops, lloops)
                lraw = RawDiagram(lloops, left.nv, left.legs, left.pairs)
                rraw = RawDiagram(nloops - lloops, right.nv, right.legs, right.pairs)
                key = (canon(lraw), canon(rraw))
                out[key] = out.get(key, ZERO) + c * mult
    return TensorVector(x.context, x.context, x.trunc, out)


def tensor_pair(x: DiagramVector, y: DiagramVector) -> TensorVector:
    out: dict = {}
    for e1, c1 in x.terms.items():
        for e2, c2 in y.terms.items():
            key = (e1, e2)
            out[key] = out.get(key, ZERO) + c1 * c2
    return TensorVector(x.context, y.context, min(x.trunc, y.trunc), out)


def _binom(n, k):
    from math import comb

    return Fraction(comb(n, k))


# ---------------------------------------------------------------------------
# Relations: AS, STU, IHX, and the slot reducer


def _sites_of(context: Context):
    """Ordered sites ('S', i) and cyclic sites ('C', j) of a context."""
    return (
        [("S", i) for i in range(context.n_seg)],
        [("C", j) for j in range(context.n_cir)],
    )


def _as_rows(d: RawDiagram):
    rows = []
    for v in range(d.nv):
        swap = {("v", v, 1): ("v", v, 2), ("v", v, 2): ("v", v, 1)}
        pairs = [(swap.get(a, a), swap.get(b, b)) for a, b in d.pairs]
        rows.append([(d, ONE), (RawDiagram(d.loops, d.nv, list(d.legs), pairs), ONE)])
    return rows


def _legs_on_site(d: RawDiagram, kind: str, site: int):
    lst = [(att[2], li) for li, att in enumerate(d.legs) if att[0] == kind and att[1] == site]
    lst.sort()
    return [li for _r, li in lst]


def _stu_contract(d: RawDiagram, la: int, lb: int, kind: str, site: int, rank):
    """Replace adjacent legs la (first along orientation) and lb by a vertex.

    New vertex cyclic order: (edge formerly at la, edge formerly at lb, new leg).
    """
    partner = {}
    for a, b in d.pairs:
        partner[a] = b
        partner[b] = a
    ea = partner[("l", la)]
    eb = partner[("l", lb)]
    w = d.nv
    keep = [i for i in range(len(d.legs)) if i not in (la, lb)]
    lmap = {old: new for new, old in enumerate(keep)}
    legs = [d.legs[i] for i in keep]
    new_leg = len(legs)
    legs.append((kind, site, rank))

    def remap(h):
        if h[0] == "l":
            return ("l", lmap[h[1]])
        return h

    pairs = []
    for a, b in d.pairs:
        if ("l", la) in (a, b) or ("l", lb) in (a, b):
            continue
        pairs.append((remap(a), remap(b)))
    if ea == ("l", lb):
        # the two legs were joined by a single edge: vertex with a self-loop
        pairs.append((("v", w, 0), ("v", w, 1)))
    else:
        pairs.append((("v", w, 0), remap(ea)))
        pairs.append((("v", w, 1), remap(eb)))
    pairs.append((("v", w, 2), ("l", new_leg)))
    raw = RawDiagram(d.loops, d.nv + 1, legs, pairs)
    return _renumber_site_ranks(raw)


def _swap_ranks(d: RawDiagram, la: int, lb: int) -> RawDiagram:
    """Exchange the positions of two legs (each keeps its own edge)."""
    legs = list(d.legs)
    ra, rb = d.legs[la][2], d.legs[lb][2]
    legs[la] = (d.legs[la][0], d.legs[la][1], rb)
    legs[lb] = (d.legs[lb][0], d.legs[lb][1], ra)
    return RawDiagram(d.loops, d.nv, legs, d.pairs)


def _stu_rows(d: RawDiagram, context: Context):
    """STU instances anchored at d: D - D_swap - D_contract = 0, the first leg
    of the adjacent pair coming first along the orientation."""
    rows = []
    seg_sites, cir_sites = _sites_of(context)
    for kind, site in seg_sites + cir_sites:
        legs = _legs_on_site(d, kind, site)
        m = len(legs)
        if m < 2:
            continue
        adjacencies = [(i, i + 1) for i in range(m - 1)]
        if kind == "C":
            adjacencies.append((m - 1, 0))
        for ia, ib in adjacencies:
            la, lb = legs[ia], legs[ib]
            swap = _swap_ranks(d, la, lb)
            contract = _stu_contract(d, la, lb, kind, site, d.legs[la][2])
            rows.append([(d, ONE), (swap, -ONE), (contract, -ONE)])
    return rows


def _stu_expansions(d: RawDiagram, context: Context):
    """For each leg whose edge meets a trivalent vertex, the same STU row
    anchored at the contracted diagram d."""
    rows = []
    partner = {}
    for a, b in d.pairs:
        partner[a] = b
        partner[b] = a
    for li, att in enumerate(d.legs):
        if att[0] not in ("S", "C"):
            continue
        other = partner[("l", li)]
        if other[0] != "v":
            continue
        w, slot = other[1], other[2]
        ea = ("v", w, (slot + 1) % 3)
        eb = ("v", w, (slot + 2) % 3)
        fa, fb = partner[ea], partner[eb]
        # remove vertex w and leg li; create two legs at adjacent positions
        keep = [i for i in range(len(d.legs)) if i != li]
        lmap = {old: new for new, old in enumerate(keep)}
        legs = [d.legs[i] for i in keep]
        la = len(legs)
        legs.append((att[0], att[1], Fraction(att[2])))
        lb = len(legs)
        legs.append((att[0], att[1], Fraction(att[2]) + Fraction(1, 2)))

        def vmapper(h, drop=w):
            if h[0] == "v":
                return ("v", h[1] - (1 if h[1] > drop else 0), h[2])
            return ("l", lmap[h[1]])

        pairs = []
        for a, b in d.pairs:
            if ("l", li) in (a, b):
                continue
            if a[:2] == ("v", w) or b[:2] == ("v", w):
                continue
            pairs.append((vmapper(a), vmapper(b)))
        if fa == eb:
            # vertex had a self-loop besides the leg: expansion joins the two
            # new legs by an edge
            pairs.append((("l", la), ("l", lb)))
        else:
            pairs.append((("l", la), vmapper(fa)))
            pairs.append((("l", lb), vmapper(fb)))
        t_diag = _renumber_site_ranks(
            RawDiagram(d.loops, d.nv - 1, list(legs), list(pairs))
        )
        u_diag = _renumber_site_ranks(_swap_ranks(t_diag, la, lb))
        rows.append([(t_diag, ONE), (u_diag, -ONE), (d, -ONE)])
    return rows


def _ihx_rows(d: RawDiagram):
    """Fully cyclic three-term IHX (the universal Jacobi identity):
    D + D2 + D3 = 0 at every internal edge."""
    rows = []
    partner = {}
    for a, b in d.pairs:
        partner[a] = b
        partner[b] = a
    for a, b in d.pairs:
        if a[0] != "v" or b[0] != "v" or a[1] == b[1]:
            continue
        u, su = a[1], a[2]
        w, sw = b[1], b[2]
        stub_a = ("v", u, (su + 1) % 3)
        stub_b = ("v", u, (su + 2) % 3)
        stub_c = ("v", w, (sw + 1) % 3)
        stub_d = ("v", w, (sw + 2) % 3)

        def rebuild(pat):
            """pat maps new-vertex slots to stubs: ((x0,x1),(y0,y1)) gives
            vertex U=(x0,x1,e'), W=(y0,y1,e')."""
            (x0, x1), (y0, y1) = pat
            loc = {
                x0: ("v", u, 0),
                x1: ("v", u, 1),
                y0: ("v", w, 0),
                y1: ("v", w, 1),
            }
            pairs = [(("v", u, 2), ("v", w, 2))]
            stubs = {stub_a, stub_b, stub_c, stub_d}
            done = set()
            for s in (stub_a, stub_b, stub_c, stub_d):
                if s in done:
                    continue
                f = partner[s]
                if f in stubs:
                    pairs.append((loc[s], loc[f]))
                    done.add(s)
                    done.add(f)
                else:
                    pairs.append((loc[s], f))
                    done.add(s)
            for p, q in d.pairs:
                if p in stubs or q in stubs:
                    continue
                if (p, q) == (a, b) or (p, q) == (b, a):
                    continue
                pairs.append((p, q))
            return RawDiagram(d.loops, d.nv, list(d.legs), pairs)

        d2 = rebuild(((stub_b, stub_c), (stub_a, stub_d)))
        d3 = rebuild(((stub_c, stub_a), (stub_b, stub_d)))
        rows.append([(d, ONE), (d2, ONE), (d3, ONE)])
    return rows


class SlotReducer:
    """Relation span of one (context key, degree) slot, grown lazily by
    saturating local moves from the diagrams that actually occur."""

    def __init__(self, context: Context):
        self.context = context
        self.ech = Echelon()
        self.seen: set = set()

    def ensure(self, encs: Iterable[tuple]):
        queue = sorted(set(encs) - self.seen, key=repr)
        while queue:
            e = queue.pop()
            if e in self.seen:
                continue
            self.seen.add(e)
            d = decode(e)
            rows = (
                _as_rows(d)
                + _stu_rows(d, self.context)
                + _stu_expansions(d, self.context)
                + _ihx_rows(d)
            )
            for row in rows:
                vec: dict = {}
                fresh = []
                for raw, coeff in row:
                    k = canon(raw)
                    vec[k] = vec.get(k, ZERO) + coeff
                    if k not in self.seen:
                        fresh.append(k)
                vec = {k: v for k, v in vec.items() if v}
                self.ech.add(vec)
                queue.extend(fresh)

    def reduce(self, terms: dict) -> dict:
        self.ensure(terms.keys())
        return self.ech.reduce(terms)


_REDUCERS: dict = {}


def _reducer(context: Context, degree: int) -> SlotReducer:
    key = (context.key(), degree)
    red = _REDUCERS.get(key)
    if red is None:
        red = SlotReducer(context)
        _REDUCERS[key] = red
    return red


def normal_form(x: DiagramVector, budget: Optional[int] = None) -> DiagramVector:
    """Residue of x modulo the STU/AS/IHX relation span, per slot."""
    budget = DEGREE_BUDGET if budget is None else budget
    if x.max_degree() > budget:
        raise BudgetError(
            f"degree {x.max_degree()} exceeds the configured budget {budget}"
        )
    # group by (degree of loop-free core, loop count)
    grouped: dict = {}
    for e, c in x.terms.items():
        core = enc_strip_loops(e)
        key = (enc_degree(core), enc_loops(e))
        bucket = grouped.setdefault(key, {})
        bucket[core] = bucket.get(core, ZERO) + c
    out: dict = {}
    for (deg, loops), terms in grouped.items():
        red = _reducer(x.context, deg)
        residue = red.reduce({k: v for k, v in terms.items() if v})
        for core, c in residue.items():
            if not c:
                continue
            e = enc_with_loops(core, loops)
            out[e] = out.get(e, ZERO) + c
    return DiagramVector(x.context, x.trunc, out)


def equal_mod_relations(x: DiagramVector, y: DiagramVector, budget=None) -> bool:
    return normal_form(x - y, budget).is_zero()


def nf_tensor(t: TensorVector, budget=None) -> TensorVector:
    """Normal form applied to both factors of a tensor vector."""
    by_second: dict = {}
    for (e1, e2), c in t.terms.items():
        by_second.setdefault(e2, {})[e1] = by_second.setdefault(e2, {}).get(e1, ZERO) + c
    stage: dict = {}
    for e2, vec1 in by_second.items():
        v = normal_form(DiagramVector(t.context1, t.trunc, vec1), budget)
        for e1, c in v.terms.items():
            stage.setdefault(e1, {})[e2] = stage.setdefault(e1, {}).get(e2, ZERO) + c
    out: dict = {}
    for e1, vec2 in stage.items():
        v = normal_form(DiagramVector(t.context2, t.trunc, vec2), budget)
        for e2, c in v.terms.items():
            out[(e1, e2)] = out.get((e1, e2), ZERO) + c
    return TensorVector(t.context1, t.context2, t.trunc, out)


# ---------------------------------------------------------------------------
# Slot enumeration (small contexts: dimension checks and linear solving)


def enumerate_slot(
    context: Context,
    degree: int,
    attached_only: bool = False,
    color_mult: Optional[dict] = None,
) -> list[tuple]:
    """All canonical loop-free diagrams of the exact degree in the context.

    With attached_only, diagrams with a closed dashed component are dropped.
    color_mult fixes the number of legs per color (default: exactly one each
    when colors are present).
    """
    if color_mult is None:
        color_mult = {c: 1 for c in context.colors}
    found: dict = {}
    total = 2 * degree
    for t in range(total + 1):
        u = total - t
        fixed_color_legs = sum(color_mult.values())
        free_u = u - fixed_color_legs
        if free_u < 0:
            continue
        # distribute free_u legs over segment and circle sites
        sites = [("S", i) for i in range(context.n_seg)] + [
            ("C", j) for j in range(context.n_cir)
        ]
        for counts in _compositions(free_u, len(sites)):
            legs = []
            for (kind, site), k in zip(sites, counts):
                legs.extend((kind, site, r) for r in range(k))
            for cname in context.colors:
                legs.extend(("K", cname) for _ in range(color_mult[cname]))
            for raw in _internal_structures(legs, t):
                if attached_only and _has_closed_component(raw):
                    continue
                found[canon(raw)] = True
    return sorted(found.keys(), key=repr)


def _compositions(n: int, k: int):
    if k == 0:
        if n == 0:
            yield ()
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, k - 1):
            yield (first,) + rest


def _internal_structures(legs: list, t: int):
    """All raw diagrams with the given pinned legs and t trivalent vertices."""
    u = len(legs)
    leg_ids = list(range(u))
    # choose a set of leg-leg pairs
    for pairing, rest in _partial_matchings(leg_ids):
        # assign remaining legs to vertices (canonical: vertex indices opened in order)
        for assign in _vertex_assignments(len(rest), t):
            loads = [0] * t
            ok = True
            half_pairs = [(("l", a), ("l", b)) for a, b in pairing]
            slot_of_leg = {}
            for li, v in zip(rest, assign):
                if v >= t or loads[v] >= 3:
                    ok = False
                    break
                slot_of_leg[li] = ("v", v, loads[v])
                loads[v] += 1
            if not ok:
                continue
            for li in rest:
                half_pairs.append((("l", li), slot_of_leg[li]))
            free_slots = [
                ("v", v, s) for v in range(t) for s in range(loads[v], 3)
            ]
            if len(free_slots) % 2:
                continue
            for sm in _full_matchings(free_slots):
                pairs = half_pairs + sm
                # every slot of every vertex must be used: check loads
                raw = RawDiagram(0, t, list(legs), pairs)
                yield raw


def _partial_matchings(items: list):
    """(pairs, rest) for every partial matching on items."""
    if not items:
        yield [], []
        return
    first, tail = items[0], items[1:]
    # first stays single
    for pairing, rest in _partial_matchings(tail):
        yield pairing, [first] + rest
    # first pairs with someone
    for i, other in enumerate(tail):
        remaining = tail[:i] + tail[i + 1 :]
        for pairing, rest in _partial_matchings(remaining):
            yield [(first, other)] + pairing, rest


def _vertex_assignments(n: int, t: int):
    """Functions from n items to t anonymous vertices, up to nothing (raw)."""
    if t == 0:
        if n == 0:
            yield ()
        return
    yield from itertools.product(range(t), repeat=n)


def _full_matchings(points: list):
    if not points:
        yield []
        return
    first, tail = points[0], points[1:]
    for i, other in enumerate(tail):
        remaining = tail[:i] + tail[i + 1 :]
        for rest in _full_matchings(remaining):
            yield [(first, other)] + rest


def _has_closed_component(d: RawDiagram) -> bool:
    if d.loops:
        return True
    for members in _piece_split(d):
        if not any(kind == "l" for kind, _ in members):
            if members:
                return True
    return False


def slot_dimension(context: Context, degree: int, attached_only=False) -> int:
    """Dimension of the loop-free part of the slot modulo relations."""
    encs = enumerate_slot(context, degree, attached_only)
    red = _reducer(context, degree)
    red.ensure(encs)
    ech = Echelon()
    dim = 0
    for e in encs:
        if ech.add(red.ech.reduce({e: ONE})):
            dim += 1
    return dim


def slot_basis_residues(context: Context, degree: int, attached_only=False):
    """Canonical slot diagrams together with their relation residues."""
    encs = enumerate_slot(context, degree, attached_only)
    red = _reducer(context, degree)
    red.ensure(encs)
    return [(e, red.ech.reduce({e: ONE})) for e in encs]


# ---------------------------------------------------------------------------
# Closing a strand into a circle, and solving the inverse


def close_strand(x: DiagramVector, comp: int = 0, new_cir: Optional[int] = None):
    """Close one strand of the skeleton into a fresh circle (appended last
    unless new_cir places it)."""
    comps = x.context.skeleton.components()
    if not 0 <= comp < len(comps):
        raise ValueError("unknown component")
    target = comps[comp]
    sk = x.context.skeleton
    keep_pairs = [c for c in sk.base.pairs if c != target]
    dropped = set(target)

    def shift_pt(pt):
        n_before = sum(1 for d in dropped if d[0] == pt[0] and d[1] < pt[1])
        return (pt[0], pt[1] - n_before)

    new_pairs = frozenset(frozenset(shift_pt(p) for p in c) for c in keep_pairs)
    new_begins = frozenset(shift_pt(p) for p in sk.begins if p not in dropped)
    p2 = sk.p - sum(1 for d in dropped if d[0] == "b")
    q2 = sk.q - sum(1 for d in dropped if d[0] == "t")
    sk2 = OrientedBrauerDiagram(brauer.BrauerDiagram(p2, q2, new_pairs), new_begins)
    comps2 = sk2.components()
    remap = {}
    for i, c in enumerate(comps):
        if i == comp:
            continue
        remap[i] = comps2.index(frozenset(shift_pt(p) for p in c))
    cir_idx = x.context.n_cir if new_cir is None else new_cir
    octx = ctx(sk2, x.context.n_cir + 1, x.context.colors)
    out: dict = {}
    for e, c in x.terms.items():
        d = decode(e)
        legs = []
        for att in d.legs:
            if att[0] == "S" and att[1] == comp:
                legs.append(("C", cir_idx, att[2]))
            elif att[0] == "S":
                legs.append(("S", remap[att[1]], att[2]))
            else:
                legs.append(att)
        key = canon(RawDiagram(d.loops, d.nv, legs, d.pairs))
        out[key] = out.get(key, ZERO) + c
    return DiagramVector(octx, x.trunc, out)


def _closed_attached_split(e: tuple):
    """Split an encoded diagram into (closed part raw, attached part raw)."""
    d = decode(e)
    pieces = _piece_split(d)
    closed_members: set = set()
    attached_members: set = set()
    for members in pieces:
        if any(kind == "l" for kind, _ in members):
            attached_members |= set(members)
        else:
            closed_members |= set(members)
    closed = _restrict_raw(d, closed_members)
    closed = RawDiagram(d.loops, closed.nv, closed.legs, closed.pairs)
    attached = _restrict_raw(d, attached_members)
    return closed, attached


def open_circle(x: DiagramVector, cir: int = 0) -> DiagramVector:
    """A preimage of x under closing a fresh downward strand into circle
    `cir`.  Requires an empty skeleton and works per slot by exact linear
    solving (closed dashed components are factored out first)."""
    if x.context.skeleton.base.pairs:
        raise ValueError("open_circle needs an empty skeleton")
    if cir != x.context.n_cir - 1:
        raise ValueError("open_circle opens the last circle; permute first")
    strand_ctx = ctx(brauer.identity("+"), x.context.n_cir - 1, x.context.colors)
    groups: dict = {}
    for e, c in x.terms.items():
        closed, attached = _closed_attached_split(e)
        key = canon(closed)
        att_enc = canon(attached)
        groups.setdefault(key, {})
        groups[key][att_enc] = groups[key].get(att_enc, ZERO) + c
    out: dict = {}
    for closed_key, terms in groups.items():
        closed_raw = decode(closed_key)
        closed_deg = closed_raw.degree
        by_deg: dict = {}
        for e, c in terms.items():
            by_deg.setdefault(enc_degree(e), {})[e] = c
        if closed_deg > x.trunc:
            continue
        for deg, vec in by_deg.items():
            pre = _solve_closure(x.context, strand_ctx, cir, deg, vec, x.trunc)
            if pre is None:
                raise ValueError("closure solve failed; input not in the image")
            for enc2, c2 in pre.items():
                d2 = decode(enc2)
                u, _, _ = _union_raws(closed_raw, d2)
                key = canon(u)
                out[key] = out.get(key, ZERO) + c2
    return DiagramVector(strand_ctx, x.trunc, out)


_CLOSURE_CACHE: dict = {}


def _solve_closure(circle_ctx, strand_ctx, cir, deg, vec, trunc):
    """Solve close_strand(y) = vec on attached-only degree-deg parts."""
    cache_key = (strand_ctx.key(), circle_ctx.key(), cir, deg)
    entry = _CLOSURE_CACHE.get(cache_key)
    if entry is None:
        cols = enumerate_slot(strand_ctx, deg, attached_only=True)
        images = []
        for e in cols:
            v = DiagramVector(strand_ctx, max(trunc, deg), {e: ONE})
            closed = close_strand(v, comp=strand_ctx.n_seg - 1, new_cir=cir)
            # reindex the fresh circle to `cir` position: close_strand appended;
            # for vectors with other circles the index layout must match
            img = normal_form(
                DiagramVector(circle_ctx, max(trunc, deg), closed.terms),
                budget=max(deg, DEGREE_BUDGET),
            )
            images.append(img.terms)
        entry = (cols, images)
        _CLOSURE_CACHE[cache_key] = entry
    cols, images = entry
    target = normal_form(
        DiagramVector(circle_ctx, max(trunc, deg), vec), budget=max(deg, DEGREE_BUDGET)
    ).terms
    from .linalg import solve as _solve

    sol = _solve(images, target)
    if sol is None:
        return None
    return {cols[i]: c for i, c in sol.items() if c}
