"""Brauer and oriented Brauer diagrams: composition with circle extraction,
tensor product, doubling, change of orientation, and boundary words.

Boundary points of a diagram from p to q are ('b', 0..p-1) and ('t', 0..q-1).
A signed word is a string over '+', '-'; position i of the source word is '+'
when the strand at bottom i is oriented downward (ends there) and '-' when it
begins there; on the target word the convention is reversed, so that two
diagrams compose exactly when t(a) == s(b).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

Point = tuple  # ('b', i) or ('t', i)


def _pt_key(pt: Point) -> tuple:
    return (0 if pt[0] == "b" else 1, pt[1])


def _pairs_from_mapping(m: Mapping) -> frozenset:
    return frozenset(frozenset((k, v)) for k, v in m.items())


@dataclass(frozen=True)
class BrauerDiagram:
    """A perfect matching on p bottom and q top boundary points."""

    p: int
    q: int
    pairs: frozenset  # frozenset of 2-element frozensets of Points

    def __post_init__(self):
        pts = {("b", i) for i in range(self.p)} | {("t", i) for i in range(self.q)}
        seen = set()
        for pr in self.pairs:
            if len(pr) != 2 or not pr <= pts:
                raise ValueError("invalid pairing")
            if seen & pr:
                raise ValueError("point matched twice")
            seen |= pr
        if seen != pts:
            raise ValueError("pairing does not cover the boundary")

    def mate(self, pt: Point) -> Point:
        for pr in self.pairs:
            if pt in pr:
                rest = pr - {pt}
                return next(iter(rest)) if rest else pt
        raise KeyError(pt)

    def components(self) -> tuple:
        """Strands as frozensets, sorted by their minimal boundary point."""
        return tuple(sorted(self.pairs, key=lambda c: min(_pt_key(x) for x in c)))


@dataclass(frozen=True)
class OrientedBrauerDiagram:
    """A Brauer diagram with one chosen beginning point per strand."""

    base: BrauerDiagram
    begins: frozenset

    def __post_init__(self):
        covered = set()
        for comp in self.base.pairs:
            hit = comp & self.begins
            if len(hit) != 1:
                raise ValueError("each strand needs exactly one beginning point")
            covered |= hit
        if covered != set(self.begins):
            raise ValueError("stray beginning points")

    # -- basic structure ----------------------------------------------------

    @property
    def p(self) -> int:
        return self.base.p

    @property
    def q(self) -> int:
        return self.base.q

    def components(self) -> tuple:
        return self.base.components()

    def begin_of(self, comp: frozenset) -> Point:
        (b,) = comp & self.begins
        return b

    def end_of(self, comp: frozenset) -> Point:
        if len(comp) == 1:
            return next(iter(comp))
        (e,) = comp - self.begins
        return e

    def source(self) -> str:
        out = []
        for i in range(self.p):
            out.append("-" if ("b", i) in self.begins else "+")
        return "".join(out)

    def target(self) -> str:
        out = []
        for i in range(self.q):
            out.append("+" if ("t", i) in self.begins else "-")
        return "".join(out)


EMPTY = OrientedBrauerDiagram(BrauerDiagram(0, 0, frozenset()), frozenset())


def identity(word: str) -> OrientedBrauerDiagram:
    n = len(word)
    pairs = frozenset(frozenset({("b", i), ("t", i)}) for i in range(n))
    begins = set()
    for i, c in enumerate(word):
        if c == "-":
            begins.add(("b", i))
        elif c == "+":
            begins.add(("t", i))
        else:
            raise ValueError(f"bad sign {c!r}")
    return OrientedBrauerDiagram(BrauerDiagram(n, n, pairs), frozenset(begins))


def cup(word: str) -> OrientedBrauerDiagram:
    """cup('+-') or cup('-+'): the single strand from nothing to the word."""
    if word not in ("+-", "-+"):
        raise ValueError("a cup target must be '+-' or '-+'")
    pairs = frozenset([frozenset({("t", 0), ("t", 1)})])
    begins = frozenset([("t", 0) if word[0] == "+" else ("t", 1)])
    return OrientedBrauerDiagram(BrauerDiagram(0, 2, pairs), begins)


def cap(word: str) -> OrientedBrauerDiagram:
    """cap('+-') or cap('-+'): the single strand from the word to nothing."""
    if word not in ("+-", "-+"):
        raise ValueError("a cap source must be '+-' or '-+'")
    pairs = frozenset([frozenset({("b", 0), ("b", 1)})])
    begins = frozenset([("b", 0) if word[0] == "-" else ("b", 1)])
    return OrientedBrauerDiagram(BrauerDiagram(2, 0, pairs), begins)


def transposition(word: str) -> OrientedBrauerDiagram:
    """The two-strand swap: bottom i connects to top 1-i.

    `word` is the source word; the strand occupying bottom i keeps its
    orientation.
    """
    if len(word) != 2:
        raise ValueError("transposition needs a length-2 word")
    pairs = frozenset(
        [frozenset({("b", 0), ("t", 1)}), frozenset({("b", 1), ("t", 0)})]
    )
    begins = set()
    for i, c in enumerate(word):
        if c == "-":
            begins.add(("b", i))
        else:
            begins.add(("t", 1 - i))
    return OrientedBrauerDiagram(BrauerDiagram(2, 2, pairs), frozenset(begins))


# ---------------------------------------------------------------------------
# Composition with circle extraction


@dataclass(frozen=True)
class Composition:
    """Composition result together with the strand-merge bookkeeping needed by
    the Jacobi-diagram composition.

    merged[i] is the ordered tuple of ('a'|'b', component index) constituents
    of the i-th component of the result, in traversal order from its beginning
    point.  circles[j] is the cyclic tuple of constituents of the j-th new
    circle, rotated so that it starts at the constituent owning the minimal
    middle point; circle_labels[j] is the frozenset of middle indices met by
    that circle (its canonical label).
    """

    diagram: OrientedBrauerDiagram
    merged: tuple
    circles: tuple
    circle_labels: tuple


def compose(a: OrientedBrauerDiagram, b: OrientedBrauerDiagram) -> Composition:
    if a.target() != b.source():
        raise ValueError(
            f"cannot compose: target {a.target()!r} != source {b.source()!r}"
        )
    comps_a = a.components()
    comps_b = b.components()

    def succ(side: str, idx: int):
        comp = comps_a[idx] if side == "a" else comps_b[idx]
        diagr = a if side == "a" else b
        end = diagr.end_of(comp)
        if side == "a" and end[0] == "t":
            mate = ("b", end[1])
            for j, c in enumerate(comps_b):
                if mate in c:
                    return ("b", j)
            raise AssertionError
        if side == "b" and end[0] == "b":
            mate = ("t", end[1])
            for j, c in enumerate(comps_a):
                if mate in c:
                    return ("a", j)
            raise AssertionError
        return None

    nodes = [("a", i) for i in range(len(comps_a))] + [
        ("b", i) for i in range(len(comps_b))
    ]
    has_pred = set()
    for n in nodes:
        s = succ(*n)
        if s is not None:
            has_pred.add(s)

    merged_chains = []
    used = set()
    for n in nodes:
        if n in has_pred or n in used:
            continue
        chain = []
        cur = n
        while cur is not None:
            chain.append(cur)
            used.add(cur)
            cur = succ(*cur)
        merged_chains.append(tuple(chain))

    circle_chains = []
    for n in nodes:
        if n in used:
            continue
        cyc = []
        cur = n
        while cur not in used:
            cyc.append(cur)
            used.add(cur)
            cur = succ(*cur)
        circle_chains.append(tuple(cyc))

    def middle_indices(chain) -> frozenset:
        idxs = set()
        for side, i in chain:
            comp = comps_a[i] if side == "a" else comps_b[i]
            diagr = a if side == "a" else b
            end = diagr.end_of(comp)
            if side == "a" and end[0] == "t":
                idxs.add(end[1])
            if side == "b" and end[0] == "b":
                idxs.add(end[1])
        return frozenset(idxs)

    # canonical rotation + ordering of circles by their minimal middle index
    canon_circles = []
    for cyc in circle_chains:
        label = middle_indices(cyc)
        # rotate so the constituent whose end sits at min(label) comes first
        best = None
        for r in range(len(cyc)):
            side, i = cyc[r]
            comp = comps_a[i] if side == "a" else comps_b[i]
            diagr = a if side == "a" else b
            end = diagr.end_of(comp)
            if end[1] == min(label):
                best = r
                break
        rotated = cyc[best + 1 :] + cyc[: best + 1]
        canon_circles.append((label, rotated))
    canon_circles.sort(key=lambda t: min(t[0]))
    circle_labels = tuple(lbl for lbl, _ in canon_circles)
    circles = tuple(ch for _, ch in canon_circles)

    # assemble the composed diagram: outer endpoints of each merged chain
    new_pairs = []
    new_begins = set()
    chain_endpoints = []
    for chain in merged_chains:
        side0, i0 = chain[0]
        comp0 = comps_a[i0] if side0 == "a" else comps_b[i0]
        d0 = a if side0 == "a" else b
        start = d0.begin_of(comp0)
        sideN, iN = chain[-1]
        compN = comps_a[iN] if sideN == "a" else comps_b[iN]
        dN = a if sideN == "a" else b
        finish = dN.end_of(compN)
        s_pt = start if side0 == "a" else ("t", start[1])
        if side0 == "b":
            assert start[0] == "t"
        f_pt = finish if sideN == "b" else ("b", finish[1])
        if sideN == "a":
            assert finish[0] == "b"
        # translate: bottom points of a keep ('b', i); top points of b keep ('t', i)
        new_pairs.append(frozenset({s_pt, f_pt}))
        new_begins.add(s_pt)
        chain_endpoints.append((s_pt, f_pt))
    diagram = OrientedBrauerDiagram(
        BrauerDiagram(a.p, b.q, frozenset(new_pairs)), frozenset(new_begins)
    )

    # merged chains indexed in the component order of the result
    order = {min(_pt_key(x) for x in c): None for c in diagram.base.pairs}
    del order
    comps_out = diagram.components()
    chain_by_comp = {}
    for chain, (s_pt, f_pt) in zip(merged_chains, chain_endpoints):
        key = frozenset({s_pt, f_pt})
        chain_by_comp[key] = chain
    merged = tuple(chain_by_comp[c] for c in comps_out)
    return Composition(diagram, merged, circles, circle_labels)


def tensor(
    a: OrientedBrauerDiagram, b: OrientedBrauerDiagram
) -> OrientedBrauerDiagram:
    def shift(pt: Point) -> Point:
        if pt[0] == "b":
            return ("b", pt[1] + a.p)
        return ("t", pt[1] + a.q)

    pairs = set(a.base.pairs)
    for pr in b.base.pairs:
        pairs.add(frozenset(shift(x) for x in pr))
    begins = set(a.begins) | {shift(x) for x in b.begins}
    return OrientedBrauerDiagram(
        BrauerDiagram(a.p + b.p, a.q + b.q, frozenset(pairs)), frozenset(begins)
    )


def co(a: OrientedBrauerDiagram, comp: frozenset) -> OrientedBrauerDiagram:
    """Change of orientation of one strand."""
    if comp not in a.base.pairs:
        raise ValueError("unknown component")
    b = a.begin_of(comp)
    e = a.end_of(comp)
    return OrientedBrauerDiagram(a.base, (a.begins - {b}) | {e})


def dbl_word(word: str, positions: Iterable[int]) -> str:
    pos = set(positions)
    out = []
    for i, c in enumerate(word):
        out.append(c)
        if i in pos:
            out.append(c)
    return "".join(out)


@dataclass(frozen=True)
class Doubling:
    """dbl result with the projection data the Jacobi lift-sum needs.

    copies[c] lists, for each doubled component c (index into a.components()),
    the two new component indices (into diagram.components()) in the order
    (copy through the smaller new bottom/top points, the other); untouched[c]
    gives the single new index for components that were not doubled.
    """

    diagram: OrientedBrauerDiagram
    copies: dict
    untouched: dict


def dbl(a: OrientedBrauerDiagram, comp_indices: Iterable[int]) -> Doubling:
    comps = a.components()
    targets = sorted(set(comp_indices))
    for t in targets:
        if not 0 <= t < len(comps):
            raise ValueError("unknown component")
    doubled_pts = set()
    for t in targets:
        doubled_pts |= comps[t]

    def new_positions(side: str, count: int) -> dict:
        """old index -> list of new indices (length 2 for doubled points)."""
        out = {}
        cur = 0
        for i in range(count):
            if (side, i) in doubled_pts:
                out[i] = [cur, cur + 1]
                cur += 2
            else:
                out[i] = [cur]
                cur += 1
        return out

    bpos = new_positions("b", a.p)
    tpos = new_positions("t", a.q)
    new_p = a.p + sum(1 for pt in doubled_pts if pt[0] == "b")
    new_q = a.q + sum(1 for pt in doubled_pts if pt[0] == "t")

    def lift(pt: Point, which: int) -> Point:
        table = bpos if pt[0] == "b" else tpos
        opts = table[pt[1]]
        return (pt[0], opts[which if len(opts) == 2 else 0])

    new_pairs = set()
    new_begins = set()
    copies: dict = {}
    untouched: dict = {}
    pair_for_copy: dict = {}
    for ci, comp in enumerate(comps):
        b = a.begin_of(comp)
        e = a.end_of(comp)
        if ci in targets:
            same_side = b[0] == e[0]
            for k in (0, 1):
                # through strands: parallel copies; cups/caps: nested copies
                eb = lift(b, k)
                ee = lift(e, (1 - k) if same_side else k)
                pr = frozenset({eb, ee})
                new_pairs.add(pr)
                new_begins.add(eb)
                pair_for_copy[(ci, k)] = pr
        else:
            pr = frozenset({lift(b, 0), lift(e, 0)})
            new_pairs.add(pr)
            new_begins.add(lift(b, 0))
            pair_for_copy[(ci, 0)] = pr
    diagram = OrientedBrauerDiagram(
        BrauerDiagram(new_p, new_q, frozenset(new_pairs)), frozenset(new_begins)
    )
    comps_out = diagram.components()
    index_of = {c: i for i, c in enumerate(comps_out)}
    for ci in range(len(comps)):
        if ci in targets:
            copies[ci] = (
                index_of[pair_for_copy[(ci, 0)]],
                index_of[pair_for_copy[(ci, 1)]],
            )
        else:
            untouched[ci] = index_of[pair_for_copy[(ci, 0)]]
    return Doubling(diagram, copies, untouched)


def forget_orientation(a: OrientedBrauerDiagram) -> BrauerDiagram:
    return a.base


def compose_unoriented(
    a: BrauerDiagram, b: BrauerDiagram
) -> tuple[BrauerDiagram, tuple]:
    """Plain Brauer composition; returns (b o a, circle labels)."""
    if a.q != b.p:
        raise ValueError("sizes do not match")
    # union-find over bottom(a), middle, top(b)
    parent: dict = {}

    def node(level, i):
        return (level, i)

    for i in range(a.p):
        parent[node(0, i)] = node(0, i)
    for i in range(a.q):
        parent[node(1, i)] = node(1, i)
    for i in range(b.q):
        parent[node(2, i)] = node(2, i)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x, y):
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[rx] = ry

    def conv(pt: Point, shift: int) -> tuple:
        if shift == 0:
            return node(0, pt[1]) if pt[0] == "b" else node(1, pt[1])
        return node(1, pt[1]) if pt[0] == "b" else node(2, pt[1])

    for pr in a.pairs:
        u, v = tuple(pr)
        union(conv(u, 0), conv(v, 0))
    for pr in b.pairs:
        u, v = tuple(pr)
        union(conv(u, 1), conv(v, 1))
    groups: dict = {}
    for x in parent:
        groups.setdefault(find(x), []).append(x)
    circles = []
    pairs = []
    for members in groups.values():
        outer = [m for m in members if m[0] != 1]
        if not outer:
            circles.append(frozenset(i for _, i in members))
            continue
        assert len(outer) == 2
        pts = []
        for lvl, i in outer:
            pts.append(("b", i) if lvl == 0 else ("t", i))
        pairs.append(frozenset(pts))
    circles.sort(key=min)
    return BrauerDiagram(a.p, b.q, frozenset(pairs)), tuple(circles)
