"""Jacobi diagrams: vertex-oriented unitrivalent graphs with legs attached to
ordered skeleton components, cyclically ordered circles, or free colors, plus
a counter of closed dashed loops.

A diagram is canonicalized to a lossless encoding tuple; two diagrams get the
same encoding exactly when they are related by an isomorphism respecting the
attachments, the linear orders on segment legs, the cyclic orders on circle
legs (rotations allowed), the color labels (legs of the same color are
interchangeable), and the vertex orientations (cyclic slot rotations allowed,
reflections not).

Attachment tokens:
    ('S', comp, rank)   leg on skeleton component `comp` at linear position
    ('C', cir, rank)    leg on circle `cir` at cyclic position
    ('K', color)        leg carrying a free color

Half-edges in raw form are ('v', vertex, slot) with slot in {0,1,2} (the slot
order 0,1,2 is the vertex orientation) or ('l', leg_index).
"""

from __future__ import annotations

import itertools
from functools import lru_cache


class RawDiagram:
    """Mutable builder form of a Jacobi diagram."""

    __slots__ = ("loops", "nv", "legs", "pairs")

    def __init__(self, loops: int, nv: int, legs: list, pairs: list):
        self.loops = loops
        self.nv = nv
        self.legs = list(legs)  # leg index -> attachment token
        self.pairs = [tuple(p) for p in pairs]  # list of (half, half)

    def copy(self) -> "RawDiagram":
        return RawDiagram(self.loops, self.nv, list(self.legs), list(self.pairs))

    @property
    def degree(self) -> int:
        tot = self.nv + len(self.legs)
        if tot % 2:
            raise ValueError("odd vertex count")
        return tot // 2

    def check(self):
        halves = set()
        for a, b in self.pairs:
            for h in (a, b):
                if h in halves:
                    raise ValueError(f"half-edge {h} used twice")
                halves.add(h)
        expect = {("l", i) for i in range(len(self.legs))}
        expect |= {("v", v, s) for v in range(self.nv) for s in range(3)}
        if halves != expect:
            raise ValueError("pairing does not cover all half-edges exactly once")
        return self


def empty_raw() -> RawDiagram:
    return RawDiagram(0, 0, [], [])


def raw_key(d: RawDiagram) -> tuple:
    """Cheap hashable key of the raw (non-canonical) structure."""
    return (
        d.loops,
        tuple(d.legs),
        tuple(sorted(tuple(sorted(p)) for p in d.pairs)),
    )


def enc_degree(enc: tuple) -> int:
    """Degree of an encoded diagram: (trivalent + legs)/2."""
    _loops, edges, triples = enc
    nlegs = sum(1 for e in edges for tok in e if tok[0] != "V")
    return (len(triples) + nlegs) // 2


def enc_loops(enc: tuple) -> int:
    return enc[0]


def enc_strip_loops(enc: tuple) -> tuple:
    return (0, enc[1], enc[2])


def enc_with_loops(enc: tuple, loops: int) -> tuple:
    return (loops, enc[1], enc[2])


def enc_legs(enc: tuple) -> list:
    """Attachment tokens of all legs (with multiplicity)."""
    _loops, edges, _triples = enc
    return [tok for e in edges for tok in e if tok[0] != "V"]


def enc_connected_components(enc: tuple) -> list:
    """Split an encoded diagram into connected dashed components.

    Returns a list of RawDiagram pieces (loops are returned as `loops` many
    one-loop pieces collectively via the integer in the first slot of the
    result tuple).  Used by the coproduct.
    """
    d = decode(enc)
    # union-find over vertices and legs
    parent: dict = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
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
    for x in parent:
        groups.setdefault(find(x), set()).add(x)
    pieces = []
    for members in groups.values():
        vs = sorted(i for kind, i in members if kind == "v")
        ls = sorted(i for kind, i in members if kind == "l")
        vmap = {v: i for i, v in enumerate(vs)}
        lmap = {l: i for i, l in enumerate(ls)}
        pairs = []
        for a, b in d.pairs:
            owner = ("v", a[1]) if a[0] == "v" else ("l", a[1])
            if find(owner) != find(next(iter(members))):
                continue

            def remap(h):
                if h[0] == "v":
                    return ("v", vmap[h[1]], h[2])
                return ("l", lmap[h[1]])

            pairs.append((remap(a), remap(b)))
        legs = [d.legs[l] for l in ls]
        pieces.append(RawDiagram(0, len(vs), legs, pairs))
    return pieces


# ---------------------------------------------------------------------------
# Canonicalization


def canonical(d: RawDiagram, cache: dict | None = None) -> tuple:
    key = raw_key(d)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    enc = _canonical_impl(d)
    if cache is not None:
        cache[key] = enc
    return enc


_GLOBAL_CACHE: dict = {}


def canon(d: RawDiagram) -> tuple:
    return canonical(d, _GLOBAL_CACHE)


def _circle_info(d: RawDiagram) -> dict:
    """circle index -> sorted list of (rank, leg index)."""
    out: dict = {}
    for li, att in enumerate(d.legs):
        if att[0] == "C":
            out.setdefault(att[1], []).append((att[2], li))
    for v in out.values():
        v.sort()
    return out


def _canonical_impl(d: RawDiagram) -> tuple:
    circles = _circle_info(d)
    rot_axes = []
    for cir, legs in sorted(circles.items()):
        m = len(legs)
        rot_axes.append((cir, m))
    best = None
    for rots in itertools.product(*[range(m) if m > 1 else [0] for _, m in rot_axes]):
        leg_tok = list(d.legs)
        for (cir, m), r in zip(rot_axes, rots):
            if m <= 1 or r == 0:
                continue
            for rank, li in circles[cir]:
                leg_tok[li] = ("C", cir, (rank - r) % m)
        cand = _canonical_for_rotation(d, leg_tok, best)
        if best is None or (cand is not None and cand < best):
            best = cand
    assert best is not None
    return (d.loops,) + best


def _neighbor_tokens(d: RawDiagram, leg_tok: list) -> dict:
    """half-edge -> owner node, and adjacency: vertex -> list of (slot, other node)."""
    owner = {}
    for li in range(len(d.legs)):
        owner[("l", li)] = ("L", li)
    for v in range(d.nv):
        for s in range(3):
            owner[("v", v, s)] = ("V", v)
    adj = {v: [] for v in range(d.nv)}
    leg_edge = {}
    for a, b in d.pairs:
        for x, y in ((a, b), (b, a)):
            if x[0] == "v":
                adj[x[1]].append((x[2], owner[y]))
            else:
                leg_edge[x[1]] = owner[y]
    for v in adj:
        adj[v].sort()
    return {"adj": adj, "leg_edge": leg_edge}


def _canonical_for_rotation(d: RawDiagram, leg_tok: list, prune):
    nv = d.nv
    nb = _neighbor_tokens(d, leg_tok)
    adj = nb["adj"]

    # --- refinement: iso-invariant vertex colors
    def leg_base(li):
        return leg_tok[li]

    color = {}
    for v in range(nv):
        sig = []
        for _slot, other in adj[v]:
            if other[0] == "L":
                sig.append(("L", leg_base(other[1])))
            else:
                sig.append(("V",)) if other[1] != v else sig.append(("self",))
        color[v] = tuple(sorted(map(repr, sig)))
    for _round in range(nv):
        new = {}
        for v in range(nv):
            nsig = []
            for _slot, other in adj[v]:
                if other[0] == "V":
                    nsig.append(color[other[1]])
                else:
                    nsig.append(("L", repr(leg_base(other[1]))))
            new[v] = (color[v], tuple(sorted(map(repr, nsig))))
        if len(set(new.values())) == len(set(color.values())):
            color = {v: repr(new[v]) for v in new}
            break
        color = {v: repr(new[v]) for v in new}

    classes: dict = {}
    for v in range(nv):
        classes.setdefault(color[v], []).append(v)
    ordered_classes = [classes[c] for c in sorted(classes)]

    best = prune

    # enumerate numberings consistent with the class order
    def numberings():
        perms_per_class = [itertools.permutations(cl) for cl in ordered_classes]
        for combo in itertools.product(*perms_per_class):
            seq = [v for part in combo for v in part]
            yield {v: i for i, v in enumerate(seq)}

    for vnum in numberings():
        cand = _encode_with_numbering(d, leg_tok, vnum)
        if best is None or cand < best:
            best = cand
    return best


def _encode_with_numbering(d: RawDiagram, leg_tok: list, vnum: dict) -> tuple:
    def tok_of(h):
        if h[0] == "l":
            return leg_tok[h[1]]
        return ("V", vnum[h[1]])

    # edges with sort tokens
    edges = []
    for idx, (a, b) in enumerate(d.pairs):
        ta, tb = tok_of(a), tok_of(b)
        pair = tuple(sorted((ta, tb)))
        edges.append((pair, idx))
    edges.sort(key=lambda t: t[0])
    # group ties
    groups = []
    i = 0
    while i < len(edges):
        j = i
        while j < len(edges) and edges[j][0] == edges[i][0]:
            j += 1
        groups.append(edges[i:j])
        i = j
    token_list = tuple(e[0] for e in edges)

    best_triples = None
    # assign edge ids within tied groups in every order; pick minimal triples
    for assignment in _tie_assignments(groups):
        edge_id = {}
        for eid, (_pair, idx) in enumerate(assignment):
            edge_id[idx] = eid
        triples = []
        ok = True
        for v in sorted(vnum, key=lambda x: vnum[x]):
            slot_edges = [None, None, None]
            for idx, (a, b) in enumerate(d.pairs):
                for h in (a, b):
                    if h[0] == "v" and h[1] == v:
                        slot_edges[h[2]] = edge_id[idx]
            if None in slot_edges:
                ok = False
                break
            triples.append(_cyc_min(tuple(slot_edges)))
        if not ok:
            continue
        triples = tuple(triples)
        if best_triples is None or triples < best_triples:
            best_triples = triples
    assert best_triples is not None or d.nv == 0
    return (token_list, best_triples or ())


def _tie_assignments(groups):
    """All ways to order edges within tied groups (others fixed)."""
    options = []
    for g in groups:
        if len(g) == 1:
            options.append([g])
        else:
            options.append([list(p) for p in itertools.permutations(g)])
    for combo in itertools.product(*options):
        yield [e for part in combo for e in part]


@lru_cache(maxsize=None)
def _cyc_min_cached(t: tuple) -> tuple:
    return min(t, t[1:] + t[:1], t[2:] + t[:2])


def _cyc_min(t: tuple) -> tuple:
    return _cyc_min_cached(t)


# ---------------------------------------------------------------------------
# Decoding


def decode(enc: tuple) -> RawDiagram:
    """Rebuild a RawDiagram (in canonical labels) from an encoding."""
    loops, edges, triples = enc
    nv = len(triples)
    legs = []
    # edge id -> its two endpoint half-edges
    endpoints: list[list] = [[] for _ in edges]
    # vertex slots first
    for v, tri in enumerate(triples):
        for slot, eid in enumerate(tri):
            endpoints[eid].append(("v", v, slot))
    # legs: scan edges in order; each non-V token is a leg endpoint
    for eid, pair in enumerate(edges):
        for tok in pair:
            if tok[0] != "V":
                li = len(legs)
                legs.append(tok)
                endpoints[eid].append(("l", li))
    pairs = []
    for eid, eps in enumerate(endpoints):
        if len(eps) != 2:
            raise ValueError(f"edge {eid} has {len(eps)} endpoints: {enc}")
        pairs.append((eps[0], eps[1]))
    return RawDiagram(loops, nv, legs, pairs)


def encode_str(enc: tuple) -> str:
    """Stable human-readable string form of a canonical diagram encoding."""
    loops, edges, triples = enc

    def tok(t):
        if t[0] == "V":
            return f"v{t[1]}"
        if t[0] == "S":
            return f"s{t[1]}.{t[2]}"
        if t[0] == "C":
            return f"c{t[1]}.{t[2]}"
        return f"k:{t[1]}"

    parts = [f"loops={loops}"]
    parts.append("edges[" + ",".join(f"({tok(a)}|{tok(b)})" for a, b in edges) + "]")
    parts.append(
        "vertices[" + ",".join("(" + ",".join(map(str, t)) + ")" for t in triples) + "]"
    )
    return ";".join(parts)
