"""Set partitions, their transport and composition with circle extraction,
and fixed-point-free-involution combinatorics.

Ground sets are arbitrary finite sets of hashable elements.  Disjoint unions
are made unambiguous by tagging: `tagged("X", n)` builds the ground
{("X", 0), ..., ("X", n-1)}, so X/Y/Z sides never collide.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping


def tagged(side: str, n: int) -> frozenset:
    return frozenset((side, i) for i in range(n))


def _closure(ground: frozenset, links: Iterable[tuple]) -> frozenset:
    """Partition of `ground` generated by the given related pairs (union-find)."""
    parent = {x: x for x in ground}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in links:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    blocks: dict = {}
    for x in ground:
        blocks.setdefault(find(x), set()).add(x)
    return frozenset(frozenset(b) for b in blocks.values())


@dataclass(frozen=True)
class Partition:
    """A partition of a finite ground set into nonempty disjoint blocks."""

    ground: frozenset
    blocks: frozenset  # frozenset of frozensets

    def __post_init__(self):
        seen = set()
        for b in self.blocks:
            if not b:
                raise ValueError("empty block")
            if seen & b:
                raise ValueError("blocks are not disjoint")
            seen |= b
        if seen != set(self.ground):
            raise ValueError("blocks do not cover the ground set")

    @staticmethod
    def discrete(ground: Iterable) -> "Partition":
        g = frozenset(ground)
        return Partition(g, frozenset(frozenset([x]) for x in g))

    @staticmethod
    def indiscrete(ground: Iterable) -> "Partition":
        g = frozenset(ground)
        if not g:
            return Partition(g, frozenset())
        return Partition(g, frozenset([g]))

    @staticmethod
    def from_blocks(blocks: Iterable[Iterable]) -> "Partition":
        bs = frozenset(frozenset(b) for b in blocks)
        ground = frozenset(x for b in bs for x in b)
        return Partition(ground, bs)

    def block_of(self, x) -> frozenset:
        for b in self.blocks:
            if x in b:
                return b
        raise KeyError(x)

    def same_block(self, x, y) -> bool:
        return y in self.block_of(x)

    def restrict(self, subset: frozenset) -> frozenset:
        """Blocks entirely contained in `subset` (not in general a partition)."""
        return frozenset(b for b in self.blocks if b <= subset)


def join(a: Partition, b: Partition) -> Partition:
    """Least upper bound of a and b in the refinement order."""
    if a.ground != b.ground:
        raise ValueError("join requires a common ground set")
    links = []
    for p in (a, b):
        for blk in p.blocks:
            it = iter(blk)
            first = next(it)
            links.extend((first, x) for x in it)
    return Partition(a.ground, _closure(a.ground, links))


def transport(
    f: Mapping, p: Partition, direction: str, codomain: frozenset | None = None
) -> Partition:
    """Push (least partition of the codomain containing all f-images of blocks,
    with singletons off the image) or pull (x ~ x' iff f(x) ~ f(x')) of a
    partition along a map f given as a dict.
    """
    if direction == "push":
        if frozenset(f.keys()) != p.ground:
            raise ValueError("push requires a partition on the domain of f")
        cod = frozenset(codomain) if codomain is not None else frozenset(f.values())
        if not frozenset(f.values()) <= cod:
            raise ValueError("f does not map into the stated codomain")
        links = []
        for blk in p.blocks:
            imgs = [f[x] for x in blk]
            links.extend(zip(imgs, imgs[1:]))
        return Partition(cod, _closure(cod, links))
    if direction == "pull":
        if not frozenset(f.values()) <= p.ground:
            raise ValueError("pull requires a partition on the codomain of f")
        dom = frozenset(f.keys())
        by_block: dict = {}
        for x in dom:
            by_block.setdefault(p.block_of(f[x]), set()).add(x)
        return Partition(dom, frozenset(frozenset(v) for v in by_block.values()))
    raise ValueError(f"unknown direction {direction!r}")


def compose_with_cir(
    a: Partition, b: Partition, x: frozenset, y: frozenset, z: frozenset
) -> tuple[Partition, frozenset]:
    """Composition of a on X|_|Y with b on Y|_|Z, together with the set of
    circles: the blocks of the joined partition on X|_|Y|_|Z lying inside Y.

    Returns (b o a on X|_|Z, circles as a frozenset of frozensets of Y).
    """
    if x & y or y & z or x & z:
        raise ValueError("X, Y, Z must be pairwise disjoint")
    if a.ground != x | y:
        raise ValueError("first partition must live on X|_|Y")
    if b.ground != y | z:
        raise ValueError("second partition must live on Y|_|Z")
    total = x | y | z
    links = []
    for p in (a, b):
        for blk in p.blocks:
            it = iter(blk)
            first = next(it)
            links.extend((first, w) for w in it)
    big = Partition(total, _closure(total, links))
    circles = frozenset(blk for blk in big.blocks if blk <= y)
    xz = x | z
    out_blocks = []
    for blk in big.blocks:
        cut = blk & xz
        if cut:
            out_blocks.append(frozenset(cut))
    composed = Partition(xz, frozenset(out_blocks))
    return composed, circles


# ---------------------------------------------------------------------------
# Fixed-point-free involutions


@dataclass(frozen=True)
class FPFIInvolution:
    """A fixed-point-free involution, stored as a set of unordered pairs."""

    ground: frozenset
    pairs: frozenset  # frozenset of 2-element frozensets

    def __post_init__(self):
        seen = set()
        for p in self.pairs:
            if len(p) != 2:
                raise ValueError("pairs must have exactly two elements")
            if seen & p:
                raise ValueError("an element appears in two pairs")
            seen |= p
        if seen != set(self.ground):
            raise ValueError("pairs do not cover the ground set")

    @staticmethod
    def from_mapping(m: Mapping) -> "FPFIInvolution":
        pairs = frozenset(frozenset((k, v)) for k, v in m.items())
        return FPFIInvolution(frozenset(m.keys()) | frozenset(m.values()), pairs)

    def __call__(self, v):
        for p in self.pairs:
            if v in p:
                (other,) = p - {v}
                return other
        raise KeyError(v)

    def as_mapping(self) -> dict:
        out = {}
        for p in self.pairs:
            u, v = tuple(p)
            out[u] = v
            out[v] = u
        return out


def enumerate_fpfi(ground: Iterable) -> list[FPFIInvolution]:
    """All fixed-point-free involutions of a finite set ((|S|-1)!! of them;
    empty for odd |S|)."""
    elems = sorted(ground, key=repr)
    if len(elems) % 2:
        return []

    def rec(rest: tuple) -> list[list[frozenset]]:
        if not rest:
            return [[]]
        first, tail = rest[0], rest[1:]
        out = []
        for i, other in enumerate(tail):
            sub = tail[:i] + tail[i + 1 :]
            for pairing in rec(sub):
                out.append([frozenset((first, other))] + pairing)
        return out

    g = frozenset(elems)
    return [FPFIInvolution(g, frozenset(ps)) for ps in rec(tuple(elems))]


def orbit_count(sigma0: FPFIInvolution, sigma: FPFIInvolution) -> int:
    """Number of orbits of the group generated by the two involutions."""
    if sigma0.ground != sigma.ground:
        raise ValueError("involutions must share the ground set")
    links = [tuple(p) for p in sigma0.pairs] + [tuple(p) for p in sigma.pairs]
    return len(_closure(sigma0.ground, links))


def fpfi_orbit_polynomial(sigma0: FPFIInvolution) -> list[int]:
    """Dense coefficient vector of sum over sigma in FPFI(S) of
    X^(number of orbits of <sigma0, sigma>).  Index = power of X."""
    coeffs: list[int] = []
    for sigma in enumerate_fpfi(sigma0.ground):
        k = orbit_count(sigma0, sigma)
        if k >= len(coeffs):
            coeffs.extend([0] * (k + 1 - len(coeffs)))
        coeffs[k] += 1
    return coeffs


def rising_even_product(m: int) -> list[int]:
    """Dense coefficients of X(X+2)(X+4)...(X+2(m-1)); [1] for m = 0."""
    coeffs = [1]
    for i in range(m):
        shift = 2 * i
        # multiply by (X + shift)
        new = [0] * (len(coeffs) + 1)
        for k, c in enumerate(coeffs):
            new[k + 1] += c
            new[k] += shift * c
        coeffs = new
    return coeffs


def fpfi_tools(ground: Iterable) -> tuple[list[FPFIInvolution], list[int]]:
    """Enumeration of FPFI(S) and the orbit polynomial against a canonical
    base involution; ([], [0]) when |S| is odd."""
    elems = sorted(ground, key=repr)
    if len(elems) % 2:
        return [], [0]
    base = FPFIInvolution(
        frozenset(elems),
        frozenset(
            frozenset((elems[2 * i], elems[2 * i + 1])) for i in range(len(elems) // 2)
        ),
    )
    return enumerate_fpfi(ground), fpfi_orbit_polynomial(base)


def pentagon_circle_coherence(
    a: Partition,
    b: Partition,
    c: Partition,
    d: Partition,
    x: frozenset,
    y: frozenset,
    z: frozenset,
    t: frozenset,
    w: frozenset,
) -> bool:
    """Check that circle sets produced by the two bracketings of a triple (and
    all bracketings of a quadruple) agree as sets of subsets of the middles.

    The circles of an iterated composite are blocks of the single big join on
    the full disjoint union, so coherence is checked by comparing the multiset
    of circles gathered along the two composition orders against the blocks of
    the global join that avoid the outer boundary.
    """
    # circles collected along ((d o c) o b) o a
    cb, cir1 = compose_with_cir(b, c, y, z, t)
    del cb
    # global join on all five levels
    total = x | y | z | t | w
    links = []
    for p in (a, b, c, d):
        for blk in p.blocks:
            it = iter(blk)
            first = next(it)
            links.extend((first, u) for u in it)
    big = Partition(total, _closure(total, links))
    inner = y | z | t
    global_circles = frozenset(blk for blk in big.blocks if blk <= inner)

    def collect(order: str) -> frozenset:
        if order == "left":
            ba, c1 = compose_with_cir(a, b, x, y, z)
            cba, c2 = compose_with_cir(ba, c, x, z, t)
            dcba, c3 = compose_with_cir(cba, d, x, t, w)
            del ba, cba, dcba
        else:
            dc, c1 = compose_with_cir(c, d, z, t, w)
            dcb, c2 = compose_with_cir(b, dc, y, z, w)
            dcba, c3 = compose_with_cir(a, dcb, x, y, w)
            del dc, dcb, dcba
        # each collected circle is a subset of one middle level; its closure in
        # the global join identifies it with a global circle
        out = set()
        for circ in itertools.chain(c1, c2, c3):
            rep = next(iter(circ))
            out.add(big.block_of(rep))
        return frozenset(out)

    left = collect("left")
    right = collect("right")
    return left == right == global_circles
