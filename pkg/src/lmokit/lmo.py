"""Diagrammatic traces, the trace-family solver, the maps replacing circles by
glued trace values, the degree-truncated quotients where the 3-manifold
invariants live, and the invariants themselves.

The level-n invariant of a surgery presentation L is computed as

    to_e( j_n( cs_nu( Z(L) ) ), n ) * u(+)^(-s+) * u(-)^(-s-)

where j_n glues the n-th power of the tree trace into every circle, to_e
evaluates the dashed loop at -2n and truncates above degree n, u(+/-) are the
same quantities for the +/-1-framed unknots, and s+/s- count linking-matrix
eigenvalue signs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from . import brauer, jacobi, kontsevich, tangles
from .diagrams import RawDiagram, canon, decode, enc_degree, enc_loops, enc_strip_loops
from .jacobi import DiagramVector, ctx
from .linalg import Echelon, solve, nullspace

ONE = Fraction(1)
ZERO = Fraction(0)

TRACE_BUDGET = 5


def _color(i: int) -> str:
    return f"z{i}"


def _trace_ctx(m: int) -> jacobi.Context:
    return ctx(brauer.EMPTY, 0, tuple(_color(i) for i in range(m)))


def _relabel_colors(x: DiagramVector, mapping: dict) -> DiagramVector:
    new_colors = tuple(sorted(mapping.values()))
    octx = ctx(x.context.skeleton, x.context.n_cir, new_colors)
    out = {}
    for e, c in x.terms.items():
        d = decode(e)
        legs = [("K", mapping[att[1]]) if att[0] == "K" else att for att in d.legs]
        key = canon(RawDiagram(d.loops, d.nv, legs, d.pairs))
        out[key] = out.get(key, ZERO) + c
    return DiagramVector(octx, x.trunc, out)


def _rotate_trace(x: DiagramVector, m: int, shift: int = 1) -> DiagramVector:
    mapping = {_color(i): _color((i + shift) % m) for i in range(m)}
    return _relabel_colors(x, mapping)


def _swap_colors(x: DiagramVector, i: int, j: int) -> DiagramVector:
    mapping = {
        _color(k): _color(k) for k in range(len(x.context.colors))
    }
    mapping[_color(i)] = _color(j)
    mapping[_color(j)] = _color(i)
    return _relabel_colors(x, mapping)


def _glue_y(x: DiagramVector, m: int, i: int = 1) -> DiagramVector:
    """Glue a Y onto the leg colored i of a vector on m-1 colors; the two free
    prongs become colors i and i+1, later colors shift up.  The new trivalent
    vertex has cyclic order (connecting edge, leg i+1, leg i)."""
    out = {}
    for e, c in x.terms.items():
        d = decode(e)
        legs = list(d.legs)
        li = next(
            k for k, att in enumerate(legs) if att[0] == "K" and att[1] == _color(i)
        )
        partner = {}
        for a, b in d.pairs:
            partner[a] = b
            partner[b] = a
        far = partner[("l", li)]
        w = d.nv

        def shift_col(att):
            if att[0] != "K":
                return att
            idx = int(att[1][1:])
            return ("K", _color(idx + 1 if idx > i else idx))

        legs2 = [shift_col(a) for a in legs]
        legs2[li] = ("K", _color(i + 1))  # reuse the slot for the new i+1 leg
        la = len(legs2)
        legs2.append(("K", _color(i)))
        pairs = [(a, b) for a, b in d.pairs if ("l", li) not in (a, b)]
        pairs.append((("v", w, 0), far))
        pairs.append((("v", w, 1), ("l", li)))
        pairs.append((("v", w, 2), ("l", la)))
        key = canon(RawDiagram(d.loops, d.nv + 1, legs2, pairs))
        out[key] = out.get(key, ZERO) + c
    octx = _trace_ctx(m)
    return DiagramVector(octx, x.trunc + 1, out)


@dataclass
class TraceFamily:
    """A diagrammatic trace family T_0, T_1, ..., up to a lazily grown level."""

    values: dict  # m -> DiagramVector on (empty, empty, m colors)

    def level(self, m: int) -> DiagramVector:
        if m not in self.values:
            raise KeyError(f"trace level {m} not solved; raise the budget")
        return self.values[m]

    @property
    def max_level(self) -> int:
        return max(self.values)


_LMO_TRACE: Optional[TraceFamily] = None


def solve_trace_lmo(n_max: int = TRACE_BUDGET) -> TraceFamily:
    """The tree-valued trace family: T_0 = T_1 = 0, T_2 = the strut, and each
    next level is the unique rotation-invariant solution of the slide
    compatibility against the previous level."""
    global _LMO_TRACE
    if _LMO_TRACE is not None and _LMO_TRACE.max_level >= n_max:
        return _LMO_TRACE
    values = {}
    values[0] = DiagramVector.zero(_trace_ctx(0), 0)
    values[1] = DiagramVector.zero(_trace_ctx(1), 1)
    strut = RawDiagram(0, 0, [("K", _color(0)), ("K", _color(1))], [(("l", 0), ("l", 1))])
    values[2] = DiagramVector.from_raw(_trace_ctx(2), 1, strut)
    for m in range(3, n_max + 1):
        values[m] = _solve_trace_level(m, values[m - 1])
    _LMO_TRACE = TraceFamily(values)
    return _LMO_TRACE


def _connected(e: tuple) -> bool:
    d = decode(e)
    if d.loops:
        return False
    return len(jacobi._piece_split(d)) == 1


def _enumerate_trees(m: int) -> list:
    """All vertex-oriented trees with m leaves colored z0..z_{m-1}, generated
    by repeated leaf insertion (each tree arises exactly once up to the
    orientation choices), then deduplicated canonically."""
    base = RawDiagram(
        0, 0, [("K", _color(0)), ("K", _color(1))], [(("l", 0), ("l", 1))]
    )
    pool = [base]
    for leaf in range(2, m):
        nxt = []
        for d in pool:
            for ei in range(len(d.pairs)):
                a, b = d.pairs[ei]
                for first, second in ((a, b), (b, a)):
                    w = d.nv
                    legs = list(d.legs) + [("K", _color(leaf))]
                    pairs = [p for i, p in enumerate(d.pairs) if i != ei]
                    pairs.append((("v", w, 0), first))
                    pairs.append((("v", w, 1), second))
                    pairs.append((("v", w, 2), ("l", len(legs) - 1)))
                    nxt.append(RawDiagram(0, d.nv + 1, legs, pairs))
        pool = nxt
    seen = {}
    for d in pool:
        seen.setdefault(canon(d), d)
    return sorted(seen.keys(), key=repr)


def _solve_trace_level(m: int, prev: DiagramVector) -> DiagramVector:
    context = _trace_ctx(m)
    deg = m - 1
    budget = max(deg, jacobi.DEGREE_BUDGET)
    # representatives of connected tree diagrams whose relation residues are
    # linearly independent: the unknowns are honest quotient coordinates, so
    # the uniqueness assertion below is about classes
    basis = []
    ech = Echelon()
    for e in _enumerate_trees(m):
        residue = jacobi.normal_form(
            DiagramVector(context, deg, {e: ONE}), budget=budget
        )
        if ech.add(dict(residue.terms)):
            basis.append(e)
    rhs = _glue_y(prev, m, 1)

    def stacked(v_rot: DiagramVector, v_stu: DiagramVector) -> dict:
        out = {}
        for tag, v in (("rot", v_rot), ("stu", v_stu)):
            nf = jacobi.normal_form(v, budget=budget)
            for e, c in nf.terms.items():
                out[(tag, e)] = c
        return out

    images = []
    for b in basis:
        vb = DiagramVector(context, deg, {b: ONE})
        rot = _rotate_trace(vb, m) - vb
        stu = vb - _swap_colors(vb, 1, 2)
        images.append(stacked(rot, stu))
    target = stacked(DiagramVector.zero(context, deg), rhs)
    sol = solve(images, target)
    if sol is None:
        raise RuntimeError(f"trace solve failed at level {m}")
    null = nullspace(images)
    if null:
        raise RuntimeError(
            f"trace solution space at level {m} is {1 + len(null)}-dimensional"
        )
    return DiagramVector(context, deg, {basis[i]: c for i, c in sol.items() if c})


def trace_power(family: TraceFamily, n: int, m: int) -> DiagramVector:
    """Level m of the n-th power of the family under the shuffle product."""
    if n == 1:
        return family.level(m)
    return _power_family(family, n, m)[m]


_POWER_CACHE: dict = {}


def _power_family(family: TraceFamily, n: int, m_max: int) -> dict:
    key = (id(family), n, m_max)
    if key in _POWER_CACHE:
        return _POWER_CACHE[key]
    if n == 1:
        out = {m: family.values[m] for m in family.values if m <= m_max}
    else:
        lower = _power_family(family, n - 1, m_max)
        out = {}
        for m in range(0, m_max + 1):
            acc = DiagramVector.zero(_trace_ctx(m), max(m, 1))
            for p in range(0, m + 1):
                q = m - p
                lp = lower.get(p)
                tq = family.values.get(q)
                if lp is None or tq is None or lp.is_zero() or tq.is_zero():
                    continue
                acc = acc + _shuffle_glue(lp, tq, p, q)
            out[m] = acc
    _POWER_CACHE[key] = out
    return out


def _shuffle_glue(lp: DiagramVector, tq: DiagramVector, p: int, q: int) -> DiagramVector:
    """Sum over (p,q) shuffles of the disjoint union, relabeled to m colors."""
    m = p + q
    out = DiagramVector.zero(_trace_ctx(m), max(m, 1))
    for positions in itertools.combinations(range(m), p):
        pos_p = list(positions)
        pos_q = [i for i in range(m) if i not in positions]
        a = _relabel_colors(lp.retruncate(m), {_color(i): f"a{i}" for i in range(p)})
        b = _relabel_colors(tq.retruncate(m), {_color(i): f"b{i}" for i in range(q)})
        ab = jacobi.tensor(a, b)
        mapping = {f"a{i}": _color(pos_p[i]) for i in range(p)}
        mapping.update({f"b{i}": _color(pos_q[i]) for i in range(q)})
        out = out + _relabel_colors(ab, mapping).retruncate(max(m, 1))
    return out


# ---------------------------------------------------------------------------
# The circle-replacement maps


def _leg_split(x: DiagramVector, n: int) -> DiagramVector:
    """Sum over all ways of distributing each circle's legs onto n copies of
    that circle, cyclic orders restricted."""
    k = x.context.n_cir
    octx = ctx(brauer.EMPTY, k * n, x.context.colors)
    out = {}
    for e, c in x.terms.items():
        d = decode(e)
        circle_legs = [
            (li, att) for li, att in enumerate(d.legs) if att[0] == "C"
        ]
        choices = [range(n)] * len(circle_legs)
        for combo in itertools.product(*choices):
            legs = list(d.legs)
            for (li, att), copy in zip(circle_legs, combo):
                legs[li] = ("C", att[1] * n + copy, att[2])
            raw = jacobi._renumber_site_ranks(RawDiagram(d.loops, d.nv, legs, d.pairs))
            key = canon(raw)
            out[key] = out.get(key, ZERO) + c
    return DiagramVector(octx, x.trunc, out)


def j_map(
    x: DiagramVector,
    family: Optional[TraceFamily] = None,
    n: int = 1,
    mode: str = "direct",
) -> DiagramVector:
    """Replace every circle carrying m legs by the level-m value of the n-th
    power of the trace family, glued in cyclic order."""
    if x.context.skeleton.base.pairs:
        raise ValueError("j acts on vectors with empty skeleton")
    family = family or solve_trace_lmo()
    if mode == "via_power":
        split = _leg_split(x, n)
        scaled = _j_direct(split, family, 1)
        k = x.context.n_cir
        return scaled.scale(Fraction(1, math.factorial(n) ** k))
    if mode != "direct":
        raise ValueError(f"unknown mode {mode!r}")
    return _j_direct(x, family, n)


def _j_direct(x: DiagramVector, family: TraceFamily, n: int) -> DiagramVector:
    """Glue the n-th shuffle power of the family into every circle.

    Gluing the shuffle power realizes the sum over ordered leg splittings, so
    it carries the same 1/(n!)^k normalization as the splitting route; with it
    the glued value of the r-chord circle reproduces X(X+2)...(X+2(r-1))."""
    k = x.context.n_cir
    octx = ctx(brauer.EMPTY, 0, x.context.colors)
    out = DiagramVector.zero(octx, x.trunc)
    for e, c in x.terms.items():
        term = DiagramVector(
            ctx(brauer.EMPTY, k, x.context.colors), x.trunc, {e: c}
        )
        piece = _glue_circles(term, family, n)
        if piece is not None:
            out = out + piece
    if n > 1:
        out = out.scale(Fraction(1, math.factorial(n) ** k))
    return out


def _glue_circles(term: DiagramVector, family: TraceFamily, n: int) -> Optional[DiagramVector]:
    ((e, coeff),) = term.terms.items()
    k = term.context.n_cir
    d = decode(e)
    leg_counts = [
        sum(1 for att in d.legs if att[0] == "C" and att[1] == cir)
        for cir in range(k)
    ]
    # a circle with fewer than 2n legs kills the term (every factor of the
    # power family consumes at least two legs)
    if any(m < 2 * n for m in leg_counts):
        return None
    needed_base = max((m - 2 * (n - 1) for m in leg_counts), default=0)
    if needed_base > family.max_level:
        raise KeyError(
            f"trace level {needed_base} not solved (budget {family.max_level})"
        )
    acc_raws = [(d, coeff)]
    for cir in range(k):
        m = leg_counts[cir]
        if n == 1:
            tv = family.values.get(m)
        else:
            tv = _power_family(family, n, m).get(m)
        if tv is None or tv.is_zero():
            return None
        new_acc = []
        for raw, c0 in acc_raws:
            for te, tc in tv.terms.items():
                glued = _glue_one_circle(raw, decode(te), cir)
                new_acc.append((glued, c0 * tc))
        acc_raws = new_acc
    octx = ctx(brauer.EMPTY, 0, term.context.colors)
    out = {}
    for raw, c0 in acc_raws:
        # circles all consumed; renumber? all 'C' legs gone by construction
        if raw.degree > term.trunc:
            continue
        key = canon(raw)
        out[key] = out.get(key, ZERO) + c0
    v = DiagramVector(octx, term.trunc, out)
    return v


def _glue_one_circle(dx: RawDiagram, dt: RawDiagram, cir: int) -> RawDiagram:
    """Weld the trace diagram dt (colors z0..z_{m-1}) onto the legs of circle
    `cir` of dx, matching the cyclic order starting at rank 0."""
    circle = sorted(
        (att[2], li) for li, att in enumerate(dx.legs) if att[0] == "C" and att[1] == cir
    )
    m = len(circle)
    welds = []
    tcolor = {}
    for li, att in enumerate(dt.legs):
        if att[0] == "K":
            tcolor[att[1]] = li
    if len(tcolor) != m:
        raise AssertionError("trace level does not match the leg count")
    for pos, (_rank, li) in enumerate(circle):
        welds.append((li, tcolor[_color(pos)]))
    return jacobi._weld_raws(dx, dt, welds)


# ---------------------------------------------------------------------------
# The quotients e(n) and the invariants


def to_e(x: DiagramVector, n: int) -> DiagramVector:
    """Evaluate the dashed loop at -2n, truncate above degree n, reduce."""
    octx = ctx(brauer.EMPTY, 0, ())
    out = {}
    for e, c in x.terms.items():
        loops = enc_loops(e)
        core = enc_strip_loops(e)
        if enc_degree(core) > n:
            continue
        val = c * Fraction(-2 * n) ** loops
        out[core] = out.get(core, ZERO) + val
    v = DiagramVector(octx, n, out)
    return jacobi.normal_form(v, budget=max(n, jacobi.DEGREE_BUDGET))


def epsilon(x: DiagramVector) -> Fraction:
    """The degree-0 coefficient (the counit of e(n))."""
    empty = canon(RawDiagram(0, 0, [], []))
    return x.terms.get(empty, ZERO)


def e_mul(a: DiagramVector, b: DiagramVector) -> DiagramVector:
    return jacobi.normal_form(jacobi.tensor(a, b), budget=max(a.trunc, b.trunc, jacobi.DEGREE_BUDGET))


def e_inverse(a: DiagramVector) -> DiagramVector:
    c0 = epsilon(a)
    if not c0:
        raise ValueError("not invertible: zero degree-0 part")
    unit = DiagramVector.unit(a.context, a.trunc)
    m = a.scale(ONE / c0) - unit
    out = unit
    term = unit
    for _ in range(a.trunc):
        term = e_mul(term, m).scale(-1)
        if term.is_zero():
            break
        out = out + term
    return out.scale(ONE / c0)


def e_power(a: DiagramVector, k: int) -> DiagramVector:
    if k < 0:
        return e_power(e_inverse(a), -k)
    out = DiagramVector.unit(a.context, a.trunc)
    for _ in range(k):
        out = e_mul(out, a)
    return out


# ---------------------------------------------------------------------------
# The invariants


def required_budget(n_components: int, level: int) -> int:
    return (n_components + 1) * level


_UNKNOT_NORM_CACHE: dict = {}


def unknot_normalization(level: int, sign: int) -> DiagramVector:
    """to_e of the glued trace value of the +/-1-framed unknot at `level`."""
    key = (level, sign)
    if key not in _UNKNOT_NORM_CACHE:
        budget = required_budget(1, level)
        prog = tangles.preset_unknot(1 if sign > 0 else -1)
        z = kontsevich.z_eval(prog, budget)
        y = kontsevich.cs_nu(z)
        fam = solve_trace_lmo(trace_levels_needed(budget, level))
        w = j_map(y, fam, level)
        _UNKNOT_NORM_CACHE[key] = to_e(w, level)
    return _UNKNOT_NORM_CACHE[key]


def trace_levels_needed(budget: int, level: int) -> int:
    """Highest base trace level the n-th power family can consume on inputs
    of degree <= budget: circles carry at most 2*budget legs and every power
    factor uses at least two of them."""
    return max(2, 2 * budget - 2 * (level - 1))


def omega_e(
    prog: tangles.TangleProgram, level: int, budget: Optional[int] = None
) -> DiagramVector:
    """The level-n invariant of the 3-manifold presented by a closed program."""
    if not prog.is_closed():
        raise ValueError("omega needs a closed program")
    k = tangles.pi0_circles(prog)
    need = required_budget(k, level)
    if budget is None:
        budget = need
    if budget < need:
        raise jacobi.BudgetError(
            f"budget {budget} is too small: level {level} on {k} components "
            f"needs at least {need}"
        )
    lk = tangles.linking(prog)
    z = kontsevich.z_eval(prog, budget)
    y = kontsevich.cs_nu(z)
    fam = solve_trace_lmo(trace_levels_needed(budget, level))
    w = j_map(y, fam, level)
    t = to_e(w, level)
    up = unknot_normalization(level, +1)
    um = unknot_normalization(level, -1)
    out = e_mul(t, e_power(up, -lk.sigma_plus))
    out = e_mul(out, e_power(um, -lk.sigma_minus))
    return out


def zlmo(
    prog: tangles.TangleProgram, upto: int, tilde: bool = False
) -> DiagramVector:
    """1 + sum over 1 <= n <= upto of the degree-n parts of the level-n
    invariants; with `tilde`, each part is rescaled by |H_1|^(-n)."""
    lk = tangles.linking(prog)
    if tilde and lk.sigma_zero > 0:
        raise ValueError("not a Q-homology sphere: tilde variant undefined")
    octx = ctx(brauer.EMPTY, 0, ())
    out = DiagramVector.unit(octx, upto)
    for n in range(1, upto + 1):
        om = omega_e(prog, n)
        part = om.degree_part(n)
        if tilde:
            h1 = lk.h1_order()
            part = part.scale(Fraction(1, h1**n))
        out = out + part.retruncate(upto)
    return out


def delta_e(x: DiagramVector, n: int, p: int):
    """Component-splitting coproduct e(n) -> e(p) x e(n-p)."""
    if not 1 <= p <= n - 1:
        raise ValueError("need 1 <= p <= n-1")
    t = jacobi.coproduct(x)
    out = {}
    for (e1, e2), c in t.terms.items():
        if enc_degree(e1) > p or enc_degree(e2) > n - p:
            continue
        out[(e1, e2)] = out.get((e1, e2), ZERO) + c
    res = jacobi.TensorVector(x.context, x.context, x.trunc, out)
    return jacobi.nf_tensor(res, budget=max(n, jacobi.DEGREE_BUDGET))


def pr_down(x: DiagramVector, n: int, m: int) -> DiagramVector:
    """Projection e(n) -> e(m) for m <= n (drop degrees above m)."""
    del n
    return x.degree_le(m).retruncate(m)


# ---------------------------------------------------------------------------
# Structural checks used by the verification suite


def varsigma(k: int, colors: Optional[list] = None) -> DiagramVector:
    """Sum of all strut pairings on 2k colors."""
    from .partitions import enumerate_fpfi

    names = colors or [f"p{i}" for i in range(2 * k)]
    octx = ctx(brauer.EMPTY, 0, tuple(sorted(names)))
    out = {}
    for sigma in enumerate_fpfi(names):
        legs = []
        pairs = []
        for idx, pr in enumerate(sorted(sigma.pairs, key=repr)):
            u, v = sorted(pr, key=repr)
            legs.append(("K", u))
            legs.append(("K", v))
            pairs.append((("l", 2 * idx), ("l", 2 * idx + 1)))
        key = canon(RawDiagram(0, 0, legs, pairs))
        out[key] = out.get(key, ZERO) + ONE
    return DiagramVector(octx, k, out)


def p_ideal_span_degree(n_plus_1: int, degree: int, trunc: int) -> Echelon:
    """Echelon of the degree-`degree` part of the ideal generated by pairings
    with varsigma, computed from all diagrams with 2(n+1) single-use colors,
    multiplied by loop powers."""
    k = n_plus_1
    names = [f"p{i}" for i in range(2 * k)]
    sigma = varsigma(k, names)
    gen_ctx = ctx(brauer.EMPTY, 0, tuple(sorted(names)))
    ech = Echelon()
    target_degree = degree
    # generator x of degree d pairs down to degree d - 2k + deg(varsigma)= d - k
    d_needed = target_degree + k
    budget = max(trunc, target_degree, jacobi.DEGREE_BUDGET)
    for extra_loops in range(0, target_degree + 3):
        for e in jacobi.enumerate_slot(gen_ctx, d_needed, color_mult={c: 1 for c in sorted(names)}):
            x = DiagramVector(gen_ctx, d_needed, {e: ONE})
            paired = jacobi.pair_colors(x, sigma.retruncate(d_needed))
            terms = {}
            for ee, cc in paired.terms.items():
                ee2 = (ee[0] + extra_loops, ee[1], ee[2])
                terms[ee2] = cc
            v = DiagramVector(ctx(brauer.EMPTY, 0, ()), budget, terms)
            nf = jacobi.normal_form(v, budget=budget)
            ech.add(dict(nf.terms))
    return ech
