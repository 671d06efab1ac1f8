"""Framed oriented tangle programs: a line-oriented DSL of elementary
generator slices, skeleton extraction, linking matrices with exact eigenvalue
sign counts, and the Kirby-move harness (KI, CO, component doubling, and the
down-up KII pair generator).

A program is a sequence of slices; each slice is a single elementary
generator (identity word, crossing, cup, or cap) acting at a position of the
current signed word.  Framing is carried by the word itself via kinks
(blackboard convention); presets insert |f| kinks of the correct sign.

Sign conventions: letter '+' at a boundary position means the strand is
oriented downward there (it ends at a bottom point / begins at a top point).
`x+:i` is the crossing in which the strand entering at bottom position i
passes over the strand at position i+1; its crossing sign is +1 when the two
letters at (i, i+1) are equal and -1 otherwise, and `x-:i` is the mirror.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from . import brauer
from .linalg import det_int, signature


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.message = message


@dataclass(frozen=True)
class SliceOp:
    """One slice: kind in {'id', 'x+', 'x-', 'cup', 'cap'}.

    For 'id', word is the full signed word.  For 'cup'/'cap', word is the
    two-letter pattern and pos the 1-based position.  For crossings, pos is
    the left strand position.
    """

    kind: str
    pos: int = 1
    word: str = ""

    def shifted(self, k: int) -> "SliceOp":
        if self.kind == "id":
            return self
        return SliceOp(self.kind, self.pos + k, self.word)


def _check_word(w: str, line=0):
    for j, ch in enumerate(w):
        if ch not in "+-":
            raise ParseError(f"bad sign {ch!r} in word", line, j + 1)


def apply_slice(word: str, op: SliceOp, line: int = 0) -> str:
    """Target word of a slice applied to `word`; raises ParseError on mismatch."""
    if op.kind == "id":
        if word != op.word:
            raise ParseError(
                f"identity word {op.word!r} does not match current word {word!r}",
                line,
            )
        return op.word
    if op.kind in ("x+", "x-"):
        i = op.pos
        if not 1 <= i <= len(word) - 1:
            raise ParseError(
                f"crossing at {i} does not fit in a word of width {len(word)}", line
            )
        lst = list(word)
        lst[i - 1], lst[i] = lst[i], lst[i - 1]
        return "".join(lst)
    if op.kind == "cup":
        k = op.pos
        if not 1 <= k <= len(word) + 1:
            raise ParseError(f"cup position {k} out of range", line)
        return word[: k - 1] + op.word + word[k - 1 :]
    if op.kind == "cap":
        k = op.pos
        if not 1 <= k <= len(word) - 1:
            raise ParseError(f"cap position {k} out of range", line)
        if word[k - 1 : k + 1] != op.word:
            raise ParseError(
                f"cap pattern {op.word!r} does not match letters "
                f"{word[k - 1 : k + 1]!r} at position {k}",
                line,
            )
        return word[: k - 1] + word[k + 1 :]
    raise ParseError(f"unknown slice kind {op.kind!r}", line)


@dataclass(frozen=True)
class TangleProgram:
    slices: tuple
    source: str

    @property
    def target(self) -> str:
        w = self.source
        for op in self.slices:
            w = apply_slice(w, op)
        return w

    def words(self) -> list[str]:
        """Interface words: words[i] is the word below slice i."""
        out = [self.source]
        for op in self.slices:
            out.append(apply_slice(out[-1], op))
        return out

    def is_closed(self) -> bool:
        return self.source == "" and self.target == ""


def program(slices: Iterable[SliceOp], source: str = "") -> TangleProgram:
    slices = tuple(slices)
    w = source
    for i, op in enumerate(slices):
        w = apply_slice(w, op, i + 1)
    return TangleProgram(slices, source)


# ---------------------------------------------------------------------------
# Parsing


def _parse_token(tok: str, line: int) -> SliceOp:
    body = tok
    pos = 1
    if "@" in tok:
        body, _, ptxt = tok.partition("@")
        body = body.strip()
        ptxt = ptxt.strip()
        if not ptxt.isdigit():
            raise ParseError(f"bad position {ptxt!r}", line)
        pos = int(ptxt)
        if pos < 1:
            raise ParseError("positions are 1-based", line)
    if body.startswith("id:"):
        w = body[3:]
        _check_word(w, line)
        return SliceOp("id", 1, w)
    if body.startswith("x+:") or body.startswith("x-:"):
        kind = body[:2]
        itxt = body[3:]
        if not itxt.isdigit():
            raise ParseError(f"bad crossing position {itxt!r}", line)
        return SliceOp(kind, int(itxt))
    if body.startswith("cup:") or body.startswith("cap:"):
        kind = body[:3]
        w = body[4:]
        if w not in ("+-", "-+"):
            raise ParseError(f"{kind} pattern must be '+-' or '-+', got {w!r}", line)
        return SliceOp(kind, pos, w)
    raise ParseError(f"unrecognized token {tok!r}", line)


def _parse_preset(text: str, line: int) -> Optional[TangleProgram]:
    parts = text.split()
    if parts[0] == "u+":
        return preset_unknot(1)
    if parts[0] == "u-":
        return preset_unknot(-1)
    if parts[0] == "unknot":
        opts = _parse_opts(parts[1:], {"f"}, line)
        return preset_unknot(opts.get("f", 0))
    if parts[0] == "hopf":
        opts = _parse_opts(parts[1:], {"f1", "f2"}, line)
        return preset_hopf(opts.get("f1", 0), opts.get("f2", 0))
    return None


def _parse_opts(parts: list[str], allowed: set, line: int) -> dict:
    out = {}
    for p in parts:
        if "=" not in p:
            raise ParseError(f"expected key=value, got {p!r}", line)
        k, _, v = p.partition("=")
        if k not in allowed:
            raise ParseError(f"unknown option {k!r}", line)
        try:
            out[k] = int(v)
        except ValueError:
            raise ParseError(f"option {k!r} needs an integer, got {v!r}", line)
    return out


def parse(text: str) -> TangleProgram:
    """Parse the line-oriented DSL; `---` lines separate disjoint-union factors."""
    blocks: list[list] = [[]]
    preset_blocks: dict = {}
    for ln, rawline in enumerate(text.splitlines(), start=1):
        stripped = rawline.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped == "---":
            blocks.append([])
            continue
        maybe = _parse_preset(stripped, ln)
        if maybe is not None:
            if blocks[-1]:
                raise ParseError("a preset must stand alone in its factor", ln)
            preset_blocks[len(blocks) - 1] = maybe
            blocks[-1] = None  # consumed
            blocks.append([])
            continue
        if blocks[-1] is None:
            raise ParseError("a preset must stand alone in its factor", ln)
        blocks[-1].append((ln, _parse_token(stripped, ln)))
    progs = []
    for bi, blk in enumerate(blocks):
        if blk is None:
            progs.append(preset_blocks[bi])
            continue
        if not blk:
            continue
        source = blk[0][1].word if blk[0][1].kind == "id" else ""
        w = source
        for ln, op in blk:
            w = apply_slice(w, op, ln)
        progs.append(TangleProgram(tuple(op for _ln, op in blk), source))
    if not progs:
        return TangleProgram((), "")
    out = progs[0]
    for p in progs[1:]:
        out = disjoint_union(out, p)
    return out


# ---------------------------------------------------------------------------
# Presets


def _kink_slices(pos: int, sign: int) -> list[SliceOp]:
    x = "x+" if sign > 0 else "x-"
    return [
        SliceOp("cup", pos + 1, "+-"),
        SliceOp(x, pos),
        SliceOp("cap", pos + 1, "+-"),
    ]


def preset_unknot(f: int = 0) -> TangleProgram:
    ops = [SliceOp("cup", 1, "+-")]
    for _ in range(abs(f)):
        ops.extend(_kink_slices(1, 1 if f > 0 else -1))
    ops.append(SliceOp("cap", 1, "+-"))
    return program(ops)


def preset_hopf(f1: int = 0, f2: int = 0) -> TangleProgram:
    ops = [SliceOp("cup", 1, "+-")]
    for _ in range(abs(f1)):
        ops.extend(_kink_slices(1, 1 if f1 > 0 else -1))
    ops.append(SliceOp("cup", 2, "+-"))
    for _ in range(abs(f2)):
        ops.extend(_kink_slices(2, 1 if f2 > 0 else -1))
    ops.extend([SliceOp("x+", 1), SliceOp("x+", 1)])
    ops.append(SliceOp("cap", 2, "+-"))
    ops.append(SliceOp("cap", 1, "+-"))
    return program(ops)


PRESETS = {
    "u+": lambda: preset_unknot(1),
    "u-": lambda: preset_unknot(-1),
}


def preset(name: str) -> TangleProgram:
    p = _parse_preset(name.strip(), 1)
    if p is None:
        raise ParseError(f"unknown preset {name!r}", 1)
    return p


# ---------------------------------------------------------------------------
# Skeleton extraction


def slice_skeleton(op: SliceOp, word: str) -> brauer.OrientedBrauerDiagram:
    """Oriented Brauer diagram of one slice acting on `word`."""
    if op.kind == "id":
        return brauer.identity(op.word or word)
    if op.kind in ("x+", "x-"):
        i = op.pos
        mid = brauer.transposition(word[i - 1 : i + 1])
        return _pad(mid, word[: i - 1], word[i + 1 :])
    if op.kind == "cup":
        k = op.pos
        return _pad(brauer.cup(op.word), word[: k - 1], word[k - 1 :])
    if op.kind == "cap":
        k = op.pos
        return _pad(brauer.cap(op.word), word[: k - 1], word[k + 1 :])
    raise ValueError(op.kind)


def _pad(
    mid: brauer.OrientedBrauerDiagram, left: str, right: str
) -> brauer.OrientedBrauerDiagram:
    out = mid
    if left:
        out = brauer.tensor(brauer.identity(left), out)
    if right:
        out = brauer.tensor(out, brauer.identity(right))
    return out


def skeleton(prog: TangleProgram) -> tuple[brauer.OrientedBrauerDiagram, int]:
    """(underlying oriented Brauer diagram, number of circle components)."""
    words = prog.words()
    acc = brauer.identity(prog.source)
    circles = 0
    for op, w in zip(prog.slices, words):
        sk = slice_skeleton(op, w)
        comp = brauer.compose(acc, sk)
        circles += len(comp.circles)
        acc = comp.diagram
    return acc, circles


# ---------------------------------------------------------------------------
# Component tracking


class _Tracker:
    """Assigns component ids to every interface position of a program."""

    def __init__(self, prog: TangleProgram):
        self.prog = prog
        self.parent: dict = {}
        self.circle_events: list = []  # component roots closed into circles
        self.crossings: list = []  # (comp_a, comp_b, sign, slice_index)
        self.interface_ids: list = []  # per interface: tuple of comp ids
        self._n = 0
        self._run()

    def _new(self):
        cid = self._n
        self._n += 1
        self.parent[cid] = cid
        return cid

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def _union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb
            return rb
        return ra

    def _run(self):
        prog = self.prog
        ids = [self._new() for _ in prog.source]
        self.interface_ids.append(tuple(ids))
        words = prog.words()
        for si, (op, w) in enumerate(zip(prog.slices, words)):
            if op.kind == "id":
                if not ids:
                    ids = [self._new() for _ in op.word]
            elif op.kind in ("x+", "x-"):
                i = op.pos - 1
                a, b = ids[i], ids[i + 1]
                la, lb = w[i], w[i + 1]
                base = 1 if la == lb else -1
                sign = base if op.kind == "x+" else -base
                self.crossings.append((a, b, sign, si))
                ids[i], ids[i + 1] = b, a
            elif op.kind == "cup":
                k = op.pos - 1
                c = self._new()
                ids[k:k] = [c, c]
            elif op.kind == "cap":
                k = op.pos - 1
                a, b = ids[k], ids[k + 1]
                if self.find(a) == self.find(b):
                    self.circle_events.append(self.find(a))
                else:
                    self._union(a, b)
                del ids[k : k + 2]
            self.interface_ids.append(tuple(ids))

    def circles(self) -> list:
        """Final circle component roots, in order of closure."""
        return [self.find(c) for c in self.circle_events]


def pi0_circles(prog: TangleProgram) -> int:
    return len(_Tracker(prog).circle_events)


# ---------------------------------------------------------------------------
# Linking matrix and eigenvalue sign counts


@dataclass(frozen=True)
class Linking:
    matrix: tuple  # tuple of tuples of ints, indexed by circles in closure order
    sigma_plus: int
    sigma_minus: int
    sigma_zero: int

    @property
    def size(self) -> int:
        return len(self.matrix)

    def det(self) -> int:
        if not self.matrix:
            return 1
        return int(det_int([list(r) for r in self.matrix]))

    def h1_order(self) -> int:
        """|H_1| of the surgered manifold when finite (sigma_zero = 0)."""
        return abs(self.det())


def linking(prog: TangleProgram) -> Linking:
    if not prog.is_closed():
        raise ValueError("linking matrix requires a closed program")
    tr = _Tracker(prog)
    circles = tr.circles()
    index = {root: i for i, root in enumerate(circles)}
    n = len(circles)
    half = [[Fraction(0)] * n for _ in range(n)]
    for a, b, sign, _si in tr.crossings:
        ia, ib = index[tr.find(a)], index[tr.find(b)]
        if ia == ib:
            half[ia][ia] += sign
        else:
            half[ia][ib] += Fraction(sign, 2)
            half[ib][ia] += Fraction(sign, 2)
    mat = []
    for row in half:
        r = []
        for x in row:
            if x.denominator != 1:
                raise AssertionError("half-integer linking entry")
            r.append(int(x))
        mat.append(tuple(r))
    sp, sm, sz = signature([list(r) for r in mat])
    return Linking(tuple(mat), sp, sm, sz)


# ---------------------------------------------------------------------------
# Combination and Kirby moves


def disjoint_union(a: TangleProgram, b: TangleProgram) -> TangleProgram:
    if not (a.is_closed() and b.is_closed()):
        raise ValueError("disjoint union requires closed programs")
    return program(a.slices + b.slices)


def ki(a: TangleProgram, sign: int) -> TangleProgram:
    """Kirby I move: adjoin a +/-1-framed unknot."""
    if not a.is_closed():
        raise ValueError("KI requires a closed program")
    return disjoint_union(a, preset_unknot(1 if sign > 0 else -1))


def co_component(prog: TangleProgram, component) -> TangleProgram:
    """Reverse the orientation of one component.

    `component` is either an interface address (interface_index, position) or,
    for closed programs, an integer circle index in closure order.
    """
    tr = _Tracker(prog)
    if isinstance(component, int):
        roots = tr.circles()
        if not 0 <= component < len(roots):
            raise ValueError("unknown circle component")
        target = roots[component]
    else:
        ii, pos = component
        target = tr.find(tr.interface_ids[ii][pos - 1])
    new_ops = []
    for si, op in enumerate(prog.slices):
        below = tr.interface_ids[si]
        above = tr.interface_ids[si + 1]
        if op.kind == "id":
            w = "".join(
                _flip(ch) if tr.find(cid) == target else ch
                for ch, cid in zip(op.word, below)
            )
            new_ops.append(SliceOp("id", 1, w))
        elif op.kind in ("x+", "x-"):
            new_ops.append(op)
        elif op.kind == "cup":
            cid = above[op.pos - 1]
            if tr.find(cid) == target:
                new_ops.append(SliceOp("cup", op.pos, _flip_word(op.word)))
            else:
                new_ops.append(op)
        elif op.kind == "cap":
            cid = below[op.pos - 1]
            if tr.find(cid) == target:
                new_ops.append(SliceOp("cap", op.pos, _flip_word(op.word)))
            else:
                new_ops.append(op)
    src = "".join(
        _flip(ch) if tr.find(cid) == target else ch
        for ch, cid in zip(prog.source, tr.interface_ids[0])
    )
    return program(new_ops, src)


def _flip(ch: str) -> str:
    return "-" if ch == "+" else "+"


def _flip_word(w: str) -> str:
    return "".join(_flip(c) for c in w)


def dbl_component(prog: TangleProgram, component) -> TangleProgram:
    """Double one open (segment) component along the blackboard framing.

    `component` is an interface address (interface_index, position).  Doubling
    circle components of closed programs is not supported here; the KII
    harness realizes that move instead.
    """
    tr = _Tracker(prog)
    if isinstance(component, int):
        raise ValueError(
            "doubling a circle component of a closed link is not supported; "
            "use the KII harness"
        )
    ii, pos = component
    target = tr.find(tr.interface_ids[ii][pos - 1])
    if target in [tr.find(c) for c in tr.circle_events]:
        raise ValueError("cannot double a closed component")
    flags = [tr.find(c) == target for c in tr.interface_ids[0]]

    def shifted(p):  # new position of old position p (1-based)
        return p + sum(1 for f in flags[: p - 1] if f)

    new_source = ""
    for ch, f in zip(prog.source, flags):
        new_source += ch * (2 if f else 1)
    new_ops = []
    for si, op in enumerate(prog.slices):
        above = tr.interface_ids[si + 1]
        if op.kind == "id":
            w = ""
            for ch, f in zip(op.word, flags):
                w += ch * (2 if f else 1)
            new_ops.append(SliceOp("id", 1, w))
        elif op.kind in ("x+", "x-"):
            i = op.pos
            i2 = shifted(i)
            fa, fb = flags[i - 1], flags[i]
            if not fa and not fb:
                new_ops.append(SliceOp(op.kind, i2))
            elif fa and not fb:
                new_ops.append(SliceOp(op.kind, i2 + 1))
                new_ops.append(SliceOp(op.kind, i2))
            elif not fa and fb:
                new_ops.append(SliceOp(op.kind, i2))
                new_ops.append(SliceOp(op.kind, i2 + 1))
            else:
                new_ops.append(SliceOp(op.kind, i2 + 1))
                new_ops.append(SliceOp(op.kind, i2))
                new_ops.append(SliceOp(op.kind, i2 + 2))
                new_ops.append(SliceOp(op.kind, i2 + 1))
            flags[i - 1], flags[i] = fb, fa
        elif op.kind == "cup":
            k = op.pos
            k2 = shifted(k)
            cid = above[k - 1]
            if tr.find(cid) == target:
                new_ops.append(SliceOp("cup", k2, op.word))
                new_ops.append(SliceOp("cup", k2 + 1, op.word))
                flags[k - 1 : k - 1] = [True, True]
            else:
                new_ops.append(SliceOp("cup", k2, op.word))
                flags[k - 1 : k - 1] = [False, False]
        elif op.kind == "cap":
            k = op.pos
            k2 = shifted(k)
            if flags[k - 1]:
                if not flags[k]:
                    raise AssertionError("inconsistent doubling flags at a cap")
                new_ops.append(SliceOp("cap", k2 + 1, op.word))
                new_ops.append(SliceOp("cap", k2, op.word))
            else:
                new_ops.append(SliceOp("cap", k2, op.word))
            del flags[k - 1 : k + 1]
    return program(new_ops, new_source)


def kii_pair(s: TangleProgram) -> tuple[TangleProgram, TangleProgram]:
    """The two closures of a tangle with boundary word '+-' and identity
    skeleton (one downward and one upward through-strand): the plain double
    closure and the band-sum closure of the doubled downward strand."""
    if s.source != "+-" or s.target != "+-":
        raise ValueError("the KII harness needs boundary words '+-'")
    sk, _ = skeleton(s)
    if sk != brauer.identity("+-"):
        raise ValueError("the KII harness needs the identity skeleton on '+-'")
    shifted = [op.shifted(2) for op in s.slices if op.kind != "id"]
    l1 = program(
        [SliceOp("cup", 1, "+-"), SliceOp("cup", 2, "-+")]
        + shifted
        + [SliceOp("cap", 2, "-+"), SliceOp("cap", 1, "+-")]
    )
    doubled = dbl_component(s, (0, 1))
    l2 = program(
        [SliceOp("cup", 1, "-+"), SliceOp("cup", 3, "+-")]
        + [op.shifted(1) for op in doubled.slices if op.kind != "id"]
        + [SliceOp("cap", 1, "-+"), SliceOp("cap", 1, "+-")]
    )
    return l1, l2
