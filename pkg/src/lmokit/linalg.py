"""Exact sparse linear algebra over the rationals.

Sparse vectors are dicts mapping an arbitrary hashable column key to a nonzero
Fraction.  Row reduction keeps a reduced echelon basis indexed by pivot key;
that is enough for what the rest of the package needs: reducing a vector
modulo a span, solving linear systems, computing nullspaces, and counting
eigenvalue signs of symmetric integer matrices by congruence.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Hashable, Iterable, Optional

Vec = dict  # {column key: Fraction}, nonzero entries only

_ONE = Fraction(1)


def vec_add(u: Vec, v: Vec, c: Fraction = _ONE) -> Vec:
    """Return u + c*v."""
    out = dict(u)
    for k, a in v.items():
        b = out.get(k, 0) + c * a
        if b:
            out[k] = b
        else:
            out.pop(k, None)
    return out


def vec_scale(u: Vec, c: Fraction) -> Vec:
    if not c:
        return {}
    return {k: c * a for k, a in u.items()}


def _is_tag(k) -> bool:
    return isinstance(k, tuple) and len(k) == 2 and k[0] == "#x"


class Echelon:
    """Reduced row-echelon span of sparse vectors.

    Every stored row has coefficient 1 at its pivot and contains no other
    pivot key, so reducing a vector takes at most one elimination per pivot.
    Keys for which `tag` returns True are never chosen as pivots (used to
    carry solution bookkeeping through the elimination).
    """

    def __init__(self, tag: Optional[Callable[[Hashable], bool]] = None):
        self.rows: dict = {}
        self._tag = tag or (lambda k: False)

    def reduce(self, v: Vec) -> Vec:
        v = dict(v)
        while True:
            k = next((k for k in v if k in self.rows), None)
            if k is None:
                return v
            v = vec_add(v, self.rows[k], -v[k])

    def add(self, v: Vec) -> bool:
        """Insert v into the span. Returns True if the rank grew."""
        v = self.reduce(v)
        pivots = [k for k in v if not self._tag(k)]
        if not pivots:
            return False
        p = min(pivots, key=repr)
        v = vec_scale(v, _ONE / v[p])
        for q, row in list(self.rows.items()):
            if p in row:
                self.rows[q] = vec_add(row, v, -row[p])
        self.rows[p] = v
        return True

    def add_many(self, vs: Iterable[Vec]) -> int:
        return sum(1 for v in vs if self.add(v))

    @property
    def rank(self) -> int:
        return len(self.rows)

    def contains(self, v: Vec) -> bool:
        return not self.reduce(v)


def solve(images: list[Vec], target: Vec) -> Optional[dict]:
    """One solution x of sum_i x[i] * images[i] = target, or None.

    Returns a dict {i: Fraction} with zero entries omitted.
    """
    ech = Echelon(tag=_is_tag)
    for i, img in enumerate(images):
        v = dict(img)
        v[("#x", i)] = _ONE
        ech.add(v)
    res = ech.reduce(dict(target))
    if any(not _is_tag(k) for k in res):
        return None
    return {k[1]: -c for k, c in res.items()}


def nullspace(images: list[Vec]) -> list[dict]:
    """Basis of {x : sum_i x[i] * images[i] = 0} as dicts {i: Fraction}."""
    ech = Echelon(tag=_is_tag)
    out = []
    for i, img in enumerate(images):
        v = dict(img)
        v[("#x", i)] = _ONE
        red = ech.reduce(v)
        if any(not _is_tag(k) for k in red):
            ech.add(red)
        else:
            out.append({k[1]: c for k, c in red.items()})
    return out


def signature(mat: list[list[int]]) -> tuple[int, int, int]:
    """(n_plus, n_minus, n_zero) eigenvalue sign counts of a symmetric integer
    matrix, by exact congruence diagonalization with symmetric pivoting.

    When no nonzero diagonal entry is available, the change of basis
    e_i -> e_i + e_j (for a nonzero off-diagonal a_ij) creates one; this is a
    congruence, so the sign counts are preserved.
    """
    n = len(mat)
    a = [[Fraction(mat[i][j]) for j in range(n)] for i in range(n)]
    for i in range(n):
        for j in range(i):
            if a[i][j] != a[j][i]:
                raise ValueError("matrix is not symmetric")
    alive = list(range(n))
    plus = minus = zero = 0
    while alive:
        piv = next((i for i in alive if a[i][i] != 0), None)
        if piv is None:
            pair = next(
                ((i, j) for i in alive for j in alive if i != j and a[i][j] != 0),
                None,
            )
            if pair is None:
                zero += len(alive)
                break
            i, j = pair
            for y in range(n):
                a[i][y] += a[j][y]
            for x in range(n):
                a[x][i] += a[x][j]
            piv = i
        d = a[piv][piv]
        if d > 0:
            plus += 1
        else:
            minus += 1
        others = [x for x in alive if x != piv]
        coef = {x: a[x][piv] / d for x in others}
        for x in others:
            if coef[x]:
                for y in range(n):
                    a[x][y] -= coef[x] * a[piv][y]
        for x in others:
            if coef[x]:
                for y in range(n):
                    a[y][x] -= coef[x] * a[y][piv]
        alive.remove(piv)
    return plus, minus, zero


def det_int(mat: list[list[int]]) -> Fraction:
    """Exact determinant of a square integer matrix."""
    n = len(mat)
    a = [[Fraction(x) for x in row] for row in mat]
    det = Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if a[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            det = -det
        det *= a[c][c]
        inv = _ONE / a[c][c]
        for r in range(c + 1, n):
            f = a[r][c] * inv
            if f:
                for k in range(c, n):
                    a[r][k] -= f * a[c][k]
    return det
