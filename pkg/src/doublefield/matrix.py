"""Small dense linear algebra over exact fields.

Matrices are lists of lists whose entries are ScalarExpr or Fraction (any
type with field arithmetic and ``is_zero``-like truthiness). Sizes are tiny
(at most 2m <= 16), so plain Gaussian elimination is adequate.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Sequence

from .symcore import ScalarExpr


class SingularMatrixError(ValueError):
    pass


Matrix = list[list]


def _is_zero(x) -> bool:
    return x.is_zero() if isinstance(x, ScalarExpr) else x == 0


def _pivot_key(x):
    # prefer constants, then low degree, to limit expression swell
    if isinstance(x, ScalarExpr):
        return (0 if x.is_constant() else 1, x.total_degree())
    return (0, 0)


def zeros(n: int, k: int | None = None, zero=Fraction(0)) -> Matrix:
    return [[zero for _ in range(n if k is None else k)] for _ in range(n)]


def identity(n: int, one=Fraction(1), zero=Fraction(0)) -> Matrix:
    return [[one if i == j else zero for j in range(n)] for i in range(n)]


def transpose(a: Matrix) -> Matrix:
    return [list(r) for r in zip(*a)]


def matmul(a: Matrix, b: Matrix) -> Matrix:
    bt = transpose(b)
    out = []
    for row in a:
        out_row = []
        for col in bt:
            acc = None
            for x, y in zip(row, col):
                if _is_zero(x) or _is_zero(y):
                    continue
                t = x * y
                acc = t if acc is None else acc + t
            out_row.append(acc if acc is not None else row[0] * 0)
        out.append(out_row)
    return out


def matvec(a: Matrix, v: Sequence) -> list:
    out = []
    for row in a:
        acc = None
        for x, y in zip(row, v):
            if _is_zero(x) or _is_zero(y):
                continue
            t = x * y
            acc = t if acc is None else acc + t
        out.append(acc if acc is not None else row[0] * 0)
    return out


def add(a: Matrix, b: Matrix) -> Matrix:
    return [[x + y for x, y in zip(r, s)] for r, s in zip(a, b)]


def sub(a: Matrix, b: Matrix) -> Matrix:
    return [[x - y for x, y in zip(r, s)] for r, s in zip(a, b)]


def scale(c, a: Matrix) -> Matrix:
    return [[c * x for x in r] for r in a]


def neg(a: Matrix) -> Matrix:
    return [[-x for x in r] for r in a]


def block(tl: Matrix, tr: Matrix, bl: Matrix, br: Matrix) -> Matrix:
    return [r + s for r, s in zip(tl, tr)] + [r + s for r, s in zip(bl, br)]


def split_blocks(a: Matrix, m: int):
    return (
        [r[:m] for r in a[:m]],
        [r[m:] for r in a[:m]],
        [r[:m] for r in a[m:]],
        [r[m:] for r in a[m:]],
    )


def is_zero_matrix(a: Matrix) -> bool:
    return all(_is_zero(x) for r in a for x in r)


def equal(a: Matrix, b: Matrix) -> bool:
    return all(_is_zero(x - y) for r, s in zip(a, b) for x, y in zip(r, s))


def map_entries(f: Callable, a: Matrix) -> Matrix:
    return [[f(x) for x in r] for r in a]


def _eliminate(a: Matrix, rhs: Matrix | None):
    """Gauss-Jordan in place; returns (rank, sign, pivots, product of pivots)."""
    n = len(a)
    k = len(a[0]) if n else 0
    row = 0
    sign = 1
    pivots = []
    det = None
    for col in range(k):
        cands = [r for r in range(row, n) if not _is_zero(a[r][col])]
        if not cands:
            continue
        p = min(cands, key=lambda r: _pivot_key(a[r][col]))
        if p != row:
            a[row], a[p] = a[p], a[row]
            if rhs is not None:
                rhs[row], rhs[p] = rhs[p], rhs[row]
            sign = -sign
        piv = a[row][col]
        det = piv if det is None else det * piv
        inv = 1 / piv
        a[row] = [x * inv for x in a[row]]
        if rhs is not None:
            rhs[row] = [x * inv for x in rhs[row]]
        for r in range(n):
            if r == row:
                continue
            f = a[r][col]
            if _is_zero(f):
                continue
            a[r] = [x - f * y if not _is_zero(y) else x for x, y in zip(a[r], a[row])]
            if rhs is not None:
                rhs[r] = [x - f * y if not _is_zero(y) else x for x, y in zip(rhs[r], rhs[row])]
        pivots.append(col)
        row += 1
        if row == n:
            break
    return row, sign, pivots, det


def det(a: Matrix):
    n = len(a)
    if n == 0:
        return Fraction(1)
    work = [list(r) for r in a]
    rank, sign, _, d = _eliminate(work, None)
    if rank < n:
        return a[0][0] * 0
    return d if sign == 1 else -d


def inverse(a: Matrix) -> Matrix:
    n = len(a)
    zero = a[0][0] * 0
    one = zero + 1
    work = [list(r) for r in a]
    rhs = identity(n, one, zero)
    rank, _, _, _ = _eliminate(work, rhs)
    if rank < n:
        raise SingularMatrixError("matrix is singular")
    return rhs


def solve(a: Matrix, b: Matrix) -> Matrix:
    """Solve ``a x = b`` for square nonsingular ``a`` (``b`` has column vectors)."""
    work = [list(r) for r in a]
    rhs = [list(r) for r in b]
    rank, _, _, _ = _eliminate(work, rhs)
    if rank < len(a):
        raise SingularMatrixError("matrix is singular")
    return rhs


def rank(a: Matrix) -> int:
    if not a:
        return 0
    work = [list(r) for r in a]
    r, _, _, _ = _eliminate(work, None)
    return r


def rref(a: Matrix) -> tuple[Matrix, list[int]]:
    work = [list(r) for r in a]
    r, _, pivots, _ = _eliminate(work, None)
    return work[:r], pivots


def nullspace(a: Matrix, ncols: int | None = None) -> list[list]:
    """Basis of ``{v : a v = 0}`` as a list of column vectors."""
    k = len(a[0]) if a else ncols
    if not a:
        return [[Fraction(int(i == j)) for i in range(k)] for j in range(k)]
    zero = a[0][0] * 0
    red, pivots = rref(a)
    free = [c for c in range(k) if c not in pivots]
    basis = []
    for f in free:
        v = [zero] * k
        v[f] = zero + 1
        for r, pc in enumerate(pivots):
            v[pc] = -red[r][f]
        basis.append(v)
    return basis


def inertia(sym: Matrix) -> tuple[int, int, int]:
    """(positive, negative, zero) counts for a symmetric matrix of Fractions.

    Uses exact congruence diagonalisation (symmetric Gaussian elimination).
    """
    a = [[Fraction(x) for x in r] for r in sym]
    n = len(a)
    pos = negc = 0
    for i in range(n):
        if a[i][i] == 0:
            j = next((j for j in range(i + 1, n) if a[j][j] != 0), None)
            if j is not None:
                a[i], a[j] = a[j], a[i]
                for r in a:
                    r[i], r[j] = r[j], r[i]
            else:
                j = next((j for j in range(i + 1, n) if a[i][j] != 0), None)
                if j is None:
                    continue
                # add row/col j to row/col i to create a nonzero diagonal
                for c in range(n):
                    a[i][c] += a[j][c]
                for r in range(n):
                    a[r][i] += a[r][j]
        p = a[i][i]
        if p == 0:
            continue
        if p > 0:
            pos += 1
        else:
            negc += 1
        for j in range(i + 1, n):
            f = a[j][i] / p
            if f:
                for c in range(n):
                    a[j][c] -= f * a[i][c]
                for r in range(n):
                    a[r][j] -= f * a[r][i]
    return pos, negc, n - pos - negc
