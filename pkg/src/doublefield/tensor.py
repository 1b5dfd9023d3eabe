"""Tensor fields in the distinguished frame of the flat double manifold.

Frame order is ``d/dx^1..d/dx^m, d/dx~_1..d/dx~_m`` (dual order likewise) and
all internal indices are 0-based. A tensor is a dense object array of
:class:`ScalarExpr` with one axis per slot; the variance string lists the
slots, ``'v'`` for a vector slot and ``'c'`` for a covector slot.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import matrix as mx
from .symcore import CoordSystem, ScalarExpr, as_expr


class TensorError(ValueError):
    pass


class DegenerateMetricError(TensorError):
    pass


class TensorField:
    __slots__ = ("cs", "variance", "_c")

    def __init__(self, cs: CoordSystem, variance: str, components):
        if any(v not in "vc" for v in variance):
            raise TensorError(f"variance must use 'v'/'c', got {variance!r}")
        arr = np.empty((cs.n,) * len(variance), dtype=object)
        src = np.asarray(components, dtype=object) if not isinstance(components, np.ndarray) else components
        if src.shape != arr.shape:
            raise TensorError(f"component shape {src.shape} does not match {arr.shape} for variance {variance!r}")
        for idx in np.ndindex(arr.shape):
            arr[idx] = as_expr(cs, src[idx])
        arr.flags.writeable = False
        object.__setattr__(self, "cs", cs)
        object.__setattr__(self, "variance", variance)
        object.__setattr__(self, "_c", arr)

    @classmethod
    def _wrap(cls, cs, variance, arr) -> "TensorField":
        obj = object.__new__(cls)
        arr.flags.writeable = False
        object.__setattr__(obj, "cs", cs)
        object.__setattr__(obj, "variance", variance)
        object.__setattr__(obj, "_c", arr)
        return obj

    def __setattr__(self, key, value):
        raise AttributeError("TensorField is immutable")

    @classmethod
    def zero(cls, cs: CoordSystem, variance: str) -> "TensorField":
        arr = np.empty((cs.n,) * len(variance), dtype=object)
        z = cs.zero()
        for idx in np.ndindex(arr.shape):
            arr[idx] = z
        return cls._wrap(cs, variance, arr)

    @property
    def components(self) -> np.ndarray:
        return self._c

    @property
    def rank(self) -> int:
        return len(self.variance)

    def __getitem__(self, idx):
        return self._c[idx]

    def items(self):
        for idx in np.ndindex(self._c.shape):
            yield idx, self._c[idx]

    def _check(self, other: "TensorField"):
        if not isinstance(other, TensorField):
            raise TensorError("expected a TensorField")
        if other.cs != self.cs:
            raise TensorError("tensors live on different coordinate systems")
        if other.variance != self.variance:
            raise TensorError(f"variance mismatch {self.variance!r} vs {other.variance!r}")

    def __add__(self, other):
        self._check(other)
        return TensorField._wrap(self.cs, self.variance, self._c + other._c)

    def __sub__(self, other):
        self._check(other)
        return TensorField._wrap(self.cs, self.variance, self._c - other._c)

    def __neg__(self):
        return TensorField._wrap(self.cs, self.variance, -self._c)

    def __mul__(self, f):
        if isinstance(f, TensorField):
            return NotImplemented
        f = as_expr(self.cs, f)
        if f.is_zero():
            return TensorField.zero(self.cs, self.variance)
        arr = np.empty(self._c.shape, dtype=object)
        for idx in np.ndindex(arr.shape):
            arr[idx] = self._c[idx] * f
        return TensorField._wrap(self.cs, self.variance, arr)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, TensorField):
            return NotImplemented
        return (self.cs == other.cs and self.variance == other.variance
                and all(a == b for a, b in zip(self._c.flat, other._c.flat)))

    def __hash__(self):
        return hash((self.variance, tuple(hash(x) for x in self._c.flat)))

    def is_zero(self) -> bool:
        return all(x.is_zero() for x in self._c.flat)

    def map(self, fn) -> "TensorField":
        arr = np.empty(self._c.shape, dtype=object)
        for idx in np.ndindex(arr.shape):
            arr[idx] = fn(self._c[idx])
        return TensorField._wrap(self.cs, self.variance, arr)

    def diff(self, i: int) -> "TensorField":
        """Componentwise partial derivative (the flat connection in direction i)."""
        return self.map(lambda e: e.diff(i))

    def eval(self, point) -> np.ndarray:
        out = np.empty(self._c.shape, dtype=object)
        for idx in np.ndindex(out.shape):
            out[idx] = self._c[idx].eval(point)
        return out

    def max_abs_at(self, point) -> Fraction:
        vals = self.eval(point)
        return max((abs(v) for v in vals.flat), default=Fraction(0))

    def depends_on_tilde(self) -> bool:
        return any(e.depends_on(i) for e in self._c.flat for i in self.cs.tilde_indices())

    def __repr__(self):
        if self.rank == 0:
            return f"TensorField(scalar: {self._c[()]})"
        return f"TensorField({self.variance!r}, {self.cs.n}^{self.rank} components)"

    def __str__(self):
        if self.variance == "v":
            return vector_str(self)
        return repr(self)

    # vector-field conveniences
    def __call__(self, f: ScalarExpr) -> ScalarExpr:
        """Directional derivative X(f) of a scalar along a vector field."""
        if self.variance != "v":
            raise TensorError("only vector fields act on functions")
        return act(self, f)

    def L_part(self) -> list[ScalarExpr]:
        return list(self._c[: self.cs.m])

    def Lt_part(self) -> list[ScalarExpr]:
        return list(self._c[self.cs.m:])


# --- constructors -------------------------------------------------------------

def vector(cs: CoordSystem, comps: Sequence) -> TensorField:
    return TensorField(cs, "v", list(comps))


def covector(cs: CoordSystem, comps: Sequence) -> TensorField:
    return TensorField(cs, "c", list(comps))


def scalar_field(cs: CoordSystem, f) -> TensorField:
    arr = np.empty((), dtype=object)
    arr[()] = as_expr(cs, f)
    return TensorField._wrap(cs, "", arr)


def frame(cs: CoordSystem, i: int) -> TensorField:
    """Frame field d/dx^{i+1} (i < m) or d/dx~_{i-m+1} (i >= m)."""
    return vector(cs, [1 if j == i else 0 for j in range(cs.n)])


def coframe(cs: CoordSystem, i: int) -> TensorField:
    return covector(cs, [1 if j == i else 0 for j in range(cs.n)])


def from_L(cs: CoordSystem, comps: Sequence) -> TensorField:
    return vector(cs, list(comps) + [0] * cs.m)


def from_Lt(cs: CoordSystem, comps: Sequence) -> TensorField:
    return vector(cs, [0] * cs.m + list(comps))


def matrix_tensor(cs: CoordSystem, variance: str, mat) -> TensorField:
    return TensorField(cs, variance, [list(r) for r in mat])


def L_block_tensor(cs: CoordSystem, variance: str, mat) -> TensorField:
    """Two-slot tensor supported on the L-block (indices < m)."""
    m = cs.m
    full = [[0] * cs.n for _ in range(cs.n)]
    for i in range(m):
        for j in range(m):
            full[i][j] = mat[i][j]
    return TensorField(cs, variance, full)


def vector_str(X: TensorField) -> str:
    cs = X.cs
    parts = []
    for a, c in enumerate(X.components):
        if c.is_zero():
            continue
        label = f"d/d{cs.names[a]}"
        parts.append(f"({c})*{label}")
    return " + ".join(parts) if parts else "0"


# --- vector field basics -------------------------------------------------------

def act(X: TensorField, f: ScalarExpr) -> ScalarExpr:
    acc = f.cs.zero()
    for a, xa in enumerate(X.components):
        if xa.is_zero():
            continue
        d = f.diff(a)
        if not d.is_zero():
            acc = acc + xa * d
    return acc


def lie_bracket(X: TensorField, Y: TensorField) -> TensorField:
    """Ordinary Lie bracket of vector fields."""
    cs = X.cs
    return vector(cs, [act(X, Y[b]) - act(Y, X[b]) for b in range(cs.n)])


def contract(T: TensorField, slot: int, X: TensorField) -> TensorField:
    """Insert a vector (or covector) into one slot of the opposite variance."""
    want = "c" if X.variance == "v" else "v"
    if T.variance[slot] != want or X.rank != 1:
        raise TensorError("slot variance does not match the inserted field")
    arr = np.tensordot(T.components, X.components, axes=([slot], [0]))
    if not isinstance(arr, np.ndarray):
        a = np.empty((), dtype=object)
        a[()] = arr
        arr = a
    arr = _fix_zero_sums(T.cs, arr)
    return TensorField._wrap(T.cs, T.variance[:slot] + T.variance[slot + 1:], arr)


def _fix_zero_sums(cs, arr):
    # tensordot over objects starts from int 0; coerce back to ScalarExpr
    out = np.empty(arr.shape, dtype=object)
    for idx in np.ndindex(arr.shape):
        v = arr[idx]
        out[idx] = v if isinstance(v, ScalarExpr) else cs.const(v)
    return out


def evaluate_on(T: TensorField, args: Sequence[TensorField]) -> ScalarExpr:
    """Full contraction T(args...) with one argument per slot."""
    if len(args) != T.rank:
        raise TensorError("wrong number of arguments")
    cur = T
    for X in args:
        cur = contract(cur, 0, X)
    return cur.components[()]


def tensor_product(S: TensorField, T: TensorField) -> TensorField:
    arr = np.multiply.outer(S.components, T.components)
    return TensorField._wrap(S.cs, S.variance + T.variance, _fix_zero_sums(S.cs, arr))


# --- canonical structures -----------------------------------------------------

@dataclass(frozen=True)
class CanonicalStructure:
    gamma: TensorField
    omega: TensorField
    F: TensorField


def gamma_matrix(m: int) -> list[list[int]]:
    n = 2 * m
    return [[1 if (j == i + m or i == j + m) else 0 for j in range(n)] for i in range(n)]


def omega_matrix(m: int) -> list[list[int]]:
    n = 2 * m
    out = [[0] * n for _ in range(n)]
    for i in range(m):
        out[i][i + m] = 1
        out[i + m][i] = -1
    return out


def F_matrix(m: int) -> list[list[int]]:
    n = 2 * m
    return [[(1 if i < m else -1) if i == j else 0 for j in range(n)] for i in range(n)]


def canonical_structure(cs: CoordSystem) -> CanonicalStructure:
    m = cs.m
    return CanonicalStructure(
        gamma=matrix_tensor(cs, "cc", gamma_matrix(m)),
        omega=matrix_tensor(cs, "cc", omega_matrix(m)),
        F=matrix_tensor(cs, "vc", F_matrix(m)),
    )


def _check_pair(X: TensorField, Y: TensorField):
    if X.variance != "v" or Y.variance != "v":
        raise TensorError("expected vector fields")
    if X.cs != Y.cs:
        raise TensorError("vector fields live on different coordinate systems")


def pair_gamma(X: TensorField, Y: TensorField) -> ScalarExpr:
    _check_pair(X, Y)
    m = X.cs.m
    acc = X.cs.zero()
    for i in range(m):
        for a, b in ((X[i], Y[i + m]), (X[i + m], Y[i])):
            if not a.is_zero() and not b.is_zero():
                acc = acc + a * b
    return acc


def pair_omega(X: TensorField, Y: TensorField) -> ScalarExpr:
    _check_pair(X, Y)
    m = X.cs.m
    acc = X.cs.zero()
    for i in range(m):
        if not X[i].is_zero() and not Y[i + m].is_zero():
            acc = acc + X[i] * Y[i + m]
        if not X[i + m].is_zero() and not Y[i].is_zero():
            acc = acc - X[i + m] * Y[i]
    return acc


def apply_F(X: TensorField) -> TensorField:
    m = X.cs.m
    return vector(X.cs, [c if a < m else -c for a, c in enumerate(X.components)])


def split_L(X: TensorField) -> tuple[TensorField, TensorField]:
    m = X.cs.m
    z = X.cs.zero()
    comps = X.components
    pl = vector(X.cs, [comps[a] if a < m else z for a in range(X.cs.n)])
    pt = vector(X.cs, [z if a < m else comps[a] for a in range(X.cs.n)])
    return pl, pt


def pr_L(X: TensorField) -> TensorField:
    return split_L(X)[0]


def pr_Lt(X: TensorField) -> TensorField:
    return split_L(X)[1]


def sharp_gamma(alpha: TensorField) -> TensorField:
    """gamma-sharp of a covector: dx^i -> d/dx~_i, dx~_i -> d/dx^i."""
    m = alpha.cs.m
    c = alpha.components
    return vector(alpha.cs, [c[a + m] if a < m else c[a - m] for a in range(alpha.cs.n)])


def flat_gamma(X: TensorField) -> TensorField:
    m = X.cs.m
    c = X.components
    return covector(X.cs, [c[a + m] if a < m else c[a - m] for a in range(X.cs.n)])


def _support(metric: TensorField) -> str:
    cs = metric.cs
    m = cs.m
    comps = metric.components
    touches_t = any(not comps[i, j].is_zero() for i in range(cs.n) for j in range(cs.n) if i >= m or j >= m)
    touches_b = any(not comps[i, j].is_zero() for i in range(cs.n) for j in range(cs.n) if i < m or j < m)
    if not touches_t:
        return "L"
    if not touches_b:
        return "Lt"
    return "full"


def musical(direction: str, metric: TensorField, arg: TensorField, slot: int = 0) -> TensorField:
    """Lower (``flat``) or raise (``sharp``) one slot of ``arg`` with ``metric``.

    ``flat`` maps ``X`` to ``i(X)metric``, i.e. ``(flat X)_j = sum_i X^i metric_ij``.
    Metrics supported only on the L-block (or only on the tilde block) are
    inverted on that block, so e.g. sharp_g maps dx-covectors into L.
    """
    if metric.variance != "cc":
        raise TensorError("metric must be a 2-covector tensor")
    cs = metric.cs
    n = cs.n
    M = [[metric[i, j] for j in range(n)] for i in range(n)]
    support = _support(metric)
    idx = {"L": list(range(cs.m)), "Lt": list(range(cs.m, n)), "full": list(range(n))}[support]
    if direction == "flat":
        if arg.variance[slot] != "v":
            raise TensorError("flat needs a vector slot")
        # X^i metric_ij summed over i: transpose acts on the slot
        mat = mx.transpose(M)
        new = arg.variance[:slot] + "c" + arg.variance[slot + 1:]
        return _apply_on_slot(arg, slot, mat, new)
    if direction == "sharp":
        if arg.variance[slot] != "c":
            raise TensorError("sharp needs a covector slot")
        sub_m = [[M[i][j] for j in idx] for i in idx]
        d = mx.det(sub_m)
        if d.is_zero():
            raise DegenerateMetricError("metric is degenerate on its support")
        inv = mx.inverse(mx.transpose(sub_m))
        full = [[cs.zero() for _ in range(n)] for _ in range(n)]
        for a, i in enumerate(idx):
            for b, j in enumerate(idx):
                full[i][j] = inv[a][b]
        outside = [k for k in range(n) if k not in idx]
        for k in outside:
            for idx_arr, c in arg.items():
                if idx_arr[slot] == k and not c.is_zero():
                    raise DegenerateMetricError("argument has components outside the metric's nondegenerate block")
        new = arg.variance[:slot] + "v" + arg.variance[slot + 1:]
        return _apply_on_slot(arg, slot, full, new)
    raise TensorError(f"unknown direction {direction!r}")


def _apply_on_slot(arg: TensorField, slot: int, mat, new_variance: str) -> TensorField:
    cs = arg.cs
    n = cs.n
    src = arg.components
    out = np.empty(src.shape, dtype=object)
    for idx in np.ndindex(src.shape):
        acc = cs.zero()
        for k in range(n):
            c = mat[idx[slot]][k]
            if c.is_zero() if isinstance(c, ScalarExpr) else c == 0:
                continue
            j = idx[:slot] + (k,) + idx[slot + 1:]
            v = src[j]
            if not v.is_zero():
                acc = acc + c * v
        out[idx] = acc
    return TensorField._wrap(cs, new_variance, out)


def random_vector(cs: CoordSystem, rng, degree: int = 2, terms: int = 2,
                  foliated: bool = False, support: str = "all") -> TensorField:
    """Random polynomial vector field (``support`` in all/L/Lt)."""
    from .symcore import random_poly
    variables = list(cs.base_indices()) if foliated else None
    comps = []
    for a in range(cs.n):
        if (support == "L" and a >= cs.m) or (support == "Lt" and a < cs.m):
            comps.append(cs.zero())
        else:
            comps.append(random_poly(cs, rng, degree, terms, variables))
    return vector(cs, comps)


def random_function(cs: CoordSystem, rng, degree: int = 2, terms: int = 3, foliated: bool = False) -> ScalarExpr:
    from .symcore import random_poly
    return random_poly(cs, rng, degree, terms, list(cs.base_indices()) if foliated else None)
