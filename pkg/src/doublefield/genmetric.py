"""Fields (g, B, phi), the generalized metric H and the S+/S- splitting.

Matrix conventions used throughout:

* ``flat_B X = i(X)B`` so, as a matrix acting on components, ``flat_B = B^T = -B``;
* ``iota_pm X = X + sharp_gamma(flat_{B pm g} X)`` has tilde part ``(-B pm g) X``;
* ``H = [[g - B g^-1 B, -B g^-1], [g^-1 B, g^-1]]`` in the distinguished frame;
* ``Phi = G H`` where ``G`` is the matrix of gamma, so ``H = G Phi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from . import matrix as mx
from .algebroid import gen_lie_derivative, is_strongly_foliated, star_matrix
from .symcore import CoordSystem, ScalarExpr, as_expr
from .tensor import TensorField, gamma_matrix, matrix_tensor, vector


class FieldError(ValueError):
    pass


class DegenerateFieldError(FieldError):
    pass


class SignatureError(FieldError):
    pass


class PreconditionError(FieldError):
    pass


def _expr_matrix(cs: CoordSystem, mat) -> list[list[ScalarExpr]]:
    return [[as_expr(cs, x) for x in row] for row in mat]


@dataclass(frozen=True)
class FieldSpec:
    """A field (g, B, phi) on L with declared inertia (p, q)."""

    cs: CoordSystem
    g: list
    B: list
    phi: ScalarExpr | None = None
    p: int | None = None
    q: int | None = None
    reference_point: tuple | None = None
    _ginv: list = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        cs = self.cs
        m = cs.m
        g = _expr_matrix(cs, self.g)
        B = _expr_matrix(cs, self.B)
        if len(g) != m or any(len(r) != m for r in g):
            raise FieldError(f"g must be {m}x{m}")
        if len(B) != m or any(len(r) != m for r in B):
            raise FieldError(f"B must be {m}x{m}")
        for i in range(m):
            for j in range(m):
                if g[i][j] != g[j][i]:
                    raise FieldError("g must be symmetric")
                if B[i][j] != -B[j][i]:
                    raise FieldError("B must be antisymmetric")
        d = mx.det(g)
        if d.is_zero():
            raise DegenerateFieldError("det(g) vanishes identically")
        phi = cs.zero() if self.phi is None else as_expr(cs, self.phi)
        ref = tuple(Fraction(0) for _ in range(cs.n)) if self.reference_point is None \
            else tuple(Fraction(x) for x in self.reference_point)
        if len(ref) != cs.n:
            raise FieldError(f"reference_point must have {cs.n} coordinates")
        gref = [[x.eval(ref) for x in r] for r in g]
        pos, neg, zero = mx.inertia(gref)
        if zero:
            raise SignatureError("g is degenerate at the reference point")
        p, q = self.p, self.q
        if p is None and q is None:
            p, q = pos, neg
        elif p is None:
            p = m - q
        elif q is None:
            q = m - p
        if p + q != m:
            raise SignatureError(f"p + q must equal m = {m}")
        if (p, q) != (pos, neg):
            raise SignatureError(f"declared signature ({p},{q}) but g has ({pos},{neg}) at the reference point")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "reference_point", ref)
        object.__setattr__(self, "_ginv", mx.inverse(g))

    @property
    def m(self) -> int:
        return self.cs.m

    @property
    def ginv(self) -> list[list[ScalarExpr]]:
        return self._ginv

    def signature_at(self, point) -> tuple[int, int]:
        pos, neg, zero = mx.inertia([[x.eval(point) for x in r] for r in self.g])
        if zero:
            raise SignatureError(f"g is degenerate at {point}")
        return pos, neg

    def g_tensor(self) -> TensorField:
        from .tensor import L_block_tensor
        return L_block_tensor(self.cs, "cc", self.g)

    def B_tensor(self) -> TensorField:
        from .tensor import L_block_tensor
        return L_block_tensor(self.cs, "cc", self.B)


@dataclass(frozen=True)
class GeneralizedMetric:
    cs: CoordSystem
    H: list
    Phi: list

    def tensor(self) -> TensorField:
        return matrix_tensor(self.cs, "cc", self.H)

    def pair(self, X: TensorField, Y: TensorField) -> ScalarExpr:
        return _bilinear(self.H, X, Y)

    def apply_Phi(self, X: TensorField) -> TensorField:
        return vector(self.cs, mx.matvec(self.Phi, list(X.components)))


def _bilinear(M, X: TensorField, Y: TensorField) -> ScalarExpr:
    cs = X.cs
    acc = cs.zero()
    for a, xa in enumerate(X.components):
        if xa.is_zero():
            continue
        for b, yb in enumerate(Y.components):
            if yb.is_zero() or M[a][b].is_zero():
                continue
            acc = acc + xa * M[a][b] * yb
    return acc


def _G(cs: CoordSystem):
    return _expr_matrix(cs, gamma_matrix(cs.m))


def build_H(fs: FieldSpec) -> GeneralizedMetric:
    g, B, gi = fs.g, fs.B, fs.ginv
    Bgi = mx.matmul(B, gi)
    Hxx = mx.sub(g, mx.matmul(Bgi, B))
    Hxt = mx.neg(Bgi)
    Htx = mx.matmul(gi, B)
    H = mx.block(Hxx, Hxt, Htx, gi)
    Phi = mx.matmul(_G(fs.cs), H)
    return GeneralizedMetric(fs.cs, H, Phi)


def generalized_metric_from_matrix(cs: CoordSystem, H) -> GeneralizedMetric:
    H = _expr_matrix(cs, H)
    return GeneralizedMetric(cs, H, mx.matmul(_G(cs), H))


def recover_field(gm: GeneralizedMetric, phi=None, p=None, q=None, reference_point=None) -> FieldSpec:
    cs = gm.cs
    m = cs.m
    H = gm.H
    n = cs.n
    for a in range(n):
        for b in range(n):
            if H[a][b] != H[b][a]:
                raise FieldError("H must be symmetric")
    if not mx.equal(mx.matmul(gm.Phi, gm.Phi), mx.identity(n, cs.one(), cs.zero())):
        raise FieldError("Phi = G H is not an almost product (H is not a generalized metric)")
    _, Hxt, Htx, Htt = mx.split_blocks(H, m)
    if mx.det(Htt).is_zero():
        raise DegenerateFieldError("restriction of H to L* is degenerate")
    g = mx.inverse(Htt)
    psi = Htx
    # flat_B = -flat_g psi with flat_B = B^T, flat_g = g
    B = mx.neg(mx.transpose(mx.matmul(g, psi)))
    return FieldSpec(cs, g, B, phi, p, q, reference_point)


def phi_blocks(gm: GeneralizedMetric):
    """``(psi, sharp_g, flat_gtilde)`` blocks of Phi, with ``Phi = [[psi, sharp_g], [flat_gt, psi^T]]``."""
    m = gm.cs.m
    tl, tr, bl, br = mx.split_blocks(gm.Phi, m)
    return tl, tr, bl, br


# --- S+/S- ------------------------------------------------------------------------

def iota_matrix(fs: FieldSpec, sign: int) -> list[list[ScalarExpr]]:
    """Tilde block ``-B + sign*g`` of iota_sign."""
    return [[-fs.B[i][j] + fs.g[i][j] * sign for j in range(fs.m)] for i in range(fs.m)]


def iota(sign, X, fs: FieldSpec) -> TensorField:
    s = _sign(sign)
    cs = fs.cs
    m = cs.m
    if isinstance(X, TensorField):
        if any(not X[a].is_zero() for a in range(m, cs.n)):
            raise FieldError("iota needs a vector field in L")
        xs = [X[a] for a in range(m)]
    else:
        xs = [as_expr(cs, c) for c in X]
    tilde = mx.matvec(iota_matrix(fs, s), xs)
    return vector(cs, xs + tilde)


def _sign(sign) -> int:
    if sign in ("+", 1, "plus"):
        return 1
    if sign in ("-", -1, "minus"):
        return -1
    raise FieldError(f"sign must be + or -, got {sign!r}")


def decompose_Spm(Z: TensorField, fs: FieldSpec) -> tuple[TensorField, TensorField]:
    X1, X2 = decompose_L_parts(Z, fs)
    return iota(1, X1, fs), iota(-1, X2, fs)


def decompose_L_parts(Z: TensorField, fs: FieldSpec) -> tuple[list, list]:
    m = fs.m
    X = [Z[a] for a in range(m)]
    alpha = [Z[a] for a in range(m, 2 * m)]
    BtX = mx.matvec(mx.transpose(fs.B), X)
    w = mx.matvec(fs.ginv, [BtX[i] - alpha[i] for i in range(m)])
    half = Fraction(1, 2)
    X1 = [(X[i] - w[i]) * half for i in range(m)]
    X2 = [(X[i] + w[i]) * half for i in range(m)]
    return X1, X2


@dataclass(frozen=True)
class Splitting:
    plus: tuple
    minus: tuple


def splitting(fs: FieldSpec) -> Splitting:
    cs = fs.cs
    basis = [[1 if i == j else 0 for j in range(cs.m)] for i in range(cs.m)]
    return Splitting(tuple(iota(1, e, fs) for e in basis), tuple(iota(-1, e, fs) for e in basis))


# --- level matching and Killing fields --------------------------------------------

def check_level_matching(obj) -> bool:
    if isinstance(obj, FieldSpec):
        exprs = [x for r in obj.g for x in r] + [x for r in obj.B for x in r] + [obj.phi]
        return all(is_strongly_foliated(e) for e in exprs)
    if isinstance(obj, GeneralizedMetric):
        return all(is_strongly_foliated(e) for r in obj.H for e in r)
    return is_strongly_foliated(obj)


def lie_L_tensor2(xi: Sequence[ScalarExpr], T) -> list[list[ScalarExpr]]:
    """Lie derivative along ``xi in L`` of a covariant 2-tensor on L (x-derivatives only)."""
    m = len(xi)
    cs = xi[0].cs
    out = []
    for i in range(m):
        row = []
        for j in range(m):
            acc = cs.zero()
            for k in range(m):
                acc = acc + xi[k] * T[i][j].diff(k) + T[k][j] * xi[k].diff(i) + T[i][k] * xi[k].diff(j)
            row.append(acc)
        out.append(row)
    return out


def d_L_oneform(alpha: Sequence[ScalarExpr]) -> list[list[ScalarExpr]]:
    """Components ``(d_L alpha)_ij = d_i alpha_j - d_j alpha_i``."""
    m = len(alpha)
    return [[alpha[j].diff(i) - alpha[i].diff(j) for j in range(m)] for i in range(m)]


def killing_criterion(X: TensorField, fs: FieldSpec) -> bool:
    """``L_xi g = 0`` and ``L_xi B = d_L xi~`` for ``X = xi + xi~`` strongly foliated.

    The second condition accounts for the tilde part of X, whose exterior
    derivative acts on H like a B-field gauge transformation.
    """
    m = fs.m
    xi = [X[a] for a in range(m)]
    xit = [X[a] for a in range(m, 2 * m)]
    lg = lie_L_tensor2(xi, fs.g)
    lb = lie_L_tensor2(xi, fs.B)
    dxt = d_L_oneform(xit)
    return mx.is_zero_matrix(lg) and mx.is_zero_matrix(mx.sub(lb, dxt))


def killing_criterion_literal(X: TensorField, fs: FieldSpec) -> bool:
    """``L_{pr_L X} g = 0`` and ``L_{pr_L X} B = 0`` (tilde part of X ignored)."""
    xi = [X[a] for a in range(fs.m)]
    return mx.is_zero_matrix(lie_L_tensor2(xi, fs.g)) and mx.is_zero_matrix(lie_L_tensor2(xi, fs.B))


def gen_lie_H(X: TensorField, fs: FieldSpec) -> TensorField:
    return gen_lie_derivative(X, build_H(fs).tensor(), star_matrix(X))


class KillingMismatchError(AssertionError):
    pass


def is_generalized_killing(X: TensorField, fs: FieldSpec) -> bool:
    if not check_level_matching(fs):
        raise PreconditionError("field violates the level matching constraint")
    if not is_strongly_foliated(X):
        raise PreconditionError("X must be strongly foliated")
    direct = gen_lie_H(X, fs).is_zero()
    crit = killing_criterion(X, fs)
    if direct != crit:
        raise KillingMismatchError(f"L_X H = 0 is {direct} but the (g, B) criterion gives {crit}")
    return direct
