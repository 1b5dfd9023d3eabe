"""Almost para-Dirac structures: maximal gamma-isotropic distributions in TM."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from . import matrix as mx
from .algebroid import c_bracket, is_strongly_foliated, wedge_nabla0
from .genmetric import FieldSpec, build_H, decompose_L_parts
from .symcore import CoordSystem, ScalarExpr, as_expr
from .tensor import TensorField, act, lie_bracket, pair_gamma, pair_omega, vector

_HALF = Fraction(1, 2)


class DiracError(ValueError):
    pass


class NotIsotropicError(DiracError):
    pass


class DegenerateRestrictionError(DiracError):
    pass


class RankError(DiracError):
    pass


class NotIsometryError(DiracError):
    pass


def _ref(cs: CoordSystem, point):
    return [Fraction(0)] * cs.n if point is None else [Fraction(p) for p in point]


@dataclass
class ParaDirac:
    cs: CoordSystem
    span: tuple
    reference_point: tuple = None

    def __post_init__(self):
        self.span = tuple(self.span)
        if len(self.span) != self.cs.m:
            raise RankError(f"need {self.cs.m} spanning fields, got {len(self.span)}")
        pt = _ref(self.cs, self.reference_point)
        self.reference_point = tuple(pt)
        mat = [[V[a].eval(pt) for V in self.span] for a in range(self.cs.n)]
        if mx.rank(mat) != self.cs.m:
            raise RankError("spanning fields are dependent at the reference point")
        self._isotropic = None

    def matrix(self) -> list[list[ScalarExpr]]:
        """Columns are the spanning fields."""
        return [[V[a] for V in self.span] for a in range(self.cs.n)]

    @property
    def isotropic(self) -> bool:
        if self._isotropic is None:
            self._isotropic = all(pair_gamma(X, Y).is_zero()
                                  for X, Y in itertools.combinations_with_replacement(self.span, 2))
        return self._isotropic

    def gram(self, fs: FieldSpec) -> list[list[ScalarExpr]]:
        H = build_H(fs)
        return [[H.pair(X, Y) for Y in self.span] for X in self.span]

    def H_nondegenerate(self, fs: FieldSpec) -> bool:
        return not mx.det(self.gram(fs)).is_zero()

    def contains(self, V: TensorField) -> bool:
        """Membership test using maximal isotropy: V in D iff gamma(V, D) = 0."""
        if not self.isotropic:
            raise NotIsotropicError("membership via gamma needs an isotropic D")
        return all(pair_gamma(V, X).is_zero() for X in self.span)

    def same_as(self, other: "ParaDirac") -> bool:
        return all(self.contains(V) for V in other.span) if self.isotropic else _same_span(self, other)

    def strongly_foliated(self) -> bool:
        return all(is_strongly_foliated(V) for V in self.span)


def _same_span(a: ParaDirac, b: ParaDirac) -> bool:
    M = [ra + rb for ra, rb in zip(a.matrix(), b.matrix())]
    return mx.rank(M) == a.cs.m


# --- constructions ----------------------------------------------------------------

def _is_g_isometry(J, fs: FieldSpec) -> bool:
    lhs = mx.matmul(mx.transpose(J), mx.matmul(fs.g, J))
    return mx.equal(lhs, fs.g)


def _expr_mat(cs, M):
    return [[as_expr(cs, x) for x in row] for row in M]


def _clear_denominators(V: TensorField) -> TensorField:
    """Rescale by the lcm of the component denominators; the line spanned is unchanged."""
    cs = V.cs
    acc = cs.one().num
    for c in V.components.flat:
        if not c.den.is_one():
            acc = acc * c.den / acc.gcd(c.den)
    if acc.is_one():
        return V
    return V * ScalarExpr._raw(cs, acc, cs.one().num)


def dirac_from_isometry(J, fs: FieldSpec) -> ParaDirac:
    cs = fs.cs
    m = cs.m
    J = _expr_mat(cs, J)
    if not _is_g_isometry(J, fs):
        raise NotIsometryError("J is not an isometry of g")
    Ip = [[-fs.B[i][j] + fs.g[i][j] for j in range(m)] for i in range(m)]
    Im = [[-fs.B[i][j] - fs.g[i][j] for j in range(m)] for i in range(m)]
    ImJ = mx.matmul(Im, J)
    span = []
    for k in range(m):
        top = [(cs.one() if i == k else cs.zero()) + J[i][k] for i in range(m)]
        bot = [Ip[i][k] + ImJ[i][k] for i in range(m)]
        span.append(_clear_denominators(vector(cs, top + bot)))
    return ParaDirac(cs, span, fs.reference_point)


def isometry_from_dirac(D: ParaDirac, fs: FieldSpec) -> list[list[ScalarExpr]]:
    """The g-isometry J with ``D = {iota+ X + iota- JX}``."""
    if not D.isotropic:
        raise NotIsotropicError("D is not gamma-isotropic")
    if not D.H_nondegenerate(fs):
        raise DegenerateRestrictionError("the generalized metric is degenerate on D")
    m = fs.m
    X1 = [[None] * m for _ in range(m)]
    X2 = [[None] * m for _ in range(m)]
    for k, V in enumerate(D.span):
        a, b = decompose_L_parts(V, fs)
        for i in range(m):
            X1[i][k] = a[i]
            X2[i][k] = b[i]
    return mx.matmul(X2, mx.inverse(X1))


def graph_dirac(kind: str, tensor, cs: CoordSystem, reference_point=None) -> ParaDirac:
    """Graph of ``flat_theta`` (kind 'two_form') or ``sharp_P`` (kind 'bivector')."""
    m = cs.m
    T = _expr_mat(cs, tensor)
    for i in range(m):
        for j in range(m):
            if not (T[i][j] + T[j][i]).is_zero():
                raise DiracError(f"{kind} must be antisymmetric")
    span = []
    for k in range(m):
        unit = [cs.one() if i == k else cs.zero() for i in range(m)]
        image = [T[k][j] for j in range(m)]  # (flat_theta e_k)_j = theta_kj, (sharp_P e~_k)^j = P^kj
        if kind == "two_form":
            span.append(vector(cs, unit + image))
        elif kind == "bivector":
            span.append(vector(cs, image + unit))
        else:
            raise DiracError(f"unknown graph kind {kind!r}")
    return ParaDirac(cs, span, reference_point)


def j_from_graph(kind: str, tensor, fs: FieldSpec) -> list[list[ScalarExpr]]:
    cs = fs.cs
    m = cs.m
    T = _expr_mat(cs, tensor)
    I = mx.identity(m, cs.one(), cs.zero())
    gi = fs.ginv
    if kind == "two_form":
        # sharp_g flat_{B - theta}
        M = mx.matmul(gi, mx.transpose(mx.sub(fs.B, T)))
        den = mx.sub(I, M)
        d = mx.det(den)
        if d.is_zero():
            raise DiracError(f"Id - sharp_g flat_(B-theta) is singular (det = {d})")
        return mx.matmul(mx.add(I, M), mx.inverse(den))
    if kind == "bivector":
        P_sharp = mx.transpose(T)

        def Q(s):
            flat = mx.transpose(mx.add(fs.B, mx.scale(s, fs.g)))
            return mx.scale(s, mx.matmul(gi, mx.matmul(flat, mx.matmul(P_sharp, fs.g))))

        den = mx.add(Q(-1), I)
        d = mx.det(den)
        if d.is_zero():
            raise DiracError(f"Q- + Id is singular (det = {d})")
        return mx.matmul(mx.sub(Q(1), I), mx.inverse(den))
    raise DiracError(f"unknown graph kind {kind!r}")


def reconstruct(E: Sequence[Sequence], varpi, cs: CoordSystem, reference_point=None) -> ParaDirac:
    """``D = {X : pr_L X in E, varpi(pr_L X, Y) = gamma(pr_Lt X, Y) for Y in E}``.

    ``E`` is a list of L-vectors (component lists), ``varpi`` an m x m
    antisymmetric matrix whose restriction to E is used.
    """
    m = cs.m
    pt = _ref(cs, reference_point)
    E = [[as_expr(cs, c) for c in v] for v in E]
    W = _expr_mat(cs, varpi) if varpi is not None else [[cs.zero()] * m for _ in range(m)]
    r = len(E)
    if r:
        Em = [[E[k][i] for k in range(r)] for i in range(m)]  # m x r
        if mx.rank([[x.eval(pt) for x in row] for row in Em]) != r:
            raise RankError("E is rank deficient at the reference point")
        EtE_inv = mx.inverse(mx.matmul(mx.transpose(Em), Em))
        annihilator = mx.nullspace(mx.transpose(Em))
    else:
        Em = None
        annihilator = [[cs.one() if i == k else cs.zero() for i in range(m)] for k in range(m)]
    span = []
    for k in range(r):
        # b_l = varpi(E_k, E_l); tilde part xi solves E^T xi = b
        b = [sum((E[k][i] * W[i][j] * E[l][j] for i in range(m) for j in range(m)), cs.zero())
             for l in range(r)]
        coeff = mx.matvec(EtE_inv, b)
        xi = mx.matvec(Em, coeff)
        span.append(vector(cs, list(E[k]) + xi))
    for a in annihilator:
        span.append(vector(cs, [cs.zero()] * m + [as_expr(cs, c) for c in a]))
    D = ParaDirac(cs, span, reference_point)
    if not D.isotropic:
        raise DiracError("reconstruction is not isotropic; check that varpi is antisymmetric")
    return D


def induced_varpi(D: ParaDirac) -> tuple[list, list]:
    """``(E, W)`` where E spans pr_L D and ``W[k][l] = omega(D_k, D_l)`` on the lifts."""
    cs = D.cs
    m = cs.m
    E = [[V[i] for i in range(m)] for V in D.span]
    W = [[pair_omega(X, Y) for Y in D.span] for X in D.span]
    return E, W


# --- integrability ----------------------------------------------------------------

CRITERIA = (1, 2, 3, 4, 5, "paraint5")


def _cyc(X, Y, Z):
    return ((X, Y, Z), (Y, Z, X), (Z, X, Y))


def _nabla0(Z: TensorField, Y: TensorField) -> TensorField:
    return vector(Z.cs, [act(Z, Y[w]) for w in range(Z.cs.n)])


def criterion_value(criterion, X, Y, Z) -> ScalarExpr:
    if criterion == 1:
        return pair_gamma(c_bracket(X, Y), Z)
    if criterion == 2:
        return pair_gamma(X, _nabla0(Z, Y)) - pair_gamma(lie_bracket(X, Y), Z)
    if criterion == 3:
        return sum((pair_gamma(a, _nabla0(c, b)) for a, b, c in _cyc(X, Y, Z)), X.cs.zero())
    if criterion == 4:
        return sum((pair_gamma(lie_bracket(a, b), c) for a, b, c in _cyc(X, Y, Z)), X.cs.zero())
    if criterion == 5:
        return sum((pair_gamma(wedge_nabla0(a, b), c) for a, b, c in _cyc(X, Y, Z)), X.cs.zero())
    if criterion == "paraint5":
        om = pair_omega
        br = c_bracket
        return (act(X, om(Y, Z)) - act(Y, om(X, Z)) + act(Z, om(X, Y))
                - om(br(X, Y), Z) + om(br(X, Z), Y) - om(br(Y, Z), X))
    raise DiracError(f"unknown criterion {criterion!r}")


def check_integrability(D: ParaDirac, criterion=1) -> bool:
    if criterion not in CRITERIA:
        raise DiracError(f"criterion must be one of {CRITERIA}")
    if not D.isotropic:
        raise NotIsotropicError("integrability criteria need an isotropic D")
    if criterion == "paraint5" and not D.strongly_foliated():
        raise DiracError("criterion paraint5 needs a strongly foliated D")
    triples = itertools.product(D.span, repeat=3)
    return all(criterion_value(criterion, X, Y, Z).is_zero() for X, Y, Z in triples)


def is_involutive(D: ParaDirac) -> bool:
    """Lie-bracket closure of the span (D is a foliation)."""
    return all(D.contains(lie_bracket(X, Y)) for X, Y in itertools.combinations(D.span, 2))


def is_totally_geodesic(D: ParaDirac) -> bool:
    return all(D.contains(_nabla0(X, Y)) for X, Y in itertools.product(D.span, repeat=2))


# --- (A, sigma, pi) ------------------------------------------------------------------

@dataclass(frozen=True)
class PsiTriple:
    A: list
    sigma: list
    pi: list

    def matrix(self):
        """Block form of the almost product structure on L + L*."""
        return mx.block(self.A, mx.transpose(self.pi), mx.transpose(self.sigma),
                        mx.neg(mx.transpose(self.A)))

    def invariants(self) -> dict[str, bool]:
        A, s, p = self.A, self.sigma, self.pi
        m = len(A)
        cs_one = A[0][0].cs.one()
        I = mx.identity(m, cs_one, cs_one * 0)
        return {
            "A^2 = Id - sharp_pi flat_sigma": mx.equal(mx.matmul(A, A),
                                                       mx.sub(I, mx.matmul(mx.transpose(p), mx.transpose(s)))),
            "pi(a o A, b) = pi(a, b o A)": mx.equal(mx.matmul(A, p), mx.matmul(p, mx.transpose(A))),
            "sigma(AX, Y) = sigma(X, AY)": mx.equal(mx.matmul(mx.transpose(A), s), mx.matmul(s, A)),
            "antisymmetric pi": mx.is_zero_matrix(mx.add(p, mx.transpose(p))),
            "antisymmetric sigma": mx.is_zero_matrix(mx.add(s, mx.transpose(s))),
        }


def psi_triple_from_J(J, fs: FieldSpec) -> PsiTriple:
    """``(A, sigma, pi)`` with ``J = A + sharp_pi flat_{B+g}`` and ``flat_{B-g} J = flat_sigma - A^t flat_{B+g}``."""
    cs = fs.cs
    J = _expr_mat(cs, J)
    if mx.det(J).is_zero():
        raise DiracError("J is singular")
    Ji = mx.inverse(J)
    flatB = mx.transpose(fs.B)
    sharp_pi = mx.scale(_HALF, mx.matmul(mx.sub(J, Ji), fs.ginv))
    A = mx.sub(mx.scale(_HALF, mx.add(J, Ji)), mx.matmul(sharp_pi, flatB))
    # half the sum of the two flat_{B-+g} relations that pin sigma down
    flat_sigma = mx.add(
        mx.scale(_HALF, mx.sub(mx.matmul(flatB, mx.add(J, Ji)), mx.matmul(fs.g, mx.sub(J, Ji)))),
        mx.matmul(mx.transpose(A), flatB))
    return PsiTriple(A, mx.transpose(flat_sigma), mx.transpose(sharp_pi))


def psi_triple(D: ParaDirac, fs: FieldSpec) -> PsiTriple:
    return psi_triple_from_J(isometry_from_dirac(D, fs), fs)


def almost_product(D: ParaDirac, fs: FieldSpec) -> list[list[ScalarExpr]]:
    """The H-compatible almost product with eigenbundles D (+1) and Phi(D) (-1)."""
    gm = build_H(fs)
    perp = [gm.apply_Phi(V) for V in D.span]
    S = [[V[a] for V in list(D.span) + perp] for a in range(fs.cs.n)]
    m = fs.m
    sign = [fs.cs.one()] * m + [-fs.cs.one()] * m
    Sd = [[S[a][k] * sign[k] for k in range(2 * m)] for a in range(2 * m)]
    return mx.matmul(Sd, mx.inverse(S))


def phi_of_D_is_perp(D: ParaDirac, fs: FieldSpec) -> bool:
    gm = build_H(fs)
    return all(gm.pair(gm.apply_Phi(V), W).is_zero() for V in D.span for W in D.span)
