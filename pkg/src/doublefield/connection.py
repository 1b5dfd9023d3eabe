"""Connections on TM: the flat one, double-metric connections, CWT and VTC.

A :class:`Connection` stores ``Gamma[u][v][w]`` with
``nabla_{d_u} d_v = Gamma[u][v][w] d_w`` in the distinguished frame.
Connections on L (the ``D+``/``D-`` data of a double-metric connection) are
stored as :class:`LConnection` tables ``C[u][i][k]`` with
``D_{d_u} e_i = C[u][i][k] e_k``.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import matrix as mx
from .algebroid import c_bracket, wedge_general
from .genmetric import (
    FieldSpec,
    SignatureError,
    build_H,
    decompose_L_parts,
    iota,
)
from .symcore import CoordSystem, PoleError, ScalarExpr
from .tensor import TensorField, act, frame, pair_gamma, vector

_HALF = Fraction(1, 2)


class ConnectionError_(ValueError):
    pass


class GammaPreservationError(ConnectionError_):
    pass


class SingularAError(ConnectionError_):
    pass


def _zero_table(cs: CoordSystem, *shape):
    z = cs.zero()
    if len(shape) == 1:
        return [z] * shape[0]
    return [_zero_table(cs, *shape[1:]) for _ in range(shape[0])]


@dataclass
class LConnection:
    """Connection on L: ``D_{d_u} e_i = C[u][i][k] e_k`` for u over all 2m directions."""

    cs: CoordSystem
    C: list

    def derivative(self, Z: TensorField, Y: Sequence[ScalarExpr]) -> list[ScalarExpr]:
        m = self.cs.m
        out = []
        for k in range(m):
            acc = act(Z, Y[k])
            for u in range(self.cs.n):
                if Z[u].is_zero():
                    continue
                for i in range(m):
                    c = self.C[u][i][k]
                    if not c.is_zero() and not Y[i].is_zero():
                        acc = acc + Z[u] * Y[i] * c
            out.append(acc)
        return out

    def preserves(self, g) -> bool:
        m = self.cs.m
        for u in range(self.cs.n):
            for i in range(m):
                for j in range(i, m):
                    lhs = g[i][j].diff(u)
                    rhs = self.cs.zero()
                    for k in range(m):
                        rhs = rhs + self.C[u][i][k] * g[k][j] + self.C[u][j][k] * g[i][k]
                    if lhs != rhs:
                        return False
        return True


class Connection:
    def __init__(self, cs: CoordSystem, Gamma, name: str = "", field: FieldSpec | None = None):
        self.cs = cs
        self.Gamma = [[[g for g in row] for row in plane] for plane in Gamma]
        self.name = name
        self.field = field
        self._dGamma = None
        self._L = None
        self._callables = None

    # basic operations
    def covariant(self, Z: TensorField, Y: TensorField) -> TensorField:
        """``nabla_Z Y``."""
        cs = self.cs
        n = cs.n
        out = []
        for w in range(n):
            acc = act(Z, Y[w])
            for u in range(n):
                zu = Z[u]
                if zu.is_zero():
                    continue
                for v in range(n):
                    yv = Y[v]
                    gm = self.Gamma[u][v][w]
                    if yv.is_zero() or gm.is_zero():
                        continue
                    acc = acc + zu * yv * gm
            out.append(acc)
        return vector(cs, out)

    __call__ = covariant

    def lowered(self):
        """``L[u][v][c] = gamma(nabla_u d_v, d_c)``."""
        if self._L is None:
            cs = self.cs
            m = cs.m
            n = cs.n
            self._L = [[[self.Gamma[u][v][c + m if c < m else c - m] for c in range(n)]
                        for v in range(n)] for u in range(n)]
        return self._L

    def preserves_gamma(self) -> bool:
        L = self.lowered()
        n = self.cs.n
        return all((L[u][v][w] + L[u][w][v]).is_zero() for u in range(n) for v in range(n) for w in range(v, n))

    def preserves_H(self, fs: FieldSpec) -> bool:
        H = build_H(fs).H
        cs = self.cs
        n = cs.n
        for u in range(n):
            for v in range(n):
                for w in range(v, n):
                    rhs = cs.zero()
                    for x in range(n):
                        rhs = rhs + self.Gamma[u][v][x] * H[x][w] + self.Gamma[u][w][x] * H[v][x]
                    if H[v][w].diff(u) != rhs:
                        return False
        return True

    def is_zero(self) -> bool:
        return all(g.is_zero() for plane in self.Gamma for row in plane for g in row)

    def deform(self, Theta, name: str = "") -> "Connection":
        """``nabla + Theta`` with ``Theta[u][v][w]`` the (1,2) deformation table."""
        n = self.cs.n
        G = [[[self.Gamma[u][v][w] + Theta[u][v][w] for w in range(n)] for v in range(n)] for u in range(n)]
        return Connection(self.cs, G, name or self.name, self.field)

    def D(self, sign: int, fs: FieldSpec | None = None) -> LConnection:
        """The connection on L induced on S+ (sign=1) or S- (sign=-1)."""
        fs = fs or self.field
        cs = self.cs
        m = cs.m
        C = _zero_table(cs, cs.n, m, m)
        for i in range(m):
            e = [cs.one() if k == i else cs.zero() for k in range(m)]
            Y = iota(sign, e, fs)
            for u in range(cs.n):
                val = self.covariant(frame(cs, u), Y)
                for k in range(m):
                    C[u][i][k] = val[k]
        return LConnection(cs, C)

    def dGamma(self):
        if self._dGamma is None:
            n = self.cs.n
            self._dGamma = [[[[self.Gamma[u][v][w].diff(a) for w in range(n)] for v in range(n)]
                             for u in range(n)] for a in range(n)]
        return self._dGamma

    def free_indices(self) -> set[int]:
        out = set()
        for plane in self.Gamma:
            for row in plane:
                for g in row:
                    out |= g.free_indices()
        return out


# --- the flat connection ----------------------------------------------------------

def flat_connection(cs: CoordSystem) -> Connection:
    n = cs.n
    return Connection(cs, _zero_table(cs, n, n, n), "flat")


def nabla0(Z: TensorField, Y: TensorField) -> TensorField:
    cs = Z.cs
    return vector(cs, [act(Z, Y[w]) for w in range(cs.n)])


# --- double-metric connections --------------------------------------------------

def _E_matrices(fs: FieldSpec):
    """Columns of E are iota+ e_i then iota- e_i; Einv rows give the S+/S- coordinates."""
    cs = fs.cs
    m = cs.m
    n = cs.n
    E = _zero_table(cs, n, n)
    for i in range(m):
        e = [cs.one() if k == i else cs.zero() for k in range(m)]
        for a, s in ((i, 1), (m + i, -1)):
            col = iota(s, e, fs)
            for w in range(n):
                E[w][a] = col[w]
    Einv = _zero_table(cs, n, n)
    for v in range(n):
        X1, X2 = decompose_L_parts(frame(cs, v), fs)
        for i in range(m):
            Einv[i][v] = X1[i]
            Einv[m + i][v] = X2[i]
    return E, Einv


def build_double_metric(Dplus: LConnection, Dminus: LConnection, fs: FieldSpec, name: str = "double-metric") -> Connection:
    if not Dplus.preserves(fs.g) or not Dminus.preserves(fs.g):
        raise ConnectionError_("D+ and D- must preserve g")
    cs = fs.cs
    m = cs.m
    n = cs.n
    E, Einv = _E_matrices(fs)
    dEinv = [[[Einv[a][v].diff(u) for v in range(n)] for a in range(n)] for u in range(n)]
    G = _zero_table(cs, n, n, n)
    for u in range(n):
        # Chat[a][b]: nabla_u eps_a = Chat[a][b] eps_b
        Chat = _zero_table(cs, n, n)
        for i in range(m):
            for k in range(m):
                Chat[i][k] = Dplus.C[u][i][k]
                Chat[m + i][m + k] = Dminus.C[u][i][k]
        for v in range(n):
            # coefficients in the eps-basis of nabla_u d_v
            coeff = []
            for b in range(n):
                acc = dEinv[u][b][v]
                for a in range(n):
                    if not Einv[a][v].is_zero() and not Chat[a][b].is_zero():
                        acc = acc + Einv[a][v] * Chat[a][b]
                coeff.append(acc)
            for w in range(n):
                acc = cs.zero()
                for b in range(n):
                    if not coeff[b].is_zero() and not E[w][b].is_zero():
                        acc = acc + coeff[b] * E[w][b]
                G[u][v][w] = acc
    return Connection(cs, G, name, fs)


def levi_civita_L(fs: FieldSpec):
    """``LC[j][i][k]``: Christoffel symbols ``Gamma^k_{ji}`` of g using x-derivatives only."""
    cs = fs.cs
    m = cs.m
    g, gi = fs.g, fs.ginv
    first = [[[(g[j][l].diff(i) + g[i][l].diff(j) - g[i][j].diff(l)) * _HALF for l in range(m)]
              for j in range(m)] for i in range(m)]
    LC = _zero_table(cs, m, m, m)
    for j in range(m):
        for i in range(m):
            for k in range(m):
                acc = cs.zero()
                for l in range(m):
                    if not gi[k][l].is_zero() and not first[j][i][l].is_zero():
                        acc = acc + gi[k][l] * first[j][i][l]
                LC[j][i][k] = acc
    return LC


def A_matrices(fs: FieldSpec):
    """``A+ = (Id + sharp_g flat_B)/2`` and ``A- = (Id - sharp_g flat_B)/2``."""
    cs = fs.cs
    m = cs.m
    sb = mx.matmul(fs.ginv, mx.transpose(fs.B))
    Ap = [[((cs.one() if i == j else cs.zero()) + sb[i][j]) * _HALF for j in range(m)] for i in range(m)]
    Am = [[((cs.one() if i == j else cs.zero()) - sb[i][j]) * _HALF for j in range(m)] for i in range(m)]
    return Ap, Am


def mixed_brackets(fs: FieldSpec):
    """``Mp[j][i] = pr_L pr_S+ [iota- e_j, iota+ e_i]`` and ``Mm[j][i] = pr_L pr_S- [iota+ e_j, iota- e_i]``."""
    cs = fs.cs
    m = cs.m
    basis = [[cs.one() if k == i else cs.zero() for k in range(m)] for i in range(m)]
    ip = [iota(1, e, fs) for e in basis]
    im = [iota(-1, e, fs) for e in basis]
    Mp = [[decompose_L_parts(c_bracket(im[j], ip[i]), fs)[0] for i in range(m)] for j in range(m)]
    Mm = [[decompose_L_parts(c_bracket(ip[j], im[i]), fs)[1] for i in range(m)] for j in range(m)]
    return Mp, Mm


def cwt_D(fs: FieldSpec) -> tuple[LConnection, LConnection]:
    cs = fs.cs
    m = cs.m
    n = cs.n
    Ap, Am = A_matrices(fs)
    if mx.det(Ap).is_zero() or mx.det(Am).is_zero():
        raise SingularAError("A+ or A- is singular")
    LC = levi_civita_L(fs)
    Mp, Mm = mixed_brackets(fs)
    P = mx.inverse(Am)
    Q = mx.matmul(Ap, P)
    P2 = mx.inverse(Ap)
    Q2 = mx.matmul(Am, P2)
    # D along eps_a, a < m meaning iota+ e_a and a >= m meaning iota- e_{a-m}
    Dp = _zero_table(cs, n, m, m)
    Dm = _zero_table(cs, n, m, m)
    for a in range(m):
        for i in range(m):
            for k in range(m):
                acc = cs.zero()
                acc2 = cs.zero()
                for j in range(m):
                    acc = acc + P[j][a] * LC[j][i][k] - Q[j][a] * Mp[j][i][k]
                    acc2 = acc2 + P2[j][a] * LC[j][i][k] - Q2[j][a] * Mm[j][i][k]
                Dp[a][i][k] = acc
                Dp[m + a][i][k] = Mp[a][i][k]
                Dm[a][i][k] = Mm[a][i][k]
                Dm[m + a][i][k] = acc2
    _, Einv = _E_matrices(fs)
    Cp = _zero_table(cs, n, m, m)
    Cm = _zero_table(cs, n, m, m)
    for u in range(n):
        for i in range(m):
            for k in range(m):
                acc = cs.zero()
                acc2 = cs.zero()
                for a in range(n):
                    ea = Einv[a][u]
                    if ea.is_zero():
                        continue
                    acc = acc + ea * Dp[a][i][k]
                    acc2 = acc2 + ea * Dm[a][i][k]
                Cp[u][i][k] = acc
                Cm[u][i][k] = acc2
    return LConnection(cs, Cp), LConnection(cs, Cm)


def cwt_connection(fs: FieldSpec) -> Connection:
    Dp, Dm = cwt_D(fs)
    return build_double_metric(Dp, Dm, fs, name="cwt")


def cyclic_lowered(conn: Connection):
    """``C[a][b][c] = L_abc + L_bca + L_cab`` (the Gualtieri torsion on frame fields)."""
    L = conn.lowered()
    n = conn.cs.n
    return [[[L[a][b][c] + L[b][c][a] + L[c][a][b] for c in range(n)] for b in range(n)] for a in range(n)]


def vtc_deformation(base: Connection):
    """Totally skew ``Psi`` and ``Theta`` making ``base + Theta`` torsion free."""
    cs = base.cs
    n = cs.n
    m = cs.m
    third = Fraction(1, 3)
    C = cyclic_lowered(base)
    Psi = [[[-C[a][b][c] * third for c in range(n)] for b in range(n)] for a in range(n)]
    Theta = [[[Psi[a][b][w + m if w < m else w - m] for w in range(n)] for b in range(n)] for a in range(n)]
    return Psi, Theta


def vtc_connection(fs: FieldSpec, cwt: Connection | None = None) -> Connection:
    base = cwt or cwt_connection(fs)
    _, Theta = vtc_deformation(base)
    conn = base.deform(Theta, "vtc")
    return conn


def psi_from_tg05(conn: Connection, base: Connection):
    """Covariant deformation between two connections, ``gamma(nabla - base, .)``."""
    L1 = conn.lowered()
    L0 = base.lowered()
    n = conn.cs.n
    return [[[L1[a][b][c] - L0[a][b][c] for c in range(n)] for b in range(n)] for a in range(n)]


# --- brackets, torsion, curvature ----------------------------------------------

def _require_gamma(conn: Connection):
    if not conn.preserves_gamma():
        raise GammaPreservationError(f"connection {conn.name!r} does not preserve gamma")


def wedge_conn(conn: Connection, X: TensorField, Y: TensorField) -> TensorField:
    return wedge_general(X, Y, conn.covariant)


def modified_bracket(conn: Connection, X: TensorField, Y: TensorField) -> TensorField:
    _require_gamma(conn)
    return c_bracket(X, Y) + wedge_conn(conn, X, Y)


def sigma(sign: int, conn: Connection, X: Sequence[ScalarExpr], Y: Sequence[ScalarExpr], fs: FieldSpec | None = None) -> TensorField:
    """The 1-form ``sigma^pm(X, Y)`` for ``X, Y in L`` from the induced D-connection."""
    fs = fs or conn.field
    cs = conn.cs
    D = conn.D(sign, fs)
    g = fs.g
    m = cs.m

    def gL(U, V):
        acc = cs.zero()
        for i in range(m):
            for j in range(m):
                if not U[i].is_zero() and not V[j].is_zero():
                    acc = acc + U[i] * g[i][j] * V[j]
        return acc

    comps = []
    for u in range(cs.n):
        Z = frame(cs, u)
        comps.append((gL(X, D.derivative(Z, Y)) - gL(D.derivative(Z, X), Y)) * sign)
    from .tensor import covector
    return covector(cs, comps)


def gualtieri_torsion(conn: Connection, X: TensorField, Y: TensorField, Z: TensorField) -> ScalarExpr:
    _require_gamma(conn)
    nab = conn.covariant
    t = pair_gamma(nab(X, Y) - nab(Y, X) - c_bracket(X, Y), Z)
    return t + (pair_gamma(nab(Z, X), Y) - pair_gamma(nab(Z, Y), X)) * _HALF


def tg04_residual(conn: Connection, X: TensorField, Y: TensorField, Z: TensorField) -> ScalarExpr:
    nab = conn.covariant
    lhs = pair_gamma(nab(X, Y), Z) + pair_gamma(nab(Y, Z), X) + pair_gamma(nab(Z, X), Y)
    rhs = pair_gamma(c_bracket(X, Y), Z) + pair_gamma(c_bracket(Y, Z), X) + pair_gamma(c_bracket(X, Z), Y)
    rhs = rhs - (act(X, pair_gamma(Y, Z)) - act(Y, pair_gamma(Z, X)) - act(Z, pair_gamma(X, Y)) * 3) * _HALF
    return lhs - rhs


def modified_curvature(conn: Connection, X: TensorField, Y: TensorField, Z: TensorField) -> TensorField:
    _require_gamma(conn)
    nab = conn.covariant
    return nab(X, nab(Y, Z)) - nab(Y, nab(X, Z)) - nab(modified_bracket(conn, X, Y), Z)


def bianchi_residual(conn: Connection, X: TensorField, Y: TensorField, Z: TensorField) -> TensorField:
    lhs = TensorField.zero(conn.cs, "v")
    rhs = TensorField.zero(conn.cs, "v")
    for a, b, c in ((X, Y, Z), (Y, Z, X), (Z, X, Y)):
        lhs = lhs + modified_curvature(conn, a, b, c)
        rhs = rhs + modified_bracket(conn, a, modified_bracket(conn, b, c))
    return lhs - rhs


def frame_wedge(conn: Connection):
    """``W[a][b][w]``: components of ``d_a ^_nabla d_b``."""
    L = conn.lowered()
    n = conn.cs.n
    m = conn.cs.m
    # gamma(d_c, W) = -L[c][a][b]; W^w = -L[p(w)][a][b]
    return [[[-L[w + m if w < m else w - m][a][b] for w in range(n)] for b in range(n)] for a in range(n)]


def curvature_tensor(conn: Connection):
    """Symbolic ``R[a][b][c][w]`` with ``R(d_a, d_b) d_c = R[a][b][c][w] d_w``."""
    cs = conn.cs
    n = cs.n
    G = conn.Gamma
    dG = conn.dGamma()
    W = frame_wedge(conn)
    R = _zero_table(cs, n, n, n, n)
    for a in range(n):
        for b in range(n):
            for c in range(n):
                for w in range(n):
                    acc = dG[a][b][c][w] - dG[b][a][c][w]
                    for x in range(n):
                        acc = acc + G[b][c][x] * G[a][x][w] - G[a][c][x] * G[b][x][w] - W[a][b][x] * G[x][c][w]
                    R[a][b][c][w] = acc
    return R


def curvature_at(conn: Connection, point) -> np.ndarray:
    """Exact ``R[a][b][c][w]`` at a rational point (object array of Fractions)."""
    n = conn.cs.n
    m = conn.cs.m
    G = np.empty((n, n, n), dtype=object)
    for u in range(n):
        for v in range(n):
            for w in range(n):
                G[u, v, w] = conn.Gamma[u][v][w].eval(point)
    dG = np.empty((n, n, n, n), dtype=object)
    table = conn.dGamma()
    for a in range(n):
        for u in range(n):
            for v in range(n):
                for w in range(n):
                    dG[a, u, v, w] = table[a][u][v][w].eval(point)
    return _curvature_from_values(G, dG, m)


def _curvature_from_values(G, dG, m):
    """Curvature from Gamma values ``G[..., u, v, w]`` and ``dG[..., a, u, v, w]``."""
    n = 2 * m
    perm = [i + m if i < m else i - m for i in range(n)]
    L = G[..., perm]
    # W[a][b][w] = -L[p(w)][a][b]
    W = -np.moveaxis(L, -3, -1)[..., perm]
    return (dG - np.swapaxes(dG, -4, -3)
            + np.einsum("...bcx,...axw->...abcw", G, G) - np.einsum("...acx,...bxw->...abcw", G, G)
            - np.einsum("...abx,...xcw->...abcw", W, G))


def _orthogonal_basis(g_at, seed):
    """Signed Gram-Schmidt without normalisation: returns (vectors, norms)."""
    m = len(g_at)

    def ip(u, v):
        return sum(u[i] * g_at[i][j] * v[j] for i in range(m) for j in range(m))

    pool = [list(map(Fraction, s)) for s in seed]
    basis, norms = [], []
    remaining = list(pool)
    while remaining and len(basis) < m:
        v = remaining.pop(0)
        w = list(v)
        for b, nb in zip(basis, norms):
            c = ip(v, b) / nb
            w = [wi - c * bi for wi, bi in zip(w, b)]
        if all(x == 0 for x in w):
            continue
        nw = ip(w, w)
        if nw == 0:
            # null direction: mix with the next candidate and retry
            if not remaining:
                raise SignatureError("Gram-Schmidt met a null vector with no candidates left")
            nxt = remaining.pop(0)
            remaining.insert(0, nxt)
            remaining.insert(0, [a + b for a, b in zip(v, nxt)])
            continue
        basis.append(w)
        norms.append(nw)
    if len(basis) < m:
        raise SignatureError("seed vectors do not span L")
    return basis, norms


def _seed_basis(m: int, seed: int):
    if seed == 0:
        return [[1 if i == j else 0 for j in range(m)] for i in range(m)]
    import random
    rng = random.Random(seed)
    # permuted unipotent basis
    perm = list(range(m))
    rng.shuffle(perm)
    vecs = []
    for i in range(m):
        v = [0] * m
        v[perm[i]] = 1
        for j in range(i + 1, m):
            v[perm[j]] = rng.randint(-2, 2)
        vecs.append(v)
    return vecs


def scalar_curvature(conn: Connection, fs: FieldSpec, point, seed: int = 0, R=None) -> Fraction:
    """Exact modified scalar curvature at a rational point.

    An orthogonal L-basis is built by Gram-Schmidt from a seed basis; the
    pseudo-Kronecker weights become ``1/g(f_i, f_i)`` for unnormalised
    vectors, which keeps the computation in the rationals.
    """
    m = fs.m
    n = fs.cs.n
    point = [Fraction(x) for x in point]
    g_at = [[x.eval(point) for x in r] for r in fs.g]
    B_at = [[x.eval(point) for x in r] for r in fs.B]
    basis, norms = _orthogonal_basis(g_at, _seed_basis(m, seed))
    pos = sum(1 for x in norms if x > 0)
    if (pos, m - pos) != (fs.p, fs.q):
        raise SignatureError(f"signature at point is ({pos},{m - pos}), expected ({fs.p},{fs.q})")
    if R is None:
        R = curvature_at(conn, point)
    H = np.array([[x.eval(point) for x in r] for r in build_H(fs).H], dtype=object)

    def io(sign, v):
        tilde = [sum((-B_at[i][j] + sign * g_at[i][j]) * v[j] for j in range(m)) for i in range(m)]
        return np.array(list(v) + tilde, dtype=object)

    frames = [(1 / nb, io(1, b)) for b, nb in zip(basis, norms)] + \
             [(1 / nb, io(-1, b)) for b, nb in zip(basis, norms)]
    # Ric[x][y] = rho(d_x, d_y) = sum_i w_i H(e_i, R(d_x, e_i) d_y)
    rho = np.zeros((n, n), dtype=object)
    for w_i, e in frames:
        # R(d_x, e) d_y = sum_b e^b R[x][b][y][:]
        Re = np.einsum("b,xbyw->xyw", e, R)
        rho = rho + w_i * np.einsum("v,vw,xyw->xy", e, H, Re)
    rho_sym = (rho + rho.T) * Fraction(1, 2)
    kappa = Fraction(0)
    for w_i, e in frames:
        kappa += w_i * (e @ rho_sym @ e)
    return Fraction(kappa)


def scalar_curvature_contracted(conn: Connection, fs: FieldSpec, point, R=None) -> Fraction:
    """Basis-free kappa using ``g^{-1}`` contractions (cross-check)."""
    point = [Fraction(x) for x in point]
    if R is None:
        R = curvature_at(conn, point)
    H = np.array([[x.eval(point) for x in r] for r in build_H(fs).H], dtype=object)
    gi = np.array([[x.eval(point) for x in r] for r in fs.ginv], dtype=object)
    Ipm = _iota_matrices_at(fs, point)
    return Fraction(_kappa_from_arrays(R, H, gi, Ipm, obj=True))


def _iota_matrices_at(fs: FieldSpec, point):
    m = fs.m
    out = []
    for s in (1, -1):
        top = np.eye(m, dtype=int).astype(object)
        bot = np.array([[-fs.B[i][j].eval(point) + s * fs.g[i][j].eval(point) for j in range(m)]
                        for i in range(m)], dtype=object)
        out.append(np.vstack([top, bot]))
    return out


def _kappa_from_arrays(R, H, gi, Ipm, obj=False):
    """Basis-free kappa; ``Ipm`` holds the iota+ and iota- column matrices (n x m)."""
    rho = 0
    for I in Ipm:
        HI = H @ I
        rho = rho + np.einsum("...ij,...wi,...bj,...xbyw->...xy", gi, HI, I, R)
    rhoT = np.swapaxes(rho, -1, -2)
    rho_sym = (rho + rhoT) * Fraction(1, 2) if obj else (rho + rhoT) / 2
    kappa = 0
    for I in Ipm:
        kappa = kappa + np.einsum("...ij,...xi,...xy,...yj->...", gi, I, rho_sym, I)
    return kappa


def _gL(fs: FieldSpec, U, V):
    cs = fs.cs
    acc = cs.zero()
    for i in range(fs.m):
        for j in range(fs.m):
            if not U[i].is_zero() and not V[j].is_zero() and not fs.g[i][j].is_zero():
                acc = acc + U[i] * fs.g[i][j] * V[j]
    return acc


def dpm_cyclic_residual(conn: Connection, sign: int, X, Y, Z, fs: FieldSpec | None = None,
                        signed_rhs: bool = False) -> ScalarExpr:
    """Cyclic D-identity on pure iota-triples for L-vectors X, Y, Z.

    With ``signed_rhs`` the right-hand side carries an overall ``sign``
    factor, as in the printed form of the identity.
    """
    fs = fs or conn.field
    D = conn.D(sign, fs)
    iX, iY, iZ = (iota(sign, V, fs) for V in (X, Y, Z))
    lhs = (_gL(fs, D.derivative(iX, Y), Z) + _gL(fs, D.derivative(iY, Z), X)
           + _gL(fs, D.derivative(iZ, X), Y))

    def prb(A, Bv):
        X1, X2 = decompose_L_parts(c_bracket(A, Bv), fs)
        return X1 if sign == 1 else X2

    rhs = _gL(fs, prb(iX, iY), Z) + _gL(fs, prb(iY, iZ), X) + _gL(fs, prb(iX, iZ), Y)
    rhs = rhs - (act(iX, _gL(fs, Y, Z)) - act(iY, _gL(fs, Z, X)) - act(iZ, _gL(fs, X, Y)) * 3) * _HALF
    if signed_rhs and sign == -1:
        rhs = -rhs
    return lhs - rhs


def tg05_rhs(base: Connection, X: TensorField, Y: TensorField, Z: TensorField) -> ScalarExpr:
    """Right-hand side of the deformation equation, evaluated on arbitrary fields."""
    nab = base.covariant
    br = (pair_gamma(c_bracket(X, Y), Z) + pair_gamma(c_bracket(Y, Z), X) + pair_gamma(c_bracket(X, Z), Y)
          - (act(X, pair_gamma(Y, Z)) - act(Y, pair_gamma(Z, X)) - act(Z, pair_gamma(X, Y)) * 3) * _HALF)
    return br - (pair_gamma(nab(X, Y), Z) + pair_gamma(nab(Y, Z), X) + pair_gamma(nab(Z, X), Y))


def psi_evaluate(Psi, X: TensorField, Y: TensorField, Z: TensorField) -> ScalarExpr:
    cs = X.cs
    n = cs.n
    acc = cs.zero()
    for a in range(n):
        if X[a].is_zero():
            continue
        for b in range(n):
            if Y[b].is_zero():
                continue
            for c in range(n):
                if Z[c].is_zero() or Psi[a][b][c].is_zero():
                    continue
                acc = acc + X[a] * Y[b] * Z[c] * Psi[a][b][c]
    return acc


# --- actions ---------------------------------------------------------------------

class ActionError(ConnectionError_):
    pass


def connection_for(field: FieldSpec, kind: str) -> Connection:
    if kind == "cwt":
        return cwt_connection(field)
    if kind == "vtc":
        return vtc_connection(field)
    raise ActionError(f"unknown connection kind {kind!r} (expected 'vtc' or 'cwt')")


def _float_table(exprs, shape, nodes):
    """Evaluate a nested table of ScalarExpr at quadrature nodes (last axis = node)."""
    flat = np.asarray(exprs, dtype=object).reshape(-1)
    npts = nodes[0].shape[0]
    out = np.zeros((flat.size, npts))
    for k, e in enumerate(flat):
        if e.is_zero():
            continue
        out[k] = e.to_callable()(*nodes) if not e.is_constant() else float(e.constant_value())
    return np.moveaxis(out.reshape(tuple(shape) + (npts,)), -1, 0)


def _check_box(domain, n):
    if domain is None:
        return [(0.0, 1.0)] * n
    dom = [tuple(map(float, d)) for d in domain]
    if len(dom) != n:
        raise ActionError(f"domain needs {n} intervals, got {len(dom)}")
    for lo, hi in dom:
        if not hi > lo:
            raise ActionError(f"empty interval [{lo}, {hi}]")
    return dom


def _scan_poles(field: FieldSpec, dom, per_axis: int = 9) -> None:
    """Reject boxes where det(g) or an input denominator vanishes or changes sign.

    The scan uses a regular grid that includes the box corners; that catches
    sign changes and zeros on grid planes, which covers the usual failure modes.
    """
    cs = field.cs
    one = cs.one().num
    polys = [mx.det(field.g).num]
    for e in [x for r in field.g for x in r] + [x for r in field.B for x in r] + [field.phi or cs.zero()]:
        if not e.is_polynomial():
            polys.append(e.den)
    exprs = [ScalarExpr._raw(cs, q, one) for q in polys if not q.is_constant()]
    used = sorted(set().union(*(e.free_indices() for e in exprs))) if exprs else []
    if not used:
        return
    axes = [np.linspace(dom[k][0], dom[k][1], per_axis) for k in used]
    grids = [gk.reshape(-1) for gk in np.meshgrid(*axes, indexing="ij")]
    pts = dict(zip(used, grids))
    nodes = [pts.get(k, np.full(grids[0].size, (dom[k][0] + dom[k][1]) / 2)) for k in range(cs.n)]
    for e in exprs:
        v = e.to_callable()(*nodes)
        if np.any(v == 0) or (np.any(v > 0) and np.any(v < 0)):
            raise PoleError(f"integrand has a pole in the domain: {e} vanishes there")


def action_value(field: FieldSpec, kind: str = "vtc", domain=None, quad_order: int = 8,
                 conn: Connection | None = None) -> float:
    """Gauss-Legendre value of the integral of ``exp(-2 phi) kappa sqrt|det H|`` over a box.

    Only the coordinates the integrand actually depends on are sampled; the
    remaining directions contribute their interval lengths.
    """
    import warnings

    from .genmetric import check_level_matching

    cs = field.cs
    m, n = cs.m, cs.n
    dom = _check_box(domain, n)
    if quad_order < 1:
        raise ActionError("quad_order must be positive")
    if not check_level_matching(field):
        warnings.warn("field is not level matched; the action is computed anyway", stacklevel=2)
    _scan_poles(field, dom)
    conn = conn or connection_for(field, kind)
    H = build_H(field).H
    detH = mx.det(H)
    phi = field.phi if field.phi is not None else cs.zero()
    dG = conn.dGamma()

    used = set(conn.free_indices()) | phi.free_indices() | detH.free_indices()
    for table in (field.g, field.B, H):
        for row in table:
            for e in row:
                used |= e.free_indices()
    for a in dG:
        for plane in a:
            for row in plane:
                for e in row:
                    used |= e.free_indices()
    used = sorted(used)

    x, w = np.polynomial.legendre.leggauss(quad_order)
    axes_nodes, axes_weights = [], []
    for k in used:
        lo, hi = dom[k]
        axes_nodes.append((hi - lo) / 2 * x + (hi + lo) / 2)
        axes_weights.append((hi - lo) / 2 * w)
    scale = 1.0
    for k in range(n):
        if k not in used:
            scale *= dom[k][1] - dom[k][0]
    if used:
        grids = np.meshgrid(*axes_nodes, indexing="ij")
        wgrid = np.ones_like(grids[0])
        for k, wk in enumerate(np.meshgrid(*axes_weights, indexing="ij")):
            wgrid = wgrid * wk
        pts = {k: gk.reshape(-1) for k, gk in zip(used, grids)}
        weights = wgrid.reshape(-1)
    else:
        pts, weights = {}, np.ones(1)
    npts = weights.size
    nodes = [pts.get(k, np.full(npts, (dom[k][0] + dom[k][1]) / 2)) for k in range(n)]

    try:
        G = _float_table(conn.Gamma, (n, n, n), nodes)
        dGv = _float_table(dG, (n, n, n, n), nodes)
        Hv = _float_table(H, (n, n), nodes)
        giv = _float_table(field.ginv, (m, m), nodes)
        gv = _float_table(field.g, (m, m), nodes)
        Bv = _float_table(field.B, (m, m), nodes)
        phiv = _float_table([phi], (1,), nodes)[:, 0]
        detv = _float_table([detH], (1,), nodes)[:, 0]
    except PoleError as exc:
        raise PoleError(f"integrand has a pole in the domain: {exc}") from exc
    eye = np.broadcast_to(np.eye(m), (npts, m, m))
    Ipm = [np.concatenate([eye, -Bv + s * gv], axis=1) for s in (1, -1)]
    R = _curvature_from_values(G, dGv, m)
    kappa = _kappa_from_arrays(R, Hv, giv, Ipm)
    integrand = np.exp(-2 * phiv) * kappa * np.sqrt(np.abs(detv))
    if not np.all(np.isfinite(integrand)):
        raise ActionError("integrand is not finite on the quadrature grid")
    return float(scale * math.fsum(integrand * weights))


def kappa_float(conn: Connection, fs: FieldSpec, point) -> float:
    """Float kappa at a point through the same batched path used by the action."""
    m, n = fs.m, fs.cs.n
    nodes = [np.array([float(c)]) for c in point]
    G = _float_table(conn.Gamma, (n, n, n), nodes)
    dGv = _float_table(conn.dGamma(), (n, n, n, n), nodes)
    Hv = _float_table(build_H(fs).H, (n, n), nodes)
    giv = _float_table(fs.ginv, (m, m), nodes)
    gv = _float_table(fs.g, (m, m), nodes)
    Bv = _float_table(fs.B, (m, m), nodes)
    eye = np.eye(m)[None]
    Ipm = [np.concatenate([eye, -Bv + s * gv], axis=1) for s in (1, -1)]
    return float(_kappa_from_arrays(_curvature_from_values(G, dGv, m), Hv, giv, Ipm)[0])
