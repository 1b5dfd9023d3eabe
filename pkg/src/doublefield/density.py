"""Densities of weight s on TM in the distinguished frame."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import matrix as mx
from .algebroid import is_strongly_foliated
from .symcore import ScalarExpr, as_expr
from .tensor import TensorField, act, covector


class DensityError(ValueError):
    pass


@dataclass(frozen=True)
class Density:
    """``theta * |d/dx^1 ^ ... ^ d/dxt_m|^s``."""

    weight: Fraction
    theta: ScalarExpr

    def __post_init__(self):
        object.__setattr__(self, "weight", Fraction(self.weight))

    @property
    def cs(self):
        return self.theta.cs

    @property
    def strongly_foliated(self) -> bool:
        return is_strongly_foliated(self.theta)

    def __str__(self):
        return f"({self.theta}) |vol|^{self.weight}"


def div_L(X: TensorField) -> ScalarExpr:
    cs = X.cs
    acc = cs.zero()
    for i in range(cs.m):
        acc = acc + X[i].diff(i)
    return acc


def lie_density(X: TensorField, d: Density) -> Density:
    if not is_strongly_foliated(X):
        raise DensityError("the vector field must be strongly foliated")
    if not d.strongly_foliated:
        raise DensityError("the density must be strongly foliated")
    return Density(d.weight, act(X, d.theta) + d.theta * div_L(X) * d.weight)


def induced_density_connection(conn, s) -> TensorField:
    """Connection 1-form ``s * trace(Gamma_u)`` on the weight-s density line."""
    cs = conn.cs
    s = Fraction(s)
    comps = []
    for u in range(cs.n):
        tr = cs.zero()
        for v in range(cs.n):
            tr = tr + conn.Gamma[u][v][v]
        comps.append(tr * s)
    return covector(cs, comps)


def covariant_density(conn, d: Density) -> TensorField:
    """Components ``d_u theta + s * theta * trace(Gamma_u)`` of the covariant derivative."""
    form = induced_density_connection(conn, d.weight)
    return covector(d.cs, [d.theta.diff(u) + d.theta * form[u] for u in range(d.cs.n)])


def volume_density(field) -> Density:
    """The density of the generalized-metric volume form, coefficient ``sqrt|det H|``."""
    from .genmetric import build_H

    cs = field.cs
    det = mx.det(build_H(field).H)
    if not det.is_constant():
        raise DensityError("det H is not constant; its square root is not rational")
    v = abs(det.constant_value())
    root = _exact_sqrt(v)
    if root is None:
        raise DensityError(f"sqrt of det H = {v} is irrational")
    # covariant volume: weight -1 in the frame convention
    return Density(Fraction(-1), as_expr(cs, root))


def _exact_sqrt(q: Fraction):
    from math import isqrt

    a, b = q.numerator, q.denominator
    ra, rb = isqrt(a), isqrt(b)
    if ra * ra == a and rb * rb == b:
        return Fraction(ra, rb)
    return None


def affine_transform(d: Density, A, b=None) -> Density:
    """Coefficient of ``d`` in the coordinates ``x' = A x + b``.

    The new frame is ``d/dx' = A^{-T} d/dx``, so the coefficient picks up
    ``|det A|^s`` and is re-expressed in the primed coordinates.
    """
    cs = d.cs
    n = cs.n
    A = [[Fraction(a) for a in row] for row in A]
    b = [Fraction(0)] * n if b is None else [Fraction(v) for v in b]
    detA = mx.det(A)
    if detA == 0:
        raise DensityError("singular coordinate change")
    s = d.weight
    if s.denominator != 1:
        raise DensityError("only integer weights give rational transformation factors")
    factor = abs(Fraction(detA)) ** int(s)
    Ainv = mx.inverse(A)
    xs = cs.coords()
    old = [sum((xs[j] - b[j]) * Ainv[i][j] for j in range(n)) + 0 for i in range(n)]
    old = [as_expr(cs, o) if not isinstance(o, ScalarExpr) else o for o in old]
    return Density(s, d.theta.compose(old) * factor)


def locafin_matrix(alpha) -> list[list[Fraction]]:
    """Block matrix of a distinguished affine change ``x = alpha x'``, ``xt = beta xt'`` with beta = alpha^{-T}."""
    m = len(alpha)
    alpha = [[Fraction(a) for a in row] for row in alpha]
    beta = mx.transpose(mx.inverse(alpha))
    # x' = alpha^{-1} x, xt' = beta^{-1} xt
    ai = mx.inverse(alpha)
    bi = mx.inverse(beta)
    n = 2 * m
    out = [[Fraction(0)] * n for _ in range(n)]
    for i in range(m):
        for j in range(m):
            out[i][j] = ai[i][j]
            out[m + i][m + j] = bi[i][j]
    return out
