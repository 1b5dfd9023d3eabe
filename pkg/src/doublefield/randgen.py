"""Seeded random generators for fields, vector fields and forms."""

from __future__ import annotations

import random
from fractions import Fraction

from . import matrix as mx
from .genmetric import FieldSpec
from .symcore import CoordSystem, ScalarExpr, random_poly
from .tensor import TensorField, vector


def rng_for(seed) -> random.Random:
    return seed if isinstance(seed, random.Random) else random.Random(seed)


def x_poly(cs: CoordSystem, rng, degree=1, terms=2, coeff_range=2) -> ScalarExpr:
    return random_poly(cs, rng, degree=degree, terms=terms, variables=cs.base_indices(), coeff_range=coeff_range)


def random_field(cs: CoordSystem, seed=0, p=None, degree=1, with_B=True, with_phi=True,
                 level_matched=True, constant=False) -> FieldSpec:
    """A random (g, B, phi) with ``g = U^T diag(eps) U`` for unit upper-triangular ``U``.

    det g is then constant, so ``g^{-1}`` stays polynomial and the signature is
    the same everywhere.
    """
    rng = rng_for(seed)
    m = cs.m
    p = m if p is None else p
    variables = cs.base_indices() if level_matched else list(range(cs.n))

    def poly(deg, terms=2):
        c = cs.const(Fraction(rng.randint(-2, 2), rng.choice((1, 2))))
        if constant or deg == 0:
            return c
        # one guaranteed non-constant monomial keeps the geometry non-flat
        lead = cs.coord(rng.choice(variables)) * rng.choice((-1, 1))
        return c + lead + random_poly(cs, rng, degree=deg, terms=terms, variables=variables, coeff_range=2)

    U = [[cs.one() if i == j else (poly(degree) if j > i else cs.zero()) for j in range(m)] for i in range(m)]
    eps = [cs.const(rng.choice((1, 2)) * (1 if i < p else -1)) for i in range(m)]
    D = [[eps[i] if i == j else cs.zero() for j in range(m)] for i in range(m)]
    g = mx.matmul(mx.transpose(U), mx.matmul(D, U))
    B = [[cs.zero()] * m for _ in range(m)]
    if with_B:
        for i in range(m):
            for j in range(i + 1, m):
                b = poly(degree)
                B[i][j] = b
                B[j][i] = -b
    phi = poly(degree) if with_phi else cs.zero()
    return FieldSpec(cs, g, B, phi=phi, p=p, q=m - p)


def random_L_vector(cs: CoordSystem, rng, degree=1, terms=2, foliated=True) -> list[ScalarExpr]:
    variables = cs.base_indices() if foliated else list(range(cs.n))
    return [random_poly(cs, rng, degree=degree, terms=terms, variables=variables) for _ in range(cs.m)]


def random_vector_field(cs: CoordSystem, rng, degree=1, terms=2, foliated=False, support="full") -> TensorField:
    variables = cs.base_indices() if foliated else list(range(cs.n))
    comps = []
    for a in range(cs.n):
        in_L = a < cs.m
        if (support == "L" and not in_L) or (support == "Lt" and in_L):
            comps.append(cs.zero())
        else:
            comps.append(random_poly(cs, rng, degree=degree, terms=terms, variables=variables))
    return vector(cs, comps)


def random_closed_S(cs: CoordSystem, rng, degree=2) -> list[list[ScalarExpr]]:
    """``d_L`` of a random x-only 1-form on L, as an antisymmetric m x m matrix."""
    m = cs.m
    a = [x_poly(cs, rng, degree=degree, terms=2) for _ in range(m)]
    return [[a[j].diff(i) - a[i].diff(j) for j in range(m)] for i in range(m)]


def random_isometry(fs: FieldSpec, rng, degree=0, foliated=True):
    """Cayley transform ``(Id + K)(Id - K)^{-1}`` with ``K = g^{-1} A``, A antisymmetric."""
    cs = fs.cs
    m = cs.m
    variables = cs.base_indices() if foliated else list(range(cs.n))
    A = [[cs.zero()] * m for _ in range(m)]
    for i in range(m):
        for j in range(i + 1, m):
            if degree:
                a = random_poly(cs, rng, degree=degree, terms=2, variables=variables, coeff_range=1)
            else:
                a = cs.const(Fraction(rng.randint(-3, 3), rng.randint(1, 3)))
            A[i][j] = a
            A[j][i] = -a
    K = mx.matmul(fs.ginv, A)
    I = mx.identity(m, cs.one(), cs.zero())
    den = mx.sub(I, K)
    if mx.det(den).is_zero():
        return random_isometry(fs, rng, degree, foliated)
    return mx.matmul(mx.add(I, K), mx.inverse(den))
