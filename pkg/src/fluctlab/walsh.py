"""Operator algebra on the spin-product basis, with dense configuration oracles.

The generator splits as L = gamma*Araise - gamma*Alower + Ssym on the linear
hull of the basis {xi_Lambda}, where Araise raises the degree |Lambda| by one,
Alower (its adjoint) lowers it by one, and Ssym preserves it.  Coefficients
stay exact integers as long as the input coefficients are integers; the
gamma-weighted combinations are floats.

All +-1 site shifts wrap mod M: the ring is the finite-volume truncation of
the infinite lattice, and M is a convergence parameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.sparse as sp

from .lattice import center_site, walsh_index

__all__ = [
    "WalshVector",
    "a_plus",
    "a_plus_star",
    "s_op",
    "generator_apply",
    "config_generator_matrix",
    "walsh_transform_matrix",
    "walsh_generator_matrix",
    "observable_to_walsh",
    "observable_config_vector",
    "sector_basis",
    "sector_matrix",
    "SectorOperator",
]


class WalshVector:
    """Sparse linear combination of basis functions xi_Lambda on a ring of size M.

    terms maps canonical site tuples to coefficients; zero coefficients are
    dropped so the support is always exact.
    """

    __slots__ = ("M", "terms")

    def __init__(self, M, terms=None):
        self.M = M
        self.terms = {}
        if terms:
            for lam, c in terms.items():
                self.add(lam, c)

    @classmethod
    def basis(cls, M, sites):
        return cls(M, {walsh_index(sites, M): 1})

    def add(self, lam, c):
        lam = walsh_index(lam, self.M)
        new = self.terms.get(lam, 0) + c
        if new == 0:
            self.terms.pop(lam, None)
        else:
            self.terms[lam] = new

    def scaled(self, a):
        out = WalshVector(self.M)
        if a != 0:
            for lam, c in self.terms.items():
                out.terms[lam] = a * c
        return out

    def __add__(self, other):
        out = WalshVector(self.M, self.terms)
        for lam, c in other.terms.items():
            out.add(lam, c)
        return out

    def __sub__(self, other):
        return self + other.scaled(-1)

    def inner(self, other):
        """L2(nu) inner product; the basis is orthonormal."""
        if len(self.terms) > len(other.terms):
            return other.inner(self)
        return sum(c * other.terms.get(lam, 0) for lam, c in self.terms.items())

    def degrees(self):
        return sorted({len(lam) for lam in self.terms})

    def norm2(self):
        return sum(c * c for c in self.terms.values())

    def __eq__(self, other):
        return isinstance(other, WalshVector) and self.M == other.M and self.terms == other.terms

    def __repr__(self):
        items = ", ".join(f"{lam}: {c}" for lam, c in sorted(self.terms.items()))
        return f"WalshVector(M={self.M}, {{{items}}})"


def a_plus(v):
    """Degree-raising part: each occupied site spawns a neighbor outside the set,
    with sign +1 to the right and -1 to the left."""
    out = WalshVector(v.M)
    M = v.M
    for lam, c in v.terms.items():
        members = set(lam)
        for x in lam:
            r = center_site(x + 1, M)
            l = center_site(x - 1, M)
            if r not in members:
                out.add(tuple(sorted(members | {r})), c)
            if l not in members:
                out.add(tuple(sorted(members | {l})), -c)
    return out


def a_plus_star(v):
    """Adjoint of a_plus on the basis hull: lowers the degree by one."""
    out = WalshVector(v.M)
    M = v.M
    for lam, c in v.terms.items():
        members = set(lam)
        for x in lam:
            w = 0
            if center_site(x + 1, M) not in members:
                w += 1
            if center_site(x - 1, M) not in members:
                w -= 1
            if w != 0:
                out.add(tuple(sorted(members - {x})), w * c)
    return out


def s_op(v):
    """Symmetric part: degree-preserving exclusion motion of the site set,
    S xi_Lambda = S0 xi_Lambda - 2|Lambda| xi_Lambda."""
    out = WalshVector(v.M)
    M = v.M
    for lam, c in v.terms.items():
        members = set(lam)
        diag = -2 * len(lam)
        for x in lam:
            for nb in (center_site(x + 1, M), center_site(x - 1, M)):
                if nb in members:
                    diag += 1
                else:
                    out.add(tuple(sorted((members - {x}) | {nb})), c)
        if diag != 0:
            out.add(lam, diag * c)
    return out


def generator_apply(v, params, adjoint=False):
    """gamma*a_plus - gamma*a_plus_star + s_op, with the gamma terms swapped
    for the adjoint."""
    g = params.gamma
    raise_part = a_plus(v).scaled(-g if adjoint else g)
    lower_part = a_plus_star(v).scaled(g if adjoint else -g)
    return raise_part + lower_part + s_op(v)


# ---------------------------------------------------------------------------
# dense configuration-space oracles (M <= 12)

_MAX_DENSE_M = 12


def _check_dense(M):
    if M > _MAX_DENSE_M:
        raise ValueError(f"dense configuration oracle limited to M <= {_MAX_DENSE_M}, got {M}")
    if M % 2 != 0 or M < 2:
        raise ValueError(f"ring size must be even and >= 2, got {M}")


def config_generator_matrix(M, params):
    """Dense 2^M x 2^M generator: entry (n, m) is the jump rate n -> m, the
    diagonal the negative row sum.

    Configuration n encodes occupation by bits: bit i of n is the occupation
    of internal site i (centered site i - M/2).
    """
    _check_dense(M)
    if M < 4:
        raise ValueError(f"dynamics needs M >= 4, got {M}")
    p, q = params.p, params.q
    size = 1 << M
    Q = np.zeros((size, size))
    for n in range(size):
        for i in range(M):
            j = (i + 1) % M
            if (n >> i) & 1 and not (n >> j) & 1:
                m = n ^ (1 << i) ^ (1 << j)
                Q[n, m] += 2.0 * p
            j = (i - 1) % M
            if (n >> i) & 1 and not (n >> j) & 1:
                m = n ^ (1 << i) ^ (1 << j)
                Q[n, m] += 2.0 * q
    Q[np.arange(size), np.arange(size)] -= Q.sum(axis=1)
    return Q


def _popcount_parity(arr):
    # parity of the popcount of a uint32 array
    x = arr.copy()
    x ^= x >> 16
    x ^= x >> 8
    x ^= x >> 4
    x ^= x >> 2
    x ^= x >> 1
    return x & 1


def walsh_transform_matrix(M):
    """Orthogonal matrix whose column for the site set Lambda holds
    2^(-M/2) xi_Lambda over configurations.

    Columns are indexed by subset bitmask m (bit i <-> internal site i);
    entry (n, m) = 2^(-M/2) * (-1)^{|m & ~n|}.
    """
    _check_dense(M)
    size = 1 << M
    n = np.arange(size, dtype=np.uint32)[:, None]
    m = np.arange(size, dtype=np.uint32)[None, :]
    signs = 1.0 - 2.0 * _popcount_parity(m & ~n)
    return signs / np.sqrt(size)


def mask_of_sites(sites, M):
    mask = 0
    for x in sites:
        mask |= 1 << ((x + M // 2) % M)
    return mask


def sites_of_mask(mask, M):
    return tuple(sorted(i - M // 2 for i in range(M) if (mask >> i) & 1))


def walsh_generator_matrix(M, params, adjoint=False):
    """Matrix of generator_apply in the basis ordered by subset bitmask."""
    _check_dense(M)
    size = 1 << M
    out = np.zeros((size, size))
    for m in range(size):
        v = generator_apply(WalshVector.basis(M, sites_of_mask(m, M)), params, adjoint=adjoint)
        for lam, c in v.terms.items():
            out[mask_of_sites(lam, M), m] = c
    return out


def observable_to_walsh(V):
    out = WalshVector(V.M)
    if V.c0 != 0.0:
        out.add((), V.c0)
    for (x, y), c in V.pairs.items():
        out.add((x, y), c)
    return out


def observable_config_vector(V, M=None):
    """Evaluate an ObservableSpec on every configuration of the ring."""
    M = V.M if M is None else M
    _check_dense(M)
    size = 1 << M
    n = np.arange(size, dtype=np.uint32)
    spins = np.empty((size, M))
    for i in range(M):
        spins[:, i] = 2.0 * ((n >> i) & 1) - 1.0
    vec = np.full(size, float(V.c0))
    half = M // 2
    for (x, y), c in V.pairs.items():
        vec += c * spins[:, (x + half) % M] * spins[:, (y + half) % M]
    return vec


# ---------------------------------------------------------------------------
# degree sectors

_SECTOR_DIM_CAP = 20_000_000


@dataclass
class SectorOperator:
    """(alpha - Ssym) restricted to the span of {xi_Lambda : |Lambda| = degree}."""

    degree: int
    alpha: float
    M: int
    basis: list
    index: dict
    matrix: sp.csr_matrix

    def to_coo_text(self):
        """Coordinate-format text dump: header line, then 'i j value' rows."""
        coo = self.matrix.tocoo()
        lines = [f"# sector degree={self.degree} alpha={self.alpha:.17g} M={self.M} dim={len(self.basis)}"]
        order = np.lexsort((coo.col, coo.row))
        for t in order:
            lines.append(f"{coo.row[t]} {coo.col[t]} {coo.data[t]:.17g}")
        return "\n".join(lines) + "\n"


def sector_basis(M, degree):
    """Canonical ordering of the degree-d site sets (lexicographic tuples)."""
    from itertools import combinations

    lo = -M // 2
    return [tuple(c) for c in combinations(range(lo, lo + M), degree)]


def sector_matrix(M, degree, alpha):
    """Assemble (alpha - Ssym) on the degree-d sector by applying s_op to
    each basis element.  Symmetric, and positive definite for alpha > 0."""
    if degree < 0 or degree > M:
        raise ValueError(f"degree must lie in [0, {M}], got {degree}")
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    dim = comb(M, degree)
    if dim > _SECTOR_DIM_CAP:
        raise ValueError(f"sector dimension {dim} exceeds cap {_SECTOR_DIM_CAP}")
    basis = sector_basis(M, degree)
    index = {lam: i for i, lam in enumerate(basis)}
    rows, cols, vals = [], [], []
    for j, lam in enumerate(basis):
        out = s_op(WalshVector.basis(M, lam))
        diag_seen = False
        for mu, c in out.terms.items():
            i = index[mu]
            val = -float(c) + (alpha if i == j else 0.0)
            if i == j:
                diag_seen = True
            rows.append(i)
            cols.append(j)
            vals.append(val)
        if not diag_seen:
            rows.append(j)
            cols.append(j)
            vals.append(alpha)
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
    return SectorOperator(degree, alpha, M, basis, index, mat)
