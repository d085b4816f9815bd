"""Mollified fluctuation field and the exact assembly of quadratic observables.

The mollifier is the standard smooth bump C*exp(-1/(1-u^2)) on (-1, 1),
rescaled to d_N(u) = N d(Nu) with unit mass and support [-1/N, 1/N].  Test
functions are polynomial-times-Gaussian with closed-form derivatives, so the
H-functions (H = -G') have exactly zero mean.

The functional F_N(Y, G) = -int G'(u) (Y*d_N)^2(u) du expands, for the lattice
field Y = sqrt(eps) sum_x xi(x) delta_{eps x}, into degree-{0,2} spin
observables whose coefficients are overlap integrals of shifted mollifiers.
build_v_split assembles the four pieces whose sum is exactly
F_N - V_G on every state (same truncation window on both sides).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import ObservableSpec, center_site

__all__ = [
    "WindowError",
    "QuadratureError",
    "adaptive_quadrature",
    "MollifierSpec",
    "make_mollifier",
    "TestFunctionSpec",
    "field_convolution",
    "evaluate_F_N",
    "build_V_G",
    "build_V_Hi",
    "build_v_split",
    "riemann_defect",
]


class WindowError(ValueError):
    """Macroscopic support would leak around the torus."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


_GAUSS_CACHE = {}


def _gauss_rule(n):
    if n not in _GAUSS_CACHE:
        _GAUSS_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GAUSS_CACHE[n]


def adaptive_quadrature(f, a, b, abs_tol=1e-10, initial_panels=8, max_panels=200_000):
    """Globally adaptive panel quadrature with vectorized evaluations.

    Each panel is judged by comparing one 15-node Gauss value against the sum
    over its halves; panels exceeding their width-share of abs_tol are bisected.
    """
    if b <= a:
        return 0.0
    xs, ws = _gauss_rule(15)

    def gauss(lo, hi):
        c = 0.5 * (lo + hi)[:, None]
        h = 0.5 * (hi - lo)[:, None]
        nodes = c + h * xs[None, :]
        vals = np.asarray(f(nodes.ravel()), dtype=np.float64).reshape(nodes.shape)
        return (vals @ ws) * h[:, 0]

    lo = np.linspace(a, b, initial_panels + 1)[:-1]
    hi = np.linspace(a, b, initial_panels + 1)[1:]
    total = 0.0
    spent = 0
    while lo.size:
        spent += lo.size
        if spent > max_panels:
            raise QuadratureError(f"exceeded {max_panels} panels for tolerance {abs_tol}")
        mid = 0.5 * (lo + hi)
        coarse = gauss(lo, hi)
        fine = gauss(lo, mid) + gauss(mid, hi)
        share = (hi - lo) / (b - a)
        ok = np.abs(fine - coarse) <= abs_tol * share
        total += float(fine[ok].sum())
        lo, hi, mid = lo[~ok], hi[~ok], mid[~ok]
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
    return total


# ---------------------------------------------------------------------------
# mollifier

def _bump_raw(t):
    """exp(-1/(1-t^2)) on (-1, 1), zero outside; vectorized."""
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ti * ti))
    return out


def _bump_d2_factor(t):
    """d''/d = g'' + g'^2 for g(t) = -1/(1-t^2), on |t| < 1."""
    s = 1.0 - t * t
    g1 = -2.0 * t / (s * s)
    g2 = -2.0 / (s * s) - 8.0 * t * t / (s * s * s)
    return g2 + g1 * g1


@dataclass
class MollifierSpec:
    """Rescaled bump d_N(u) = N d(Nu): even, mass one, support [-1/N, 1/N].

    Norm constants of the base bump are computed, not assumed:
    l2sq = ||d||_2^2, sup = ||d||_inf, d2sup = ||d''||_inf.
    """

    N: int
    norm_const: float
    l2sq: float
    sup: float
    d2sup: float
    _overlaps: dict = field(default_factory=dict, repr=False)

    @property
    def support_radius(self):
        return 1.0 / self.N

    def d(self, u):
        """Base bump, mass one on [-1, 1]."""
        return self.norm_const * _bump_raw(u)

    def d_N(self, u):
        return self.N * self.d(self.N * np.asarray(u, dtype=np.float64))

    def d_N_l2sq(self):
        """int d_N^2 = N ||d||_2^2."""
        return self.N * self.l2sq

    def overlap_rule(self, eps, k):
        """Quadrature nodes/weights for integrals against d_N(u) d_N(u - eps*k).

        Returns (offsets, w) with w already containing both mollifier factors,
        so that int f(u) d_N(u - a) d_N(u - a - eps*k) du = sum w * f(a + offsets).
        Cached per (eps, k); empty arrays when the supports do not overlap.
        """
        key = (float(eps), int(k))
        got = self._overlaps.get(key)
        if got is not None:
            return got
        r = self.support_radius
        s = eps * k
        lo, hi = max(0.0, s) - r, min(0.0, s) + r
        if hi <= lo:
            rule = (np.empty(0), np.empty(0))
        else:
            xs, ws = _gauss_rule(20)
            edges = np.linspace(lo, hi, 7)
            c = 0.5 * (edges[:-1] + edges[1:])[:, None]
            h = 0.5 * (edges[1:] - edges[:-1])[:, None]
            nodes = (c + h * xs[None, :]).ravel()
            w = (np.broadcast_to(ws[None, :], (6, xs.size)) * h).ravel()
            rule = (nodes, w * self.d_N(nodes) * self.d_N(nodes - s))
        self._overlaps[key] = rule
        return rule

    def overlap(self, eps, k):
        """O(k) = int d_N(u) d_N(u - eps*k) du; O(0) = N ||d||_2^2."""
        _, w = self.overlap_rule(eps, k)
        return float(w.sum())


def make_mollifier(N, tol=1e-12):
    """Build the mollifier spec for scale N >= 1, computing its constants."""
    if N < 1 or int(N) != N:
        raise ValueError(f"N must be a positive integer, got {N}")
    mass = adaptive_quadrature(_bump_raw, -1.0, 1.0, abs_tol=tol)
    C = 1.0 / mass
    l2sq = adaptive_quadrature(lambda t: (C * _bump_raw(t)) ** 2, -1.0, 1.0, abs_tol=tol)
    sup = C * math.exp(-1.0)
    grid = np.linspace(-1.0 + 1e-9, 1.0 - 1e-9, 400_001)
    d2 = C * _bump_raw(grid) * _bump_d2_factor(grid)
    d2sup = float(np.abs(d2).max())
    return MollifierSpec(int(N), C, l2sq, sup, d2sup)


# ---------------------------------------------------------------------------
# test functions: polynomial times Gaussian

def _poly_mul_u(p):
    return np.polynomial.Polynomial([0.0, 1.0]) * p


@dataclass(frozen=True)
class _PolyGauss:
    """P(u) * exp(-u^2 / (2 sigma^2)), closed under differentiation."""

    poly: np.polynomial.Polynomial
    sigma: float

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        return self.poly(u) * np.exp(-u * u / (2.0 * self.sigma ** 2))

    def deriv(self):
        return _PolyGauss(self.poly.deriv() - _poly_mul_u(self.poly) / self.sigma ** 2, self.sigma)


class TestFunctionSpec:
    """Schwartz-class test function G with cached derivatives and norms.

    H = -G' has integral exactly zero; sup norms are taken on a dense grid
    over [-R, R] where R is the computed effective support radius (weighted
    tails below 1e-14 of the peak).
    """

    __test__ = False    # not a pytest class, despite the name

    def __init__(self, coeffs=(1.0,), sigma=0.35, name=None):
        if sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {sigma}")
        self.sigma = float(sigma)
        self.coeffs = tuple(float(c) for c in coeffs)
        self.name = name or f"poly{list(self.coeffs)}*gauss(sigma={self.sigma})"
        self._G = _PolyGauss(np.polynomial.Polynomial(list(self.coeffs)), self.sigma)
        self._G1 = self._G.deriv()
        self._G2 = self._G1.deriv()
        self._G3 = self._G2.deriv()
        self.R = self._effective_radius()
        self.norms = self._compute_norms()

    # pointwise evaluations -------------------------------------------------
    def G(self, u):
        return self._G(u)

    def Gp(self, u):
        return self._G1(u)

    def H(self, u):
        """H = -G'; integrates to exactly zero."""
        return -self._G1(u)

    def Hp(self, u):
        return -self._G2(u)

    def Hpp(self, u):
        return -self._G3(u)

    # constants --------------------------------------------------------------
    def _effective_radius(self):
        hi = max(12.0 * self.sigma * (1 + len(self.coeffs)), 6.0)
        grid = np.linspace(0.0, hi, 60_000)
        env = np.zeros_like(grid)
        for f in (self._G, self._G1, self._G2, self._G3):
            env = np.maximum(env, np.abs(f(grid)) + np.abs(f(-grid)))
        env *= 1.0 + grid * grid
        peak = env.max()
        if peak == 0.0:
            return 0.0
        above = np.nonzero(env > 1e-14 * peak)[0]
        idx = above[-1] + 1 if above[-1] + 1 < grid.size else grid.size - 1
        return float(grid[idx])

    def _compute_norms(self):
        R = self.R
        grid = np.linspace(-R, R, 200_001)
        w = 1.0 + grid * grid
        H, Hp, Hpp = self.H(grid), self.Hp(grid), self.Hpp(grid)
        h_abs = adaptive_quadrature(lambda u: np.abs(self.H(u)), -R, R, abs_tol=1e-10)
        return {
            "(1+u^2)H": float(np.abs(w * H).max()),
            "(1+u^2)H'": float(np.abs(w * Hp).max()),
            "(1+u^2)H''": float(np.abs(w * Hpp).max()),
            "H_L1": h_abs,
            "H'": float(np.abs(Hp).max()),
            "H''": float(np.abs(Hpp).max()),
            "G'": float(np.abs(self.Gp(grid)).max()),
        }

    def describe(self):
        return {"coeffs": list(self.coeffs), "sigma": self.sigma, "name": self.name, "R": self.R}

    def to_json(self):
        return json.dumps(self.describe())

    @classmethod
    def from_dict(cls, doc):
        return cls(doc.get("coeffs", (1.0,)), doc.get("sigma", 0.35), doc.get("name"))


# ---------------------------------------------------------------------------
# field and functionals

def _check_window(eps, M, need_radius):
    half = eps * M / 2.0
    if need_radius >= half:
        raise WindowError(
            f"macroscopic radius {need_radius:.6g} does not fit inside half-window {half:.6g}"
            f" (eps={eps}, M={M})"
        )


def _site_positions(M, eps):
    lo = -M // 2
    return eps * np.arange(lo, lo + M, dtype=np.float64)


def _field_at(state, eps, mol, u_arr):
    """sqrt(eps) sum_x xi(x) d_N(u - eps*x) at an array of valid points.

    Only the band of sites within the mollifier support of each point is
    touched, so the cost per point is O(1/(eps*N)) rather than O(M).
    """
    M = state.M
    lo = -M // 2
    r = mol.support_radius
    width = int(math.floor(2.0 * r / eps)) + 3
    first = np.floor((u_arr - r) / eps).astype(np.int64) - lo
    idx = first[:, None] + np.arange(width)[None, :]
    valid = (idx >= 0) & (idx < M)
    idx_c = np.where(valid, idx, 0)
    du = u_arr[:, None] - eps * (idx_c + lo)
    contrib = mol.d_N(du) * state.spins()[idx_c]
    contrib[~valid] = 0.0
    return math.sqrt(eps) * contrib.sum(axis=1)


def field_convolution(state, eps, mol, u):
    """Mollified fluctuation field sqrt(eps) * sum_x xi(x) d_N(u - eps*x).

    u may be a scalar or array; every point must keep the mollifier support
    inside the torus window, else WindowError.
    """
    u_arr = np.atleast_1d(np.asarray(u, dtype=np.float64))
    _check_window(eps, state.M, float(np.abs(u_arr).max()) + mol.support_radius)
    vals = _field_at(state, eps, mol, u_arr)
    return vals if np.ndim(u) else float(vals[0])


def evaluate_F_N(state, eps, mol, G, abs_tol=1e-9):
    """F_N(Y, G) = -int G'(u) (Y*d_N)^2(u) du by adaptive quadrature.

    The integration range is the effective support of G'; outside it the
    integrand is below the quadrature tolerance by construction of R.
    """
    _check_window(eps, state.M, G.R + mol.support_radius)

    def integrand(u):
        fld = _field_at(state, eps, mol, u)
        return G.Gp(u) * fld * fld

    return -adaptive_quadrature(integrand, -G.R, G.R, abs_tol=abs_tol,
                                initial_panels=max(8, int(2 * G.R * mol.N) + 1))


def riemann_defect(mol, eps, M, u):
    """sum_{x in window} eps * d_N(u - eps x) - 1, vectorized over u.

    Every u must keep the mollifier support inside the window so the lattice
    sum is not edge-truncated.
    """
    u_arr = np.atleast_1d(np.asarray(u, dtype=np.float64))
    _check_window(eps, M, float(np.abs(u_arr).max()) + mol.support_radius)
    pos = _site_positions(M, eps)
    s = eps * (mol.d_N(u_arr[:, None] - pos[None, :])).sum(axis=1)
    return s - 1.0


# ---------------------------------------------------------------------------
# observable assembly

def build_V_G(G, eps, M):
    """Quadratic current observable: coefficient -G'(eps x) on the pair {x, x+1}."""
    lo = -M // 2
    V = ObservableSpec(M, 0.0, {}, {"role": "V_G", "eps": eps, "G": G.describe()})
    for x in range(lo, lo + M):
        c = -float(G.Gp(eps * x))
        if c != 0.0:
            V.add_pair(x, center_site(x + 1, M), c)
    return V


def _window_lag_bound(mol, eps):
    return int(math.ceil(2.0 / (eps * mol.N))) + 1


def build_V_Hi(G, eps, mol, M, i):
    """One of the four split pieces of F_N - V_G, as a degree-{0,2} observable.

    H = -G'.  Spin-square diagonal terms land in the constant part; cross
    terms accumulate into canonical pair coefficients.  All u-integrals of
    mollifier products come from the shared cached overlap rules, and lattice
    sums run over the torus window without wrap (matching the field's own
    truncation), so the four pieces sum to F_N - V_G exactly.
    """
    if i not in (1, 2, 3, 4):
        raise ValueError(f"split index must be in 1..4, got {i}")
    _check_window(eps, M, G.R + mol.support_radius)
    lo = -M // 2
    hi = lo + M - 1
    sites = np.arange(lo, lo + M)
    posH = np.asarray(G.H(eps * sites), dtype=np.float64)
    K = _window_lag_bound(mol, eps)
    V = ObservableSpec(M, 0.0, {}, {
        "role": f"V_H{i}", "eps": eps, "N": mol.N, "G": G.describe(),
    })

    if i == 1:
        for k in range(-K, K + 1):
            nodes, w = mol.overlap_rule(eps, k)
            if not nodes.size:
                continue
            xlo, xhi = max(lo, lo - k), min(hi, hi - k)
            if xlo > xhi:
                continue
            xs = np.arange(xlo, xhi + 1)
            hx = posH[xs - lo]
            # int [H(u) - H(eps x)] d_N(u - eps x) d_N(u - eps (x+k)) du
            jh = np.asarray(G.H(eps * xs[:, None] + nodes[None, :]), dtype=np.float64) @ w
            coeffs = eps * (jh - hx * w.sum())
            if k == 0:
                V.c0 += float(coeffs.sum())
            else:
                for x, c in zip(xs, coeffs):
                    if c != 0.0:
                        V.add_pair(int(x), int(x + k), float(c))
        return V

    O0 = mol.overlap(eps, 0)
    if i == 2:
        V.c0 += float(eps * O0 * posH.sum())
        for x in range(lo, lo + M):
            c = -eps * O0 * posH[x - lo]
            if c != 0.0:
                V.add_pair(x, center_site(x + 1, M), float(c))
        return V

    if i == 3:
        for k in range(-K, K + 1):
            if k == 0:
                continue
            Ok = mol.overlap(eps, k)
            if Ok == 0.0:
                continue
            xlo, xhi = max(lo, lo - k), min(hi, hi - k)
            for x in range(xlo, xhi + 1):
                c = eps * posH[x - lo] * Ok
                if c != 0.0:
                    V.add_pair(x, x + k, c)
                    V.add_pair(x, center_site(x + 1, M), -c)
        return V

    # i == 4: Riemann-sum defect of the mollifier mass, window-truncated
    for x in range(lo, lo + M):
        acc = 0.0
        for k in range(-K, K + 1):
            if lo <= x + k <= hi:
                acc += mol.overlap(eps, k)
        c = posH[x - lo] * (eps * acc - 1.0)
        if c != 0.0:
            V.add_pair(x, center_site(x + 1, M), float(c))
    return V


def build_v_split(G, eps, mol, M):
    """All four split pieces; their sum equals F_N - V_G on every state."""
    return [build_V_Hi(G, eps, mol, M, i) for i in (1, 2, 3, 4)]
