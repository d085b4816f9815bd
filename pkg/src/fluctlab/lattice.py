"""Periodic ring of occupation variables and spin observables.

Sites live in the centered window {-M/2, ..., M/2 - 1} of an even ring of
size M; all site arithmetic is mod M, reduced back into the window.  The
spin view of an occupation eta is xi(x) = 2*eta(x) - 1 in {-1, +1}, and
products xi_Lambda = prod_{x in Lambda} xi(x) over finite site sets form
an orthonormal basis of L2 of the density-1/2 Bernoulli measure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LatticeState",
    "ObservableSpec",
    "center_site",
    "walsh_index",
    "sample_bernoulli_half",
    "eval_walsh",
    "eval_observable",
]


def center_site(x, M):
    """Reduce an integer site mod M into the centered window."""
    return (x + M // 2) % M - M // 2


def _check_ring_size(M):
    if M % 2 != 0 or M < 4:
        raise ValueError(f"ring size must be even and >= 4, got {M}")


class LatticeState:
    """Occupation state of the ring.

    Internally a uint8 array indexed by i = x + M//2 for centered site x.
    """

    __slots__ = ("M", "occ")

    def __init__(self, occ):
        occ = np.asarray(occ, dtype=np.uint8)
        _check_ring_size(occ.size)
        if not np.all((occ == 0) | (occ == 1)):
            raise ValueError("occupation entries must be 0 or 1")
        self.M = occ.size
        self.occ = occ

    def index(self, x):
        """Internal array index of centered site x (mod M)."""
        return (x + self.M // 2) % self.M

    def eta(self, x):
        return int(self.occ[self.index(x)])

    def spin(self, x):
        """xi(x) = 2*eta(x) - 1 in {-1, +1}."""
        return 2 * int(self.occ[self.index(x)]) - 1

    def spins(self):
        """Full spin array ordered by centered site, as float64."""
        return 2.0 * self.occ.astype(np.float64) - 1.0

    def particle_count(self):
        return int(self.occ.sum())

    def copy(self):
        return LatticeState(self.occ.copy())

    def __eq__(self, other):
        return isinstance(other, LatticeState) and self.M == other.M and np.array_equal(self.occ, other.occ)

    def __repr__(self):
        bits = "".join(str(int(b)) for b in self.occ)
        return f"LatticeState(M={self.M}, occ={bits})"


def sample_bernoulli_half(M, rng):
    """Draw a state from the density-1/2 product measure.

    Deterministic given the generator state: site i is occupied iff the
    i-th draw of rng.integers(0, 2) is 1.
    """
    _check_ring_size(M)
    occ = rng.integers(0, 2, size=M).astype(np.uint8)
    return LatticeState(occ)


def walsh_index(sites, M):
    """Canonicalize a site set: sorted tuple, distinct, inside the window."""
    lam = tuple(sorted(int(x) for x in sites))
    if len(set(lam)) != len(lam):
        raise ValueError(f"duplicate sites in {lam}")
    lo, hi = -M // 2, M // 2 - 1
    for x in lam:
        if x < lo or x > hi:
            raise ValueError(f"site {x} outside window [{lo}, {hi}]")
    return lam


def eval_walsh(state, sites):
    """xi_Lambda(state) = product of spins over the site set (1 if empty)."""
    lam = walsh_index(sites, state.M)
    out = 1
    for x in lam:
        out *= state.spin(x)
    return out


def _canonical_pair(x, y, M):
    lo, hi = -M // 2, M // 2 - 1
    x, y = int(x), int(y)
    for s in (x, y):
        if s < lo or s > hi:
            raise ValueError(f"site {s} outside window [{lo}, {hi}]")
    if x == y:
        raise ValueError(f"pair sites must be distinct, got ({x}, {y})")
    return (x, y) if x < y else (y, x)


@dataclass
class ObservableSpec:
    """Observable of Walsh degree <= 2: c0 + sum over pairs c_xy * xi(x)xi(y).

    Pair keys are canonical (x < y, both in the centered window).  The
    metadata dict is free-form (eps, N, test-function id, ...) and is
    carried through JSON round trips.
    """

    M: int
    c0: float = 0.0
    pairs: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        _check_ring_size(self.M)
        canon = {}
        for (x, y), c in self.pairs.items():
            key = _canonical_pair(x, y, self.M)
            canon[key] = canon.get(key, 0.0) + c
        self.pairs = {k: v for k, v in canon.items() if v != 0.0}

    def add_pair(self, x, y, coeff):
        key = _canonical_pair(x, y, self.M)
        new = self.pairs.get(key, 0.0) + coeff
        if new == 0.0:
            self.pairs.pop(key, None)
        else:
            self.pairs[key] = new

    def degrees(self):
        degs = set()
        if self.c0 != 0.0:
            degs.add(0)
        if self.pairs:
            degs.add(2)
        return degs

    def centered(self):
        """Copy with the degree-0 part removed (mean-zero under nu_1/2)."""
        return ObservableSpec(self.M, 0.0, dict(self.pairs), dict(self.metadata))

    def scaled(self, a):
        return ObservableSpec(self.M, a * self.c0, {k: a * v for k, v in self.pairs.items()}, dict(self.metadata))

    def __add__(self, other):
        if other.M != self.M:
            raise ValueError("cannot add observables on different rings")
        out = ObservableSpec(self.M, self.c0 + other.c0, dict(self.pairs))
        for (x, y), c in other.pairs.items():
            out.add_pair(x, y, c)
        return out

    def evaluate(self, state):
        return eval_observable(state, self)

    def sup_bound(self):
        """Crude uniform bound |V| <= |c0| + sum |c_xy|."""
        return abs(self.c0) + sum(abs(c) for c in self.pairs.values())

    def to_json(self):
        doc = {
            "M": self.M,
            "c0": self.c0,
            "pairs": [[x, y, c] for (x, y), c in sorted(self.pairs.items())],
            "metadata": self.metadata,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        pairs = {(int(x), int(y)): float(c) for x, y, c in doc["pairs"]}
        return cls(int(doc["M"]), float(doc["c0"]), pairs, doc.get("metadata", {}))


def eval_observable(state, V):
    """c0 + sum of pair coefficients times spin products."""
    if V.M != state.M:
        raise ValueError(f"observable built for M={V.M}, state has M={state.M}")
    out = V.c0
    for (x, y), c in V.pairs.items():
        out += c * state.spin(x) * state.spin(y)
    return out


def v_sharp(M):
    """The basic quadratic fluctuation (eta(0)-1/2)(eta(1)-1/2) = xi(0)xi(1)/4."""
    return ObservableSpec(M, 0.0, {(0, 1): 0.25}, {"name": "v_sharp"})


def v_gradient(M):
    """Gradient-type contrast observable xi(0)xi(2) - xi(0)xi(1)."""
    return ObservableSpec(M, 0.0, {(0, 2): 1.0, (0, 1): -1.0}, {"name": "v_gradient"})
