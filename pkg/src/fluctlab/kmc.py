"""Event-driven simulation of the exclusion dynamics on the ring.

Jump structure: a particle at x hops to x+1 at rate 2p when x+1 is empty and
to x-1 at rate 2q when x-1 is empty, with p + q = 1 and asymmetry
gamma = p - q = gamma_tilde * sqrt(eps).  On a ring the number of movable
right edges equals the number of movable left edges (= k), so the total exit
rate is 2k and an event is: holding time Exp(2k), direction Bernoulli(p),
edge uniform in the chosen direction.

simulate_path_integrals is the readable single-path reference; batch_paths
in _kernels is the compiled many-replica driver with the identical random
stream contract, so the two can be compared draw for draw.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

from . import _kernels
from .lattice import LatticeState, eval_observable

__all__ = [
    "DynamicsParams",
    "TimeProfile",
    "RateTable",
    "ReplicaStream",
    "FrozenStateError",
    "build_rate_table",
    "step",
    "sample_stationary",
    "simulate_path_integrals",
    "run_batch",
    "two_point_function",
    "PathRecord",
    "BatchResult",
]


class FrozenStateError(RuntimeError):
    """Raised by step() when no particle can move (k = 0)."""


@dataclass(frozen=True)
class TimeProfile:
    """Deterministic damping a(s) = exp(-lam*s) applied to path integrands.

    lam = 0 is the constant profile; a(0) = 1 and a is non-increasing.
    """

    lam: float = 0.0

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValueError(f"profile rate must be >= 0, got {self.lam}")

    @property
    def kind(self):
        return "constant" if self.lam == 0.0 else "exponential"

    def a(self, s):
        return np.exp(-self.lam * np.asarray(s, dtype=np.float64))

    @classmethod
    def constant(cls):
        return cls(0.0)

    @classmethod
    def exponential(cls, lam):
        if lam <= 0.0:
            raise ValueError("exponential profile needs lam > 0")
        return cls(lam)


@dataclass(frozen=True)
class DynamicsParams:
    """Scaling parameter eps in (0, 1] and asymmetry strength gamma_tilde >= 0.

    Derived: p = (1 + gamma_tilde*sqrt(eps))/2, q = 1 - p,
    gamma = p - q = gamma_tilde*sqrt(eps).
    """

    eps: float
    gamma_tilde: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.eps <= 1.0:
            raise ValueError(f"eps must lie in (0, 1], got {self.eps}")
        if self.gamma_tilde < 0.0:
            raise ValueError(f"gamma_tilde must be >= 0, got {self.gamma_tilde}")
        if self.gamma > 1.0:
            raise ValueError(
                f"gamma_tilde*sqrt(eps) = {self.gamma} exceeds 1; jump rates would be negative"
            )

    @property
    def gamma(self):
        return self.gamma_tilde * sqrt(self.eps)

    @property
    def p(self):
        return (1.0 + self.gamma) / 2.0

    @property
    def q(self):
        return (1.0 - self.gamma) / 2.0

    @property
    def c(self):
        """Diffusive time-scale factor eps^-2."""
        return 1.0 / (self.eps * self.eps)


class ReplicaStream:
    """SplitMix64 stream for one replica; mirrors the compiled kernels."""

    __slots__ = ("state",)

    def __init__(self, master, replica=0):
        self.state = np.empty(1, np.uint64)
        self.state[0] = _kernels.replica_state(np.uint64(master), replica)

    def u64(self):
        return _kernels.rng_next(self.state)

    def u01(self):
        return _kernels.rng_u01(self.state)

    def exp1(self):
        return _kernels.rng_exp1(self.state)


def sample_stationary(M, stream):
    """Stationary (density 1/2 product) start with the kernel bit convention."""
    occ = np.empty(M, np.uint8)
    for i in range(M):
        occ[i] = np.uint8(stream.u64() >> np.uint64(63))
    return LatticeState(occ)


class RateTable:
    """Registry of movable directed edges with O(1) membership and swap-remove.

    Tails are internal indices 0..M-1; a right tail x means occ[x]=1 and
    occ[x+1]=0, a left tail x means occ[x]=1 and occ[x-1]=0 (mod M).
    """

    def __init__(self, state):
        M = state.M
        self.M = M
        occ = state.occ
        self.right = []
        self.left = []
        self.rpos = np.full(M, -1, np.int64)
        self.lpos = np.full(M, -1, np.int64)
        for x in range(M):
            if occ[x] == 1 and occ[(x + 1) % M] == 0:
                self.rpos[x] = len(self.right)
                self.right.append(x)
            if occ[x] == 1 and occ[(x - 1) % M] == 0:
                self.lpos[x] = len(self.left)
                self.left.append(x)

    @property
    def k(self):
        return len(self.right)

    def total_rate(self, params):
        """2p|right| + 2q|left| = 2k on a ring."""
        return 2.0 * params.p * len(self.right) + 2.0 * params.q * len(self.left)

    def _refresh(self, occ, lst, pos, z, step):
        M = self.M
        want = occ[z] == 1 and occ[(z + step) % M] == 0
        at = pos[z]
        if want and at < 0:
            pos[z] = len(lst)
            lst.append(z)
        elif not want and at >= 0:
            last = lst[-1]
            lst[at] = last
            pos[last] = at
            lst.pop()
            pos[z] = -1

    def apply_move(self, state, tail, step):
        """Exchange the spins at (tail, tail+step) and refresh affected edges.

        Refresh order matches the compiled kernel so both maintain the same
        list layout (duplicate candidates are harmless no-ops).
        """
        M = self.M
        occ = state.occ
        a = tail
        b = (tail + step) % M
        occ[a] = 0
        occ[b] = 1
        for z in ((a - 1) % M, a, (b - 1) % M, b):
            self._refresh(occ, self.right, self.rpos, z, 1)
        for z in ((a + 1) % M, a, (b + 1) % M, b):
            self._refresh(occ, self.left, self.lpos, z, -1)


def build_rate_table(state):
    return RateTable(state)


def step(state, table, params, stream):
    """One event: returns (holding time in microscopic units, (a, b) exchange).

    Mutates state and table.  Raises FrozenStateError when k = 0; the caller
    is then responsible for advancing the clock to its horizon.
    """
    k = table.k
    if k == 0:
        raise FrozenStateError("no movable edges")
    dt = stream.exp1() / (2.0 * k)
    go_right = stream.u01() < params.p
    u = stream.u01()
    if go_right:
        idx = min(int(u * k), k - 1)
        a = table.right[idx]
        s = 1
    else:
        idx = min(int(u * k), k - 1)
        a = table.left[idx]
        s = -1
    b = (a + s) % table.M
    table.apply_move(state, a, s)
    return dt, (a, b)


@dataclass
class PathRecord:
    """Exact path functionals of one trajectory over macroscopic time [0, T]."""

    T: float
    times: np.ndarray          # requested macroscopic times
    A: np.ndarray              # (J, len(times)) running integrals at the requested times
    A_final: np.ndarray        # (J,) integral over [0, T]
    I: np.ndarray              # (J,) int_0^T A(t)^2 dt
    events: int
    frozen: bool
    final_state: LatticeState
    event_times: np.ndarray = None    # microscopic event times, strictly increasing


def simulate_path_integrals(state0, params, observables, T, profile, stream, times=None):
    """Single-path reference integrator.

    Observable values are re-evaluated from scratch on every holding interval,
    and the per-interval contributions to A_j(t) = int_0^t a(s) V_j ds and to
    int_0^T A_j(t)^2 dt use the same closed forms as the compiled kernel.
    """
    if T <= 0:
        raise ValueError(f"horizon must be positive, got {T}")
    lam = profile.lam
    state = state0.copy()
    table = RateTable(state)
    two_c = 2.0 / (params.eps * params.eps)
    times = np.asarray([] if times is None else times, dtype=np.float64)
    if times.size and (np.any(np.diff(times) < 0) or times[-1] > T or times[0] < 0):
        raise ValueError("requested times must be sorted inside [0, T]")
    J = len(observables)
    A = np.zeros(J)
    I = np.zeros(J)
    A_at = np.zeros((J, times.size))
    v = np.array([eval_observable(state, V) for V in observables], dtype=np.float64)

    s = 0.0
    ti = 0
    frozen = False
    event_times = []
    while True:
        k = table.k
        if k == 0:
            s1 = T
        else:
            s1 = s + stream.exp1() / (k * two_c)
        send = min(s1, T)
        while ti < times.size and times[ti] <= send:
            for j in range(J):
                A_at[j, ti] = _kernels.segment_value_at(A[j], v[j], s, times[ti], lam)
            ti += 1
        for j in range(J):
            A[j], dI = _kernels.segment_integrals(A[j], v[j], s, send, lam)
            I[j] += dI
        if k == 0:
            frozen = True
            break
        if s1 >= T:
            break
        s = s1
        go_right = stream.u01() < params.p
        u = stream.u01()
        if go_right:
            idx = min(int(u * k), k - 1)
            a, dstep = table.right[idx], 1
        else:
            idx = min(int(u * k), k - 1)
            a, dstep = table.left[idx], -1
        table.apply_move(state, a, dstep)
        event_times.append(s / (params.eps * params.eps))
        v = np.array([eval_observable(state, V) for V in observables], dtype=np.float64)

    return PathRecord(T, times, A_at, A, I, len(event_times), frozen, state,
                      np.asarray(event_times))


# ---------------------------------------------------------------------------
# batched driver

@dataclass
class BatchResult:
    I: np.ndarray              # (R, J)
    A_final: np.ndarray        # (R, J)
    A_times: np.ndarray        # (R, J, K)
    times: np.ndarray
    events: np.ndarray         # (R,)
    frozen: np.ndarray         # (R,) 0/1
    init_occ: np.ndarray       # (R, M) uint8
    fin_occ: np.ndarray        # (R, M) uint8

    def frozen_count(self):
        return int(self.frozen.sum())


def compile_observables(observables, M):
    """Flatten degree-<=2 observables into the kernel's array layout.

    Besides the raw pair list (for the initial evaluation), builds the
    swap-difference kernel: for every site a and both exchange directions,
    the coefficients of delta V_j / 2 against the spins left untouched by
    the swap (a, b): coef(z) = c_j{b,z} - c_j{a,z} for z outside {a, b}.
    """
    half = M // 2
    c0s = np.array([V.c0 for V in observables], dtype=np.float64)
    px, py, pc, pobs = [], [], [], []
    site_maps = []
    for j, V in enumerate(observables):
        if V.M != M:
            raise ValueError(f"observable {j} built for M={V.M}, run uses M={M}")
        smap = [dict() for _ in range(M)]
        for (x, y), cxy in V.pairs.items():
            a, b = (x + half) % M, (y + half) % M
            px.append(a)
            py.append(b)
            pc.append(cxy)
            pobs.append(j)
            smap[a][b] = smap[a].get(b, 0.0) + cxy
            smap[b][a] = smap[b].get(a, 0.0) + cxy
        site_maps.append(smap)

    rows = [[] for _ in range(2 * M)]
    for a in range(M):
        for d, step in ((0, 1), (1, -1)):
            b = (a + step) % M
            row = rows[2 * a + d]
            for j, smap in enumerate(site_maps):
                keys = set(smap[a]) | set(smap[b])
                keys.discard(a)
                keys.discard(b)
                for z in sorted(keys):
                    coef = smap[b].get(z, 0.0) - smap[a].get(z, 0.0)
                    if coef != 0.0:
                        row.append((z, coef, j))
    diff_ptr = np.zeros(2 * M + 1, np.int64)
    for i in range(2 * M):
        diff_ptr[i + 1] = diff_ptr[i] + len(rows[i])
    total = int(diff_ptr[-1])
    diff_site = np.empty(total, np.int64)
    diff_coef = np.empty(total, np.float64)
    diff_obs = np.empty(total, np.int64)
    pos = 0
    for row in rows:
        for (z, coef, j) in row:
            diff_site[pos] = z
            diff_coef[pos] = coef
            diff_obs[pos] = j
            pos += 1
    return (
        c0s,
        np.asarray(px, np.int64), np.asarray(py, np.int64),
        np.asarray(pc, np.float64), np.asarray(pobs, np.int64),
        diff_ptr, diff_site, diff_coef, diff_obs,
    )


def run_batch(M, params, observables, T, profile, replicas, master_seed, times=None):
    """Run `replicas` stationary-start paths with the compiled kernel."""
    if T <= 0:
        raise ValueError(f"horizon must be positive, got {T}")
    times = np.asarray([] if times is None else times, dtype=np.float64)
    if times.size and (np.any(np.diff(times) < 0) or times[-1] > T or times[0] < 0):
        raise ValueError("requested times must be sorted inside [0, T]")
    (c0s, px, py, pc, pobs, diff_ptr, diff_site, diff_coef, diff_obs) = compile_observables(observables, M)
    J = len(observables)
    R = int(replicas)
    if R < 1:
        raise ValueError("replica count must be >= 1")
    I = np.zeros((R, J))
    AT = np.zeros((R, J))
    Atimes = np.zeros((R, J, times.size))
    nevents = np.zeros(R, np.int64)
    frozen = np.zeros(R, np.int64)
    init_occ = np.zeros((R, M), np.uint8)
    fin_occ = np.zeros((R, M), np.uint8)
    _kernels.batch_paths(
        M, params.p, 2.0 / (params.eps * params.eps), float(T), float(profile.lam),
        c0s, px, py, pc, pobs, diff_ptr, diff_site, diff_coef, diff_obs,
        times, np.uint64(master_seed), R,
        I, AT, Atimes, nevents, frozen, init_occ, fin_occ,
    )
    return BatchResult(I, AT, Atimes, times, nevents, frozen, init_occ, fin_occ)


def two_point_function(params, x, t, M, replicas, master_seed):
    """Stationary-start estimate of E[xi_0(0) * xi_t(x)] with standard error.

    t is macroscopic (the path runs to microscopic time t/eps^2).
    """
    if t == 0.0:
        # no dynamics: product-measure moment, exact
        return (1.0, 0.0) if x % M == 0 else (0.0, 0.0)
    res = run_batch(M, params, [], t, TimeProfile.constant(), replicas, master_seed)
    half = M // 2
    s0 = 2.0 * res.init_occ[:, half].astype(np.float64) - 1.0
    sx = 2.0 * res.fin_occ[:, (x + half) % M].astype(np.float64) - 1.0
    prod = s0 * sx
    mean = float(np.mean(prod))
    se = float(np.std(prod, ddof=1) / np.sqrt(len(prod))) if len(prod) > 1 else 0.0
    return mean, se
