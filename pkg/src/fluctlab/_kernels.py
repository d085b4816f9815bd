"""Compiled event-loop kernels for the exclusion dynamics.

RNG: SplitMix64, a counter-based splittable stream.  Replica i of a run with
master seed m uses the stream started at mix64(m + (i+1)*GOLDEN); draw order
per replica is fixed (M occupation bits, then per event: holding time,
direction, edge index), so results are reproducible for a fixed master seed
and replica count regardless of thread count.

Time accounting is macroscopic throughout: an event clock with total rate
k * two_c where k is the mover count and two_c = 2 / eps^2.  Path integrals
of observables are accumulated in closed form on each holding interval, so
they carry no time-discretization error.
"""

import numpy as np
from numba import njit, prange

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def rng_next(st):
    st[0] = st[0] + GOLDEN
    return mix64(st[0])


@njit(cache=True, inline="always")
def rng_u01(st):
    """Uniform in [0, 1)."""
    return (rng_next(st) >> np.uint64(11)) * _INV53


@njit(cache=True, inline="always")
def rng_exp1(st):
    """Standard exponential; uses a (0, 1] uniform so log never sees 0."""
    return -np.log(((rng_next(st) >> np.uint64(11)) + np.uint64(1)) * _INV53)


@njit(cache=True)
def replica_state(master, replica):
    return mix64(np.uint64(master) + np.uint64(replica + 1) * GOLDEN)


@njit(cache=True, inline="always")
def segment_integrals(A0, v, s0, s1, lam):
    """Advance A(t) = A0 + int_{s0}^t e^{-lam s} v ds across [s0, s1].

    Returns (A at s1, int_{s0}^{s1} A(t)^2 dt), both in closed form.
    """
    d = s1 - s0
    if lam == 0.0:
        dI = d * (A0 * A0 + A0 * v * d + v * v * d * d / 3.0)
        return A0 + v * d, dI
    E0 = np.exp(-lam * s0)
    E1 = np.exp(-lam * s1)
    P = A0 + v * E0 / lam
    Q = v / lam
    dI = P * P * d - 2.0 * P * Q * (E0 - E1) / lam + Q * Q * (E0 * E0 - E1 * E1) / (2.0 * lam)
    return A0 + v * (E0 - E1) / lam, dI


@njit(cache=True, inline="always")
def segment_value_at(A0, v, s0, t, lam):
    """A(t) inside the holding interval starting at s0 with constant v."""
    if lam == 0.0:
        return A0 + v * (t - s0)
    return A0 + v * (np.exp(-lam * s0) - np.exp(-lam * t)) / lam


@njit(cache=True, inline="always")
def _update_edge(occ, lst, pos, n, z, M, step):
    """Re-derive membership of tail z in the mover list for direction step."""
    head = z + step
    if head >= M:
        head -= M
    elif head < 0:
        head += M
    want = occ[z] == 1 and occ[head] == 0
    at = pos[z]
    if want and at < 0:
        lst[n] = z
        pos[z] = n
        n += 1
    elif (not want) and at >= 0:
        last = lst[n - 1]
        lst[at] = last
        pos[last] = at
        pos[z] = -1
        n -= 1
    return n


@njit(cache=True, parallel=True)
def batch_paths(M, p, two_c, T, lam, c0s,
                pair_x, pair_y, pair_c, pair_obs,
                diff_ptr, diff_site, diff_coef, diff_obs,
                times, master, R,
                I_out, AT_out, Atimes_out, nevents, frozen, init_occ, fin_occ):
    """Run R independent replicas from stationary starts; fill per-replica rows.

    For each observable j: AT_out[r, j] = int_0^T a(s) V_j ds and
    I_out[r, j] = int_0^T (int_0^t a(s) V_j ds)^2 dt, both exact along the
    path; Atimes_out[r, j, k] samples the running integral at times[k].

    diff_* is the swap-difference kernel in CSR form: row 2*a holds the
    change of each observable under the exchange (a, a+1), row 2*a+1 under
    (a, a-1), as coefficients against the untouched spins:
    delta V_j = 2 * sum_z coef * xi(z).
    """
    J = c0s.size
    K = times.size
    for r in prange(R):
        st = np.empty(1, np.uint64)
        st[0] = replica_state(master, r)
        occ = np.empty(M, np.uint8)
        xi = np.empty(M, np.float64)
        for i in range(M):
            occ[i] = np.uint8(rng_next(st) >> np.uint64(63))
            xi[i] = 2.0 * occ[i] - 1.0
        init_occ[r, :] = occ

        right = np.empty(M, np.int32)
        rpos = np.full(M, -1, np.int32)
        left = np.empty(M, np.int32)
        lpos = np.full(M, -1, np.int32)
        nr = 0
        nl = 0
        for x in range(M):
            xr = x + 1 if x + 1 < M else 0
            xl = x - 1 if x > 0 else M - 1
            if occ[x] == 1 and occ[xr] == 0:
                right[nr] = x
                rpos[x] = nr
                nr += 1
            if occ[x] == 1 and occ[xl] == 0:
                left[nl] = x
                lpos[x] = nl
                nl += 1

        v = np.empty(J)
        A = np.zeros(J)
        I = np.zeros(J)
        dv = np.zeros(J)
        for j in range(J):
            v[j] = c0s[j]
        for t in range(pair_x.size):
            v[pair_obs[t]] += pair_c[t] * xi[pair_x[t]] * xi[pair_y[t]]

        s = 0.0
        ti = 0
        nev = 0
        froze = False
        while True:
            k = nr
            if k == 0:
                s1 = T
            else:
                s1 = s + rng_exp1(st) / (k * two_c)
            send = s1 if s1 < T else T
            while ti < K and times[ti] <= send:
                for j in range(J):
                    Atimes_out[r, j, ti] = segment_value_at(A[j], v[j], s, times[ti], lam)
                ti += 1
            for j in range(J):
                A[j], dI = segment_integrals(A[j], v[j], s, send, lam)
                I[j] += dI
            if k == 0:
                froze = True
                break
            if s1 >= T:
                break
            s = s1

            go_right = rng_u01(st) < p
            u = rng_u01(st)
            if go_right:
                idx = int(u * nr)
                if idx >= nr:
                    idx = nr - 1
                a = right[idx]
                b = a + 1 if a + 1 < M else 0
                row = 2 * a
            else:
                idx = int(u * nl)
                if idx >= nl:
                    idx = nl - 1
                a = left[idx]
                b = a - 1 if a > 0 else M - 1
                row = 2 * a + 1

            if J == 1:
                acc = 0.0
                for e in range(diff_ptr[row], diff_ptr[row + 1]):
                    acc += diff_coef[e] * xi[diff_site[e]]
                v[0] += 2.0 * acc
            elif J > 1:
                for e in range(diff_ptr[row], diff_ptr[row + 1]):
                    dv[diff_obs[e]] += diff_coef[e] * xi[diff_site[e]]
                for j in range(J):
                    v[j] += 2.0 * dv[j]
                    dv[j] = 0.0

            occ[a] = 0
            occ[b] = 1
            xi[a] = -1.0
            xi[b] = 1.0
            nev += 1

            am1 = a - 1 if a > 0 else M - 1
            bm1 = b - 1 if b > 0 else M - 1
            nr = _update_edge(occ, right, rpos, nr, am1, M, 1)
            nr = _update_edge(occ, right, rpos, nr, a, M, 1)
            nr = _update_edge(occ, right, rpos, nr, bm1, M, 1)
            nr = _update_edge(occ, right, rpos, nr, b, M, 1)
            ap1 = a + 1 if a + 1 < M else 0
            bp1 = b + 1 if b + 1 < M else 0
            nl = _update_edge(occ, left, lpos, nl, ap1, M, -1)
            nl = _update_edge(occ, left, lpos, nl, a, M, -1)
            nl = _update_edge(occ, left, lpos, nl, bp1, M, -1)
            nl = _update_edge(occ, left, lpos, nl, b, M, -1)

        for j in range(J):
            I_out[r, j] = I[j]
            AT_out[r, j] = A[j]
        nevents[r] = nev
        frozen[r] = 1 if froze else 0
        fin_occ[r, :] = occ
