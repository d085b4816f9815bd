"""Inequality and trend suites: Monte Carlo left-hand sides against
resolvent-form right-hand sides.

Everything tested here is of the shape

    int_0^T dt  E[ ( int_0^t a(s) V(xi_{s/eps^2}) ds )^2 ]  <=  rhs(V)

with rhs a resolvent quadratic form scaled by explicit constants.  Left-hand
sides come from the exact path integrals of the simulator (mean over replicas,
3-standard-error pass rule) or, at small M, from a dense spectral oracle.
beta defaults to 1 everywhere; it stays configurable for robustness sweeps.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .kmc import DynamicsParams, TimeProfile, run_batch
from .mollifier import TestFunctionSpec, adaptive_quadrature, build_v_split, make_mollifier
from .resolvent import dense_resolvent_full, quadratic_form_sym_resolvent
from .walsh import config_generator_matrix, observable_config_vector

__all__ = [
    "TimeProfile",
    "ExperimentConfig",
    "InequalityReport",
    "default_test_function",
    "mc_time_avg_square",
    "SemigroupCorrelation",
    "oracle_time_avg_square",
    "rhs_lemma1",
    "remark2i_rhs",
    "check_lemma1",
    "check_remark6iii",
    "scan_key_result",
    "v4_bound",
    "check_weak_replacement",
    "fit_loglog",
]

_ORACLE_MAX_M = 8


def default_test_function():
    """Gaussian-family test function narrow enough for the default window."""
    return TestFunctionSpec(coeffs=(1.0,), sigma=0.35, name="gauss035")


@dataclass
class ExperimentConfig:
    """Reproducibility unit: dynamics, horizon, lattice, and sampling sizes."""

    eps: float
    gamma_tilde: float = 1.0
    T: float = 1.0
    beta: float = 1.0
    M: int = 0              # 0: derive from L_macro
    N: int = 8
    replicas: int = 1000
    seed: int = 2024
    L_macro: float = 8.0
    lam: float = 0.0
    observable: str = "v_sharp"

    def __post_init__(self):
        if self.T <= 0 or self.beta <= 0:
            raise ValueError("T and beta must be positive and finite")
        if self.M == 0:
            m = int(math.ceil(self.L_macro / self.eps))
            self.M = m + (m % 2)
        self.params  # validates eps / gamma_tilde ranges

    @property
    def params(self):
        return DynamicsParams(eps=self.eps, gamma_tilde=self.gamma_tilde)

    @property
    def c(self):
        """Diffusive time scaling, c * eps^2 = 1."""
        return 1.0 / (self.eps * self.eps)

    @property
    def profile(self):
        return TimeProfile(self.lam)

    def to_dict(self):
        return asdict(self)


@dataclass
class InequalityReport:
    """One-sided Monte Carlo inequality check: pass iff lhs - 3*se <= rhs."""

    name: str
    lhs: float
    se: float
    rhs: float
    extras: dict = field(default_factory=dict)

    @property
    def slack(self):
        return self.rhs - self.lhs

    @property
    def passed(self):
        return self.lhs - 3.0 * self.se <= self.rhs

    def row(self):
        out = {"name": self.name, "lhs": self.lhs, "se": self.se,
               "rhs": self.rhs, "slack": self.slack, "pass": int(self.passed)}
        out.update(self.extras)
        return out


def mc_time_avg_square(V, cfg, profile=None):
    """Replica mean and standard error of int_0^T (int_0^t a(s) V ds)^2 dt."""
    profile = cfg.profile if profile is None else profile
    res = run_batch(cfg.M, cfg.params, [V], cfg.T, profile, cfg.replicas, cfg.seed)
    I = res.I[:, 0]
    mean = float(np.mean(I))
    se = float(np.std(I, ddof=1) / math.sqrt(I.size)) if I.size > 1 else 0.0
    extras = {"replicas": I.size, "frozen": res.frozen_count(),
              "events": int(res.events.sum())}
    return mean, se, extras


class SemigroupCorrelation:
    """Stationary two-time correlation f(tau) = (V | e^{tau L} V) at small M.

    Primary path: eigendecomposition of the dense generator.  If the
    eigenbasis fails to reconstruct the generator to near machine precision,
    falls back to Pade exponentials per evaluation.
    """

    def __init__(self, V, M, params):
        if M > _ORACLE_MAX_M:
            raise ValueError(f"dense semigroup oracle limited to M <= {_ORACLE_MAX_M}")
        self.Q = config_generator_matrix(M, params)
        self.vec = observable_config_vector(V, M)
        self.size = self.Q.shape[0]
        self._eig_ok = False
        if params.gamma == 0.0:
            evals, P = np.linalg.eigh(self.Q)
            left = self.vec @ P
            self.weights = left * left / self.size
            self.evals = evals
            self._eig_ok = True
        else:
            evals, P = np.linalg.eig(self.Q)
            try:
                Pinv = np.linalg.inv(P)
                recon = (P * evals) @ Pinv
                if np.abs(recon - self.Q).max() <= 1e-8 * max(1.0, np.abs(self.Q).max()):
                    self.weights = (self.vec @ P) * (Pinv @ self.vec) / self.size
                    self.evals = evals
                    self._eig_ok = True
            except np.linalg.LinAlgError:
                pass

    def __call__(self, tau):
        tau = np.atleast_1d(np.asarray(tau, dtype=np.float64))
        if self._eig_ok:
            out = np.real(np.exp(np.outer(tau, self.evals)) @ self.weights)
        else:
            out = np.array([
                float(self.vec @ (scipy.linalg.expm(t * self.Q) @ self.vec)) / self.size
                for t in tau
            ])
        return out

    def f_expm(self, tau):
        """Independent evaluation through the matrix exponential."""
        return float(self.vec @ (scipy.linalg.expm(tau * self.Q) @ self.vec)) / self.size


def _time_kernel(w, T, lam):
    """Weight K(w) with LHS = int_0^T K(w) f(c w) dw (stationarity reduction)."""
    u = T - w
    if lam == 0.0:
        return u * u
    return np.exp(-lam * w) * (u - (1.0 - np.exp(-2.0 * lam * u)) / (2.0 * lam)) / lam


def oracle_time_avg_square(V, cfg, profile=None, abs_tol=1e-8):
    """Exact (to quadrature) value of the Monte Carlo left-hand side at M <= 8."""
    profile = cfg.profile if profile is None else profile
    corr = SemigroupCorrelation(V, cfg.M, cfg.params)
    c = cfg.c
    lam = profile.lam

    def integrand(w):
        return _time_kernel(w, cfg.T, lam) * corr(c * w)

    return adaptive_quadrature(integrand, 0.0, cfg.T, abs_tol=abs_tol,
                               initial_panels=64)


def rhs_lemma1(V, cfg, profile=None):
    """Resolvent bound for the separable profile a(s) V(eta).

    Closed-form reduction of the space-time form:
    (2 e^{beta T} / (beta c^2)) * [c / (beta + 2 lam)]
        * (V | ((beta + lam)/c - L)^{-1} V).
    """
    profile = cfg.profile if profile is None else profile
    beta, c, lam = cfg.beta, cfg.c, profile.lam
    mu = (beta + lam) / c
    form = dense_resolvent_full(V, mu, cfg.M, cfg.params, which="L")
    return (2.0 * math.exp(beta * cfg.T) / (beta * c * c)) * (c / (beta + 2.0 * lam)) * form


def remark2i_rhs(V, cfg):
    """Time-independent special case (2 e^{beta T} / beta^2 c)(V | G_{beta/c} V)."""
    beta, c = cfg.beta, cfg.c
    form = dense_resolvent_full(V, beta / c, cfg.M, cfg.params, which="L")
    return (2.0 * math.exp(beta * cfg.T) / (beta * beta * c)) * form


def check_lemma1(V, cfg, profile=None, method="mc"):
    """Pass iff lhs - 3*se <= rhs for the time-scaled resolvent bound."""
    profile = cfg.profile if profile is None else profile
    rhs = rhs_lemma1(V, cfg, profile)
    if method == "oracle":
        lhs, se, extras = oracle_time_avg_square(V, cfg, profile), 0.0, {"method": "oracle"}
    elif method == "mc":
        lhs, se, extras = mc_time_avg_square(V, cfg, profile)
        extras["method"] = "mc"
    else:
        raise ValueError(f"method must be 'mc' or 'oracle', got {method!r}")
    extras.update({"beta": cfg.beta, "lam": profile.lam, "M": cfg.M,
                   "gamma_tilde": cfg.gamma_tilde, "eps": cfg.eps})
    return InequalityReport("lemma1", lhs, se, rhs, extras)


def check_remark6iii(V, cfg):
    """Symmetric-resolvent bound for time-independent V at production scale.

    rhs = (2 e^{beta T} / beta^2 c) (V | (beta/c - Ssym)^{-1} V); the form is
    solved on the degree-2 sector, so it scales to thousands of sites.
    """
    if cfg.lam != 0.0:
        raise ValueError("the time-independent bound needs the constant profile")
    beta, c = cfg.beta, cfg.c
    rep = quadratic_form_sym_resolvent(V, beta / c, cfg.M)
    rhs = (2.0 * math.exp(beta * cfg.T) / (beta * beta * c)) * rep.value
    lhs, se, extras = mc_time_avg_square(V, cfg, TimeProfile.constant())
    extras.update({"beta": cfg.beta, "M": cfg.M, "gamma_tilde": cfg.gamma_tilde,
                   "eps": cfg.eps, "cg_iterations": rep.iterations,
                   "cg_residual": rep.relative_residual})
    return InequalityReport("remark6iii", lhs, se, rhs, extras)


def fit_loglog(xs, ys):
    """Least-squares slope of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    return float(np.polyfit(lx, ly, 1)[0])


def scan_key_result(G, i, eps_grid, N_grid, T=1.0, L_macro=8.0, tol=1e-10):
    """Symmetric-resolvent bound R(eps, N, i) = 2 e^T eps^2
    (V^{H,i} | (eps^2 - Ssym)^{-1} V^{H,i}) over a grid, beta = 1.

    Returns (rows, slopes) where slopes holds the fitted log-log exponent in
    N at each fixed eps and in eps at each fixed N.
    """
    if i not in (1, 2, 3):
        raise ValueError("resolvent scan covers the split pieces i in {1, 2, 3}")
    from .mollifier import build_V_Hi

    rows = []
    for eps in eps_grid:
        m = int(math.ceil(L_macro / eps))
        M = m + (m % 2)
        for N in N_grid:
            mol = make_mollifier(N)
            V = build_V_Hi(G, eps, mol, M, i)
            rep = quadratic_form_sym_resolvent(V, eps * eps, M, tol=tol)
            R = 2.0 * math.exp(T) * eps * eps * rep.value
            rows.append({"i": i, "eps": eps, "N": N, "M": M, "value": R,
                         "iterations": rep.iterations, "residual": rep.relative_residual})
    slopes = {}
    for eps in eps_grid:
        sub = [r for r in rows if r["eps"] == eps]
        if len(sub) >= 2:
            slopes[f"slope_N@eps={eps:g}"] = fit_loglog([r["N"] for r in sub],
                                                        [r["value"] for r in sub])
    for N in N_grid:
        sub = [r for r in rows if r["N"] == N]
        if len(sub) >= 2:
            slopes[f"slope_eps@N={N}"] = fit_loglog([r["eps"] for r in sub],
                                                    [r["value"] for r in sub])
    return rows, slopes


def v4_bound(G, mol, eps, T):
    """Analytic bound for the fourth split piece:
    eps^2 N^4 ||d''||^2 ||H||_1^2 * T^3 / 3 (the pathwise bound integrated in t)."""
    return eps * eps * mol.N ** 4 * mol.d2sup ** 2 * G.norms["H_L1"] ** 2 * T ** 3 / 3.0


def check_weak_replacement(G, grid, gamma_tilde=1.0, T=1.0, replicas=1000,
                           seed=2024, L_macro=8.0):
    """Time-averaged replacement statistic across an (N, eps) grid.

    For each grid point the integrand F_N(Y_s, G) - V_G(xi) is represented
    exactly by the sum of the four split observables, so the statistic is the
    plain mc_time_avg_square of one combined degree-{0,2} observable.
    """
    rows = []
    for (N, eps) in grid:
        mol = make_mollifier(N)
        m = int(math.ceil(L_macro / eps))
        M = m + (m % 2)
        pieces = build_v_split(G, eps, mol, M)
        W = pieces[0] + pieces[1] + pieces[2] + pieces[3]
        cfg = ExperimentConfig(eps=eps, gamma_tilde=gamma_tilde, T=T, M=M, N=N,
                               replicas=replicas, seed=seed, L_macro=L_macro)
        stat, se, extras = mc_time_avg_square(W, cfg, TimeProfile.constant())
        rows.append({"N": N, "eps": eps, "M": M, "stat": stat, "se": se,
                     "replicas": extras["replicas"], "frozen": extras["frozen"],
                     "events": extras["events"]})
    return rows
