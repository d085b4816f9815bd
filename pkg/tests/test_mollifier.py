import math

import numpy as np
import pytest
import scipy.integrate

from fluctlab.lattice import LatticeState, eval_observable, sample_bernoulli_half
from fluctlab.mollifier import (
    MollifierSpec,
    QuadratureError,
    TestFunctionSpec,
    WindowError,
    adaptive_quadrature,
    build_V_G,
    build_V_Hi,
    build_v_split,
    evaluate_F_N,
    field_convolution,
    make_mollifier,
    riemann_defect,
)

G_DEFAULT = TestFunctionSpec()


@pytest.fixture(scope="module")
def mol4():
    return make_mollifier(4)


def test_adaptive_quadrature_basic():
    assert adaptive_quadrature(np.sin, 0.0, np.pi, abs_tol=1e-12) == pytest.approx(2.0, abs=1e-11)
    assert adaptive_quadrature(lambda u: u * 0.0, 1.0, 0.0) == 0.0
    with pytest.raises(QuadratureError):
        adaptive_quadrature(lambda u: np.abs(u) ** -0.9, -1.0, 1.0, abs_tol=1e-13, max_panels=50)


@pytest.mark.parametrize("N", [1, 4, 16])
def test_mollifier_mass_and_l2(N):
    mol = make_mollifier(N)
    r = mol.support_radius
    mass = adaptive_quadrature(mol.d_N, -2 * r, 2 * r, abs_tol=1e-10)
    assert mass == pytest.approx(1.0, abs=1e-10)
    l2 = adaptive_quadrature(lambda u: mol.d_N(u) ** 2, -2 * r, 2 * r, abs_tol=1e-10)
    assert l2 == pytest.approx(mol.d_N_l2sq(), abs=1e-9)
    assert mol.d_N_l2sq() == pytest.approx(N * mol.l2sq)


def test_mollifier_support_and_evenness(mol4):
    u = np.array([0.26, 0.5, -0.3, 1.0])
    assert np.all(mol4.d_N(u) == 0.0)                     # beyond 1/N = 1/4
    assert mol4.d_N(0.25) == 0.0
    grid = np.linspace(-0.24, 0.24, 101)
    assert np.allclose(mol4.d_N(grid), mol4.d_N(-grid))
    odd = adaptive_quadrature(lambda u: u * mol4.d_N(u) ** 2, -0.3, 0.3, abs_tol=1e-13)
    assert abs(odd) <= 1e-12


def test_mollifier_constants(mol4):
    # normalization of the base bump: integral over (-1,1) of exp(-1/(1-u^2))
    raw_mass, _ = scipy.integrate.quad(lambda t: math.exp(-1.0 / (1.0 - t * t)) if abs(t) < 1 else 0.0, -1, 1)
    assert mol4.norm_const == pytest.approx(1.0 / raw_mass, rel=1e-9)
    assert mol4.sup == pytest.approx(mol4.norm_const * math.exp(-1.0))
    assert mol4.d2sup > 0


def test_overlap_rule_against_scipy(mol4):
    eps = 1.0 / 32.0
    for k in (0, 1, 7, 13, 16):
        direct, _ = scipy.integrate.quad(
            lambda u: mol4.d_N(u) * mol4.d_N(u - eps * k), -0.3, 0.3 + eps * k, limit=200)
        assert mol4.overlap(eps, k) == pytest.approx(direct, abs=5e-11)
    assert mol4.overlap(eps, 16) == 0.0                   # disjoint supports
    assert mol4.overlap(eps, -3) == pytest.approx(mol4.overlap(eps, 3), rel=1e-12)
    assert mol4.overlap(eps, 0) == pytest.approx(mol4.d_N_l2sq(), abs=1e-10)


def test_make_mollifier_validation():
    with pytest.raises(ValueError):
        make_mollifier(0)
    with pytest.raises(ValueError):
        make_mollifier(2.5)


def test_test_function_properties():
    G = G_DEFAULT
    # H = -G' integrates to zero (fundamental theorem + decay)
    total = adaptive_quadrature(G.H, -G.R, G.R, abs_tol=1e-12)
    assert abs(total) <= 1e-11
    assert G.norms["H_L1"] > 0
    assert G.norms["(1+u^2)H''"] >= G.norms["H''"] * 0.0
    # derivatives consistent with finite differences
    h = 1e-6
    for u in (0.0, 0.4, -1.1):
        fd = (G.G(u + h) - G.G(u - h)) / (2 * h)
        assert G.Gp(u) == pytest.approx(fd, abs=1e-7)
        fd = (G.H(u + h) - G.H(u - h)) / (2 * h)
        assert G.Hp(u) == pytest.approx(fd, abs=1e-6)
    # effective radius: weighted envelope below 1e-14 of peak outside R
    assert 2.0 < G.R < 6.0


def test_zero_test_function():
    Z = TestFunctionSpec(coeffs=(0.0,))
    assert Z.norms["H_L1"] == 0.0
    st = LatticeState([1, 0] * 64)
    assert evaluate_F_N(st, 1.0 / 16.0, make_mollifier(4), Z) == 0.0
    V = build_V_Hi(Z, 1.0 / 16.0, make_mollifier(4), 128, 1)
    assert V.c0 == 0.0 and V.pairs == {}
    VG = build_V_G(Z, 1.0 / 16.0, 128)
    assert VG.pairs == {}


def test_field_convolution_window_and_values(mol4, rng):
    eps, M = 1.0 / 16.0, 128
    st = sample_bernoulli_half(M, rng)
    with pytest.raises(WindowError):
        field_convolution(st, eps, mol4, 4.0)     # |u| + 1/N >= eps*M/2 = 4
    u = np.linspace(-3.5, 3.5, 257)
    vals = field_convolution(st, eps, mol4, u)
    # dense direct-summation oracle
    pos = eps * np.arange(-M // 2, M // 2)
    dense = math.sqrt(eps) * (mol4.d_N(u[:, None] - pos[None, :]) @ st.spins())
    np.testing.assert_allclose(vals, dense, atol=1e-13)


def test_field_single_particle_localization(mol4):
    M, eps = 128, 1.0 / 16.0
    x0 = 8
    occ = np.zeros(M, dtype=np.uint8)
    occ[x0 + M // 2] = 1
    st = LatticeState(occ)
    base = LatticeState(np.zeros(M, dtype=np.uint8))
    u = np.linspace(-3.0, 3.0, 401)
    diff = field_convolution(st, eps, mol4, u) - field_convolution(base, eps, mol4, u)
    # flipping one site changes the field by exactly 2 sqrt(eps) d_N(u - eps x0)
    np.testing.assert_allclose(diff, 2 * math.sqrt(eps) * mol4.d_N(u - eps * x0), atol=1e-13)
    outside = np.abs(u - eps * x0) > mol4.support_radius
    assert np.all(diff[outside] == 0.0)


def test_F_N_against_double_sum_oracle(rng):
    # expansion of the square: F_N = sum_{x,xt} eps int H dd * xi xi
    eps, N, M = 1.0 / 8.0, 2, 64
    mol = make_mollifier(N)
    G = G_DEFAULT
    lo = -M // 2
    for _ in range(3):
        st = sample_bernoulli_half(M, rng)
        direct = 0.0
        for x in range(lo, lo + M):
            for xt in range(lo, lo + M):
                if abs(x - xt) * eps >= 2.0 / N:
                    continue
                val, _ = scipy.integrate.quad(
                    lambda u: G.H(u) * mol.d_N(u - eps * x) * mol.d_N(u - eps * xt),
                    eps * max(x, xt) - 1.0 / N, eps * min(x, xt) + 1.0 / N, limit=100)
                direct += eps * val * st.spin(x) * st.spin(xt)
        assert evaluate_F_N(st, eps, mol, G) == pytest.approx(direct, abs=1e-8)


def test_build_V_G_coefficients(rng):
    eps, M = 1.0 / 16.0, 128
    G = G_DEFAULT
    V = build_V_G(G, eps, M)
    assert V.c0 == 0.0
    # the default G is even, so G'(0) = 0 exactly and the {0,1} pair is absent
    assert V.pairs.get((0, 1), 0.0) == pytest.approx(-float(G.Gp(0.0)))
    assert V.pairs[(1, 2)] == pytest.approx(-float(G.Gp(eps)))
    assert V.pairs[(-8, -7)] == pytest.approx(-float(G.Gp(-8 * eps)))
    # all-occupied state: telescoping Riemann sum of -G'
    full = LatticeState(np.ones(M, dtype=np.uint8))
    lo = -M // 2
    direct = -sum(float(G.Gp(eps * x)) for x in range(lo, lo + M))
    assert eval_observable(full, V) == pytest.approx(direct, abs=1e-12)
    assert abs(direct) < 1e-10        # smooth total derivative sums to ~0


def test_build_V_H2_coefficients(mol4):
    eps, M = 1.0 / 32.0, 256
    G = G_DEFAULT
    V = build_V_Hi(G, eps, mol4, M, 2)
    O0 = mol4.d_N_l2sq()
    lo = -M // 2
    exp_c0 = eps * O0 * sum(float(G.H(eps * x)) for x in range(lo, lo + M))
    assert V.c0 == pytest.approx(exp_c0, rel=1e-10)
    assert V.pairs.get((0, 1), 0.0) == pytest.approx(-eps * float(G.H(0.0)) * O0, rel=1e-10)
    assert V.pairs[(4, 5)] == pytest.approx(-eps * float(G.H(4 * eps)) * O0, rel=1e-10)


def test_build_V_Hi_validation(mol4):
    with pytest.raises(ValueError):
        build_V_Hi(G_DEFAULT, 1.0 / 16.0, mol4, 128, 5)
    with pytest.raises(WindowError):
        build_V_Hi(G_DEFAULT, 1.0 / 16.0, mol4, 64, 1)     # half-window 2 < R


def test_split_identity(rng):
    eps, N, M = 1.0 / 32.0, 4, 256
    mol = make_mollifier(N)
    G = G_DEFAULT
    VG = build_V_G(G, eps, M)
    pieces = build_v_split(G, eps, mol, M)
    assert all(set(V.degrees()) <= {0, 2} for V in pieces)
    for _ in range(10):
        st = sample_bernoulli_half(M, rng)
        lhs = evaluate_F_N(st, eps, mol, G) - eval_observable(st, VG)
        rhs = sum(eval_observable(st, V) for V in pieces)
        assert lhs == pytest.approx(rhs, abs=1e-7)


def test_split_pieces_have_banded_support():
    eps, N, M = 1.0 / 32.0, 4, 256
    mol = make_mollifier(N)
    width = 2.0 / (eps * N) + 2.0
    for i in (1, 3):
        V = build_V_Hi(G_DEFAULT, eps, mol, M, i)
        for (x, y) in V.pairs:
            assert min(abs(x - y), M - abs(x - y)) <= width


def test_riemann_defect_bound(mol4):
    eps, M = 1.0 / 32.0, 256
    u = np.linspace(-3.0, 3.0, 1000)
    defect = riemann_defect(mol4, eps, M, u)
    bound = eps ** 2 * mol4.N ** 2 * mol4.d2sup
    assert np.abs(defect).max() <= bound
    assert np.abs(defect).max() > 0.0


def test_v_h4_coefficients_from_defect(mol4):
    # V_H4 pair coefficient is H(eps x) * (eps * sum_k O(k) - 1); away from the
    # window edge that bracket is the Riemann defect of the mollifier mass
    eps, M = 1.0 / 32.0, 256
    G = G_DEFAULT
    V = build_V_Hi(G, eps, mol4, M, 4)
    acc = eps * sum(mol4.overlap(eps, k) for k in range(-20, 21))
    exp = float(G.H(3 * eps)) * (acc - 1.0)
    assert V.pairs[(3, 4)] == pytest.approx(exp, rel=1e-9)
