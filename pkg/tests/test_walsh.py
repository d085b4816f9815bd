import itertools

import numpy as np
import pytest

from fluctlab.kmc import DynamicsParams
from fluctlab.lattice import ObservableSpec, v_sharp
from fluctlab.walsh import (
    SectorOperator,
    WalshVector,
    a_plus,
    a_plus_star,
    config_generator_matrix,
    generator_apply,
    observable_config_vector,
    observable_to_walsh,
    s_op,
    sector_basis,
    sector_matrix,
    sites_of_mask,
    walsh_generator_matrix,
    walsh_transform_matrix,
)

PARAMS = DynamicsParams(eps=0.25, gamma_tilde=1.0)


def subsets_up_to(M, dmax):
    sites = range(-M // 2, M // 2)
    out = []
    for r in range(dmax + 1):
        out.extend(itertools.combinations(sites, r))
    return out


def test_a_plus_examples():
    assert a_plus(WalshVector.basis(6, ())).terms == {}
    v = a_plus(WalshVector.basis(6, (0,)))
    assert v.terms == {(0, 1): 1, (-1, 0): -1}


def test_a_plus_star_examples():
    assert a_plus_star(WalshVector.basis(6, (0,))).terms == {}
    assert a_plus_star(WalshVector.basis(6, ())).terms == {}
    v = a_plus_star(WalshVector.basis(6, (0, 1)))
    assert v.terms == {(0,): 1, (1,): -1}


def test_s_op_examples():
    assert s_op(WalshVector.basis(6, ())).terms == {}
    v = s_op(WalshVector.basis(6, (0, 1)))
    assert v.terms == {(0, 1): -2, (-1, 1): 1, (0, 2): 1}
    v = s_op(WalshVector.basis(8, (0, 2)))
    assert v.terms == {(0, 2): -4, (-1, 2): 1, (1, 2): 1, (0, 1): 1, (0, 3): 1}


def test_adjointness_exact_sweep():
    # <A+ u, v> == <u, A+* v> exactly, all basis pairs with degree <= 3 at M = 6
    basis = subsets_up_to(6, 3)
    for lam in basis:
        au = a_plus(WalshVector.basis(6, lam))
        for mu in basis:
            lhs = au.terms.get(mu, 0)
            rhs = a_plus_star(WalshVector.basis(6, mu)).terms.get(lam, 0)
            assert lhs == rhs


def test_grading(rng):
    M = 8
    for _ in range(20):
        deg = int(rng.integers(0, 4))
        sites = tuple(sorted(rng.choice(np.arange(-4, 4), size=deg, replace=False))) if deg else ()
        v = WalshVector.basis(M, sites)
        if a_plus(v).terms:
            assert a_plus(v).degrees() == [deg + 1]
        if a_plus_star(v).terms:
            assert a_plus_star(v).degrees() == [deg - 1]
        if s_op(v).terms:
            assert s_op(v).degrees() == [deg]


def test_symmetric_part_identity(rng):
    # (L + L*)/2 == S exactly: the gamma terms cancel coefficient by coefficient
    M = 6
    v = WalshVector(M)
    for _ in range(5):
        deg = int(rng.integers(0, 4))
        sites = tuple(sorted(rng.choice(np.arange(-3, 3), size=deg, replace=False))) if deg else ()
        v.add(sites, float(rng.normal()))
    sym = (generator_apply(v, PARAMS) + generator_apply(v, PARAMS, adjoint=True)).scaled(0.5)
    assert sym.terms == s_op(v).terms


def test_antisymmetric_part_on_singleton():
    v = WalshVector.basis(6, (0,))
    anti = (generator_apply(v, PARAMS) - generator_apply(v, PARAMS, adjoint=True)).scaled(0.5)
    g = PARAMS.gamma
    assert anti.terms == pytest.approx({(0, 1): g, (-1, 0): -g})


def test_symmetric_dynamics_reduces_to_s():
    params0 = DynamicsParams(eps=0.25, gamma_tilde=0.0)
    v = WalshVector(6, {(0, 1): 2.0, (-2,): -1.0})
    assert generator_apply(v, params0).terms == s_op(v).terms
    assert generator_apply(v, params0, adjoint=True).terms == s_op(v).terms


def test_config_generator_rows_and_invariance():
    Q = config_generator_matrix(6, PARAMS)
    assert np.abs(Q.sum(axis=1)).max() == 0.0
    assert np.abs(np.ones(64) @ Q).max() == 0.0     # uniform measure invariant


@pytest.mark.parametrize("M", [4, 6, 8])
@pytest.mark.parametrize("adjoint", [False, True])
def test_walsh_conjugation_identity(M, adjoint):
    Q = config_generator_matrix(M, PARAMS)
    W = walsh_transform_matrix(M)
    Qb = Q.T if adjoint else Q
    GW = walsh_generator_matrix(M, PARAMS, adjoint=adjoint)
    assert np.abs(W.T @ Qb @ W - GW).max() <= 1e-12


def test_walsh_matrix_properties():
    for M in (2, 4, 6):
        W = walsh_transform_matrix(M)
        size = 1 << M
        assert np.abs(W.T @ W - np.eye(size)).max() <= 1e-12
        assert np.allclose(W[:, 0], 1.0 / np.sqrt(size))   # empty set: constant column


def test_walsh_matrix_m2_hand_enumeration():
    # configurations n = 0..3 encode occupations of sites (-1, 0) by bits (0, 1);
    # columns: {}, {-1}, {0}, {-1,0}; spins are 2*bit - 1
    W = walsh_transform_matrix(2)
    expect = 0.5 * np.array([
        [1, -1, -1, 1],
        [1, 1, -1, -1],
        [1, -1, 1, -1],
        [1, 1, 1, 1],
    ], dtype=float)
    assert np.array_equal(W, expect)


def test_sector_matrix_examples():
    sec0 = sector_matrix(8, 0, 0.7)
    assert sec0.matrix.shape == (1, 1) and sec0.matrix[0, 0] == pytest.approx(0.7)

    sec = sector_matrix(8, 2, 1.0)
    row = sec.matrix.getrow(sec.index[(0, 1)]).toarray().ravel()
    assert row[sec.index[(0, 1)]] == pytest.approx(3.0)
    assert row[sec.index[(-1, 1)]] == pytest.approx(-1.0)
    assert row[sec.index[(0, 2)]] == pytest.approx(-1.0)
    assert np.count_nonzero(row) == 3

    row = sec.matrix.getrow(sec.index[(0, 2)]).toarray().ravel()
    assert row[sec.index[(0, 2)]] == pytest.approx(5.0)
    offdiag = [j for j in np.nonzero(row)[0] if j != sec.index[(0, 2)]]
    assert len(offdiag) == 4 and all(row[j] == pytest.approx(-1.0) for j in offdiag)


def test_sector_matrix_is_symmetric_and_matches_s_op():
    sec = sector_matrix(10, 2, 0.3)
    diff = (sec.matrix - sec.matrix.T).toarray()
    assert np.abs(diff).max() == 0.0
    # one column against s_op directly
    j = sec.index[(1, 2)]
    col = sec.matrix.getcol(j).toarray().ravel()
    out = s_op(WalshVector.basis(10, (1, 2)))
    for lam, c in out.terms.items():
        expect = -c + (0.3 if lam == (1, 2) else 0.0)
        assert col[sec.index[lam]] == pytest.approx(expect)


def test_sector_guards():
    with pytest.raises(ValueError):
        sector_matrix(8, 9, 1.0)
    with pytest.raises(ValueError):
        sector_matrix(8, 2, -1.0)
    with pytest.raises(ValueError):
        sector_matrix(20_000, 2, 1.0)     # dimension cap


def test_s_negative_semidefinite():
    for M in (6, 8):
        Q = config_generator_matrix(M, PARAMS)
        S = 0.5 * (Q + Q.T)
        evals = np.linalg.eigvalsh(S)
        assert evals.max() <= 1e-10


def test_observable_config_vector_consistency(rng):
    from fluctlab.lattice import LatticeState, eval_observable

    M = 6
    V = ObservableSpec(M, 0.7, {(0, 1): 1.2, (-3, 2): -0.4})
    vec = observable_config_vector(V)
    for n in (0, 5, 17, 63):
        st = LatticeState([(n >> i) & 1 for i in range(M)])
        assert vec[n] == pytest.approx(eval_observable(st, V), abs=1e-12)


def test_observable_to_walsh():
    V = v_sharp(8)
    w = observable_to_walsh(V)
    assert w.terms == {(0, 1): 0.25}


def test_sector_coo_export(tmp_path):
    sec = sector_matrix(6, 2, 1.0)
    text = sec.to_coo_text()
    lines = text.strip().split("\n")
    assert lines[0].startswith("# sector degree=2")
    i, j, v = lines[1].split()
    assert float(v) != 0.0 and int(i) >= 0 and int(j) >= 0
    # every stored entry present
    assert len(lines) - 1 == sec.matrix.nnz


def test_basis_ordering():
    basis = sector_basis(6, 2)
    assert basis[0] == (-3, -2)
    assert len(basis) == 15
    assert all(basis[i] < basis[i + 1] for i in range(len(basis) - 1))
