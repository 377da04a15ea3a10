import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from catfilter.cat import SIGMA_X, build_S, kraus_triple
from catfilter.dilation import (
    ImpossibleObservation,
    KrausFamily,
    NormalState,
    OrthoResolution,
    check_ltp,
    cond_exp_abelian,
    cond_exp_commutant,
    kraus_from_unitary,
    project_postulate,
    purification_residuals,
    purify_pinched,
    random_pinched_instance,
    two_time_cond_exp,
)
from catfilter.operators import (
    basis_ket,
    commutator,
    kron,
    max_abs,
    partial_trace,
    projector_onto,
    random_density,
    random_hermitian,
    random_unitary,
)

from conftest import rng_from, seeds

K0, K1 = basis_ket(2, 0), basis_ket(2, 1)
P0, P1 = np.outer(K0, K0), np.outer(K1, K1)
PLUS_KET = (K0 + K1) / np.sqrt(2)
BASIS_RES = OrthoResolution((P0, P1))


def random_resolution(rng, n):
    u = random_unitary(n, rng)
    cut = int(rng.integers(1, n))
    return OrthoResolution((projector_onto(u[:, :cut]), projector_onto(u[:, cut:])))


# types

def test_normal_state_validation():
    with pytest.raises(ValueError):
        NormalState(np.diag([0.5, 0.6]))
    with pytest.raises(ValueError):
        NormalState(np.diag([1.5, -0.5]))
    with pytest.raises(ValueError):
        NormalState(np.array([[0.5, 0.5], [0, 0.5]]))
    s = NormalState.pure(PLUS_KET)
    assert s.is_pure and abs(s.expect(SIGMA_X) - 1) < 1e-12


def test_resolution_validation():
    with pytest.raises(ValueError):
        OrthoResolution((P0, P0))
    with pytest.raises(ValueError):
        OrthoResolution((P0,))


def test_kraus_family_completeness():
    with pytest.raises(ValueError):
        KrausFamily((P0, P0))
    assert KrausFamily((P0, P1)).completeness_defect() < 1e-15


# commutant conditional expectation

def test_cond_exp_commutant_examples():
    a = np.diag([2.0, -1.0]).astype(complex)
    assert max_abs(cond_exp_commutant(a, P0) - a) < 1e-15
    assert max_abs(cond_exp_commutant(SIGMA_X, P0)) < 1e-15
    assert max_abs(cond_exp_commutant(np.eye(2), P0) - np.eye(2)) < 1e-15


@given(seeds, st.integers(2, 5))
def test_cond_exp_commutant_properties(seed, n):
    rng = rng_from(seed)
    p = projector_onto(random_unitary(n, rng)[:, : int(rng.integers(1, n))])
    a = random_hermitian(n, rng)
    w = cond_exp_commutant(a, p)
    assert max_abs(commutator(w, p)) < 1e-10
    assert max_abs(cond_exp_commutant(w, p) - w) < 1e-10
    pos = random_density(n, rng)
    assert np.linalg.eigvalsh(cond_exp_commutant(pos, p))[0] > -1e-9


# abelian conditional expectation

def test_cond_exp_abelian_examples():
    state = NormalState.pure(PLUS_KET)
    a = 0.3 * P0 - 2.0 * P1
    assert max_abs(cond_exp_abelian(a, BASIS_RES, state) - a) < 1e-12
    assert max_abs(cond_exp_abelian(np.eye(2), BASIS_RES, state) - np.eye(2)) < 1e-12


def test_cond_exp_abelian_weights_on_product_space():
    # entangled psi on C^2 ⊗ C^2, resolution on the apparatus factor
    psi = (0.6 * np.kron(K0, K0) + 0.8j * np.kron(PLUS_KET, K1))
    x = np.array([[0.3, 1 - 1j], [1 + 1j, -0.7]])
    res = OrthoResolution((kron(np.eye(2), P0), kron(np.eye(2), P1)))
    state = NormalState.pure(psi)
    out = cond_exp_abelian(kron(x, np.eye(2)), res, state)
    expected = sum(
        state.expect(kron(x, pk)) / state.expect(kron(np.eye(2), pk)) * kron(np.eye(2), pk) for pk in (P0, P1)
    )
    assert max_abs(out - expected) < 1e-12


def test_cond_exp_abelian_drops_zero_probability_outcomes():
    out = cond_exp_abelian(SIGMA_X, BASIS_RES, NormalState.pure(K0))
    assert max_abs(out) < 1e-15


@given(seeds, st.integers(2, 5))
def test_cond_exp_abelian_is_norm_one_projection(seed, n):
    rng = rng_from(seed)
    res = random_resolution(rng, n)
    state = NormalState(random_density(n, rng))
    a = random_hermitian(n, rng)
    e = cond_exp_abelian(a, res, state)
    coeffs = [np.trace(p @ e) / np.trace(p) for p in res.projectors]
    assert max_abs(e - sum(c * p for c, p in zip(coeffs, res.projectors))) < 1e-10
    assert max_abs(cond_exp_abelian(e, res, state) - e) < 1e-10
    assert max_abs(cond_exp_abelian(np.eye(n), res, state) - np.eye(n)) < 1e-10
    assert np.linalg.eigvalsh(cond_exp_abelian(random_density(n, rng), res, state))[0] > -1e-9
    c1 = sum(rng.standard_normal() * p for p in res.projectors)
    c2 = sum(rng.standard_normal() * p for p in res.projectors)
    lhs = cond_exp_abelian(c1 @ a @ c2, res, state)
    assert max_abs(lhs - c1 @ e @ c2) < 1e-9


# LTP

def test_ltp_examples():
    a = np.diag([1.0, 3.0])
    assert check_ltp(a, BASIS_RES, NormalState.pure(PLUS_KET))[0]
    assert check_ltp(SIGMA_X, BASIS_RES, NormalState(np.diag([0.3, 0.7])))[0]
    holds, defect = check_ltp(SIGMA_X, BASIS_RES, NormalState.pure(PLUS_KET))
    assert not holds and abs(defect - 1.0) < 1e-12


@given(seeds)
def test_ltp_iff_pinching_invariant(seed):
    rng = rng_from(seed)
    res = random_resolution(rng, 4)
    rho = random_density(4, rng)
    pinched = NormalState(res.pinch(rho))
    for _ in range(100):
        assert check_ltp(random_hermitian(4, rng), res, pinched)[0]
    generic = NormalState(rho)
    assert any(not check_ltp(random_hermitian(4, rng), res, generic)[0] for _ in range(100))


# purification

def test_purify_maximally_mixed_qubit():
    pur = purify_pinched(np.eye(2) / 2, BASIS_RES)
    assert pur.dims == (2, 2)
    assert max_abs(np.abs(pur.psi) - np.array([1, 0, 0, 1]) / np.sqrt(2)) < 1e-12
    for pk in pur.dual.projectors:
        assert abs(np.trace(pk) - 1) < 1e-12


def test_purify_zero_weight_outcome_adds_dimension():
    res = OrthoResolution((np.diag([1, 0, 0]), np.diag([0, 1, 0]), np.diag([0, 0, 1])))
    rho = np.diag([0.4, 0.6, 0.0]).astype(complex)
    pur = purify_pinched(rho, res)
    assert pur.dims == (3, 3)
    assert max_abs(pur.dual.projectors[2] - np.diag([0, 0, 1])) < 1e-12
    assert max_abs(partial_trace(np.outer(pur.psi, pur.psi.conj()), 0, pur.dims) - rho) < 1e-12


def test_purify_pure_commuting_case():
    c = np.array([0.6, 0.8j])
    phi = [K0, K1]
    rho = np.outer(c[0] * phi[0], (c[0] * phi[0]).conj()) + np.outer(c[1] * phi[1], (c[1] * phi[1]).conj())
    pur = purify_pinched(rho, BASIS_RES)
    for k, e in enumerate(BASIS_RES.projectors):
        branch = kron(e, pur.dual.projectors[k]) @ pur.psi
        assert abs(np.linalg.norm(branch) - abs(c[k])) < 1e-12


def test_purify_rejects_unpinched_state():
    with pytest.raises(ValueError):
        purify_pinched(np.outer(PLUS_KET, PLUS_KET), BASIS_RES)


@given(seeds, st.integers(2, 4))
def test_purification_round_trip(seed, dim):
    rng = rng_from(seed)
    rho, res = random_pinched_instance(rng, dim)
    marginal, intertwine, corr = purification_residuals(rho, res, rng)
    assert marginal <= 1e-12
    assert intertwine <= 1e-10
    assert corr <= 1e-10


# Kraus extraction

def test_kraus_from_identity():
    basis = [basis_ket(3, k) for k in range(3)]
    fam = kraus_from_unitary(np.eye(6), basis[0], basis)
    assert max_abs(fam.operators[0] - np.eye(2)) < 1e-15
    assert max_abs(fam.operators[1]) < 1e-15 and max_abs(fam.operators[2]) < 1e-15


def test_kraus_from_swap():
    swap = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            swap[j * 2 + i, i * 2 + j] = 1
    basis = [K0, K1]
    fam = kraus_from_unitary(swap, K0, basis)
    # swap(φ ⊗ |0>) = |0> ⊗ φ, so V_k = |0><k|
    assert max_abs(fam.operators[0] - np.outer(K0, K0)) < 1e-15
    assert max_abs(fam.operators[1] - np.outer(K0, K1)) < 1e-15


@given(st.floats(0.0, 1.0))
def test_kraus_from_cat_S(p):
    basis = [basis_ket(3, k) for k in range(3)]
    fam = kraus_from_unitary(build_S(p), basis[0], basis, apparatus_first=True)
    for got, want in zip(fam.operators, kraus_triple(p).operators):
        assert max_abs(got - want) <= 1e-15


@given(seeds, st.integers(2, 3), st.integers(2, 3))
def test_kraus_from_random_unitary_complete(seed, dh, dk):
    rng = rng_from(seed)
    u = random_unitary(dh * dk, rng)
    frame = random_unitary(dk, rng)
    basis = list(frame.T)
    fam = kraus_from_unitary(u, basis[0], basis)
    assert fam.completeness_defect() <= 1e-12


def test_kraus_from_unitary_errors():
    basis = [K0, K1]
    with pytest.raises(ValueError):
        kraus_from_unitary(2 * np.eye(4), K0, basis)
    with pytest.raises(ValueError):
        kraus_from_unitary(np.eye(4), K0, [K0, K0])
    with pytest.raises(ValueError):
        kraus_from_unitary(np.eye(4), 2 * K0, basis)


# projection postulate

def test_project_postulate():
    assert max_abs(project_postulate(K0, P0) - K0) < 1e-15
    assert max_abs(project_postulate(PLUS_KET, P0) - K0) < 1e-15
    with pytest.raises(ImpossibleObservation):
        project_postulate(K1, P0)


@given(seeds, st.integers(2, 5))
def test_project_postulate_normalized_in_range(seed, n):
    rng = rng_from(seed)
    p = projector_onto(random_unitary(n, rng)[:, :1])
    psi = random_unitary(n, rng)[:, 0]
    out = project_postulate(psi, p)
    assert abs(np.linalg.norm(out) - 1) < 1e-12
    assert max_abs(p @ out - out) < 1e-12


# two-time conditioning

def test_two_time_compatible_no_evolution():
    x = kron(np.diag([1.0, -2.0]), np.eye(2))
    p = kron(P0, np.eye(2))
    state = NormalState.pure(np.kron(PLUS_KET, PLUS_KET))
    est, defect = two_time_cond_exp(x, np.eye(4), p, state)
    assert defect < 1e-15
    assert max_abs(est @ p - p @ est) < 1e-15


def _cat_setup():
    x = kron(np.eye(3), SIGMA_X)
    p = kron(np.eye(3), P0)  # atom found in |g>
    psi = np.kron(basis_ket(3, 0), np.array([0.6, 0.8]))
    return x, p, psi


def test_two_time_cat_model_violates_ltp():
    x, p, psi = _cat_setup()
    _, defect = two_time_cond_exp(x, build_S(0.5), p, NormalState.pure(psi))
    assert defect > 0.1


def test_two_time_pinched_state_restores_ltp():
    x, p, psi = _cat_setup()
    res = OrthoResolution.from_projector(p)
    pinched = NormalState(res.pinch(np.outer(psi, psi.conj())))
    _, defect = two_time_cond_exp(x, build_S(0.5), p, pinched)
    assert defect < 1e-12
