import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from catfilter.cat import G, SIGMA_X, SIGMA_Y, SIGMA_Z, CatModelParams
from catfilter.chains import OutcomeChain, marginal_analytic, trajectory_probability
from catfilter.filtering import (
    FilterState,
    ForbiddenOutcome,
    RngStream,
    belavkin_step,
    class_key,
    coarse_estimates,
    conditional_expectation_direct,
    empirical_class_frequencies,
    filter_estimate_step,
    filtering_wavefunction,
    fix_phase,
    girsanov_output_distribution,
    kappa,
    ltp_filter_check,
    mc_marginal,
    pathwise_deviation,
    sample_ensemble,
    sample_trajectory,
)
from catfilter.operators import max_abs

from conftest import amplitudes, seeds

HALF = 1 / math.sqrt(2)
PANEL = {"I": np.eye(2, dtype=complex), "sx": SIGMA_X, "sy": SIGMA_Y, "sz": SIGMA_Z}
OBS = {"sx": SIGMA_X, "sy": SIGMA_Y, "sz": SIGMA_Z}


def params_of(p=1.0, nu=1.0, amp=(HALF, HALF), eps=0.0):
    return CatModelParams(p=p, nu=nu, alpha=amp[0], beta=amp[1], eps_e=eps)


def gx(x):
    return float(np.vdot(G, x @ G).real)


# sampling

def test_ground_state_only_gives_type0():
    rec = sample_trajectory(params_of(amp=(1.0, 0.0)), 20.0, RngStream(3, 0))
    assert len(rec.outcome_chain) > 0
    assert set(rec.outcome_chain.outcomes) == {0}


def test_interarrival_times_are_exponential():
    nu = 1.7
    rec = sample_trajectory(params_of(p=0.5, nu=nu), 60000.0, RngStream(11, 0))
    gaps = np.diff((0.0,) + rec.outcome_chain.times)
    assert len(gaps) > 100000
    assert stats.kstest(gaps, "expon", args=(0, 1 / nu)).pvalue > 1e-3


def test_sampling_is_deterministic():
    params = params_of(p=0.6, eps=0.8)
    a = sample_trajectory(params, 5.0, RngStream(7, 42))
    b = sample_trajectory(params, 5.0, RngStream(7, 42))
    assert a.outcome_chain == b.outcome_chain
    assert all(np.array_equal(x, y) for x, y in zip(a.conditional_states, b.conditional_states))
    c = sample_trajectory(params, 5.0, RngStream(7, 43))
    assert c.outcome_chain != a.outcome_chain
    e1, e2 = sample_ensemble(params, 2.0, 500, 9), sample_ensemble(params, 2.0, 500, 9)
    assert np.array_equal(e1.labels, e2.labels) and np.array_equal(e1.final_states, e2.final_states)


@given(seeds, st.floats(0, 1), amplitudes(), st.floats(-3, 3))
def test_record_invariants(seed, p, amp, eps):
    params = params_of(p=p, amp=amp, eps=eps)
    rec = sample_trajectory(params, 4.0, RngStream(seed, 1))
    for psi in rec.conditional_states:
        assert abs(np.linalg.norm(psi) - 1) < 1e-12
    for k, psi in zip(rec.outcome_chain.outcomes, rec.conditional_states[1:]):
        if k == 1:
            assert abs(abs(np.vdot(G, psi)) - 1) < 1e-12
    assert rec.deaths() <= 1
    assert rec.log_weight <= 1e-12


def test_sample_trajectory_rejects_empty_horizon():
    with pytest.raises(ValueError):
        sample_trajectory(params_of(), 0.0, RngStream(0))


def test_fix_phase_convention():
    v = np.array([0.6j, -0.8j])
    out = fix_phase(v)
    assert out[1].real > 0 and out[1].imag == 0
    tie = fix_phase(np.array([HALF * 1j, HALF]))
    assert tie[0].real > 0 and abs(tie[0].imag) < 1e-16


# Monte Carlo marginal

def test_mc_marginal_trivial_cases():
    params = params_of(p=0.5, amp=(0.6, 0.8j))
    mc = mc_marginal(1, 0.0, params, seed=0)
    assert max_abs(mc.mean - params.rho0) < 1e-15
    ground = params_of(amp=(1.0, 0.0))
    mc = mc_marginal(2000, 3.0, ground, seed=1)
    assert max_abs(mc.mean - np.diag([1.0, 0.0])) == 0
    assert max_abs(mc.se_re) == 0 and max_abs(mc.se_im) == 0


def test_mc_marginal_within_three_se():
    params = params_of()
    mc = mc_marginal(100000, 1.0, params, seed=42)
    diff = mc.mean - marginal_analytic(1.0, params)
    for d, se in ((diff.real, mc.se_re), (diff.imag, mc.se_im)):
        assert np.all(np.abs(d) <= 3 * se + 1e-15)


# direct conditional expectations and the filtering wave function

def test_direct_expectation_examples():
    params = params_of(p=0.6, amp=(0.6, 0.8), eps=1.2)
    x = np.array([[0.3, 0.5 - 0.2j], [0.5 + 0.2j, -1.1]])
    psi = params.psi0
    assert conditional_expectation_direct(x, OutcomeChain.of([], []), params) == pytest.approx(
        float(np.vdot(psi, x @ psi).real)
    )
    oc = OutcomeChain.of([0.3, 0.9], [2, 1])
    assert conditional_expectation_direct(x, oc, params) == pytest.approx(gx(x))
    p1 = params_of(p=1.0, amp=(0.6, 0.8), eps=1.2)
    for oc in (OutcomeChain.of([0.3], [0]), OutcomeChain.of([0.3, 1.0], [1, 0]), OutcomeChain.of([0.1], [1])):
        assert conditional_expectation_direct(x, oc, p1) == pytest.approx(gx(x))
    with pytest.raises(ForbiddenOutcome):
        conditional_expectation_direct(x, OutcomeChain.of([0.3, 0.4], [1, 1]), params)


def test_filtering_wavefunction_examples():
    params = params_of(p=0.6, amp=(0.6, 0.8j), eps=0.4)
    assert max_abs(filtering_wavefunction(OutcomeChain.of([], []), params) - fix_phase(params.psi0)) < 1e-15
    out = filtering_wavefunction(OutcomeChain.of([0.7], [1]), params)
    assert max_abs(out - G) < 1e-15
    p1 = params_of(p=1.0, amp=(0.6, 0.8j))
    for oc in (OutcomeChain.of([0.2], [0]), OutcomeChain.of([0.2, 0.5], [1, 0])):
        assert max_abs(filtering_wavefunction(oc, p1) - G) < 1e-15
    with pytest.raises(ForbiddenOutcome):
        filtering_wavefunction(OutcomeChain.of([0.2, 0.5], [0, 1]), params)


def test_branch_vectors_orthogonal_in_joint_space():
    # distinct outcome chains of equal length give orthogonal joint vectors
    # because the cat records differ; each branch vector is a unit vector
    params = params_of(p=0.5, amp=(0.6, 0.8))
    seqs = [(0, 2), (2, 1), (2, 2), (1, 0)]
    for s in seqs:
        oc = OutcomeChain.of([0.1, 0.2], s)
        assert abs(np.linalg.norm(filtering_wavefunction(oc, params)) - 1) < 1e-12


def test_closed_form_only_at_p_one():
    # an all-type-2 record leaves the conditional state at psi when p < 1
    params = params_of(p=0.5, amp=(0.6, 0.8))
    oc = OutcomeChain.of([0.1, 0.2, 0.3], [2, 2, 2])
    assert max_abs(filtering_wavefunction(oc, params) - fix_phase(params.psi0)) < 1e-15
    assert conditional_expectation_direct(SIGMA_Z, oc, params) != pytest.approx(gx(SIGMA_Z))


# Belavkin equation

def test_belavkin_step_examples():
    params = params_of(p=0.5, amp=(0.6, 0.8j), eps=0.9)
    fs = FilterState.initial(params, OBS)
    after2 = belavkin_step(fs, 2, 0.4, params)
    assert max_abs(after2.psi_cond - fs.psi_cond) < 1e-15
    after1 = belavkin_step(after2, 1, 0.9, params)
    assert max_abs(after1.psi_cond - G) < 1e-15
    assert after1.counts == (0, 1, 1)
    with pytest.raises(ForbiddenOutcome):
        belavkin_step(after1, 1, 1.3, params)


@given(seeds, st.floats(0, 1), amplitudes(), st.floats(-3, 3))
def test_pathwise_consistency(seed, p, amp, eps):
    params = params_of(p=p, amp=amp, eps=eps)
    rec = sample_trajectory(params, 5.0, RngStream(seed, 0))
    ds, de, k2 = pathwise_deviation(rec.outcome_chain, params, OBS)
    assert ds <= 1e-12
    assert de <= 1e-10
    assert k2 <= 1e-12


def test_identity_estimate_is_constant():
    params = params_of(p=0.5, amp=(0.6, 0.8), eps=1.5)
    fs = FilterState.initial(params, {"I": np.eye(2)})
    for dt, k in ((0.3, None), (0.2, 2), (0.5, 1), (0.1, None), (0.4, 0)):
        if k is not None:
            assert abs(kappa(fs, k, "I", params, fs.t + dt)) < 1e-15
        fs = filter_estimate_step(fs, dt, k, params)
        assert abs(fs.estimates["I"] - 1) < 1e-14


@given(amplitudes(), st.floats(0.01, 0.99), st.floats(-3, 3), st.floats(0, 5))
def test_kappa2_vanishes(amp, p, eps, t):
    params = params_of(p=p, amp=amp, eps=eps)
    fs = FilterState.initial(params, OBS)
    for name in OBS:
        assert abs(kappa(fs, 2, name, params, t)) < 1e-12


def test_first_jump_kappa_at_p_one():
    params = params_of(p=1.0, amp=(0.6, 0.8))
    x = np.array([[0.4, 0.3], [0.3, -0.2]])
    fs = FilterState.initial(params, {"x": x})
    psi = params.psi0
    before = float(np.vdot(psi, x @ psi).real)
    for k in (0, 1):
        assert kappa(fs, k, "x", params) == pytest.approx(gx(x) - before, abs=1e-14)
        assert belavkin_step(fs, k, 0.0, params).estimates["x"] == pytest.approx(gx(x), abs=1e-14)


def test_drift_follows_heisenberg_dynamics():
    params = params_of(p=0.7, amp=(0.6, 0.8), eps=2.0)
    fs = FilterState.initial(params, OBS)
    fs = filter_estimate_step(fs, 1.3, None, params)
    for name, x in OBS.items():
        direct = conditional_expectation_direct(x, OutcomeChain.of([], []), params, 1.3)
        assert abs(fs.estimates[name] - direct) < 1e-10


def test_filter_rejects_backwards_time():
    params = params_of()
    fs = FilterState.initial(params, OBS)
    with pytest.raises(ValueError):
        filter_estimate_step(fs, -0.1, None, params)


# Girsanov output distribution

def test_girsanov_examples():
    dist = girsanov_output_distribution(0.0, params_of(p=0.4))
    assert dist["empty"] == 1.0
    assert sum(v for k, v in dist.items() if k != "empty") == 0.0
    dist = girsanov_output_distribution(1.0, params_of(amp=(0.0, 1.0)), n_fine=1)
    assert dist["empty"] == pytest.approx(math.exp(-1))
    assert dist["1"] == pytest.approx(math.exp(-1))
    assert dist["0"] == 0.0


@given(st.floats(0, 1), amplitudes(), st.floats(0.1, 3))
def test_girsanov_matches_trajectory_probability(p, amp, t):
    params = params_of(p=p, amp=amp, eps=0.7)
    dist = girsanov_output_distribution(t, params, n_fine=3)
    assert all(v >= 0 for v in dist.values())
    assert abs(sum(dist.values()) - 1) <= 1e-11
    for key, prob in dist.items():
        if key in ("empty", "long-death", "long-nodeath"):
            continue
        labels = [int(c) for c in key]
        times = np.linspace(0, t, len(labels) + 2)[1:-1]
        oc = OutcomeChain.of(times, labels)
        assert abs(prob - trajectory_probability(oc, t, params, integrated=True)) <= 1e-12


def test_girsanov_matches_empirical_frequencies():
    params = params_of(p=0.6, amp=(0.6, 0.8))
    ens = sample_ensemble(params, 1.5, 100000, seed=5)
    dist = girsanov_output_distribution(1.5, params)
    freq = empirical_class_frequencies(ens)
    assert set(freq) <= set(dist)
    n = len(ens)
    for key, prob in dist.items():
        sigma = math.sqrt(prob * (1 - prob) / n)
        assert abs(freq.get(key, 0) / n - prob) <= 4 * sigma + 1e-15


def test_class_key():
    assert class_key([], 3) == "empty"
    assert class_key([2, 0, -1, -1], 3) == "20"
    assert class_key([2, 2, 2, 1], 3) == "long-death"
    assert class_key([2, 2, 0, 0], 3) == "long-nodeath"


# LTP for the filter

def test_ltp_examples():
    params = params_of()
    assert ltp_filter_check(np.eye(2), 1.0, params) <= 1e-12
    expected = (1 - math.exp(-1)) * 1.0 + math.exp(-1) * 0.0
    assert float(np.trace(marginal_analytic(1.0, params) @ SIGMA_Z).real) == pytest.approx(expected)
    assert ltp_filter_check(SIGMA_Z, 1.0, params) <= 1e-9


def test_ltp_with_energy_gap_carries_phase():
    params = params_of(p=0.7, nu=1.3, amp=(0.6, 0.8), eps=2.1)
    t = 0.9
    assert ltp_filter_check(SIGMA_X, t, params) <= 1e-9
    est = coarse_estimates(SIGMA_X, t, params)
    lhs = sum(prob * val for prob, val in est.values() if prob > 0)
    expected = math.cos(2.1 * t) * math.exp(-0.7 * 1.3 * t) * 2 * 0.6 * 0.8
    assert abs(lhs - expected) <= 1e-9


@given(st.sampled_from([0.3, 0.7, 1.0]), st.sampled_from([0.5, 1.0, 2.0]), amplitudes(), st.floats(-2, 2))
def test_ltp_panel(p, t, amp, eps):
    params = params_of(p=p, amp=amp, eps=eps)
    for x in PANEL.values():
        assert ltp_filter_check(x, t, params) <= 1e-9


def test_coarse_closed_form_at_p_one():
    params = params_of(amp=(0.6, 0.8))
    x = np.array([[0.4, 0.3], [0.3, -0.2]])
    est = coarse_estimates(x, 1.2, params)
    psi = params.psi0
    assert est["empty"][1] == pytest.approx(float(np.vdot(psi, x @ psi).real))
    assert est["class0"][1] == pytest.approx(gx(x))
    assert est["class1"][1] == pytest.approx(gx(x))
    assert est["class1"][0] == pytest.approx(0.64 * (1 - math.exp(-1.2)))


def test_death_count_over_many_jumps():
    ens = sample_ensemble(params_of(p=0.5), 10.0, 100000, seed=3)
    assert int(ens.n_jumps.sum()) >= 10 ** 6
    assert ens.counts[:, 1].max() <= 1
