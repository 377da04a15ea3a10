"""Monte Carlo unravelling and the Belavkin filter for the atom-cat model.

All computations are in the interaction picture: the conditional atomic
state only changes at observation times, and observables carry the free
Heisenberg evolution ``X(t)``.

Random numbers come from numpy's PCG64 bit generator, seeded through
``SeedSequence(seed, spawn_key=(stream_id,))``. The generator choice is part
of the reproducibility contract and must not change silently.

Conditional states are stored with a fixed phase: the first amplitude whose
modulus is within ``PHASE_TIE`` of the largest one is made real-positive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .cat import (
    CatModelParams,
    G,
    OUTCOMES,
    heisenberg_evolve,
    interaction_picture_kraus,
    kraus_triple,
)
from .chains import (
    DEFAULT_ACCURACY,
    OutcomeChain,
    TruncationConfig,
    _truncation,
    death_resolved_weights,
    marginal_analytic,
    poisson_weight,
)
from .operators import dag

PROB_FLOOR = 1e-14
PHASE_TIE = 1e-9
ENSEMBLE_STREAM = 2**63 - 1


class ForbiddenOutcome(ValueError):
    """An outcome with zero amplitude on the current conditional state."""


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))


def fix_phase(v: np.ndarray) -> np.ndarray:
    mags = np.abs(v)
    idx = int(np.argmax(mags >= mags.max() - PHASE_TIE))
    return v * (np.conj(v[idx]) / mags[idx])


def _fix_phase_rows(states: np.ndarray) -> np.ndarray:
    mags = np.abs(states)
    idx = np.argmax(mags >= mags.max(axis=1, keepdims=True) - PHASE_TIE, axis=1)
    pivot = states[np.arange(len(states)), idx]
    return states * (np.conj(pivot) / np.abs(pivot))[:, None]


def kraus_update(psi: np.ndarray, k: int, t: float, params: CatModelParams) -> tuple[np.ndarray, float]:
    """Normalized V_k(t)ψ and its probability ‖V_k(t)ψ‖^2."""
    v = interaction_picture_kraus(t, params)[k] @ psi
    prob = float(np.vdot(v, v).real)
    if prob <= PROB_FLOOR:
        raise ForbiddenOutcome(f"outcome {k} has zero amplitude on the conditional state")
    return fix_phase(v / math.sqrt(prob)), prob


def _draw_outcome(probs, u: float) -> int:
    total = sum(probs)
    acc = 0.0
    last = None
    for k, pk in zip(OUTCOMES, probs):
        if pk <= PROB_FLOOR:
            continue
        acc += pk / total
        last = k
        if u < acc:
            return k
    return last


@dataclass(frozen=True)
class TrajectoryRecord:
    outcome_chain: OutcomeChain
    conditional_states: tuple[np.ndarray, ...]  # initial state, then one per jump
    log_weight: float  # log |c_{k1..kn}|^2
    t_max: float

    @property
    def final_state(self) -> np.ndarray:
        return self.conditional_states[-1]

    def deaths(self) -> int:
        return sum(1 for k in self.outcome_chain.outcomes if k == 1)


def sample_trajectory(params: CatModelParams, t_max: float, rng: RngStream) -> TrajectoryRecord:
    """Rate-ν Poisson jump times on [0, t_max]; at each jump an outcome is drawn
    with probability ‖V_k ψ‖^2 and the state is updated by the Kraus action."""
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    gen = rng.generator()
    psi = fix_phase(params.psi0)
    states = [psi]
    times: list[float] = []
    outcomes: list[int] = []
    log_w = 0.0
    t = 0.0
    while True:
        t += gen.exponential(1.0 / params.nu)
        if t > t_max:
            break
        ops = interaction_picture_kraus(t, params).operators
        probs = [float(np.vdot(v @ psi, v @ psi).real) for v in ops]
        k = _draw_outcome(probs, gen.random())
        psi, prob = kraus_update(psi, k, t, params)
        log_w += math.log(prob)
        times.append(t)
        outcomes.append(k)
        states.append(psi)
    return TrajectoryRecord(OutcomeChain.of(times, outcomes), tuple(states), log_w, t_max)


@dataclass(frozen=True)
class Ensemble:
    """Batch of trajectories drawn together; jump times are not retained."""

    labels: np.ndarray  # (n_traj, max_jumps), -1 padded
    n_jumps: np.ndarray
    final_states: np.ndarray  # (n_traj, 2)
    counts: np.ndarray  # (n_traj, 3)
    t_max: float

    def __len__(self) -> int:
        return len(self.n_jumps)


def sample_ensemble(params: CatModelParams, t_max: float, n_traj: int, seed: int) -> Ensemble:
    """Vectorized trajectory sampler.

    Jump counts are Poisson(νt); outcome statistics do not depend on the jump
    times in the interaction picture, so only label sequences and the final
    conditional states are produced. Uses its own stream of ``seed``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    gen = RngStream(seed, ENSEMBLE_STREAM).generator()
    n_jumps = gen.poisson(params.nu * t_max, size=n_traj) if t_max > 0 else np.zeros(n_traj, int)
    max_n = int(n_jumps.max(initial=0))
    ops = np.stack(kraus_triple(params.p).operators)
    psi = np.tile(fix_phase(params.psi0), (n_traj, 1))
    labels = np.full((n_traj, max_n), -1, dtype=np.int8)
    counts = np.zeros((n_traj, 3), dtype=np.int64)
    for j in range(max_n):
        active = np.nonzero(n_jumps > j)[0]
        cand = np.einsum("kab,nb->nka", ops, psi[active])
        probs = np.sum(np.abs(cand) ** 2, axis=2)
        probs[probs <= PROB_FLOOR] = 0.0
        cum = np.cumsum(probs, axis=1)
        cum /= cum[:, -1:]
        u = gen.random(len(active))
        k = np.argmax(u[:, None] < cum, axis=1)
        rows = np.arange(len(active))
        new = cand[rows, k] / np.sqrt(probs[rows, k])[:, None]
        psi[active] = _fix_phase_rows(new)
        labels[active, j] = k
        counts[active, k] += 1
    return Ensemble(labels, n_jumps, psi, counts, t_max)


@dataclass(frozen=True)
class MonteCarloMarginal:
    mean: np.ndarray
    se_re: np.ndarray
    se_im: np.ndarray
    n_traj: int


def ensemble_marginal(ens: Ensemble) -> MonteCarloMarginal:
    outer = np.einsum("na,nb->nab", ens.final_states, ens.final_states.conj())
    n = len(ens)
    mean = outer.mean(axis=0)
    if n > 1:
        se_re = outer.real.std(axis=0, ddof=1) / math.sqrt(n)
        se_im = outer.imag.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        se_re = se_im = np.zeros((2, 2))
    return MonteCarloMarginal(mean, se_re, se_im, n)


def mc_marginal(n_traj: int, t: float, params: CatModelParams, seed: int) -> MonteCarloMarginal:
    """Average of ψ_c ψ_c† over sampled trajectories at time t."""
    return ensemble_marginal(sample_ensemble(params, t, n_traj, seed))


def _chain_vector(oc: OutcomeChain, params: CatModelParams) -> np.ndarray:
    v = params.psi0
    for s, k in zip(oc.times, oc.outcomes):
        v = interaction_picture_kraus(s, params)[k] @ v
    return v


def conditional_expectation_direct(
    x: np.ndarray, oc: OutcomeChain, params: CatModelParams, t: float | None = None
) -> float:
    """⟨ψ|V†…X(t)…V|ψ⟩ / ⟨ψ|V†…V|ψ⟩ along the outcome chain.

    ``t`` defaults to the last jump time (0 for the empty chain).
    """
    if t is None:
        t = oc.times[-1] if oc.times else 0.0
    v = _chain_vector(oc, params)
    norm2 = float(np.vdot(v, v).real)
    if norm2 <= PROB_FLOOR:
        raise ForbiddenOutcome("impossible trajectory")
    xt = heisenberg_evolve(x, t, params)
    return float(np.vdot(v, xt @ v).real) / norm2


def filtering_wavefunction(oc: OutcomeChain, params: CatModelParams) -> np.ndarray:
    """c^{-1} V_{kn} … V_{k1} ψ on this branch, phase-fixed."""
    v = _chain_vector(oc, params)
    c = np.linalg.norm(v)
    if c ** 2 <= PROB_FLOOR:
        raise ForbiddenOutcome("zero normalisation factor: impossible trajectory")
    return fix_phase(v / c)


@dataclass(frozen=True)
class FilterState:
    t: float
    psi_cond: np.ndarray
    counts: tuple[int, int, int] = (0, 0, 0)
    observables: Mapping[str, np.ndarray] = field(default_factory=dict)
    estimates: Mapping[str, float] = field(default_factory=dict)

    @classmethod
    def initial(cls, params: CatModelParams, observables: Mapping[str, np.ndarray] | None = None) -> "FilterState":
        obs = dict(observables or {})
        psi = fix_phase(params.psi0)
        est = {name: float(np.vdot(psi, x @ psi).real) for name, x in obs.items()}
        return cls(0.0, psi, (0, 0, 0), obs, est)

    def expect(self, a: np.ndarray) -> complex:
        return complex(np.vdot(self.psi_cond, a @ self.psi_cond))


def _drift_coefficients(psi: np.ndarray, x: np.ndarray, params: CatModelParams):
    energies = np.array([params.eps_g, params.eps_e])
    omega = energies[:, None] - energies[None, :]
    coeff = np.conj(psi)[:, None] * psi[None, :] * 1j * omega * x
    return coeff, omega


def filter_drift(fs: FilterState, t_new: float, params: CatModelParams) -> FilterState:
    """Integrate dε/dt = ε_t(i[H, X(t)]) from fs.t to t_new with classical RK4.

    The step is min(1e-3/ν, gap/10). The right-hand side depends only on
    time between jumps, so the RK4 stages are evaluated on a vectorized grid.
    """
    gap = t_new - fs.t
    if gap < 0:
        raise ValueError("filter time cannot go backwards")
    if gap == 0 or not fs.observables:
        return replace(fs, t=t_new)
    n_sub = max(10, int(math.ceil(gap / (1e-3 / params.nu))))
    h = gap / n_sub
    starts = fs.t + h * np.arange(n_sub)
    est = dict(fs.estimates)
    for name, x in fs.observables.items():
        coeff, omega = _drift_coefficients(fs.psi_cond, np.asarray(x, dtype=complex), params)

        def f(s):
            return np.real(np.einsum("ij,nij->n", coeff, np.exp(1j * omega[None] * s[:, None, None])))

        k1 = f(starts)
        k23 = f(starts + 0.5 * h)
        k4 = f(starts + h)
        est[name] = est[name] + math.fsum(h / 6.0 * (k1 + 4.0 * k23 + k4))
    return replace(fs, t=t_new, estimates=est)


def kappa(fs: FilterState, k: int, name: str, params: CatModelParams, t: float | None = None) -> float:
    """κ_k(X) = ε(V_k† X V_k)/ε(V_k† V_k) − ε(X), evaluated on X(t)."""
    t = fs.t if t is None else t
    v = interaction_picture_kraus(t, params)[k]
    xt = heisenberg_evolve(fs.observables[name], t, params)
    norm2 = fs.expect(dag(v) @ v).real
    if norm2 <= PROB_FLOOR:
        raise ForbiddenOutcome(f"outcome {k} has zero amplitude on the conditional state")
    return (fs.expect(dag(v) @ xt @ v).real / norm2) - fs.expect(xt).real


def belavkin_step(fs: FilterState, k: int, t_jump: float, params: CatModelParams) -> FilterState:
    """Drift to ``t_jump`` and apply the jump Ψ -> V_k Ψ / |V_k Ψ|; every tracked
    estimate moves by κ_k."""
    fs = filter_drift(fs, t_jump, params)
    est = {name: val + kappa(fs, k, name, params) for name, val in fs.estimates.items()}
    psi, _ = kraus_update(fs.psi_cond, k, t_jump, params)
    counts = list(fs.counts)
    counts[k] += 1
    return replace(fs, psi_cond=psi, counts=tuple(counts), estimates=est)


def filter_estimate_step(fs: FilterState, dt: float, outcome: int | None, params: CatModelParams) -> FilterState:
    """Advance the filter by ``dt``; if ``outcome`` is given it is observed at the end."""
    if outcome is None:
        return filter_drift(fs, fs.t + dt, params)
    return belavkin_step(fs, outcome, fs.t + dt, params)


def run_filter(
    oc: OutcomeChain,
    params: CatModelParams,
    observables: Mapping[str, np.ndarray],
    t_end: float | None = None,
) -> list[FilterState]:
    """Filter states right after each jump (index 0 is the initial state)."""
    fs = FilterState.initial(params, observables)
    path = [fs]
    for s, k in zip(oc.times, oc.outcomes):
        fs = filter_estimate_step(fs, s - fs.t, k, params)
        path.append(fs)
    if t_end is not None and t_end > fs.t:
        path.append(filter_estimate_step(fs, t_end - fs.t, None, params))
    return path


def pathwise_deviation(
    oc: OutcomeChain, params: CatModelParams, observables: Mapping[str, np.ndarray]
) -> tuple[float, float, float]:
    """Run the filter along ``oc`` and compare with from-scratch quantities at
    every jump. Returns (max state deviation, max estimate deviation, max |κ_2|).

    κ_2 is only evaluated when outcome 2 is possible (q > 0).
    """
    path = run_filter(oc, params, observables)
    ds = de = k2 = 0.0
    for j, fs in enumerate(path):
        pre = oc.prefix(j)
        ds = max(ds, float(np.max(np.abs(fs.psi_cond - filtering_wavefunction(pre, params)))))
        for name, x in observables.items():
            de = max(de, abs(fs.estimates[name] - conditional_expectation_direct(x, pre, params, fs.t)))
            if params.q > 0:
                k2 = max(k2, abs(kappa(fs, 2, name, params)))
    return ds, de, k2


def class_key(labels, n_fine: int) -> str:
    labels = [int(k) for k in labels if k >= 0]
    if not labels:
        return "empty"
    if len(labels) <= n_fine:
        return "".join(str(k) for k in labels)
    return "long-death" if 1 in labels else "long-nodeath"


def girsanov_output_distribution(
    t: float,
    params: CatModelParams,
    trunc: TruncationConfig | None = None,
    n_fine: int = 3,
    accuracy: float = DEFAULT_ACCURACY,
) -> dict[str, float]:
    """Output distribution over label sequences.

    Sequences of length ≤ ``n_fine`` are listed individually with probability
    e^{-νt}(νt)^n/n! Π ‖V_k ψ_c‖^2, the product of the filter's step
    probabilities. Longer sequences are lumped by whether they contain the
    death; the lumps are truncated at the certified n_max.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    nu_t = params.nu * t
    cfg = _truncation(nu_t, trunc, accuracy)
    ops = kraus_triple(params.p).operators
    dist: dict[str, float] = {"empty": poisson_weight(0, nu_t)}
    frontier = [((), fix_phase(params.psi0), 1.0)]
    for n in range(1, n_fine + 1):
        nxt = []
        pw = poisson_weight(n, nu_t)
        for seq, psi, w in frontier:
            for k, v in zip(OUTCOMES, ops):
                u = v @ psi
                pk = float(np.vdot(u, u).real)
                new_seq = seq + (k,)
                dist["".join(map(str, new_seq))] = pw * w * pk
                if pk > PROB_FLOOR:
                    nxt.append((new_seq, fix_phase(u / math.sqrt(pk)), w * pk))
        frontier = nxt
    if cfg.n_max > n_fine:
        wd = death_resolved_weights(params, cfg.n_max)
        pw = np.array([poisson_weight(n, nu_t) for n in range(n_fine + 1, cfg.n_max + 1)])
        dist["long-nodeath"] = float(pw @ wd[n_fine + 1:, 0])
        dist["long-death"] = float(pw @ wd[n_fine + 1:, 1])
    else:
        dist["long-nodeath"] = dist["long-death"] = 0.0
    return dist


def empirical_class_frequencies(ens: Ensemble, n_fine: int = 3) -> dict[str, int]:
    out: dict[str, int] = {}
    for row, n in zip(ens.labels, ens.n_jumps):
        key = class_key(row[:n], n_fine)
        out[key] = out.get(key, 0) + 1
    return out


def _merged_branches(params: CatModelParams, n_max: int):
    """Per chain length, the distinct conditional states with their total
    probability and death count. Branches with equal states are merged."""
    ops = kraus_triple(params.p).operators
    level = {(): (fix_phase(params.psi0), 1.0, 0)}
    yield level.values()
    for _ in range(n_max):
        nxt: dict = {}
        for psi, mass, deaths in level.values():
            for k, v in zip(OUTCOMES, ops):
                u = v @ psi
                pk = float(np.vdot(u, u).real)
                if pk <= PROB_FLOOR:
                    continue
                new = fix_phase(u / math.sqrt(pk))
                d = deaths + (k == 1)
                key = (d,) + tuple(np.round(np.concatenate([new.real, new.imag]), 11))
                if key in nxt:
                    old = nxt[key]
                    nxt[key] = (old[0], old[1] + mass * pk, d)
                else:
                    nxt[key] = (new, mass * pk, d)
        level = nxt
        yield level.values()


def coarse_estimates(
    x: np.ndarray,
    t: float,
    params: CatModelParams,
    trunc: TruncationConfig | None = None,
    accuracy: float = DEFAULT_ACCURACY,
) -> dict[str, tuple[float, float]]:
    """Filter estimate of X(t) conditioned on the three coarse classes
    (no observation, observations without death, with death).

    Returns ``{class: (probability, estimate)}``; classes of zero probability
    report estimate ``nan``.
    """
    nu_t = params.nu * t
    cfg = _truncation(nu_t, trunc, accuracy)
    xt = heisenberg_evolve(x, t, params)
    mass = {"empty": 0.0, "class0": 0.0, "class1": 0.0}
    weighted = dict.fromkeys(mass, 0.0)
    for n, branches in enumerate(_merged_branches(params, cfg.n_max)):
        pw = poisson_weight(n, nu_t)
        for psi, m, deaths in branches:
            key = "empty" if n == 0 else ("class1" if deaths else "class0")
            mass[key] += pw * m
            weighted[key] += pw * m * float(np.vdot(psi, xt @ psi).real)
    return {k: (mass[k], weighted[k] / mass[k] if mass[k] > 0 else float("nan")) for k in mass}


def ltp_filter_check(
    x: np.ndarray,
    t: float,
    params: CatModelParams,
    trunc: TruncationConfig | None = None,
    accuracy: float = DEFAULT_ACCURACY,
) -> float:
    """|Σ_branches P(branch) ε_t(X(t)) − Tr[ρ(t) X(t)]| with ρ(t) in closed form."""
    nu_t = params.nu * t
    cfg = _truncation(nu_t, trunc, accuracy)
    xt = heisenberg_evolve(x, t, params)
    lhs = 0.0
    for n, branches in enumerate(_merged_branches(params, cfg.n_max)):
        pw = poisson_weight(n, nu_t)
        lhs += pw * sum(m * float(np.vdot(psi, xt @ psi).real) for psi, m, _ in branches)
    rhs = float(np.trace(marginal_analytic(t, params) @ xt).real)
    return abs(lhs - rhs)


def ground_state_overlap(psi: np.ndarray) -> float:
    """|⟨g|ψ⟩|, equal to 1 exactly when ψ is |g⟩ up to phase."""
    return float(abs(np.vdot(G, psi)))
