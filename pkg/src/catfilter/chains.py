"""Exact computations on chains of observation times.

Everything here is deterministic. Sums over chain length ``n`` are truncated
at ``n_max`` and carry a certified bound on the discarded Poisson mass.

In the interaction picture ``|c_{k1..kn}|^2`` does not depend on the jump
times, so integrals over the simplex of n-chains collapse to ``(νt)^n / n!``
times a sum over label sequences. Label sequences are summed by carrying the
unnormalized conditional density, split by the number of deaths seen so far.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .cat import CatModelParams, build_S, channel_phi, interaction_picture_kraus, kraus_triple, PG
from .operators import dag, max_abs, partial_trace

DEFAULT_ACCURACY = 1e-12
N_CAP = 2000


class TruncationError(RuntimeError):
    """The requested accuracy cannot be certified by the Poisson tail bound."""


class StepRejected(RuntimeError):
    pass


@dataclass(frozen=True)
class Chain:
    times: tuple[float, ...] = ()
    horizon: float = math.inf

    def __post_init__(self):
        ts = tuple(float(t) for t in self.times)
        object.__setattr__(self, "times", ts)
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("chain times must be strictly increasing")
        if ts and (ts[0] < 0 or ts[-1] > self.horizon):
            raise ValueError("chain times must lie in [0, horizon]")

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class OutcomeChain:
    chain: Chain
    outcomes: tuple[int, ...] = ()

    def __post_init__(self):
        outs = tuple(int(k) for k in self.outcomes)
        object.__setattr__(self, "outcomes", outs)
        if len(outs) != len(self.chain):
            raise ValueError("need exactly one outcome per time")
        if any(k not in (0, 1, 2) for k in outs):
            raise ValueError("outcomes must be 0, 1 or 2")

    @classmethod
    def of(cls, times: Sequence[float], outcomes: Sequence[int]) -> "OutcomeChain":
        return cls(Chain(tuple(times)), tuple(outcomes))

    @property
    def times(self) -> tuple[float, ...]:
        return self.chain.times

    def __len__(self) -> int:
        return len(self.outcomes)

    def prefix(self, n: int) -> "OutcomeChain":
        return OutcomeChain(Chain(self.times[:n]), self.outcomes[:n])


def poisson_weight(n: int, nu_t: float) -> float:
    """(νt)^n / n! e^{-νt}."""
    if n < 0 or nu_t < 0:
        raise ValueError("need n >= 0 and nu_t >= 0")
    if nu_t == 0:
        return 1.0 if n == 0 else 0.0
    return math.exp(n * math.log(nu_t) - nu_t - math.lgamma(n + 1))


def poisson_tail_bound(n_max: int, nu_t: float) -> float:
    """Upper bound on Σ_{n > n_max} poisson_weight(n, νt).

    Successive weight ratios past n_max are at most νt/(n_max + 2), so the
    tail is dominated by a geometric series. Returns 1 when that ratio is
    not below 1 (no certificate).
    """
    if nu_t == 0:
        return 0.0
    ratio = nu_t / (n_max + 2)
    if ratio >= 1:
        return 1.0
    return min(1.0, poisson_weight(n_max + 1, nu_t) / (1.0 - ratio))


@dataclass(frozen=True)
class TruncationConfig:
    n_max: int
    tail_bound: float

    @classmethod
    def for_accuracy(cls, nu_t: float, accuracy: float = DEFAULT_ACCURACY) -> "TruncationConfig":
        if accuracy <= 0:
            raise TruncationError("accuracy must be positive")
        n = max(0, int(math.ceil(nu_t)))
        while poisson_tail_bound(n, nu_t) > accuracy:
            n += 1
            if n > N_CAP:
                raise TruncationError(f"cannot certify tail <= {accuracy} with n_max <= {N_CAP}")
        return cls(n, poisson_tail_bound(n, nu_t))

    @classmethod
    def fixed(cls, n_max: int, nu_t: float) -> "TruncationConfig":
        return cls(n_max, poisson_tail_bound(n_max, nu_t))

    def require(self, accuracy: float) -> "TruncationConfig":
        if self.tail_bound > accuracy:
            raise TruncationError(
                f"n_max={self.n_max} leaves tail bound {self.tail_bound:.3e} > {accuracy:.3e}"
            )
        return self


def _truncation(nu_t: float, trunc: TruncationConfig | None, accuracy: float) -> TruncationConfig:
    if trunc is None:
        return TruncationConfig.for_accuracy(nu_t, accuracy)
    return TruncationConfig.fixed(trunc.n_max, nu_t).require(accuracy)


def marginal_exact(
    t: float,
    params: CatModelParams,
    trunc: TruncationConfig | None = None,
    accuracy: float = DEFAULT_ACCURACY,
) -> np.ndarray:
    """Truncated chain sum Σ_n Φ^n(ρ0) Poisson(n, νt), with Φ applied through
    the Kraus triple. The trace falls short of 1 by at most the tail bound."""
    if t < 0:
        raise ValueError("t must be non-negative")
    nu_t = params.nu * t
    cfg = _truncation(nu_t, trunc, accuracy)
    ops = kraus_triple(params.p).operators
    rho_n = params.rho0
    out = poisson_weight(0, nu_t) * rho_n
    for n in range(1, cfg.n_max + 1):
        rho_n = sum(v @ rho_n @ dag(v) for v in ops)
        out = out + poisson_weight(n, nu_t) * rho_n
    return out


def marginal_analytic(t: float, params: CatModelParams) -> np.ndarray:
    """|ψ><ψ| e^{-pνt} + |g><g| (1 - e^{-pνt})."""
    if t < 0:
        raise ValueError("t must be non-negative")
    decay = math.exp(-params.p * params.nu * t)
    return params.rho0 * decay + PG * (1.0 - decay)


def lindblad_rhs(rho: np.ndarray, params: CatModelParams, picture: str = "interaction") -> np.ndarray:
    """i[ρ, H] + ν(Φ(ρ) − ρ); the commutator is dropped in the interaction picture."""
    rho = np.asarray(rho, dtype=complex)
    q = 1.0 - params.p
    out = params.nu * (params.p * PG * np.trace(rho) + q * rho - rho)
    if picture == "schrodinger":
        h = params.hamiltonian
        out = out + 1j * (rho @ h - h @ rho)
    elif picture != "interaction":
        raise ValueError(f"unknown picture {picture!r}")
    return out


def lindblad_rhs_dilation(rho: np.ndarray, params: CatModelParams, picture: str = "interaction") -> np.ndarray:
    """Same generator written through L = √ν (S − I)|0>:

    i[ρ, H_eff] + L̃(ρ ⊗ 1)L̃† − ½{L†L, ρ}, with the effective potential
    V_eff = iν(S_00 − S_00†)/2 built from the top-left block of S.
    """
    rho = np.asarray(rho, dtype=complex)
    s = build_S(params.p)
    col = s[:, :2] - np.vstack([np.eye(2), np.zeros((4, 2))])
    ls = [math.sqrt(params.nu) * col[2 * k: 2 * k + 2] for k in range(3)]
    lsq = sum(dag(l) @ l for l in ls)
    s00 = s[:2, :2]
    h_eff = 1j * params.nu * (s00 - dag(s00)) / 2
    if picture == "schrodinger":
        h_eff = h_eff + params.hamiltonian
    elif picture != "interaction":
        raise ValueError(f"unknown picture {picture!r}")
    out = sum(l @ rho @ dag(l) for l in ls) - 0.5 * (lsq @ rho + rho @ lsq)
    return out + 1j * (rho @ h_eff - h_eff @ rho)


def lindblad_integrate(
    rho0: np.ndarray,
    t_max: float,
    dt: float,
    params: CatModelParams,
    picture: str = "interaction",
    trace_tol: float = 1e-8,
) -> tuple[np.ndarray, np.ndarray]:
    """Classical RK4. Returns ``(times, states)`` with ``states[i]`` at ``times[i]``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_max < 0:
        raise ValueError("t_max must be non-negative")
    rho = np.array(rho0, dtype=complex)
    n_steps = int(math.ceil(t_max / dt - 1e-9)) if t_max > 0 else 0
    times = np.empty(n_steps + 1)
    states = np.empty((n_steps + 1, 2, 2), dtype=complex)
    times[0], states[0] = 0.0, rho
    tr0 = np.trace(rho).real
    t = 0.0

    def f(r):
        return lindblad_rhs(r, params, picture)

    for i in range(1, n_steps + 1):
        h = min(dt, t_max - t)
        k1 = f(rho)
        k2 = f(rho + 0.5 * h * k1)
        k3 = f(rho + 0.5 * h * k2)
        k4 = f(rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = i * dt if i < n_steps else t_max
        if abs(np.trace(rho).real - tr0) > trace_tol:
            raise StepRejected(f"trace drifted by more than {trace_tol} at t={t}")
        times[i], states[i] = t, rho
    return times, states


def sequence_weight(outcomes: Sequence[int], params: CatModelParams, times: Sequence[float] | None = None) -> float:
    """|c_{k1..kn}|^2 = ‖V_{kn} ... V_{k1} ψ‖^2."""
    v = params.psi0
    for i, k in enumerate(outcomes):
        tk = 0.0 if times is None else times[i]
        v = interaction_picture_kraus(tk, params)[k] @ v
    return float(np.vdot(v, v).real)


def trajectory_probability(oc: OutcomeChain, t: float, params: CatModelParams, integrated: bool = False) -> float:
    """Density e^{-νt} |c|^2 ν^n of a timed outcome chain.

    With ``integrated`` the jump times are integrated over the simplex,
    giving the probability of the label sequence: |c|^2 (νt)^n / n! e^{-νt}.
    """
    if oc.times and t < oc.times[-1]:
        raise ValueError("t must not precede the last jump")
    w = sequence_weight(oc.outcomes, params, oc.times)
    n = len(oc)
    if integrated:
        return w * poisson_weight(n, params.nu * t)
    return w * math.exp(-params.nu * t) * params.nu ** n


def death_resolved_weights(params: CatModelParams, n_max: int) -> np.ndarray:
    """``w[n, d]`` = total |c|^2 of length-n label sequences with d deaths (d ≤ 2).

    Carries the unnormalized density summed over sequences, split by death
    count; mass with two deaths must vanish because V_1 is nilpotent on the
    reachable states.
    """
    v0, v1, v2 = kraus_triple(params.p).operators
    blocks = [params.rho0, np.zeros((2, 2), complex), np.zeros((2, 2), complex)]
    w = np.zeros((n_max + 1, 3))
    w[0, 0] = 1.0
    for n in range(1, n_max + 1):
        keep = [v0 @ b @ dag(v0) + v2 @ b @ dag(v2) for b in blocks]
        kill = [v1 @ b @ dag(v1) for b in blocks]
        blocks = [keep[0], keep[1] + kill[0], keep[2] + kill[1] + kill[2]]
        w[n] = [np.trace(b).real for b in blocks]
    return w


@dataclass(frozen=True)
class ClassProbabilities:
    p_empty: float
    p_class0: float
    p_class1: float
    tail_bound: float

    @property
    def total(self) -> float:
        return self.p_empty + self.p_class0 + self.p_class1


def class_probabilities(
    t: float,
    params: CatModelParams,
    trunc: TruncationConfig | None = None,
    accuracy: float = DEFAULT_ACCURACY,
) -> ClassProbabilities:
    """Probabilities of no observation, observations without a death, and
    observations containing the (single) death."""
    if t < 0:
        raise ValueError("t must be non-negative")
    nu_t = params.nu * t
    cfg = _truncation(nu_t, trunc, accuracy)
    w = death_resolved_weights(params, cfg.n_max)
    pw = np.array([poisson_weight(n, nu_t) for n in range(cfg.n_max + 1)])
    if max_abs(w[:, 2]) > 1e-14:
        raise AssertionError("a second death carried probability mass")
    return ClassProbabilities(
        p_empty=float(pw[0]),
        p_class0=float(pw[1:] @ w[1:, 0]),
        p_class1=float(pw[1:] @ w[1:, 1]),
        tail_bound=cfg.tail_bound,
    )


@dataclass(frozen=True)
class CountingMoments:
    mean_deaths: float
    nu0: float
    nu1: float
    nu2: float


def intensities(t: float, params: CatModelParams, accuracy: float = DEFAULT_ACCURACY) -> tuple[float, float, float]:
    """ν_k(t) = ν Tr[V_k ρ(t) V_k†] with ρ(t) from the truncated chain sum."""
    rho = marginal_exact(t, params, accuracy=accuracy)
    ops = kraus_triple(params.p).operators
    return tuple(params.nu * float(np.trace(v @ rho @ dag(v)).real) for v in ops)


def counting_moments(
    t: float,
    params: CatModelParams,
    trunc: TruncationConfig | None = None,
    accuracy: float = DEFAULT_ACCURACY,
) -> CountingMoments:
    nu_t = params.nu * t
    cfg = _truncation(nu_t, trunc, accuracy)
    w = death_resolved_weights(params, cfg.n_max)
    pw = np.array([poisson_weight(n, nu_t) for n in range(cfg.n_max + 1)])
    mean = float(pw @ (w[:, 1] + 2 * w[:, 2]))
    return CountingMoments(mean, *intensities(t, params, accuracy))


def integrated_death_intensity(t: float, params: CatModelParams) -> float:
    """∫_0^t ν_1(s) ds by adaptive quadrature of the oracle intensity."""
    val, _ = integrate.quad(lambda s: intensities(s, params)[1], 0.0, t, epsabs=1e-13, epsrel=1e-13)
    return float(val)


def exp_series(x: float, n_max: int) -> float:
    """Σ_{n ≤ n_max} x^n / n!, accumulated term by term."""
    term, total = 1.0, 1.0
    for n in range(1, n_max + 1):
        term *= x / n
        total += term
    return total


def _series_terms(x: float, accuracy: float) -> int:
    # exp(|x|) scaled Poisson tail bound
    cfg = TruncationConfig.for_accuracy(abs(x), accuracy * math.exp(-abs(x)))
    return cfg.n_max


def sum_integral_check(
    t_split: float,
    horizon: float,
    g: Callable[[float], float] | float = 1.0,
    h: Callable[[float], float] | float = 1.0,
    accuracy: float = 1e-13,
) -> float:
    """|LHS − RHS| of the sum-integral formula for f(κ, ς) = Π g(κ_i) Π h(ς_j)
    with κ ⊂ [0, t_split) and ς ⊂ [t_split, horizon).

    LHS integrates the two chain variables separately: Σ_a G^a/a! · Σ_b H^b/b!.
    RHS integrates over one chain and sums over its splits; the split sum
    collapses to the product of (g on [0,t) + h on [t,T)), giving Σ_n M^n/n!.
    """
    if not 0 <= t_split <= horizon:
        raise ValueError("need 0 <= t_split <= horizon")
    gf = g if callable(g) else (lambda s, c=float(g): c)
    hf = h if callable(h) else (lambda s, c=float(h): c)
    big_g = integrate.quad(gf, 0.0, t_split, epsabs=1e-14)[0] if t_split > 0 else 0.0
    big_h = integrate.quad(hf, t_split, horizon, epsabs=1e-14)[0] if horizon > t_split else 0.0

    def m(s):
        return gf(s) if s < t_split else hf(s)

    pts = [t_split] if 0 < t_split < horizon else None
    big_m = integrate.quad(m, 0.0, horizon, points=pts, epsabs=1e-14)[0] if horizon > 0 else 0.0
    lhs = exp_series(big_g, _series_terms(big_g, accuracy)) * exp_series(big_h, _series_terms(big_h, accuracy))
    rhs = exp_series(big_m, _series_terms(big_m, accuracy))
    return abs(lhs - rhs)


def split_sum(chain: Sequence[float], t_split: float, g, h) -> tuple[float, float]:
    """Explicit sum over all 2^n splits of a chain versus the product form.

    Only splits respecting the time cut contribute, since f vanishes when
    κ reaches past ``t_split`` or ς reaches before it.
    """
    n = len(chain)
    total = 0.0
    for mask in range(1 << n):
        kappa = [chain[i] for i in range(n) if mask >> i & 1]
        sigma = [chain[i] for i in range(n) if not mask >> i & 1]
        if any(s >= t_split for s in kappa) or any(s < t_split for s in sigma):
            continue
        total += math.prod(g(s) for s in kappa) * math.prod(h(s) for s in sigma)
    product = math.prod(g(s) if s < t_split else h(s) for s in chain)
    return total, product


def coherent_norm(nu: float, t: float, accuracy: float = DEFAULT_ACCURACY) -> float:
    """‖Φ‖^2 for the coherent apparatus state on [0, t], as a truncated series."""
    cfg = TruncationConfig.for_accuracy(nu * t, accuracy)
    return math.fsum(poisson_weight(n, nu * t) for n in range(cfg.n_max + 1))


def evaluate_psi_on_chain(chain: Chain, t: float, params: CatModelParams) -> tuple[np.ndarray, float]:
    """Evaluation of the joint atom-cat wave function on a chain inside [0, t].

    Returns ``(vector, prefactor)``; the evaluation is ``prefactor * vector``
    with ``vector = Ṽ(t_n) ... Ṽ(t_1) ψ`` laid out as
    ``(cat_n, ..., cat_1, atom)`` and ``prefactor = ν^{n/2} e^{-νt/2}``.
    """
    if chain.times and (chain.times[0] < 0 or chain.times[-1] > t):
        raise ValueError("chain must lie inside [0, t]")
    state = params.psi0.reshape(2)
    for s in chain.times:
        iso = np.stack(interaction_picture_kraus(s, params).operators)  # (3, 2, 2)
        state = np.tensordot(iso, state, axes=([2], [state.ndim - 1]))
        # new cat axis first, previous cat axes, then the atom axis
        state = np.moveaxis(state, 1, -1)
    n = len(chain)
    return state.reshape(-1), params.nu ** (n / 2) * math.exp(-params.nu * t / 2)


def psi_norm_series(
    t: float,
    params: CatModelParams,
    rng: np.random.Generator,
    accuracy: float = DEFAULT_ACCURACY,
    explicit_max: int = 6,
) -> float:
    """Σ_n vol(simplex_n) ‖ψ_t(ϑ_n)‖^2 with ϑ_n a random chain of length n.

    The integrand does not depend on where the n points sit, so one sample
    chain per n suffices; the n-simplex in [0, t] has volume t^n / n!.
    Chains up to ``explicit_max`` points are evaluated as full vectors; longer
    ones through the reduced atomic density, tracing out each new cat factor.
    """
    cfg = TruncationConfig.for_accuracy(params.nu * t, accuracy)
    n_top = cfg.n_max if t > 0 else 0
    terms = []
    for n in range(n_top + 1):
        times = tuple(np.sort(rng.uniform(0.0, t, size=n)))
        if n <= explicit_max:
            vec, pref = evaluate_psi_on_chain(Chain(times), t, params)
            norm2 = pref ** 2 * float(np.vdot(vec, vec).real)
        else:
            rho = params.rho0
            for s in times:
                iso = np.vstack(interaction_picture_kraus(s, params).operators)
                rho = partial_trace(iso @ rho @ dag(iso), keep=1, dims=(3, 2))
            norm2 = params.nu ** n * math.exp(-params.nu * t) * float(np.trace(rho).real)
        log_vol = n * math.log(t) - math.lgamma(n + 1) if n else 0.0
        terms.append(math.exp(log_vol) * norm2)
    return math.fsum(terms)


def channel_power(rho: np.ndarray, p: float, n: int) -> np.ndarray:
    for _ in range(n):
        rho = channel_phi(rho, p).density
    return rho
