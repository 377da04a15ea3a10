"""Conditional expectations, the law of total probability, and measurement dilations."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .operators import (
    STRUCT_TOL,
    dag,
    eig_hermitian,
    is_hermitian,
    is_unitary,
    max_abs,
    partial_trace,
    random_unitary,
)

PROB_FLOOR = 1e-14


class ImpossibleObservation(ValueError):
    """Raised when an outcome of zero probability is conditioned on."""


@dataclass(frozen=True)
class NormalState:
    """Density operator, optionally remembering the pure vector it came from."""

    density: np.ndarray
    ket: np.ndarray | None = None

    def __post_init__(self):
        rho = np.asarray(self.density, dtype=complex)
        object.__setattr__(self, "density", rho)
        if not is_hermitian(rho, STRUCT_TOL):
            raise ValueError("density must be Hermitian")
        if abs(np.trace(rho).real - 1.0) > STRUCT_TOL:
            raise ValueError(f"density trace {np.trace(rho).real!r} is not 1")
        if np.linalg.eigvalsh(rho)[0] < -STRUCT_TOL:
            raise ValueError("density has a negative eigenvalue")

    @classmethod
    def pure(cls, psi) -> "NormalState":
        psi = np.asarray(psi, dtype=complex).ravel()
        if abs(np.linalg.norm(psi) - 1.0) > 1e-12:
            raise ValueError("pure state vector must be normalized")
        return cls(np.outer(psi, psi.conj()), psi)

    @property
    def is_pure(self) -> bool:
        return self.ket is not None

    @property
    def dim(self) -> int:
        return self.density.shape[0]

    def expect(self, a: np.ndarray) -> complex:
        if self.ket is not None:
            return complex(np.vdot(self.ket, a @ self.ket))
        return complex(np.trace(self.density @ a))


def as_state(state) -> NormalState:
    if isinstance(state, NormalState):
        return state
    arr = np.asarray(state, dtype=complex)
    return NormalState.pure(arr) if arr.ndim == 1 else NormalState(arr)


@dataclass(frozen=True)
class OrthoResolution:
    """Complete family of mutually orthogonal projectors, one per outcome."""

    projectors: tuple[np.ndarray, ...]
    labels: tuple = field(default=())

    def __post_init__(self):
        ps = tuple(np.asarray(p, dtype=complex) for p in self.projectors)
        object.__setattr__(self, "projectors", ps)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(len(ps))))
        if len(self.labels) != len(ps):
            raise ValueError("one label per projector")
        n = ps[0].shape[0]
        if max_abs(sum(ps) - np.eye(n)) > STRUCT_TOL:
            raise ValueError("projectors do not sum to the identity")
        for i, p in enumerate(ps):
            if max_abs(p @ p - p) > STRUCT_TOL or max_abs(p - dag(p)) > STRUCT_TOL:
                raise ValueError(f"element {i} is not a projector")
            for q in ps[i + 1:]:
                if max_abs(p @ q) > STRUCT_TOL:
                    raise ValueError("projectors are not mutually orthogonal")

    @classmethod
    def from_projector(cls, p: np.ndarray) -> "OrthoResolution":
        p = np.asarray(p, dtype=complex)
        return cls((p, np.eye(p.shape[0]) - p))

    @property
    def dim(self) -> int:
        return self.projectors[0].shape[0]

    def pinch(self, rho: np.ndarray) -> np.ndarray:
        return sum(p @ rho @ p for p in self.projectors)


@dataclass(frozen=True)
class KrausFamily:
    operators: tuple[np.ndarray, ...]
    labels: tuple = field(default=())

    def __post_init__(self):
        ops = tuple(np.asarray(v, dtype=complex) for v in self.operators)
        object.__setattr__(self, "operators", ops)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(len(ops))))
        if self.completeness_defect() > STRUCT_TOL:
            raise ValueError("Kraus operators are not complete: sum V^dag V != I")

    def completeness_defect(self) -> float:
        n = self.operators[0].shape[1]
        return max_abs(sum(dag(v) @ v for v in self.operators) - np.eye(n))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(v @ rho @ dag(v) for v in self.operators)


def cond_exp_commutant(a: np.ndarray, p: np.ndarray) -> np.ndarray:
    """State-free pinching onto the commutant of {P, I - P}: PAP + QAQ."""
    a = np.asarray(a, dtype=complex)
    p = np.asarray(p, dtype=complex)
    q = np.eye(p.shape[0]) - p
    return p @ a @ p + q @ a @ q


def _outcome_weights(res: OrthoResolution, state: NormalState):
    probs = [state.expect(p).real for p in res.projectors]
    if max(probs) <= PROB_FLOOR:
        raise ImpossibleObservation("every outcome has zero probability")
    return probs


def cond_exp_abelian(a: np.ndarray, res: OrthoResolution, state) -> np.ndarray:
    """Σ_k (E[P_k A P_k] / E[P_k]) P_k over outcomes of non-zero probability."""
    state = as_state(state)
    a = np.asarray(a, dtype=complex)
    out = np.zeros_like(a)
    for p, prob in zip(res.projectors, _outcome_weights(res, state)):
        if prob > PROB_FLOOR:
            out += state.expect(p @ a @ p) / prob * p
    return out


def check_ltp(a: np.ndarray, res: OrthoResolution, state, tol: float = 1e-10) -> tuple[bool, float]:
    """Law of total probability: |E[ε(A)] − E[A]|."""
    state = as_state(state)
    defect = abs(state.expect(cond_exp_abelian(a, res, state)) - state.expect(np.asarray(a)))
    return defect <= tol, float(defect)


@dataclass(frozen=True)
class Purification:
    psi_tilde: np.ndarray  # dim_h x dim_k
    psi: np.ndarray  # vector on h ⊗ k
    dual: OrthoResolution  # resolution on k
    dims: tuple[int, int]


def purify_pinched(rho, res: OrthoResolution, tol: float = STRUCT_TOL) -> Purification:
    """Purify a pinching-invariant density so that conditioning becomes a
    conditional expectation onto an abelian algebra on the added factor.

    Eigenvectors of ρ are chosen inside each range(E_k); each becomes one
    basis vector ξ_i of the dual space and P_k collects the ξ_i belonging to
    E_k. Outcomes of zero weight get one fresh dimension each. Coefficients
    are the non-negative square roots of ρ's eigenvalues.
    """
    rho = as_state(rho).density
    if max_abs(res.pinch(rho) - rho) > tol:
        raise ValueError("state is not invariant under the pinching of the resolution")
    n = rho.shape[0]
    columns: list[np.ndarray] = []
    groups: list[list[int]] = []
    for e in res.projectors:
        dec_e = eig_hermitian(e)
        frame = dec_e.eigenvectors[:, dec_e.eigenvalues > 0.5]
        idx: list[int] = []
        if frame.shape[1]:
            block = eig_hermitian(dag(frame) @ rho @ frame)
            for w, u in zip(block.eigenvalues, block.eigenvectors.T):
                if w > PROB_FLOOR:
                    idx.append(len(columns))
                    columns.append(np.sqrt(w) * (frame @ u))
        groups.append(idx)
    n_extra = sum(1 for g in groups if not g)
    m = len(columns) + n_extra
    psi_tilde = np.zeros((n, m), dtype=complex)
    for i, col in enumerate(columns):
        psi_tilde[:, i] = col
    dual = []
    extra = len(columns)
    for g in groups:
        d = np.zeros(m)
        if g:
            d[g] = 1.0
        else:
            d[extra] = 1.0
            extra += 1
        dual.append(np.diag(d).astype(complex))
    return Purification(
        psi_tilde=psi_tilde,
        psi=psi_tilde.reshape(-1),
        dual=OrthoResolution(tuple(dual), res.labels),
        dims=(n, m),
    )


def kraus_from_unitary(
    u: np.ndarray,
    prepared: np.ndarray,
    basis: Sequence[np.ndarray],
    apparatus_first: bool = False,
    tol: float = STRUCT_TOL,
) -> KrausFamily:
    """V_k = (1 ⊗ ⟨ξ_k|) U (1 ⊗ |ξ_0⟩) for an object ⊗ apparatus unitary.

    With ``apparatus_first`` the composite index is apparatus-major
    (apparatus ⊗ object), as for the cat-model interaction operator.
    """
    u = np.asarray(u, dtype=complex)
    prepared = np.asarray(prepared, dtype=complex)
    basis_m = np.column_stack([np.asarray(b, dtype=complex) for b in basis])
    dk = prepared.shape[0]
    if not is_unitary(u, tol):
        raise ValueError("coupling operator is not unitary")
    if basis_m.shape != (dk, dk) or max_abs(dag(basis_m) @ basis_m - np.eye(dk)) > tol:
        raise ValueError("apparatus basis must be orthonormal and complete")
    if abs(np.linalg.norm(prepared) - 1.0) > tol:
        raise ValueError("prepared apparatus state must be normalized")
    dh, rem = divmod(u.shape[0], dk)
    if rem:
        raise ValueError("unitary dimension is not a multiple of the apparatus dimension")
    eye = np.eye(dh)
    if apparatus_first:
        inject = np.kron(prepared[:, None], eye)
        ops = [np.kron(basis_m[:, k].conj()[None, :], eye) @ u @ inject for k in range(dk)]
    else:
        inject = np.kron(eye, prepared[:, None])
        ops = [np.kron(eye, basis_m[:, k].conj()[None, :]) @ u @ inject for k in range(dk)]
    return KrausFamily(tuple(ops))


def project_postulate(psi: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Lüders update ψ -> Pψ / ‖Pψ‖."""
    v = np.asarray(p, dtype=complex) @ np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(v)
    if norm <= np.sqrt(PROB_FLOOR):
        raise ImpossibleObservation("projector annihilates the state")
    return v / norm


def two_time_cond_exp(x: np.ndarray, u_r: np.ndarray, p: np.ndarray, state_s) -> tuple[np.ndarray, float]:
    """Condition the evolved observable U†XU on the outcome {P, I−P} seen before
    the evolution. Returns the estimate in span{P, Q} and its LTP defect."""
    state_s = as_state(state_s)
    u_r = np.asarray(u_r, dtype=complex)
    evolved = dag(u_r) @ np.asarray(x, dtype=complex) @ u_r
    res = OrthoResolution.from_projector(p)
    estimate = cond_exp_abelian(evolved, res, state_s)
    _, defect = check_ltp(evolved, res, state_s)
    return estimate, defect


def random_pinched_instance(rng: np.random.Generator, dim: int):
    """Random resolution of C^dim into 1..dim blocks and a density commuting with it."""
    u = random_unitary(dim, rng)
    n_blocks = int(rng.integers(1, dim + 1))
    cuts = np.sort(rng.choice(np.arange(1, dim), size=n_blocks - 1, replace=False)) if n_blocks > 1 else []
    bounds = [0, *cuts, dim]
    projs, rho = [], np.zeros((dim, dim), complex)
    for lo, hi in zip(bounds, bounds[1:]):
        frame = u[:, lo:hi]
        projs.append(frame @ dag(frame))
        k = hi - lo
        g = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
        block = g @ dag(g) * rng.uniform(0.0, 1.0)
        rho += frame @ block @ dag(frame)
    if np.trace(rho).real == 0:
        rho = np.eye(dim) / dim
    rho /= np.trace(rho).real
    return 0.5 * (rho + dag(rho)), OrthoResolution(tuple(projs))


def purification_residuals(rho, res: OrthoResolution, rng: np.random.Generator, n_observables: int = 100):
    pur = purify_pinched(rho, res)
    n, m = pur.dims
    marginal = max_abs(partial_trace(np.outer(pur.psi, pur.psi.conj()), keep=0, dims=(n, m)) - rho)
    intertwine = max(max_abs(e @ pur.psi_tilde - pur.psi_tilde @ pk.T) for e, pk in zip(res.projectors, pur.dual.projectors))
    corr = 0.0
    for _ in range(n_observables):
        g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        x = 0.5 * (g + dag(g))
        for e, pk in zip(res.projectors, pur.dual.projectors):
            lhs = np.trace(rho @ e @ x @ e)
            rhs = np.vdot(pur.psi, np.kron(x, pk) @ pur.psi)
            corr = max(corr, abs(lhs - rhs))
    return marginal, intertwine, corr
