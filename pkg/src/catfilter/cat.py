"""The atom-cat model.

Basis conventions: atom ``{|g>, |e>}`` = indices ``(0, 1)``, cat ``{|0>, |1>, |2>}``.
The 6-dim composite index is cat-major, ``cat * 2 + atom``, so block ``(i, j)`` of
the interaction operator is the atom operator ``⟨i|S|j⟩``.

Cat outcome labels: 0 = dying observed / ground inferred, 1 = death event,
2 = uninformative alive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dilation import KrausFamily, NormalState, kraus_from_unitary
from .operators import basis_ket, dag

G = basis_ket(2, 0)
E = basis_ket(2, 1)
J = np.outer(G, E.conj())  # |g><e|
PG = np.outer(G, G.conj())
PE = np.outer(E, E.conj())
I2 = np.eye(2, dtype=complex)

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)  # |g><g| - |e><e|

OUTCOMES = (0, 1, 2)


@dataclass(frozen=True)
class CatModelParams:
    p: float = 1.0
    nu: float = 1.0
    alpha: complex = 1 / math.sqrt(2)
    beta: complex = 1 / math.sqrt(2)
    eps_g: float = 0.0
    eps_e: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"coupling probability p={self.p} outside [0, 1]")
        if not self.nu > 0:
            raise ValueError(f"observation frequency nu={self.nu} must be positive")
        norm2 = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm2 - 1.0) > 1e-12:
            raise ValueError(f"|alpha|^2 + |beta|^2 = {norm2!r}, expected 1")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def eps(self) -> float:
        return self.eps_e - self.eps_g

    @property
    def psi0(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=complex)

    @property
    def rho0(self) -> np.ndarray:
        return np.outer(self.psi0, self.psi0.conj())

    @property
    def hamiltonian(self) -> np.ndarray:
        return np.diag([self.eps_g, self.eps_e]).astype(complex)


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"coupling probability p={p} outside [0, 1]")


def build_S(p: float) -> np.ndarray:
    """6x6 Hermitian, involutive atom-cat interaction operator."""
    _check_p(p)
    q = 1.0 - p
    sp, sq, sqp = math.sqrt(p), math.sqrt(q), math.sqrt(q * p)
    jd = dag(J)
    jjd, jdj = J @ jd, jd @ J
    return np.block(
        [
            [sp * jjd, sp * jd, sq * I2],
            [sp * J, jdj + q * jjd, -sqp * J],
            [sq * I2, -sqp * jd, p * jdj - sp * jjd],
        ]
    )


@dataclass(frozen=True)
class KrausTriple:
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray

    def __post_init__(self):
        total = sum(dag(v) @ v for v in self.operators)
        if np.max(np.abs(total - I2)) > 1e-12:
            raise ValueError("Kraus triple is not complete")

    @property
    def operators(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.v0, self.v1, self.v2)

    def __getitem__(self, k: int) -> np.ndarray:
        return self.operators[k]

    def family(self) -> KrausFamily:
        return KrausFamily(self.operators, OUTCOMES)


def kraus_triple(p: float) -> KrausTriple:
    """{√p|g><g|, √p J, √q 1}."""
    _check_p(p)
    return KrausTriple(math.sqrt(p) * PG, math.sqrt(p) * J, math.sqrt(1.0 - p) * I2)


def kraus_from_S(p: float) -> KrausFamily:
    """Kraus operators read off the first block column of ``build_S(p)``."""
    basis = [basis_ket(3, k) for k in range(3)]
    return kraus_from_unitary(build_S(p), basis[0], basis, apparatus_first=True)


def isometry(p: float) -> np.ndarray:
    """S|0>: the 6x2 isometry stacking V_0, V_1, V_2."""
    return build_S(p)[:, :2]


def channel_phi(rho, p: float) -> NormalState:
    """p|g><g| + q ρ."""
    rho = rho.density if isinstance(rho, NormalState) else np.asarray(rho, dtype=complex)
    _check_p(p)
    return NormalState(p * PG * np.trace(rho) + (1.0 - p) * rho)


def phase(t: float, params: CatModelParams) -> complex:
    """u(t) = exp(-i ε t)."""
    return complex(np.exp(-1j * params.eps * t))


def interaction_picture_kraus(t: float, params: CatModelParams) -> KrausTriple:
    """Kraus triple of S(t) = e^{iHt} S e^{-iHt}; only V_1 picks up the phase u(t)."""
    base = kraus_triple(params.p)
    return KrausTriple(base.v0, base.v1 * phase(t, params), base.v2)


def heisenberg_evolve(x: np.ndarray, t: float, params: CatModelParams) -> np.ndarray:
    """X(t) = e^{iHt} X e^{-iHt} for the diagonal atomic Hamiltonian."""
    x = np.asarray(x, dtype=complex)
    if x.shape != (2, 2):
        raise ValueError("atomic observables are 2x2")
    d = np.exp(1j * np.array([params.eps_g, params.eps_e]) * t)
    return d[:, None] * x * d.conj()[None, :]
