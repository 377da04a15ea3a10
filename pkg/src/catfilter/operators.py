"""Dense linear algebra on small Hilbert spaces.

Operators are plain complex ``numpy`` arrays and kets are 1-d arrays.
Composite spaces follow ``numpy.kron`` ordering: the first factor is the
most significant index.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

STRUCT_TOL = 1e-10
MEET_TOL = 1e-8


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def dag(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def ket(amplitudes, normalize: bool = False) -> np.ndarray:
    v = np.asarray(amplitudes, dtype=complex).ravel()
    if not np.all(np.isfinite(v)):
        raise ValueError("ket has non-finite amplitudes")
    if normalize:
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        v = v / n
    return v


def basis_ket(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector_onto(vectors) -> np.ndarray:
    """Orthogonal projector onto the span of ``vectors``.

    Accepts a single ket, a sequence of kets, or a matrix whose columns span
    the subspace.
    """
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        m = vectors.astype(complex)
    else:
        m = np.column_stack([np.asarray(v, dtype=complex).ravel() for v in np.atleast_2d(vectors)])
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    rank = int(np.sum(s > STRUCT_TOL * max(1.0, s.max(initial=0.0))))
    u = u[:, :rank]
    return u @ dag(u)


def is_hermitian(a: np.ndarray, tol: float = STRUCT_TOL) -> bool:
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and max_abs(a - dag(a)) <= tol


def is_unitary(u: np.ndarray, tol: float = STRUCT_TOL) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return max_abs(dag(u) @ u - np.eye(u.shape[0])) <= tol


def is_projector(p: np.ndarray, tol: float = STRUCT_TOL) -> bool:
    p = np.asarray(p)
    return is_hermitian(p, tol) and max_abs(p @ p - p) <= tol


def check_projector(p: np.ndarray, tol: float = STRUCT_TOL) -> np.ndarray:
    p = np.asarray(p, dtype=complex)
    if not is_projector(p, tol):
        raise ValueError("matrix is not an orthogonal projector")
    return p


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def kron_all(*ops: np.ndarray) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def eig_hermitian(a: np.ndarray, tol: float = STRUCT_TOL) -> SpectralDecomposition:
    a = np.asarray(a, dtype=complex)
    if not is_hermitian(a, tol):
        raise ValueError("eig_hermitian requires a Hermitian matrix")
    # symmetrize so eigh sees exactly Hermitian data
    w, v = np.linalg.eigh(0.5 * (a + dag(a)))
    return SpectralDecomposition(w, v)


def _spectral_projector(a: np.ndarray, select) -> np.ndarray:
    dec = eig_hermitian(a)
    v = dec.eigenvectors[:, select(dec.eigenvalues)]
    return v @ dag(v)


def meet(p: np.ndarray, q: np.ndarray, tol: float = MEET_TOL) -> np.ndarray:
    """Projector onto range(P) ∩ range(Q).

    Vectors in the intersection are exactly the eigenvalue-2 eigenvectors of
    ``P + Q``; eigenvalues at or above ``2 - tol`` are counted as 2.
    """
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    if p.shape != q.shape:
        raise DimensionError("projectors must act on the same space")
    return _spectral_projector(p + q, lambda w: w >= 2.0 - tol)


def join(p: np.ndarray, q: np.ndarray, tol: float = MEET_TOL) -> np.ndarray:
    """Projector onto the closed span of range(P) and range(Q)."""
    p = np.asarray(p, dtype=complex)
    eye = np.eye(p.shape[0])
    return eye - meet(eye - p, eye - np.asarray(q, dtype=complex), tol)


def loewner_le(p: np.ndarray, q: np.ndarray, tol: float = STRUCT_TOL) -> bool:
    """True when ``Q - P`` has no eigenvalue below ``-tol``."""
    d = np.asarray(q, dtype=complex) - np.asarray(p, dtype=complex)
    return float(eig_hermitian(d, tol=max(tol, STRUCT_TOL)).eigenvalues[0]) >= -tol


def commutant_basis(generators: Sequence[np.ndarray], tol: float = 1e-9) -> list[np.ndarray]:
    """Frobenius-orthonormal basis of {A : [A, G] = 0 for every generator G}.

    With row-major vectorisation ``vec(A G) = (I ⊗ G^T) vec(A)`` and
    ``vec(G A) = (G ⊗ I) vec(A)``; the commutant is the joint null space.
    """
    gens = [np.asarray(g, dtype=complex) for g in generators]
    if not gens:
        raise ValueError("need at least one generator")
    n = gens[0].shape[0]
    for g in gens:
        if g.shape != (n, n):
            raise DimensionError("generators must be square and of equal dimension")
    eye = np.eye(n)
    system = np.vstack([np.kron(eye, g.T) - np.kron(g, eye) for g in gens])
    _, s, vh = np.linalg.svd(system)
    scale = max(1.0, s.max(initial=0.0))
    rank = int(np.sum(s > tol * scale))
    null = vh[rank:].conj()
    return [row.reshape(n, n) for row in null]


def bicommutant_basis(generators: Sequence[np.ndarray], tol: float = 1e-9) -> list[np.ndarray]:
    gens = [np.asarray(g, dtype=complex) for g in generators]
    if gens[0].shape[0] > 12:
        raise DimensionError("bicommutant is limited to dimension 12")
    return commutant_basis(commutant_basis(gens, tol), tol)


def _split_dims(a: np.ndarray, dims: tuple[int, int]) -> tuple[int, int]:
    da, db = dims
    if a.ndim != 2 or a.shape != (da * db, da * db):
        raise DimensionError(f"operator of shape {a.shape} does not act on C^{da} ⊗ C^{db}")
    return da, db


def partial_trace(a: np.ndarray, keep, dims: tuple[int, int]) -> np.ndarray:
    """Trace out one factor of a bipartite operator.

    ``keep`` selects the surviving factor: ``0``/``"A"`` or ``1``/``"B"``.
    """
    a = np.asarray(a, dtype=complex)
    da, db = _split_dims(a, dims)
    t = a.reshape(da, db, da, db)
    if keep in (0, "A", "a"):
        return np.einsum("ijkj->ik", t)
    if keep in (1, "B", "b"):
        return np.einsum("ijil->jl", t)
    raise ValueError(f"unknown subsystem selector {keep!r}")


def partial_transpose(a: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    """Transpose on the second factor: ``A ⊗ B -> A ⊗ B^T``."""
    a = np.asarray(a, dtype=complex)
    da, db = _split_dims(a, dims)
    return a.reshape(da, db, da, db).transpose(0, 3, 2, 1).reshape(da * db, da * db)


def vec_to_operator(psi: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    """Map ψ = Σ c_i φ_i ⊗ ξ_i to ψ̃ = Σ c_i |φ_i⟩⟨ξ̄_i|.

    Conjugation is entrywise in the standard basis, so ⟨ξ̄| = ξ^T and ψ̃ is
    just ψ reshaped. Then (1 ⊗ B)ψ corresponds to ψ̃ B^T.
    """
    da, db = dims
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (da * db,):
        raise DimensionError("vector does not live on the stated product space")
    return psi.reshape(da, db)


def operator_to_vec(psi_tilde: np.ndarray) -> np.ndarray:
    return np.asarray(psi_tilde, dtype=complex).reshape(-1)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    d = np.asarray(rho) - np.asarray(sigma)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + dag(d))))))


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Gaussian matrix."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    k = n if rank is None else rank
    g = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    rho = g @ dag(g)
    return rho / np.trace(rho).real


def random_hermitian(n: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (g + dag(g))
