"""Boolean lattices, their projector realisation, and where quantum logic departs.

Set-valued propositions live in :class:`BoolElement` (a bitmask over a finite
universe). Embedding a set as the diagonal projector onto its members turns
the same questions into projector questions, where non-commuting pairs break
distributivity.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .operators import (
    MEET_TOL,
    STRUCT_TOL,
    commutator,
    eig_hermitian,
    join,
    loewner_le,
    max_abs,
    meet,
)


class IntervalError(ValueError):
    """Raised when a ≤ b ≤ c does not hold for a relative negation."""


@dataclass(frozen=True)
class BoolElement:
    universe_size: int
    members: int = 0  # bit i set <=> element i belongs to the set

    def __post_init__(self):
        if self.universe_size <= 0:
            raise ValueError("universe must be non-empty")
        if self.members < 0 or self.members >> self.universe_size:
            raise ValueError("members exceed the universe")

    @classmethod
    def from_set(cls, universe_size: int, items) -> "BoolElement":
        bits = 0
        for i in items:
            bits |= 1 << i
        return cls(universe_size, bits)

    @classmethod
    def everything(cls, universe_size: int) -> "BoolElement":
        return cls(universe_size, (1 << universe_size) - 1)

    def to_set(self) -> frozenset[int]:
        return frozenset(i for i in range(self.universe_size) if self.members >> i & 1)

    def _check(self, other: "BoolElement") -> None:
        if other.universe_size != self.universe_size:
            raise ValueError("elements belong to different universes")

    def __and__(self, other: "BoolElement") -> "BoolElement":
        self._check(other)
        return BoolElement(self.universe_size, self.members & other.members)

    def __or__(self, other: "BoolElement") -> "BoolElement":
        self._check(other)
        return BoolElement(self.universe_size, self.members | other.members)

    def __invert__(self) -> "BoolElement":
        full = (1 << self.universe_size) - 1
        return BoolElement(self.universe_size, full & ~self.members)

    def __le__(self, other: "BoolElement") -> bool:
        self._check(other)
        return self.members & ~other.members == 0

    def to_projector(self) -> np.ndarray:
        """Diagonal embedding of the set as a projector on C^universe_size."""
        diag = [(self.members >> i) & 1 for i in range(self.universe_size)]
        return np.diag(np.asarray(diag, dtype=complex))


def all_elements(universe_size: int):
    return [BoolElement(universe_size, m) for m in range(1 << universe_size)]


def bool_ops(a: BoolElement, b: BoolElement) -> tuple[BoolElement, BoolElement, BoolElement]:
    """Return ``(a ∧ b, a ∨ b, a^|)``."""
    return a & b, a | b, ~a


def bool_distributive(a: BoolElement, b: BoolElement, c: BoolElement) -> bool:
    return ((a & b) | c) == ((a | c) & (b | c)) and (a & (b | c)) == ((a & b) | (a & c))


def relative_negation(a: BoolElement, b: BoolElement, c: BoolElement) -> BoolElement:
    """Negation of ``b`` inside the interval [a, c]: ``a ∨ (b^| ∧ c)``."""
    if not (a <= b and b <= c):
        raise IntervalError("relative negation needs a ≤ b ≤ c")
    return a | (~b & c)


def _check_same_shape(*ps: np.ndarray) -> None:
    shapes = {np.shape(p) for p in ps}
    if len(shapes) != 1:
        raise ValueError("projectors must act on the same space")


def ordering_le(p: np.ndarray, q: np.ndarray, tol: float = STRUCT_TOL) -> bool:
    _check_same_shape(p, q)
    return loewner_le(p, q, tol)


def projector_relative_negation(
    pa: np.ndarray, pb: np.ndarray, pc: np.ndarray, tol: float = STRUCT_TOL
) -> np.ndarray:
    """``P_c - (P_b - P_a)`` for commuting ``P_a ≤ P_b ≤ P_c``."""
    _check_same_shape(pa, pb, pc)
    for x, y in itertools.combinations((pa, pb, pc), 2):
        if max_abs(commutator(x, y)) > tol:
            raise ValueError("relative negation needs mutually commuting projectors")
    if not (ordering_le(pa, pb, tol) and ordering_le(pb, pc, tol)):
        raise IntervalError("relative negation needs P_a ≤ P_b ≤ P_c")
    return np.asarray(pc, dtype=complex) - (np.asarray(pb) - np.asarray(pa))


@dataclass(frozen=True)
class PairClassification:
    disjoint: bool
    inconsistent: bool
    conjoint: bool
    commuting: bool

    @property
    def incompatible(self) -> bool:
        return self.inconsistent and not self.disjoint


def classify_pair(p: np.ndarray, q: np.ndarray, tol: float = STRUCT_TOL) -> PairClassification:
    _check_same_shape(p, q)
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    eye = np.eye(p.shape[0])
    return PairClassification(
        disjoint=max_abs(p @ q) <= tol,
        inconsistent=max_abs(meet(p, q)) <= tol,
        conjoint=ordering_le(eye - q, p, tol),
        commuting=max_abs(commutator(p, q)) <= tol,
    )


def distributivity_witness(
    p: np.ndarray, q: np.ndarray, r: np.ndarray, tol: float = 1e-9
) -> tuple[bool, float]:
    """Defect ``‖(P∧Q)∨R − (P∨R)∧(Q∨R)‖`` in the max norm."""
    _check_same_shape(p, q, r)
    lhs = join(meet(p, q), r)
    rhs = meet(join(p, r), join(q, r))
    defect = max_abs(lhs - rhs)
    return defect <= tol, defect


def _sub_projectors(p: np.ndarray, other: np.ndarray) -> list[np.ndarray]:
    """Candidate sub-projectors of ``p``: ``p`` itself plus rank-1 projectors
    onto the principal vectors of range(p) relative to range(other)."""
    out = [p]
    dec = eig_hermitian(p @ other @ p)
    for v in dec.eigenvectors.T:
        if np.linalg.norm(p @ v - v) <= 1e-8:
            out.append(np.outer(v, v.conj()))
    return out


def generalized_incompatibility(p: np.ndarray, q: np.ndarray, tol: float = STRUCT_TOL):
    """Search for sub-projectors p' ≤ P, q' ≤ Q with p'∧q' = 0 and p' ≰ I − q'.

    Only the spectral subspaces of ``PQP`` and ``QPQ`` are searched, so a
    ``None`` result is not a proof that no witness exists.
    """
    eye = np.eye(np.shape(p)[0])
    for ps in _sub_projectors(np.asarray(p, dtype=complex), q):
        for qs in _sub_projectors(np.asarray(q, dtype=complex), p):
            if max_abs(meet(ps, qs, MEET_TOL)) <= tol and not ordering_le(ps, eye - qs, tol):
                return ps, qs
    return None


def boolean_lattice_defects(universe_size: int) -> float:
    """Largest distributivity defect over all triples of diagonal projectors."""
    elems = [e.to_projector() for e in all_elements(universe_size)]
    worst = 0.0
    for a, b, c in itertools.product(elems, repeat=3):
        worst = max(worst, distributivity_witness(a, b, c)[1])
    return worst
