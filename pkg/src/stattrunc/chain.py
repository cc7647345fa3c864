"""Sparse Markov chain abstraction over integer-encoded state spaces.

States are non-negative integers; a chain is anything that can produce the
sparse transition row of a given state on demand.  Rows must have finite
support, which keeps exit masses and tail sums exactly computable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

# Default tolerance for |row sum - 1|.  Model coefficients are computed in
# floating point, so exact unity is unattainable.
ROW_SUM_TOL = 1e-12

StateIndex = int
RewardFn = Callable[[StateIndex], float]


@dataclass(frozen=True)
class SparseRow:
    """One transition row P(x, .) with zero entries omitted.

    A well-formed row has strictly increasing targets, strictly positive
    probabilities and a total mass of 1 (within ``ROW_SUM_TOL``).  The
    constructor does not enforce this so that malformed rows can be built
    and then reported by :func:`validate_rows`.
    """

    targets: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "targets", np.asarray(self.targets, dtype=np.int64))
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=np.float64))
        if self.targets.shape != self.probs.shape or self.targets.ndim != 1:
            raise ValueError("targets and probs must be 1-d arrays of equal length")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[StateIndex, float]]) -> "SparseRow":
        pairs = list(pairs)
        targets = [t for t, _ in pairs]
        probs = [p for _, p in pairs]
        return cls(np.array(targets, dtype=np.int64), np.array(probs, dtype=np.float64))

    @property
    def entries(self) -> list[tuple[int, float]]:
        return [(int(t), float(p)) for t, p in zip(self.targets, self.probs)]

    def total(self) -> float:
        return float(self.probs.sum())

    def issues(self, tol: float = ROW_SUM_TOL) -> list[str]:
        """Return human-readable descriptions of invariant violations."""
        problems = []
        if self.targets.size and np.any(self.targets < 0):
            problems.append("negative target state")
        if self.targets.size and np.any(np.diff(self.targets) <= 0):
            problems.append("targets not strictly increasing (duplicate or unsorted)")
        if self.probs.size and np.any(self.probs <= 0.0):
            problems.append("non-positive probability entry")
        dev = abs(self.total() - 1.0)
        if dev > tol:
            problems.append(f"row sum deviates from 1 by {dev:.3e}")
        return problems


@dataclass(frozen=True)
class ChainModel:
    """A Markov chain given by on-demand sparse row access.

    ``row_fn`` must be deterministic: repeated calls for the same state
    return identical rows.  ``n_states`` is set for finite chains and left
    ``None`` for countably infinite ones.
    """

    row_fn: Callable[[StateIndex], SparseRow]
    description: str
    n_states: int | None = None

    def row(self, x: StateIndex) -> SparseRow:
        if x < 0:
            raise ValueError(f"state index must be non-negative, got {x}")
        if self.n_states is not None and x >= self.n_states:
            raise ValueError(
                f"state {x} out of range for finite chain with {self.n_states} states")
        return self.row_fn(x)


def matrix_chain(P: np.ndarray, description: str = "dense matrix chain") -> ChainModel:
    """Wrap a dense row-stochastic matrix as a ChainModel (zeros dropped)."""
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("transition matrix must be square")
    rows = []
    for x in range(P.shape[0]):
        nz = np.nonzero(P[x] != 0.0)[0]
        rows.append(SparseRow(nz.astype(np.int64), P[x, nz]))
    return ChainModel(row_fn=lambda x: rows[x], description=description, n_states=P.shape[0])


def member_mask(values: np.ndarray, sorted_states: np.ndarray) -> np.ndarray:
    """Boolean mask of which ``values`` occur in the sorted array ``sorted_states``."""
    if sorted_states.size == 0:
        return np.zeros(values.shape, dtype=bool)
    idx = np.searchsorted(sorted_states, values)
    idx_c = np.minimum(idx, sorted_states.size - 1)
    return (idx < sorted_states.size) & (sorted_states[idx_c] == values)


def as_state_array(states: Iterable[StateIndex]) -> np.ndarray:
    """Normalize a collection of states to a sorted, duplicate-free int64 array."""
    arr = np.unique(np.asarray(list(states), dtype=np.int64))
    if arr.size and arr[0] < 0:
        raise ValueError("state indices must be non-negative")
    return arr


@dataclass(frozen=True)
class TruncationProblem:
    """Bundle (chain, A, z, K, r) defining one bound computation.

    ``A`` is the finite truncation set, ``z`` the regeneration state and
    ``K`` the finite set on whose complement the Lyapunov drift holds.
    Requires z in K and K a subset of A.  The reward ``r`` must be
    non-negative on every state it is queried at.
    """

    chain: ChainModel
    A: np.ndarray
    z: StateIndex
    K: np.ndarray
    r: RewardFn

    def __post_init__(self):
        object.__setattr__(self, "A", as_state_array(self.A))
        object.__setattr__(self, "K", as_state_array(self.K))
        if not member_mask(np.array([self.z]), self.K)[0]:
            raise ValueError(f"regeneration state z={self.z} must belong to K")
        if not member_mask(self.K, self.A).all():
            raise ValueError("K must be a subset of the truncation set A")

    def reward(self, x: StateIndex) -> float:
        val = float(self.r(x))
        if val < 0.0:
            raise ValueError(f"reward must be non-negative, got r({x})={val}")
        return val


@dataclass
class ValidationReport:
    """Outcome of row validation over a finite set of states."""

    checked: list[int] = field(default_factory=list)
    deviations: dict[int, float] = field(default_factory=dict)
    issues: list[tuple[int, str]] = field(default_factory=list)

    @property
    def max_abs_deviation(self) -> float:
        return max(self.deviations.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return not self.issues


def validate_rows(chain: ChainModel, states: Iterable[StateIndex],
                  tol: float = ROW_SUM_TOL) -> ValidationReport:
    """Check SparseRow invariants for every state in a finite set.

    Failures are reported, not raised, so that deliberately malformed
    inputs can be inspected.
    """
    report = ValidationReport()
    for x in sorted(set(int(s) for s in states)):
        row = chain.row(x)
        report.checked.append(x)
        report.deviations[x] = abs(row.total() - 1.0)
        for msg in row.issues(tol):
            report.issues.append((x, msg))
    return report


def one_step_fringe(chain: ChainModel, A: Iterable[StateIndex]) -> set[int]:
    """States outside A reachable from A in one step with positive probability."""
    A_arr = as_state_array(A)
    fringe: set[int] = set()
    for x in A_arr:
        row = chain.row(int(x))
        outside = ~member_mask(row.targets, A_arr)
        fringe.update(int(t) for t in row.targets[outside])
    return fringe
