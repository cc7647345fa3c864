"""Independent ground truth for desk-scale verification.

Exact stationary solves and first-step regenerative expectations on finite
chains, a seeded Monte Carlo cycle simulator with excursion statistics,
and helpers for building provably tight drift certificates on finite
chains.  Nothing here shares code with the bound pipeline: these are the
cross-checks, so they go through the generic dense linear algebra route
instead of the truncated-system machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .chain import ChainModel, StateIndex
from .models import LyapunovCertificate

RNG_ALGORITHM = "numpy.random.default_rng (PCG64)"

DEFAULT_CYCLE_CAP = 10**7


class OracleError(RuntimeError):
    """Exact solve failed or its result fails a consistency check."""


def _dense_matrix(chain: ChainModel, n: int) -> np.ndarray:
    """Row-stochastic matrix of the first n states; all mass must stay inside."""
    if n < 1:
        raise ValueError("n must be >= 1")
    P = np.zeros((n, n))
    for x in range(n):
        row = chain.row(x)
        if row.targets.size and (row.targets.min() < 0 or row.targets.max() >= n):
            raise OracleError(
                f"state {x} has transitions outside {{0..{n - 1}}}; "
                "the oracle needs a genuinely finite chain")
        P[x, row.targets] = row.probs
    return P


def exact_stationary_finite(chain: ChainModel, n: int,
                            tol: float = 1e-12) -> np.ndarray:
    """Stationary distribution of a finite irreducible chain.

    Solves pi P = pi with the normalization sum(pi) = 1 replacing the last
    balance equation, then certifies the residual max-norm of the original
    balance system to ``tol``.  Reducible or otherwise degenerate inputs
    surface as ``OracleError``.
    """
    P = _dense_matrix(chain, n)
    M = P.T - np.eye(n)
    M[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(M, b)
    except np.linalg.LinAlgError as exc:
        raise OracleError(f"stationary solve singular: {exc}") from exc
    # one refinement step keeps the residual at roundoff for mildly
    # ill-conditioned inputs
    pi = pi + np.linalg.solve(M, b - M @ pi)
    residual = float(np.abs(pi @ P - pi).max())
    if not np.isfinite(pi).all() or residual > tol:
        raise OracleError(f"stationary residual {residual:.3e} exceeds {tol:.1e}")
    if pi.min() <= 0.0:
        raise OracleError(
            "stationary solve produced a non-positive entry; "
            "chain is likely reducible")
    return pi


def regenerative_expectation_exact(chain: ChainModel, n: int, z: StateIndex,
                                   f: Callable[[StateIndex], float]) -> float:
    """E_z of the f-sum over one z-cycle, by first-step analysis.

    Solves u(x) = f(x) + sum_{y != z} P(x, y) u(y) on S \\ {z} and returns
    f(z) + sum_y P(z, y) u(y) with u(z) = 0.  With f = 1 this is the mean
    return time E_z tau(z).
    """
    P = _dense_matrix(chain, n)
    if not 0 <= z < n:
        raise ValueError(f"z={z} out of range")
    idx = np.array([x for x in range(n) if x != z], dtype=np.int64)
    fvec = np.array([float(f(int(x))) for x in idx])
    fz = float(f(int(z)))
    if idx.size == 0:
        return fz
    M = np.eye(idx.size) - P[np.ix_(idx, idx)]
    try:
        u = np.linalg.solve(M, fvec)
        u = u + np.linalg.solve(M, fvec - M @ u)
    except np.linalg.LinAlgError as exc:
        raise OracleError(f"first-step solve singular: {exc}") from exc
    residual = float(np.abs(M @ u - fvec).max())
    scale = 1.0 + float(np.abs(u).max())
    if not np.isfinite(u).all() or residual > 1e-9 * scale:
        raise OracleError(f"first-step residual {residual:.3e} too large")
    return fz + float(P[z, idx] @ u)


def tight_certificate(chain: ChainModel, n: int,
                      K: Iterable[StateIndex],
                      r: Callable[[StateIndex], float]) -> LyapunovCertificate:
    """Drift functions that hold with equality on a finite chain.

    g1(x) = E_x sum of r until hitting K, g2(x) = E_x (hitting time of K),
    both zero on K itself.  These satisfy the drift inequalities exactly,
    so they are valid certificates for any truncation problem on this
    chain with this K, with no analytic work.
    """
    P = _dense_matrix(chain, n)
    K_set = {int(k) for k in K}
    if not K_set or any(not 0 <= k < n for k in K_set):
        raise ValueError("K must be a non-empty subset of {0..n-1}")
    idx = np.array(sorted(set(range(n)) - K_set), dtype=np.int64)
    g1 = np.zeros(n)
    g2 = np.zeros(n)
    if idx.size:
        M = np.eye(idx.size) - P[np.ix_(idx, idx)]
        rvec = np.array([float(r(int(x))) for x in idx])
        try:
            u1 = np.linalg.solve(M, rvec)
            u2 = np.linalg.solve(M, np.ones(idx.size))
        except np.linalg.LinAlgError as exc:
            raise OracleError(f"certificate solve singular: {exc}") from exc
        if not (np.isfinite(u1).all() and np.isfinite(u2).all()):
            raise OracleError("certificate solve produced non-finite values")
        if u1.min() < -1e-9 or u2.min() < 1.0 - 1e-9:
            raise OracleError("certificate solve inconsistent; K may be "
                              "unreachable from part of the chain")
        g1[idx] = np.maximum(u1, 0.0)
        g2[idx] = np.maximum(u2, 0.0)
    return LyapunovCertificate(
        g1=lambda x: float(g1[x]),
        g2=lambda x: float(g2[x]),
    )


@dataclass(frozen=True)
class CycleStats:
    """Summary of a batch of simulated regeneration cycles."""

    n_cycles: int
    mean_reward: float
    mean_length: float
    ratio: float
    half_width: float
    excursion_survival: tuple[float, ...]
    seed: int
    rng_algorithm: str = RNG_ALGORITHM


# 99% two-sided normal quantile, for the ratio-estimator half-width
Z_99 = 2.5758293035489004


def simulate_cycles(chain: ChainModel, z: StateIndex,
                    K: Iterable[StateIndex], A: Iterable[StateIndex],
                    r: Callable[[StateIndex], float],
                    n_cycles: int, seed: int, *,
                    max_steps: int = DEFAULT_CYCLE_CAP,
                    max_tracked: int = 64) -> CycleStats:
    """Simulate independent z-cycles and summarize reward/length/excursions.

    Each cycle starts at X_0 = z and ends at the first return to z.  The
    ratio mean_reward/mean_length estimates the stationary expectation of
    r; its 99% half-width comes from the usual linearization of the ratio
    estimator.  excursion_survival[i-1] estimates P_z(tau(z) > Gamma_i),
    where Gamma_i is the first K-entry after the i-th exit from A: the
    chance the cycle is still running when the i-th outside excursion has
    come back.  Identical seeds reproduce identical results.
    """
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    rng = np.random.default_rng(seed)
    z = int(z)
    K_set = {int(k) for k in K}
    A_set = {int(a) for a in A}
    if z not in K_set or not K_set <= A_set:
        raise ValueError("need z in K and K a subset of A")

    row_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    reward_cache: dict[int, float] = {}

    def sample_next(x: int, u: float) -> int:
        entry = row_cache.get(x)
        if entry is None:
            row = chain.row(x)
            entry = (row.targets, np.cumsum(row.probs))
            row_cache[x] = entry
        targets, cum = entry
        j = int(np.searchsorted(cum, u, side="right"))
        if j >= targets.size:
            j = targets.size - 1
        return int(targets[j])

    def reward(x: int) -> float:
        v = reward_cache.get(x)
        if v is None:
            v = float(r(x))
            reward_cache[x] = v
        return v

    rewards = np.empty(n_cycles)
    lengths = np.empty(n_cycles)
    survival_counts = np.zeros(max_tracked, dtype=np.int64)
    r_z = reward(z)

    for c in range(n_cycles):
        x = z
        crew = r_z
        clen = 1
        rounds = 0
        escaped = False
        uniforms = rng.random(256)
        pos = 0
        while True:
            if pos == uniforms.size:
                uniforms = rng.random(uniforms.size)
                pos = 0
            x = sample_next(x, float(uniforms[pos]))
            pos += 1
            if x == z:
                break
            if clen >= max_steps:
                raise RuntimeError(
                    f"cycle {c} exceeded {max_steps} steps without returning "
                    f"to z={z}; chain may not be positive recurrent")
            crew += reward(x)
            clen += 1
            if not escaped:
                if x not in A_set:
                    escaped = True
            elif x in K_set:
                rounds += 1
                escaped = False
        rewards[c] = crew
        lengths[c] = clen
        if rounds:
            survival_counts[:min(rounds, max_tracked)] += 1

    mean_reward = float(rewards.mean())
    mean_length = float(lengths.mean())
    ratio = mean_reward / mean_length
    if n_cycles > 1:
        d = rewards - ratio * lengths
        hw = Z_99 * float(d.std(ddof=1)) / (mean_length * np.sqrt(n_cycles))
    else:
        hw = float("inf")
    tracked = int(np.max(np.nonzero(survival_counts)[0]) + 1) \
        if survival_counts.any() else 0
    survival = tuple(float(survival_counts[i]) / n_cycles for i in range(tracked))
    return CycleStats(n_cycles=n_cycles, mean_reward=mean_reward,
                      mean_length=mean_length, ratio=ratio, half_width=hw,
                      excursion_survival=survival, seed=int(seed))


@dataclass
class ExcursionReport:
    """Exact excursion expectations versus a claimed bounding function."""

    states: list[int] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    bounds: list[float] = field(default_factory=list)
    slack: list[float] = field(default_factory=list)
    drift_failures: list[int] = field(default_factory=list)
    violations: list[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def excursion_bound_check(chain: ChainModel, n: int,
                          K: Iterable[StateIndex], A: Iterable[StateIndex],
                          g: Callable[[StateIndex], float],
                          f: Callable[[StateIndex], float], *,
                          stop_set: Iterable[StateIndex] | None = None
                          ) -> ExcursionReport:
    """Check g(x) >= E_x sum_{j<T} f(X_j) exactly on a finite chain.

    T is the hitting time of ``stop_set``, which defaults to K: that is the
    stopping time for which the drift inequality
    sum_{y not in K} P(x, y) g(y) <= g(x) - f(x) makes g a valid upper
    bound.  Reports per-state slack for x in A minus K, plus the states
    where the drift inequality itself fails (no guarantee applies there,
    but values and slack are still reported).
    """
    P = _dense_matrix(chain, n)
    stop = {int(s) for s in (K if stop_set is None else stop_set)}
    A_set = {int(a) for a in A}
    K_set = {int(k) for k in K}
    idx = np.array(sorted(set(range(n)) - stop), dtype=np.int64)
    u = np.zeros(n)
    if idx.size:
        M = np.eye(idx.size) - P[np.ix_(idx, idx)]
        fvec = np.array([float(f(int(x))) for x in idx])
        try:
            sol = np.linalg.solve(M, fvec)
        except np.linalg.LinAlgError as exc:
            raise OracleError(f"excursion solve singular: {exc}") from exc
        if not np.isfinite(sol).all():
            raise OracleError("excursion solve produced non-finite values")
        u[idx] = sol

    g_all = np.array([float(g(x)) for x in range(n)])
    g_masked = g_all.copy()
    g_masked[sorted(s for s in stop if 0 <= s < n)] = 0.0
    report = ExcursionReport()
    for x in idx:
        x = int(x)
        lhs = float(P[x] @ g_masked)
        if lhs > g_all[x] - float(f(x)) + 1e-9 * (1.0 + abs(g_all[x])):
            report.drift_failures.append(x)
    for x in sorted(A_set - K_set):
        if x in stop or not 0 <= x < n:
            continue
        val = float(u[x])
        bound = float(g_all[x])
        report.states.append(x)
        report.values.append(val)
        report.bounds.append(bound)
        report.slack.append(bound - val)
        if val > bound + 1e-9 * (1.0 + abs(bound)):
            report.violations.append(x)
    return report
