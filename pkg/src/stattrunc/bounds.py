"""Certified lower/upper bounds on stationary expectations.

Everything here works over one truncated system.  Writing y for the row
solve nu (I - B)^{-1}, the cycle-based quantities are

    lower:   kappa_lo(r) = r(z) + y . r,      kappa_lo(e) = 1 + y . e
    delta  = min over K' of ((I - B)^{-1} p)
    beta   = P(z, z) + y . p
    Delta1 = y . h1 + h1(z) + ((1 - beta)/delta) * max_{K'} (I - B)^{-1}(r + h1)
    Delta2 = analogously with (e, h2)
    upper:   kappa_hi = kappa_lo + Delta

and the certified interval for the stationary expectation is
[kappa_lo(r)/kappa_hi(e), kappa_hi(r)/kappa_lo(e)], which also contains
the truncation estimate kappa_lo(r)/kappa_lo(e).

The h(z) terms account for one-step escape from the regeneration state
itself (mass P(z, A^c) does not appear in the entry row nu, but the
reward it accrues before re-entering K is still part of the cycle).  They
vanish for any model whose z cannot leave A in one step.

When K = {z} there are no post-excursion restart states: every return to
K ends the cycle, so the correction term is empty and delta is reported
as 1 by convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .chain import StateIndex, TruncationProblem, member_mask, one_step_fringe
from .models import LyapunovCertificate
from .solver import (
    DEFAULT_MAX_ITER,
    DEFAULT_MEMORY_BUDGET,
    DEFAULT_TOL,
    TruncatedSystem,
    assemble_truncated_system,
    solve,
    solve_transpose,
)


class DegenerateDeltaError(RuntimeError):
    """delta is numerically indistinguishable from zero, so the excursion
    correction (1 - beta)/delta is unusable."""


class PipelineError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""


@dataclass(frozen=True)
class SolverOptions:
    """Knobs shared by all linear solves in one pipeline run."""

    tol: float = DEFAULT_TOL
    method: str = "auto"
    max_iter: int = DEFAULT_MAX_ITER
    memory_budget: int = DEFAULT_MEMORY_BUDGET

    def kwargs(self) -> dict:
        return dict(method=self.method, max_iter=self.max_iter,
                    memory_budget=self.memory_budget)


@dataclass(frozen=True)
class BoundReport:
    """All certified quantities for one (chain, A, z, K, r) problem."""

    pi_tilde_r: float
    kappa_lower_r: float
    kappa_lower_e: float
    kappa_upper_r: float
    kappa_upper_e: float
    delta: float
    beta: float
    Delta1: float
    Delta2: float
    interval: tuple[float, float]
    error_bound: float
    tv_bound: float


@dataclass(frozen=True)
class DriftViolation:
    state: int
    kind: str        # "g1" | "g2" | "h1" | "h2"
    lhs: float
    rhs: float


@dataclass
class DriftReport:
    """Pointwise drift-inequality audit over a finite window."""

    checked_states: list[int] = field(default_factory=list)
    excluded_states: list[int] = field(default_factory=list)
    violations: list[DriftViolation] = field(default_factory=list)
    max_slack: float = 0.0
    min_slack: float = np.inf

    @property
    def passed(self) -> bool:
        return not self.violations


def _kprime_positions(system: TruncatedSystem, K: Iterable[StateIndex]) -> np.ndarray:
    K_arr = np.unique(np.asarray(list(K), dtype=np.int64))
    if not member_mask(np.array([system.z]), K_arr)[0]:
        raise ValueError(f"K must contain the regeneration state z={system.z}")
    if not member_mask(K_arr, system.A_full).all():
        raise ValueError("K must be a subset of the truncation set A")
    return system.positions(K_arr[K_arr != system.z])


def compute_pi_tilde(system: TruncatedSystem, tol: float = DEFAULT_TOL, *,
                     options: SolverOptions | None = None) -> np.ndarray:
    """Truncation approximation to the stationary vector, indexed by A_full.

    pi(x) = y(x) / (1 + y . e) for x in A' and pi(z) = 1 / (1 + y . e);
    states outside A carry zero mass.  Sums to one by construction.
    """
    opts = options or SolverOptions(tol=tol)
    y = solve_transpose(system, opts.tol, **opts.kwargs()).x
    denom = 1.0 + float(y.sum())
    pi = np.empty(system.A_full.size)
    z_pos = int(np.searchsorted(system.A_full, system.z))
    mask = np.ones(system.A_full.size, dtype=bool)
    mask[z_pos] = False
    pi[mask] = y / denom
    pi[z_pos] = 1.0 / denom
    return pi


def compute_lower_bounds(system: TruncatedSystem, tol: float = DEFAULT_TOL, *,
                         options: SolverOptions | None = None) -> tuple[float, float]:
    """Cycle-reward and cycle-length lower bounds (kappa_lo(r), kappa_lo(e))."""
    opts = options or SolverOptions(tol=tol)
    y = solve_transpose(system, opts.tol, **opts.kwargs()).x
    return _lower_from_y(system, y)


def _lower_from_y(system: TruncatedSystem, y: np.ndarray) -> tuple[float, float]:
    kappa_r = system.r_z + float(y @ system.r_vec)
    kappa_e = 1.0 + float(y.sum())
    return kappa_r, kappa_e


def _clamp_unit(value: float, name: str, tol: float) -> float:
    if value < -10.0 * tol or value > 1.0 + 10.0 * tol:
        raise RuntimeError(f"{name}={value!r} outside [0, 1] beyond tolerance; "
                           "system looks mis-assembled")
    return min(max(value, 0.0), 1.0)


def compute_delta_beta(system: TruncatedSystem, K: Iterable[StateIndex],
                       tol: float = DEFAULT_TOL, *,
                       options: SolverOptions | None = None) -> tuple[float, float]:
    """Per-excursion kill rate delta and first-excursion stop probability beta.

    delta = min over K' of the probability of reaching z before leaving A;
    beta = P_z(return to z before the first exit attempt).  Raises
    ``DegenerateDeltaError`` when delta <= 10 tol (and K' is non-empty),
    since the upper-bound correction divides by delta.
    """
    opts = options or SolverOptions(tol=tol)
    kp = _kprime_positions(system, K)
    y = solve_transpose(system, opts.tol, **opts.kwargs()).x
    beta = _clamp_unit(system.P_zz + float(y @ system.p), "beta", opts.tol)
    if kp.size == 0:
        return 1.0, beta
    u = solve(system, system.p, opts.tol, **opts.kwargs()).x
    delta = float(u[kp].min())
    if delta <= 10.0 * opts.tol:
        raise DegenerateDeltaError(
            f"delta={delta:.3e} <= 10*tol={10 * opts.tol:.1e}; "
            "enlarge A or shrink K")
    return _clamp_unit(delta, "delta", opts.tol), beta


def compute_upper_bounds(system: TruncatedSystem, K: Iterable[StateIndex],
                         delta: float, beta: float, tol: float = DEFAULT_TOL, *,
                         options: SolverOptions | None = None) -> tuple[float, float]:
    """Cycle-reward and cycle-length upper bounds (kappa_hi(r), kappa_hi(e))."""
    opts = options or SolverOptions(tol=tol)
    y = solve_transpose(system, opts.tol, **opts.kwargs()).x
    kappa_r, kappa_e = _lower_from_y(system, y)
    d1, d2 = _deltas(system, K, delta, beta, y, opts)
    return kappa_r + d1, kappa_e + d2


def _deltas(system: TruncatedSystem, K, delta: float, beta: float,
            y: np.ndarray, opts: SolverOptions) -> tuple[float, float]:
    kp = _kprime_positions(system, K)
    if delta <= 0.0:
        raise DegenerateDeltaError(f"delta={delta!r} must be positive")
    amp = max(0.0, 1.0 - beta) / delta
    if kp.size == 0:
        corr1 = corr2 = 0.0
    else:
        u1 = solve(system, system.r_vec + system.h1, opts.tol, **opts.kwargs()).x
        u2 = solve(system, np.ones(system.size) + system.h2, opts.tol, **opts.kwargs()).x
        corr1 = amp * float(u1[kp].max())
        corr2 = amp * float(u2[kp].max())
    d1 = float(y @ system.h1) + system.h1_z + corr1
    d2 = float(y @ system.h2) + system.h2_z + corr2
    return d1, d2


def compute_error_bound(kappa_lower_r: float, kappa_lower_e: float,
                        kappa_upper_e: float, Delta1: float, Delta2: float) -> float:
    """Bound on |pi r - pi_tilde r| from the kappa gaps Delta_i."""
    if min(Delta1, Delta2) < 0:
        raise ValueError("Delta terms must be non-negative")
    num = kappa_lower_r * Delta2 + kappa_lower_e * Delta1 + Delta1 * Delta2
    return num / (kappa_lower_e * kappa_upper_e)


def compute_tv_bound(error_bound: float) -> float:
    """r-weighted total-variation bound: twice the expectation error bound."""
    if error_bound < 0:
        raise ValueError("error bound must be non-negative")
    return 2.0 * error_bound


def run_pipeline(problem: TruncationProblem,
                 certificate: LyapunovCertificate,
                 options: SolverOptions | None = None) -> BoundReport:
    """Assemble and run the full bound computation for one problem.

    Exactly four linear solves are performed against one shared
    factorization: the transpose solve for y plus columns for p,
    r + h1 and e + h2.  All lower-bound quantities are inner products
    against y.
    """
    opts = options or SolverOptions()

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DegenerateDeltaError:
            raise
        except Exception as exc:
            raise PipelineError(f"stage '{name}' failed: {exc}") from exc

    system = stage("assemble", assemble_truncated_system, problem, certificate)
    y = stage("transpose_solve", solve_transpose, system, opts.tol, **opts.kwargs()).x
    kappa_lower_r, kappa_lower_e = _lower_from_y(system, y)
    pi_tilde_r = kappa_lower_r / kappa_lower_e

    kp = _kprime_positions(system, problem.K)
    beta = _clamp_unit(system.P_zz + float(y @ system.p), "beta", opts.tol)
    if kp.size == 0:
        delta = 1.0
    else:
        u_p = stage("delta_solve", solve, system, system.p, opts.tol, **opts.kwargs()).x
        delta = float(u_p[kp].min())
        if delta <= 10.0 * opts.tol:
            raise DegenerateDeltaError(
                f"delta={delta:.3e} <= 10*tol={10 * opts.tol:.1e}; enlarge A or shrink K")
        delta = _clamp_unit(delta, "delta", opts.tol)
    Delta1, Delta2 = stage("upper_solves", _deltas, system, problem.K, delta, beta, y, opts)

    kappa_upper_r = kappa_lower_r + Delta1
    kappa_upper_e = kappa_lower_e + Delta2
    error_bound = compute_error_bound(kappa_lower_r, kappa_lower_e,
                                      kappa_upper_e, Delta1, Delta2)
    return BoundReport(
        pi_tilde_r=pi_tilde_r,
        kappa_lower_r=kappa_lower_r,
        kappa_lower_e=kappa_lower_e,
        kappa_upper_r=kappa_upper_r,
        kappa_upper_e=kappa_upper_e,
        delta=delta,
        beta=beta,
        Delta1=Delta1,
        Delta2=Delta2,
        interval=(kappa_lower_r / kappa_upper_e, kappa_upper_r / kappa_lower_e),
        error_bound=error_bound,
        tv_bound=compute_tv_bound(error_bound),
    )


def verify_lyapunov_drift(problem: TruncationProblem,
                          certificate: LyapunovCertificate,
                          check_window: Iterable[StateIndex] | None = None,
                          rel_slack: float = 1e-12) -> DriftReport:
    """Audit the drift inequalities pointwise over a finite window.

    For each window state x outside K the two inequalities

        sum_{y not in K} P(x, y) g1(y) <= g1(x) - r(x)
        sum_{y not in K} P(x, y) g2(y) <= g2(x) - 1

    are evaluated exactly from the finite-support row of x.  States inside
    K are excluded (the inequalities are only required on K^c).  When h
    overrides are supplied, their validity
    sum_{y not in A} P(x, y) g_i(y) <= h_i(x) is checked for every x in A.

    The window check is necessarily finite; whether the inequalities hold
    on all of K^c remains the certificate supplier's analytic obligation.
    ``rel_slack`` absorbs roundoff for certificates that are tight by
    construction.
    """
    chain, A, K = problem.chain, problem.A, problem.K
    if check_window is None:
        window = set(int(s) for s in A) | one_step_fringe(chain, A)
    else:
        window = set(int(s) for s in check_window)
    report = DriftReport()

    def record(x, kind, lhs, rhs):
        slack = rhs - lhs
        report.max_slack = max(report.max_slack, slack)
        report.min_slack = min(report.min_slack, slack)
        if lhs > rhs + rel_slack * (1.0 + abs(rhs)):
            report.violations.append(DriftViolation(x, kind, lhs, rhs))

    for x in sorted(window):
        if member_mask(np.array([x]), K)[0]:
            report.excluded_states.append(x)
            continue
        row = chain.row(x)
        outside_K = ~member_mask(row.targets, K)
        lhs1 = sum(float(pr) * float(certificate.g1(int(t)))
                   for t, pr in zip(row.targets[outside_K], row.probs[outside_K]))
        lhs2 = sum(float(pr) * float(certificate.g2(int(t)))
                   for t, pr in zip(row.targets[outside_K], row.probs[outside_K]))
        record(x, "g1", lhs1, float(certificate.g1(x)) - problem.reward(x))
        record(x, "g2", lhs2, float(certificate.g2(x)) - 1.0)
        report.checked_states.append(x)

    if certificate.h1_override is not None:
        for x in A:
            x = int(x)
            row = chain.row(x)
            outside_A = ~member_mask(row.targets, A)
            exact1 = sum(float(pr) * float(certificate.g1(int(t)))
                         for t, pr in zip(row.targets[outside_A], row.probs[outside_A]))
            exact2 = sum(float(pr) * float(certificate.g2(int(t)))
                         for t, pr in zip(row.targets[outside_A], row.probs[outside_A]))
            record(x, "h1", exact1, float(certificate.h1_override(x)))
            record(x, "h2", exact2, float(certificate.h2_override(x)))
    return report
