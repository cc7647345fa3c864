"""Benchmark chains and their Lyapunov certificates.

Two built-in models are provided:

* ``gm1_chain`` -- the embedded G/M/1 queue-length chain seen by arrivals.
  Downward jumps are governed by the number of unit-rate exponential
  services completed during one interarrival time, which is uniform on
  (0, c).  The jump coefficients are

      beta_i = integral_0^c exp(-t) t^i / (c i!) dt
             = P(Poisson(c) >= i + 1) / c,

  i.e. a regularized lower incomplete gamma evaluation.  The row of state
  x is P(x, y) = beta_{x+1-y} for 1 <= y <= x+1 and P(x, 0) = sum of the
  remaining coefficient tail, so every row sums to one by construction.

* ``random_walk_chain`` -- reflected walk on {0, 1, ...}: from x >= 1 it
  moves up with probability 1/3 and down with probability 2/3; state 0
  moves to 1 with probability one.

Arbitrary finite chains can be loaded from a plain-text coordinate file
via ``load_chain_from_file``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special

from .chain import ChainModel, SparseRow, StateIndex

#: row-sum tolerance applied when loading chain files
FILE_ROW_SUM_TOL = 1e-9


class ChainFileError(ValueError):
    """Raised for malformed or inconsistent chain files."""


@dataclass(frozen=True)
class Gm1Params:
    """Parameters of the embedded G/M/1 chain.

    ``c`` is the endpoint of the uniform interarrival support (2.01 in the
    benchmark configuration); ``max_coeff`` is how many beta coefficients
    ``gm1_beta_coeffs`` returns.  Internally the chain always tabulates
    coefficients until they underflow to zero, so rows are exact for every
    state regardless of ``max_coeff``.
    """

    c: float = 2.01
    max_coeff: int = 256

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("interarrival endpoint c must be positive")
        if self.max_coeff < 1:
            raise ValueError("max_coeff must be >= 1")


@dataclass(frozen=True)
class LyapunovCertificate:
    """Drift functions g1, g2 plus optional explicit overshoot bounds.

    ``g1`` controls reward accumulated on excursions outside K, ``g2``
    excursion length.  When the overrides are ``None``, the exit bounds
    h_i(x) = sum_{y not in A} P(x, y) g_i(y) are computed exactly from the
    finite-support rows during system assembly; supplying overrides lets a
    caller reproduce externally reported h values instead.
    """

    g1: Callable[[StateIndex], float]
    g2: Callable[[StateIndex], float]
    h1_override: Callable[[StateIndex], float] | None = None
    h2_override: Callable[[StateIndex], float] | None = None


def _beta_table(c: float) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients beta_i until underflow, plus tail sums.

    Returns ``(betas, tail)`` where ``tail[k] = sum_{i >= k} betas[i]``;
    ``tail[x + 1]`` is the exact mass P(x, 0) of a row (the analytic tail
    beyond the underflow point is below the double-precision floor, so
    dropping it leaves row sums within ~1e-14 of one).
    """
    n = 64
    while True:
        i = np.arange(n)
        betas = special.gammainc(i + 1.0, c) / c
        if betas[-1] == 0.0:
            break
        n *= 2
    cut = int(np.nonzero(betas)[0][-1]) + 1
    betas = betas[:cut]
    tail = np.zeros(cut + 1)
    tail[:cut] = np.cumsum(betas[::-1])[::-1]
    return betas, tail


@lru_cache(maxsize=8)
def _beta_table_cached(c: float) -> tuple[np.ndarray, np.ndarray]:
    return _beta_table(c)


def gm1_beta_coeffs(params: Gm1Params) -> np.ndarray:
    """First ``max_coeff`` downward-jump coefficients of the G/M/1 chain.

    Evaluated through the regularized incomplete gamma function, which is
    stable for all i (the naive 1 - exp(-c) * sum_k c^k/k! form cancels
    catastrophically once the partial sum approaches exp(c)).
    """
    betas, _ = _beta_table_cached(params.c)
    out = np.zeros(params.max_coeff)
    m = min(params.max_coeff, betas.size)
    out[:m] = betas[:m]
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite beta coefficient")
    if np.cumsum(out)[-1] > 1.0 + 1e-12:
        raise FloatingPointError("beta partial sums exceed 1")
    return out


def gm1_row(x: StateIndex, params: Gm1Params = Gm1Params()) -> SparseRow:
    """Transition row of the embedded G/M/1 chain at state x.

    P(x, y) = beta_{x+1-y} for 1 <= y <= x+1; the balance P(x, 0) is the
    coefficient tail sum_{i > x} beta_i, accumulated directly (never as
    1 - partial sum) so it is non-negative by construction.
    """
    if x < 0:
        raise ValueError("state must be non-negative")
    betas, tail = _beta_table_cached(params.c)
    kmax = min(x, betas.size - 1)
    # y runs from x+1-kmax up to x+1; coefficient index k = x+1-y
    ys = np.arange(x + 1 - kmax, x + 2, dtype=np.int64)
    ps = betas[x + 1 - ys]
    p0 = tail[x + 1] if x + 1 < tail.size else 0.0
    if p0 > 0.0:
        ys = np.concatenate(([0], ys))
        ps = np.concatenate(([p0], ps))
    keep = ps > 0.0
    return SparseRow(ys[keep], ps[keep])


def gm1_chain(params: Gm1Params = Gm1Params()) -> ChainModel:
    """The embedded G/M/1 chain on {0, 1, 2, ...}."""
    return ChainModel(
        row_fn=lambda x: gm1_row(x, params),
        description=f"G/M/1 embedded chain, uniform interarrival on (0, {params.c})",
        n_states=None,
    )


def gm1_certificate(params: Gm1Params = Gm1Params(),
                    paper_literal_a: int | None = None) -> LyapunovCertificate:
    """Quadratic/linear Lyapunov pair for the G/M/1 chain.

    g1(x) = 300 x^2 and g2(x) = 300 x.  By default the exit bounds h_i are
    computed exactly downstream.  Passing ``paper_literal_a`` instead pins
    h_i to the reported magnitudes 300 * beta_0 * (a+1)^(3-i) at the state
    x = a and zero elsewhere.  Since one-step escape from A = {0..a} only
    happens from x = a (to a+1, mass beta_0), these are the exact exit
    bounds for that truncation set; using them with any other A is an
    unchecked external claim.
    """
    g1 = lambda x: 300.0 * float(x) ** 2
    g2 = lambda x: 300.0 * float(x)
    if paper_literal_a is None:
        return LyapunovCertificate(g1=g1, g2=g2)
    a = int(paper_literal_a)
    beta0 = float(gm1_beta_coeffs(Gm1Params(c=params.c, max_coeff=1))[0])
    h1 = lambda x: 300.0 * beta0 * (a + 1.0) ** 2 if x == a else 0.0
    h2 = lambda x: 300.0 * beta0 * (a + 1.0) if x == a else 0.0
    return LyapunovCertificate(g1=g1, g2=g2, h1_override=h1, h2_override=h2)


def random_walk_row(x: StateIndex) -> SparseRow:
    """Row of the reflected random walk: up 1/3, down 2/3, reflect at 0."""
    if x < 0:
        raise ValueError("state must be non-negative")
    if x == 0:
        return SparseRow(np.array([1]), np.array([1.0]))
    return SparseRow(np.array([x - 1, x + 1]), np.array([2.0 / 3.0, 1.0 / 3.0]))


def random_walk_chain() -> ChainModel:
    """Reflected random walk on {0, 1, 2, ...} with downward drift."""
    return ChainModel(
        row_fn=random_walk_row,
        description="reflected random walk, up 1/3 / down 2/3",
        n_states=None,
    )


def random_walk_certificate(paper_literal_a: int | None = None) -> LyapunovCertificate:
    """Quadratic Lyapunov pair g1 = g2 = x^2 for the random walk.

    The default computes exit bounds exactly downstream.  Passing
    ``paper_literal_a`` pins h_i to (a+1)^2 / 3 at x = a and zero
    elsewhere, which is the exact exit bound for A = {0..a} (only x = a
    escapes, to a+1 with probability 1/3, and g(a+1) = (a+1)^2).
    """
    g = lambda x: float(x) ** 2
    if paper_literal_a is None:
        return LyapunovCertificate(g1=g, g2=g)
    a = int(paper_literal_a)
    h = lambda x: (a + 1.0) ** 2 / 3.0 if x == a else 0.0
    return LyapunovCertificate(g1=g, g2=g, h1_override=h, h2_override=h)


def load_chain_from_file(path) -> ChainModel:
    """Load a finite chain from a coordinate-format text file.

    Format: optional comment lines starting with '#', one header line
    ``states N``, then one ``src dst prob`` triple per line (whitespace
    separated).  Rows are validated on load: duplicate entries, indices
    outside the declared dimension, non-positive probabilities and row
    sums off by more than 1e-9 all raise ``ChainFileError``.
    """
    n = None
    triples: list[tuple[int, int, float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if n is None:
                if len(parts) != 2 or parts[0].lower() != "states":
                    raise ChainFileError(f"{path}:{lineno}: expected header 'states N'")
                try:
                    n = int(parts[1])
                except ValueError as exc:
                    raise ChainFileError(f"{path}:{lineno}: bad state count {parts[1]!r}") from exc
                if n <= 0:
                    raise ChainFileError(f"{path}:{lineno}: state count must be positive")
                continue
            if len(parts) != 3:
                raise ChainFileError(f"{path}:{lineno}: expected 'src dst prob', got {line!r}")
            try:
                src, dst, prob = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise ChainFileError(f"{path}:{lineno}: unparsable entry {line!r}") from exc
            if not (0 <= src < n and 0 <= dst < n):
                raise ChainFileError(
                    f"{path}:{lineno}: state outside declared dimension {n}: {line!r}")
            if not math.isfinite(prob) or prob <= 0.0:
                raise ChainFileError(f"{path}:{lineno}: probability must be in (0, 1]: {line!r}")
            triples.append((src, dst, prob))
    if n is None:
        raise ChainFileError(f"{path}: missing 'states N' header")

    by_row: dict[int, dict[int, float]] = {x: {} for x in range(n)}
    for src, dst, prob in triples:
        if dst in by_row[src]:
            raise ChainFileError(f"{path}: duplicate entry for ({src}, {dst})")
        by_row[src][dst] = prob

    rows = []
    for x in range(n):
        if not by_row[x]:
            raise ChainFileError(f"{path}: state {x} has no outgoing transitions")
        targets = np.array(sorted(by_row[x]), dtype=np.int64)
        probs = np.array([by_row[x][int(t)] for t in targets])
        total = probs.sum()
        if abs(total - 1.0) > FILE_ROW_SUM_TOL:
            raise ChainFileError(
                f"{path}: row {x} sums to {total:.12g} (deviation {abs(total - 1.0):.3e})")
        rows.append(SparseRow(targets, probs))
    return ChainModel(row_fn=lambda x: rows[x], description=f"file chain ({path})", n_states=n)
