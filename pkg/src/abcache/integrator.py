"""Explicit multistep machinery: quadrature weights and cached-output extrapolation.

Everything here operates on the integrand f(lambda) = exp(-lambda) * eps(lambda)
that appears in the exact denoising integral. Two distinct tools:

  * ab_weights / multistep_step — the classical explicit k-step quadrature
    rule: integrate f over one step using the last k integrand samples, with
    weights b_j = integral_0^1 L_j(s) ds computed as exact rationals.

  * extrapolation_coefficients / extrapolate_output — reconstruct the *next*
    network output from the previous k outputs without an evaluation:
    eps_n = sum_{i=1..k} (-1)^{i+1} C(k,i) e^{i h} eps_{n-i} + O(h^k).
    In flow-matching mode the exponential factor is dropped and the rule is
    plain k-th order binomial (forward-difference) extrapolation.

Weights are exact on constants (every row sums to 1) and the binomial rule is
exact on polynomial histories of degree <= k-1; both facts are load-bearing
and enforced by tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError, SpacingError
from .schedule import NoiseSchedule, StepGrid

MAX_WEIGHT_ORDER = 5
MAX_EXTRAPOLATION_ORDER = 4

SPACING_RTOL = 1e-9


class Mode(str, Enum):
    DIFFUSION = "diffusion"
    FLOW = "flow"


# ---------------------------------------------------------------------------
# quadrature weights (exact rationals)
# ---------------------------------------------------------------------------

def lagrange_basis_integral(j: int, k: int) -> Fraction:
    """Exact value of integral_0^1 L_j(s) ds for the k-point left-window basis.

    L_j(s) = prod_{m != j, 0 <= m <= k-1} (s + m) / (m - j). The polynomial is
    expanded over the rationals and integrated term by term; no floating point
    is involved.
    """
    if not 1 <= k <= MAX_WEIGHT_ORDER:
        raise ConfigError(f"order k must be in 1..{MAX_WEIGHT_ORDER}, got {k}")
    if not 0 <= j <= k - 1:
        raise ConfigError(f"index j must be in 0..{k - 1}, got {j}")
    coeffs = [Fraction(1)]  # ascending powers of s
    denom = Fraction(1)
    for m in range(k):
        if m == j:
            continue
        shifted = [Fraction(0)] * (len(coeffs) + 1)
        for power, c in enumerate(coeffs):
            shifted[power + 1] += c
            shifted[power] += c * m
        coeffs = shifted
        denom *= m - j
    integral = sum(c / (power + 1) for power, c in enumerate(coeffs))
    return integral / denom


@dataclass(frozen=True)
class ABWeights:
    """Weight row b_0..b_{k-1}, stored exactly with a float view."""

    order: int
    weights: tuple[Fraction, ...]

    @property
    def floats(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights])

    def __len__(self) -> int:
        return self.order


@lru_cache(maxsize=None)
def ab_weights(k: int) -> ABWeights:
    """Assemble the order-k weight row; rows sum to exactly 1."""
    if not isinstance(k, int) or not 1 <= k <= MAX_WEIGHT_ORDER:
        raise ConfigError(f"order k must be in 1..{MAX_WEIGHT_ORDER}, got {k}")
    row = tuple(lagrange_basis_integral(j, k) for j in range(k))
    assert sum(row) == 1
    return ABWeights(order=k, weights=row)


# ---------------------------------------------------------------------------
# cached-output extrapolation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExtrapolationCoefficients:
    """Coefficients c_1..c_k applied to the history eps_{n-1}..eps_{n-k}."""

    order: int
    h: float
    mode: Mode
    coeffs: tuple[float, ...]


def extrapolation_coefficients(k: int, h: float, mode: Mode = Mode.DIFFUSION
                               ) -> ExtrapolationCoefficients:
    """c_i = (-1)^{i+1} C(k,i) e^{ih} (diffusion) or (-1)^{i+1} C(k,i) (flow).

    k = 1 is the naive-reuse baseline (c_1 = e^h, or 1 in flow mode).
    """
    if not 1 <= k <= MAX_EXTRAPOLATION_ORDER:
        raise ConfigError(
            f"extrapolation order must be in 1..{MAX_EXTRAPOLATION_ORDER}, got {k}"
        )
    mode = Mode(mode)
    h = float(h)
    if h < 0.0:
        raise DomainError(f"step size h must be >= 0, got {h}")
    cs = []
    for i in range(1, k + 1):
        c = float((-1) ** (i + 1) * math.comb(k, i))
        if mode == Mode.DIFFUSION:
            c *= math.exp(i * h)
        cs.append(c)
    return ExtrapolationCoefficients(order=k, h=h, mode=mode, coeffs=tuple(cs))


def extrapolate_output(history: Sequence[np.ndarray],
                       coeffs: ExtrapolationCoefficients | Sequence[float]
                       ) -> np.ndarray:
    """Linear combination sum_i c_i eps_{n-i}; history is most recent first."""
    cs = np.asarray(coeffs.coeffs if isinstance(coeffs, ExtrapolationCoefficients)
                    else coeffs, dtype=float)
    if len(history) != len(cs):
        raise DomainError(
            f"history length {len(history)} does not match {len(cs)} coefficients"
        )
    vecs = [np.asarray(v, dtype=float) for v in history]
    dim = vecs[0].shape
    if any(v.shape != dim for v in vecs):
        raise DomainError("history vectors must share one shape")
    out = np.zeros(dim)
    for c, v in zip(cs, vecs):
        out += c * v
    return out


def lagrange_extrapolation_weights(nodes: Sequence[float], target: float) -> np.ndarray:
    """Polynomial extrapolation weights at `target` for samples at `nodes`.

    For equispaced nodes with target one spacing beyond the last node these
    are exactly the alternating binomial coefficients (in node order); the
    general form is what the cache state machine needs between refreshes,
    where the stored nodes are not equispaced around the query point.
    """
    xs = np.asarray(nodes, dtype=float)
    if xs.ndim != 1 or xs.size == 0:
        raise DomainError("need at least one node")
    if np.unique(xs).size != xs.size:
        raise DomainError("nodes must be distinct")
    w = np.ones(xs.size)
    for j in range(xs.size):
        for m in range(xs.size):
            if m != j:
                w[j] *= (target - xs[m]) / (xs[j] - xs[m])
    return w


# ---------------------------------------------------------------------------
# the multistep exponential-integrator baseline
# ---------------------------------------------------------------------------

def multistep_step(x_s: np.ndarray, grid: StepGrid, step_index: int,
                   history: Sequence[tuple[float, np.ndarray]],
                   weights: ABWeights, schedule: NoiseSchedule | None = None,
                   strict: bool = True) -> np.ndarray:
    """Advance node n -> n+1 with the k-step quadrature of the exact integral.

    history holds (lambda, eps) pairs most recent first, i.e. the samples at
    lambda_n, lambda_{n-1}, ..., lambda_{n-k+1}:

        x_t = (alpha_t / alpha_s) x_s
              - alpha_t * h * sum_j b_j e^{-lambda_{n-j}} eps_{n-j}

    With k = 1 this uses h where the single-step closed form uses e^h - 1;
    the two differ by O(h^2) and are deliberately kept separate.
    """
    schedule = schedule if schedule is not None else grid.schedule
    k = weights.order
    if not 0 <= step_index < grid.n_steps:
        raise DomainError(f"step_index {step_index} outside 0..{grid.n_steps - 1}")
    if len(history) < k:
        raise DomainError(f"need {k} history entries, got {len(history)}")
    history = list(history)[:k]
    lams = np.array([lam for lam, _ in history])
    h = float(grid.lambdas[step_index + 1] - grid.lambdas[step_index])
    if strict:
        gaps = np.concatenate(([h], -np.diff(lams)))
        if np.max(np.abs(gaps - h)) > SPACING_RTOL * max(abs(h), 1e-300):
            raise SpacingError(
                "history lambda spacing deviates from the step size beyond "
                f"{SPACING_RTOL:g} relative; use strict=False for non-uniform grids"
            )
    t_s = float(grid.times[step_index])
    t_t = float(grid.times[step_index + 1])
    a_s, a_t = schedule.alpha(t_s), schedule.alpha(t_t)
    x_s = np.asarray(x_s, dtype=float)
    acc = np.zeros_like(x_s)
    for b, (lam_j, eps_j) in zip(weights.floats, history):
        eps_j = np.asarray(eps_j, dtype=float)
        if eps_j.shape != x_s.shape:
            raise DomainError("eps history shape does not match state shape")
        acc += b * math.exp(-lam_j) * eps_j
    return (a_t / a_s) * x_s - a_t * h * acc


# ---------------------------------------------------------------------------
# the identity behind the extrapolation rule
# ---------------------------------------------------------------------------

def recursion_coefficients_from_weights(k: int) -> tuple[Fraction, ...]:
    """Derive the extrapolation coefficients by combining the order-k and
    order-(k+1) weight rows, in exact rational arithmetic.

    Equating the two quadrature approximations of one step and solving for
    the newest sample gives coefficients that, for k = 2, 3, 4, equal the
    alternating binomials (-1)^{i+1} C(k,i). Kept separate from
    extrapolation_coefficients so the identity can be cross-checked.
    """
    if not 2 <= k <= MAX_EXTRAPOLATION_ORDER:
        raise ConfigError(f"identity is stated for k in 2..{MAX_EXTRAPOLATION_ORDER}")
    bk = ab_weights(k).weights
    bk1 = ab_weights(k + 1).weights
    denom = bk[0] - bk1[0]
    cs = [(bk1[j] - bk[j]) / denom for j in range(1, k)]
    cs.append(bk1[k] / denom)
    return tuple(cs)
