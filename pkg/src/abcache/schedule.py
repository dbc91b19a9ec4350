"""Noise-schedule arithmetic in the half-logSNR coordinate.

A schedule defines the marginal q(x_t | x_0) = N(alpha_t x_0, sigma_t^2 I)
for t in a closed domain [t_min, t_max] inside (0, 1]. The reparameterized
coordinate

    lambda(t) = log(alpha_t / sigma_t)

is strictly decreasing in t and is the integration variable of every solver
in this package; denoising runs from t_max down to t_min, i.e. from small
lambda to large lambda.

Conventions:
  - VP_LINEAR:  log alpha_t = -1/4 t^2 (beta_max - beta_min) - 1/2 t beta_min,
                sigma_t = sqrt(1 - alpha_t^2).
  - VP_COSINE:  alpha_t = cos(pi t / 2), sigma_t = sin(pi t / 2).
  - FLOW_LINEAR: alpha_t = 1 - t, sigma_t = t (rectified-flow convention).

alpha may vanish exactly at t_max = 1 for VP_COSINE and FLOW_LINEAR; there
lambda(t_max) = -inf. That endpoint is valid for flow-matching runs (which
never divide by alpha) but is rejected by uniform-lambda grids and by the
diffusion-mode solvers, which need finite lambda everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, DomainError

DEFAULT_T_MIN = 1e-3

# Bisection runs until the bracket cannot shrink; this caps pathological cases.
_BISECTION_MAX_ITER = 200


class ScheduleKind(str, Enum):
    VP_LINEAR = "vp_linear"
    VP_COSINE = "vp_cosine"
    FLOW_LINEAR = "flow_linear"


class GridSpacing(str, Enum):
    UNIFORM_T = "uniform_t"
    UNIFORM_LAMBDA = "uniform_lambda"


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable (alpha, sigma, lambda) triple over a clipped time domain."""

    kind: ScheduleKind
    beta_min: float = 0.1
    beta_max: float = 20.0
    t_min: float = DEFAULT_T_MIN
    t_max: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.t_min < self.t_max <= 1.0:
            raise ConfigError(
                f"time domain must satisfy 0 < t_min < t_max <= 1, "
                f"got [{self.t_min}, {self.t_max}]"
            )
        if self.kind == ScheduleKind.VP_LINEAR:
            if not 0.0 < self.beta_min <= self.beta_max:
                raise ConfigError(
                    f"need 0 < beta_min <= beta_max, got ({self.beta_min}, {self.beta_max})"
                )
        # alpha must stay positive on [t_min, t_max); zero is tolerated only
        # at the right endpoint (pure-noise start of a flow run).
        if self.kind in (ScheduleKind.VP_COSINE, ScheduleKind.FLOW_LINEAR):
            if self.t_min >= 1.0:
                raise ConfigError(f"{self.kind.value} requires t_min < 1")

    # -- closed forms -------------------------------------------------------

    def _log_alpha(self, t: np.ndarray) -> np.ndarray:
        if self.kind == ScheduleKind.VP_LINEAR:
            return -0.25 * t * t * (self.beta_max - self.beta_min) - 0.5 * t * self.beta_min
        with np.errstate(divide="ignore"):
            if self.kind == ScheduleKind.VP_COSINE:
                return np.log(np.cos(0.5 * math.pi * t))
            return np.log(1.0 - t)

    def _alpha(self, t: np.ndarray) -> np.ndarray:
        if self.kind == ScheduleKind.VP_COSINE:
            return np.cos(0.5 * math.pi * t)
        if self.kind == ScheduleKind.FLOW_LINEAR:
            return 1.0 - t
        return np.exp(self._log_alpha(t))

    def _sigma(self, t: np.ndarray) -> np.ndarray:
        if self.kind == ScheduleKind.VP_COSINE:
            return np.sin(0.5 * math.pi * t)
        if self.kind == ScheduleKind.FLOW_LINEAR:
            return np.asarray(t, dtype=float)
        # sigma^2 = 1 - alpha^2 = -expm1(2 log alpha), stable for small t
        return np.sqrt(-np.expm1(2.0 * self._log_alpha(t)))

    def _lambda(self, t: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            if self.kind == ScheduleKind.VP_LINEAR:
                la = self._log_alpha(t)
                return la - 0.5 * np.log(-np.expm1(2.0 * la))
            if self.kind == ScheduleKind.VP_COSINE:
                return -np.log(np.tan(0.5 * math.pi * t))
            return np.log(1.0 - t) - np.log(t)

    # -- public operations --------------------------------------------------

    def _check_t(self, t) -> np.ndarray:
        arr = np.asarray(t, dtype=float)
        if np.any(arr < self.t_min) or np.any(arr > self.t_max):
            raise DomainError(
                f"t={t} outside schedule domain [{self.t_min}, {self.t_max}]"
            )
        return arr

    def alpha(self, t):
        """Signal coefficient alpha_t."""
        arr = self._check_t(t)
        out = self._alpha(arr)
        return float(out) if np.ndim(t) == 0 else out

    def sigma(self, t):
        """Noise coefficient sigma_t."""
        arr = self._check_t(t)
        out = self._sigma(arr)
        return float(out) if np.ndim(t) == 0 else out

    def lambda_of_t(self, t):
        """Half-logSNR lambda(t) = log(alpha_t / sigma_t); decreasing in t."""
        arr = self._check_t(t)
        out = self._lambda(arr)
        return float(out) if np.ndim(t) == 0 else out

    @property
    def lambda_bounds(self) -> tuple[float, float]:
        """(lambda(t_max), lambda(t_min)) — the achievable lambda interval."""
        return (
            float(self._lambda(np.asarray(self.t_max))),
            float(self._lambda(np.asarray(self.t_min))),
        )

    def t_of_lambda(self, lam: float) -> float:
        """Invert lambda(t) by bisection.

        The bracket is shrunk until it cannot be halved further in double
        precision, so the residual |lambda(t) - lam| stays below 1e-10 even
        where |dlambda/dt| is of order 1/t_min.
        """
        lam = float(lam)
        lo_lam, hi_lam = self.lambda_bounds
        if not lo_lam <= lam <= hi_lam:
            raise DomainError(
                f"lambda={lam} outside achievable range [{lo_lam}, {hi_lam}]"
            )
        lo, hi = self.t_min, self.t_max  # lambda(lo) = hi_lam >= lam >= lambda(hi)
        for _ in range(_BISECTION_MAX_ITER):
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            if float(self._lambda(np.asarray(mid))) > lam:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


def vp_linear(beta_min: float = 0.1, beta_max: float = 20.0,
              t_min: float = DEFAULT_T_MIN, t_max: float = 1.0) -> NoiseSchedule:
    return NoiseSchedule(ScheduleKind.VP_LINEAR, beta_min, beta_max, t_min, t_max)


def vp_cosine(t_min: float = DEFAULT_T_MIN, t_max: float = 0.999) -> NoiseSchedule:
    return NoiseSchedule(ScheduleKind.VP_COSINE, t_min=t_min, t_max=t_max)


def flow_linear(t_min: float = DEFAULT_T_MIN, t_max: float = 1.0) -> NoiseSchedule:
    return NoiseSchedule(ScheduleKind.FLOW_LINEAR, t_min=t_min, t_max=t_max)


@dataclass(frozen=True)
class StepGrid:
    """Discretization nodes in denoising order: times decreasing, lambdas increasing.

    For UNIFORM_T the times array is authoritative (exact linspace) and
    lambdas is its image; for UNIFORM_LAMBDA the lambdas array is the exact
    uniform sequence and times holds the bisection inverses.
    """

    schedule: NoiseSchedule
    spacing: GridSpacing
    times: np.ndarray = field(repr=False)
    lambdas: np.ndarray = field(repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        lambdas = np.asarray(self.lambdas, dtype=float)
        if times.shape != lambdas.shape or times.ndim != 1 or times.size < 2:
            raise ConfigError("grid needs matching 1-D times/lambdas with >= 2 nodes")
        if not np.all(np.diff(times) < 0):
            raise ConfigError("grid times must be strictly decreasing")
        if not np.all(np.diff(lambdas) > 0):
            raise ConfigError("grid lambdas must be strictly increasing")
        times.flags.writeable = False
        lambdas.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "lambdas", lambdas)

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def lambda_gaps(self) -> np.ndarray:
        return np.diff(self.lambdas)

    def time_gaps(self) -> np.ndarray:
        return np.diff(self.times)


def make_grid(schedule: NoiseSchedule, n_steps: int,
              spacing: GridSpacing = GridSpacing.UNIFORM_T) -> StepGrid:
    """Build the n_steps+1 node grid from t_max down to t_min."""
    if not isinstance(n_steps, (int, np.integer)) or n_steps < 1:
        raise ConfigError(f"n_steps must be a positive integer, got {n_steps!r}")
    spacing = GridSpacing(spacing)
    if spacing == GridSpacing.UNIFORM_T:
        times = np.linspace(schedule.t_max, schedule.t_min, n_steps + 1)
        lambdas = schedule.lambda_of_t(times)
    else:
        lam_lo, lam_hi = schedule.lambda_bounds
        if not math.isfinite(lam_lo):
            raise DomainError(
                "uniform-lambda grid needs finite lambda(t_max); "
                "shrink t_max below the alpha = 0 endpoint"
            )
        lambdas = np.linspace(lam_lo, lam_hi, n_steps + 1)
        times = np.array([schedule.t_of_lambda(l) for l in lambdas])
        times[0], times[-1] = schedule.t_max, schedule.t_min
    return StepGrid(schedule=schedule, spacing=spacing, times=times, lambdas=lambdas)
