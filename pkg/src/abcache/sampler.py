"""Denoising loops: the single-step exponential integrator and the cached variant.

Both solvers walk a StepGrid from t_max down to t_min. The baseline evaluates
the predictor at every node. The cached sampler evaluates only during warm-up
(the first k steps), at refresh indices (n % T == 0), and — by default — at
the final step; everywhere else it reconstructs the prediction from the ring
buffer of the last k real outputs.

Reconstruction works in the exp(-lambda)-weighted output space, where the
k-step recursion is plain polynomial extrapolation: weights are built from
the cached nodes' actual positions and the actual query point, so targets
between refreshes are hit exactly rather than one cache-stride ahead. On an
equispaced cache queried one stride beyond its newest entry the weights
reduce exactly to the alternating-binomial coefficients of
`extrapolation_coefficients`. In flow-matching mode the progress variable is
t and the exponential reweighting is dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError, NumericalError, SpacingError
from .integrator import (
    MAX_EXTRAPOLATION_ORDER,
    Mode,
    extrapolate_output,
    lagrange_extrapolation_weights,
)
from .model import Predictor
from .schedule import GridSpacing, NoiseSchedule, StepGrid, make_grid

SPACING_RTOL = 1e-9
_CSV_COLUMNS = ("step_index", "t", "lambda", "was_cached",
                "eps_error_vs_oracle", "x_norm")


class Strictness(str, Enum):
    STRICT = "strict"
    LENIENT = "lenient"


@dataclass(frozen=True)
class SamplerConfig:
    """Run parameters for the cached sampler.

    cache_interval = 1 disables caching (every step evaluates). In STRICT
    mode the grid must be uniform in the mode's progress variable (lambda
    for diffusion, t for flow) to within 1e-9 relative; LENIENT accepts any
    grid and uses the local spacing, at the cost of the formal error bound.
    """

    order: int = 2
    cache_interval: int = 1
    n_steps: int = 50
    mode: Mode = Mode.DIFFUSION
    spacing: GridSpacing = GridSpacing.UNIFORM_T
    strictness: Strictness = Strictness.LENIENT
    seed: int = 0
    force_final_eval: bool = True
    record_eps_error: bool = False

    def __post_init__(self):
        if not 1 <= self.order <= MAX_EXTRAPOLATION_ORDER:
            raise ConfigError(
                f"order must be in 1..{MAX_EXTRAPOLATION_ORDER}, got {self.order}"
            )
        if self.cache_interval < 1:
            raise ConfigError(f"cache_interval must be >= 1, got {self.cache_interval}")
        if self.n_steps < 1:
            raise ConfigError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.n_steps < self.order:
            raise ConfigError(
                f"n_steps={self.n_steps} cannot warm a {self.order}-entry cache"
            )
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "spacing", GridSpacing(self.spacing))
        object.__setattr__(self, "strictness", Strictness(self.strictness))


@dataclass(frozen=True)
class CacheEntry:
    lam: float
    position: float  # progress variable: lambda (diffusion) or -t (flow)
    eps: np.ndarray
    step_index: int


class OutputCache:
    """Ring buffer of the last `capacity` real network outputs.

    Only real evaluations are pushed; reconstructed outputs never re-enter,
    so extrapolation error cannot compound through the history.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._entries: list[CacheEntry] = []

    def push(self, entry: CacheEntry) -> None:
        if self._entries:
            last = self._entries[-1]
            if not (entry.lam > last.lam and entry.step_index > last.step_index):
                raise DomainError("cache entries must advance in lambda and step index")
        self._entries.append(entry)
        if len(self._entries) > self.capacity:
            self._entries.pop(0)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[CacheEntry, ...]:
        return tuple(self._entries)

    @property
    def full(self) -> bool:
        return len(self._entries) == self.capacity


@dataclass(frozen=True)
class StepRecord:
    step_index: int
    t: float
    lam: float
    x: np.ndarray
    eps_used: np.ndarray
    was_cached: bool
    eps_error: float | None = None


@dataclass(frozen=True)
class Trajectory:
    """Per-step log of a run plus the evaluation accounting."""

    records: tuple[StepRecord, ...]
    x_final: np.ndarray
    n_network_evals: int
    n_extrapolations: int
    mode: Mode
    grid: StepGrid = field(repr=False)

    @property
    def n_steps(self) -> int:
        return len(self.records)

    @property
    def eps_outputs(self) -> list[np.ndarray]:
        return [r.eps_used for r in self.records]

    def to_csv(self) -> str:
        lines = [",".join(_CSV_COLUMNS)]
        for r in self.records:
            err = float("nan") if r.eps_error is None else r.eps_error
            lines.append(",".join((
                str(r.step_index),
                format(r.t, ".17g"),
                format(r.lam, ".17g"),
                "1" if r.was_cached else "0",
                format(err, ".17g"),
                format(float(np.linalg.norm(r.x)), ".17g"),
            )))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------

def first_order_step(x_s: np.ndarray, s: float, t: float, eps: np.ndarray,
                     schedule: NoiseSchedule) -> np.ndarray:
    """Exponential-integrator update, exact for a constant prediction:

        x_t = (alpha_t / alpha_s) x_s - sigma_t (e^{lambda_t - lambda_s} - 1) eps
    """
    s, t = float(s), float(t)
    if t > s:
        raise DomainError(f"step must not move backwards: t={t} > s={s}")
    x_s = np.asarray(x_s, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if eps.shape != x_s.shape:
        raise DomainError("eps shape does not match state shape")
    if t == s:
        return x_s.copy()
    lam_s = schedule.lambda_of_t(s)
    lam_t = schedule.lambda_of_t(t)
    a_s = schedule.alpha(s)
    if not math.isfinite(lam_s) or a_s == 0.0:
        raise NumericalError(
            f"diffusion step from t={s} needs finite lambda and alpha > 0; "
            "shrink t_max or use flow mode"
        )
    a_t = schedule.alpha(t)
    sg_t = schedule.sigma(t)
    return (a_t / a_s) * x_s - sg_t * math.expm1(lam_t - lam_s) * eps


def flow_euler_step(x_s: np.ndarray, s: float, t: float, v: np.ndarray) -> np.ndarray:
    """Euler update on the velocity field: x_t = x_s + (t - s) v."""
    x_s = np.asarray(x_s, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.shape != x_s.shape:
        raise DomainError("velocity shape does not match state shape")
    return x_s + (float(t) - float(s)) * v


# ---------------------------------------------------------------------------
# run loops
# ---------------------------------------------------------------------------

def _initial_state(config: SamplerConfig, predictor: Predictor,
                   x_init) -> np.ndarray:
    if x_init is not None:
        x = np.asarray(x_init, dtype=float)
        if x.shape != (predictor.dim,):
            raise DomainError(
                f"x_init shape {x.shape} does not match predictor dim {predictor.dim}"
            )
        return x.copy()
    rng = np.random.default_rng(config.seed)
    return rng.standard_normal(predictor.dim)


def _positions(grid: StepGrid, mode: Mode) -> np.ndarray:
    # Progress increases along denoising in both modes.
    return grid.lambdas if mode == Mode.DIFFUSION else -grid.times


def _validate_grid_for_mode(grid: StepGrid, mode: Mode) -> None:
    if mode == Mode.DIFFUSION and not np.all(np.isfinite(grid.lambdas)):
        raise DomainError(
            "diffusion mode needs finite lambda at every node "
            "(alpha vanishes at t_max; shrink the domain or use flow mode)"
        )


def _check_uniform(positions: np.ndarray) -> None:
    gaps = np.diff(positions)
    h = float(np.mean(gaps))
    if np.max(np.abs(gaps - h)) > SPACING_RTOL * max(abs(h), 1e-300):
        raise SpacingError(
            "strict mode requires uniform spacing of the progress variable "
            f"to {SPACING_RTOL:g} relative; use lenient mode for this grid"
        )


def _cache_coefficients(entries: Sequence[CacheEntry], target_pos: float,
                        target_lam: float, mode: Mode) -> np.ndarray:
    """Reconstruction coefficients, most recent entry first."""
    w = lagrange_extrapolation_weights([e.position for e in entries], target_pos)
    if mode == Mode.DIFFUSION:
        w = w * np.exp(target_lam - np.array([e.lam for e in entries]))
    return w[::-1]


def run_baseline(config: SamplerConfig, predictor: Predictor,
                 schedule: NoiseSchedule, x_init=None) -> Trajectory:
    """Reference loop: a real evaluation at every one of the N steps.

    Kept as an independent implementation (not the cached loop with T = 1) so
    the equivalence check between the two is meaningful.
    """
    grid = make_grid(schedule, config.n_steps, config.spacing)
    _validate_grid_for_mode(grid, config.mode)
    x = _initial_state(config, predictor, x_init)
    records = []
    for n in range(grid.n_steps):
        t_n = float(grid.times[n])
        eps = predictor.evaluate(x, t_n)
        records.append(StepRecord(
            step_index=n, t=t_n, lam=float(grid.lambdas[n]), x=x,
            eps_used=eps, was_cached=False,
            eps_error=0.0 if config.record_eps_error else None,
        ))
        if config.mode == Mode.DIFFUSION:
            x = first_order_step(x, t_n, float(grid.times[n + 1]), eps, schedule)
        else:
            x = flow_euler_step(x, t_n, float(grid.times[n + 1]), eps)
    return Trajectory(records=tuple(records), x_final=x,
                      n_network_evals=grid.n_steps, n_extrapolations=0,
                      mode=config.mode, grid=grid)


def run_ab_cache(config: SamplerConfig, predictor: Predictor,
                 schedule: NoiseSchedule, x_init=None) -> Trajectory:
    """Cached sampling: evaluate at warm-up/refresh steps, extrapolate otherwise.

    Network evaluations happen at steps n < k, at n % T == 0, and at the last
    step when force_final_eval is set; every other step reconstructs the
    prediction from the cache without touching the predictor.
    """
    k, T = config.order, config.cache_interval
    grid = make_grid(schedule, config.n_steps, config.spacing)
    _validate_grid_for_mode(grid, config.mode)
    positions = _positions(grid, config.mode)
    if config.strictness == Strictness.STRICT:
        _check_uniform(positions)
    x = _initial_state(config, predictor, x_init)
    cache = OutputCache(k)
    records = []
    n_evals = 0
    n_extrap = 0
    N = grid.n_steps
    for n in range(N):
        t_n = float(grid.times[n])
        lam_n = float(grid.lambdas[n])
        refresh = (n < k or n % T == 0
                   or (config.force_final_eval and n == N - 1))
        if refresh:
            eps = predictor.evaluate(x, t_n)
            n_evals += 1
            cache.push(CacheEntry(lam=lam_n, position=float(positions[n]),
                                  eps=eps, step_index=n))
            eps_error = 0.0 if config.record_eps_error else None
        else:
            if not cache.full:
                raise ConfigError("cache not warmed up before first extrapolation")
            coeffs = _cache_coefficients(cache.entries, float(positions[n]),
                                         lam_n, config.mode)
            history = [e.eps for e in reversed(cache.entries)]
            eps = extrapolate_output(history, coeffs)
            n_extrap += 1
            eps_error = None
            if config.record_eps_error:
                eps_error = float(np.max(np.abs(eps - predictor.probe(x, t_n))))
        records.append(StepRecord(
            step_index=n, t=t_n, lam=lam_n, x=x, eps_used=eps,
            was_cached=not refresh, eps_error=eps_error,
        ))
        if config.mode == Mode.DIFFUSION:
            x = first_order_step(x, t_n, float(grid.times[n + 1]), eps, schedule)
        else:
            x = flow_euler_step(x, t_n, float(grid.times[n + 1]), eps)
    return Trajectory(records=tuple(records), x_final=x,
                      n_network_evals=n_evals, n_extrapolations=n_extrap,
                      mode=config.mode, grid=grid)


# ---------------------------------------------------------------------------
# the consecutive-output scale factor
# ---------------------------------------------------------------------------

def scale_factor_simplified(h: float) -> float:
    """Single-variable form r(h) = h / (3 h e^{-h} - 2 e^{-2h} (e^h - 1)).

    Cross-check for the literal formula; the two coincide on any schedule via
    sigma_t e^{lambda_t} = alpha_t. Near h = 0, r = 1 + (5/6) h^2 + O(h^3).
    """
    h = float(h)
    if h == 0.0:
        return 1.0
    denom = 3.0 * h * math.exp(-h) - 2.0 * math.exp(-2.0 * h) * math.expm1(h)
    if abs(denom) < 1e-300:
        raise NumericalError(f"scale-factor denominator vanished at h={h}")
    return h / denom


def _scale_factor_parts(alpha_t: float, sigma_t: float, lam_o: float,
                        h: float) -> float:
    denom = (3.0 * math.exp(-h) * alpha_t * h
             - 2.0 * sigma_t * math.exp(lam_o) * math.expm1(h))
    if abs(denom) < 1e-300:
        raise NumericalError(f"scale-factor denominator vanished at h={h}")
    return alpha_t * h / denom


def scale_factor(schedule: NoiseSchedule, t: float, s: float, o: float,
                 spacing_tol: float = SPACING_RTOL) -> float:
    """Ratio linking consecutive predictions across the equispaced triple
    lambda_o < lambda_s < lambda_t (times t < s < o):

        r = alpha_t h / (3 e^{-h} alpha_t h - 2 sigma_t e^{lambda_o} (e^h - 1))

    sigma is evaluated at the time whose half-logSNR is lambda_t, i.e. at t.
    The equal-spacing premise is enforced to `spacing_tol` relative.
    """
    lam_t = schedule.lambda_of_t(t)
    lam_s = schedule.lambda_of_t(s)
    lam_o = schedule.lambda_of_t(o)
    h1 = lam_t - lam_s
    h2 = lam_s - lam_o
    if h1 <= 0 or h2 <= 0:
        raise DomainError("expected t < s < o in time (increasing lambda)")
    if abs(h1 - h2) > spacing_tol * max(h1, h2):
        raise SpacingError(
            f"lambda gaps differ by more than {spacing_tol:g} relative "
            f"({h1} vs {h2}); the equal-spacing premise does not hold"
        )
    return _scale_factor_parts(schedule.alpha(t), schedule.sigma(t), lam_o, h1)
