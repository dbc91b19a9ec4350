"""Analytic stand-ins for learned denoisers.

Trained networks are out of reach for desk-scale verification, so the
predictors here are Bayes-optimal closed forms for Gaussian and
Gaussian-mixture data. Their exact marginals make truncation-error claims
machine-checkable: the noise prediction is exactly -sigma_t times the score
of the marginal, and for single-Gaussian data the probability-flow ODE has a
closed-form solution usable as a reference trajectory.

All predictors are deterministic and count their real evaluations — the
currency in which cache speedups are measured. `probe` computes the same
value without touching the counter and exists purely for diagnostics.
"""

from __future__ import annotations

import math
import threading

import numpy as np

from .errors import ConfigError, DomainError
from .schedule import NoiseSchedule


class Predictor:
    """Base class for deterministic predictors with evaluation accounting."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ConfigError(f"dim must be >= 1, got {dim}")
        self._dim = int(dim)
        self._eval_count = 0
        self._count_lock = threading.Lock()

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def eval_count(self) -> int:
        """Number of real evaluations so far (monotone)."""
        return self._eval_count

    def _check_input(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        if arr.shape != (self._dim,):
            raise DomainError(f"expected state of shape ({self._dim},), got {arr.shape}")
        return arr

    def evaluate(self, x, t: float) -> np.ndarray:
        """Predict at (x, t), incrementing the evaluation counter by one."""
        arr = self._check_input(x)
        with self._count_lock:
            self._eval_count += 1
        return self._compute(arr, float(t))

    def probe(self, x, t: float) -> np.ndarray:
        """Same prediction without counting; for error diagnostics only."""
        return self._compute(self._check_input(x), float(t))

    def _compute(self, x: np.ndarray, t: float) -> np.ndarray:
        raise NotImplementedError


def _broadcast_mean(mean, dim: int) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(mean, dtype=float), (dim,)).copy()
    arr.flags.writeable = False
    return arr


class GaussianOracle(Predictor):
    """Optimal noise prediction for x_0 ~ N(mean, std^2 I).

    The marginal at time t is N(alpha_t mean, (alpha_t^2 std^2 + sigma_t^2) I),
    so the Bayes-optimal prediction is

        eps*(x, t) = sigma_t (x - alpha_t mean) / (alpha_t^2 std^2 + sigma_t^2),

    which equals -sigma_t times the marginal score.
    """

    def __init__(self, mean, std: float, schedule: NoiseSchedule, dim: int | None = None):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        dim = int(dim) if dim is not None else mean.shape[0]
        super().__init__(dim)
        if std <= 0:
            raise ConfigError(f"std must be positive, got {std}")
        self.mean = _broadcast_mean(mean, dim)
        self.std = float(std)
        self.schedule = schedule

    def _compute(self, x: np.ndarray, t: float) -> np.ndarray:
        a = self.schedule.alpha(t)
        s = self.schedule.sigma(t)
        var = a * a * self.std ** 2 + s * s
        return s * (x - a * self.mean) / var


class MixtureOracle(Predictor):
    """Optimal noise prediction for a mixture of isotropic Gaussians.

    The prediction is the posterior-weighted combination of per-component
    Gaussian predictions; posterior weights are component likelihoods of x
    under each marginal at t, computed in log space with max subtraction.
    """

    def __init__(self, weights, means, stds, schedule: NoiseSchedule,
                 dim: int | None = None):
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 1 or weights.size == 0:
            raise ConfigError("mixture needs a non-empty 1-D weight vector")
        if np.any(weights <= 0):
            raise ConfigError("mixture weights must be positive")
        if abs(float(weights.sum()) - 1.0) > 1e-9:
            raise ConfigError(f"mixture weights must sum to 1, got {weights.sum()}")
        if len(means) != weights.size or len(stds) != weights.size:
            raise ConfigError("weights, means and stds must have equal length")
        first = np.atleast_1d(np.asarray(means[0], dtype=float))
        dim = int(dim) if dim is not None else first.shape[0]
        super().__init__(dim)
        if any(s <= 0 for s in stds):
            raise ConfigError("mixture stds must be positive")
        self.weights = weights
        self.means = [_broadcast_mean(m, dim) for m in means]
        self.stds = [float(s) for s in stds]
        self.schedule = schedule

    def _compute(self, x: np.ndarray, t: float) -> np.ndarray:
        a = self.schedule.alpha(t)
        s = self.schedule.sigma(t)
        log_posts = np.empty(len(self.weights))
        components = []
        for i, (w, mu, sd) in enumerate(zip(self.weights, self.means, self.stds)):
            var = a * a * sd * sd + s * s
            d = x - a * mu
            log_posts[i] = (math.log(w) - 0.5 * float(d @ d) / var
                            - 0.5 * self.dim * math.log(2.0 * math.pi * var))
            components.append(s * d / var)
        log_posts -= log_posts.max()
        post = np.exp(log_posts)
        post /= post.sum()
        out = np.zeros(self.dim)
        for g, comp in zip(post, components):
            out += g * comp
        return out


class GaussianVelocityOracle(Predictor):
    """Optimal velocity field for x_0 ~ N(mean, std^2 I) in flow-matching mode.

    With v_t = alpha_t^2 std^2 + sigma_t^2 the conditional expectations of
    noise and data give the closed form

        v*(x, t) = (sigma_t - alpha_t std^2) (x - alpha_t mean) / v_t - mean,

    valid for every t including the pure-noise endpoint alpha = 0.
    """

    def __init__(self, mean, std: float, schedule: NoiseSchedule, dim: int | None = None):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        dim = int(dim) if dim is not None else mean.shape[0]
        super().__init__(dim)
        if std <= 0:
            raise ConfigError(f"std must be positive, got {std}")
        self.mean = _broadcast_mean(mean, dim)
        self.std = float(std)
        self.schedule = schedule

    def _compute(self, x: np.ndarray, t: float) -> np.ndarray:
        a = self.schedule.alpha(t)
        s = self.schedule.sigma(t)
        var = a * a * self.std ** 2 + s * s
        return (s - a * self.std ** 2) * (x - a * self.mean) / var - self.mean


GaussianFamily = (GaussianOracle, GaussianVelocityOracle)


def exact_marginal_trajectory(oracle, x_start, t_start: float, t_end: float) -> np.ndarray:
    """Exact probability-flow solution for single-Gaussian data.

    Because the optimal drift is affine in x with isotropic coefficients, the
    flow map is the scalar affine map that transports N(alpha_s mean, v_s I)
    onto N(alpha_t mean, v_t I):

        x_t = alpha_t mean + sqrt(v_t / v_s) (x_s - alpha_s mean),
        v_u = alpha_u^2 std^2 + sigma_u^2.

    This closed form (not a numerical integration) holds for any schedule and
    for both the noise-prediction and velocity parameterizations; tests
    cross-check it against a high-accuracy adaptive integrator.
    """
    if not isinstance(oracle, GaussianFamily):
        raise ConfigError(
            "exact trajectories exist only for the single-Gaussian oracles, "
            f"got {type(oracle).__name__}"
        )
    sch = oracle.schedule
    t_start, t_end = float(t_start), float(t_end)
    if t_end > t_start:
        raise DomainError(f"t_end={t_end} must not exceed t_start={t_start}")
    x = np.asarray(x_start, dtype=float)
    if x.shape != (oracle.dim,):
        raise DomainError(f"expected state of shape ({oracle.dim},), got {x.shape}")
    if t_end == t_start:
        return x.copy()
    a0, s0 = sch.alpha(t_start), sch.sigma(t_start)
    a1, s1 = sch.alpha(t_end), sch.sigma(t_end)
    v0 = a0 * a0 * oracle.std ** 2 + s0 * s0
    v1 = a1 * a1 * oracle.std ** 2 + s1 * s1
    return a1 * oracle.mean + math.sqrt(v1 / v0) * (x - a0 * oracle.mean)
