"""Measurement utilities: similarity curves, scale-factor curves, convergence
orders, and speedup accounting.

Everything is a pure function over immutable inputs. CSV emitters print
floats with 17 significant digits so artifacts diff byte-for-byte across
identical runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .integrator import Mode, extrapolate_output, extrapolation_coefficients
from .model import GaussianFamily, exact_marginal_trajectory
from .sampler import Trajectory, _scale_factor_parts
from .schedule import NoiseSchedule, StepGrid

NORM_FLOOR = 1e-12


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# similarity between consecutive outputs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimilarityCurve:
    """Per-step relative L2 distance and cosine similarity of consecutive outputs."""

    step_indices: tuple[int, ...]
    rel_l2: np.ndarray
    cosine: np.ndarray

    def to_csv(self) -> str:
        lines = ["step_index,rel_l2,cosine"]
        for i, r, c in zip(self.step_indices, self.rel_l2, self.cosine):
            lines.append(f"{i},{_fmt(r)},{_fmt(c)}")
        return "\n".join(lines) + "\n"


def similarity_curve(outputs: Sequence[np.ndarray]) -> SimilarityCurve:
    """Compare each output with its predecessor.

    rel_l2[i] = |eps_i - eps_{i-1}| / max(|eps_{i-1}|, 1e-12); cosine is
    clipped to [-1, 1] with norms floored at 1e-12, and identical consecutive
    outputs short-circuit to (0, 1) so zero vectors compare as equal.
    """
    if len(outputs) < 2:
        raise DomainError("similarity needs at least two outputs")
    vecs = [np.asarray(v, dtype=float) for v in outputs]
    idx, rel, cos = [], [], []
    for i in range(1, len(vecs)):
        a, b = vecs[i], vecs[i - 1]
        if a.shape != b.shape:
            raise DomainError("outputs must share one shape")
        idx.append(i)
        diff = float(np.linalg.norm(a - b))
        if diff == 0.0:
            rel.append(0.0)
            cos.append(1.0)
            continue
        na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
        rel.append(diff / max(nb, NORM_FLOOR))
        c = float(a @ b) / (max(na, NORM_FLOOR) * max(nb, NORM_FLOOR))
        cos.append(min(1.0, max(-1.0, c)))
    return SimilarityCurve(step_indices=tuple(idx),
                           rel_l2=np.array(rel), cosine=np.array(cos))


# ---------------------------------------------------------------------------
# scale-factor curve over a grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaleFactorPoint:
    """Scale factor for the consecutive-node triple ending at step_index.

    premise_residual is the relative mismatch of the two lambda gaps; on
    non-uniform grids the equal-spacing premise holds only approximately and
    the residual quantifies by how much.
    """

    step_index: int
    t: float
    r: float
    premise_residual: float


def scale_factor_curve(schedule: NoiseSchedule, grid: StepGrid
                       ) -> list[ScaleFactorPoint]:
    """Evaluate the scale factor on every consecutive triple of grid nodes.

    The gap h is taken as the newest gap (lambda_t - lambda_s); sigma and
    alpha are evaluated at the newest node.
    """
    if len(grid.times) < 3:
        raise DomainError("scale-factor curve needs at least 3 grid nodes")
    points = []
    for i in range(len(grid.times) - 2):
        lam_o = float(grid.lambdas[i])
        lam_s = float(grid.lambdas[i + 1])
        lam_t = float(grid.lambdas[i + 2])
        t = float(grid.times[i + 2])
        h1 = lam_t - lam_s
        h2 = lam_s - lam_o
        residual = abs(h1 - h2) / max(h1, h2)
        r = _scale_factor_parts(schedule.alpha(t), schedule.sigma(t), lam_o, h1)
        points.append(ScaleFactorPoint(step_index=i + 2, t=t, r=r,
                                       premise_residual=residual))
    return points


def scale_factor_curve_csv(points: Sequence[ScaleFactorPoint]) -> str:
    lines = ["step_index,t,r,premise_residual"]
    for p in points:
        lines.append(f"{p.step_index},{_fmt(p.t)},{_fmt(p.r)},{_fmt(p.premise_residual)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# empirical convergence order
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OrderEstimate:
    h_values: tuple[float, ...]
    errors: tuple[float, ...]
    pair_orders: tuple[float, ...]
    mean_order: float
    spread: float

    def to_json(self) -> str:
        payload = {
            "h_values": list(self.h_values),
            "errors": list(self.errors),
            "pair_orders": list(self.pair_orders),
            "mean_order": self.mean_order,
            "spread": self.spread,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def estimate_order(errors_by_h: Mapping[float, float]) -> OrderEstimate:
    """Pairwise p = log(err(h_i)/err(h_{i+1})) / log(h_i/h_{i+1}) plus summary."""
    if len(errors_by_h) < 3:
        raise DomainError("order estimation needs at least 3 step sizes")
    hs = sorted((float(h) for h in errors_by_h), reverse=True)
    errs = [float(errors_by_h[h]) for h in hs]
    if any(e <= 0 for e in errs):
        raise DomainError("errors must be positive")
    if any(h2 >= h1 for h1, h2 in zip(hs, hs[1:])):
        raise DomainError("step sizes must be strictly decreasing")
    orders = [math.log(e1 / e2) / math.log(h1 / h2)
              for (h1, e1), (h2, e2) in zip(zip(hs, errs), zip(hs[1:], errs[1:]))]
    mean = float(np.mean(orders))
    spread = float(max(orders) - min(orders))
    return OrderEstimate(h_values=tuple(hs), errors=tuple(errs),
                         pair_orders=tuple(orders), mean_order=mean, spread=spread)


def extrapolation_error_sweep(oracle, window: tuple[float, float], order: int,
                              h_values: Sequence[float],
                              mode: Mode = Mode.DIFFUSION,
                              x_start=None, seed: int = 0) -> dict[float, float]:
    """Max cached-output reconstruction error over a fixed window, per step size.

    The oracle must be single-Gaussian so the states along the window can be
    placed on the exact trajectory; the measured quantity is then purely the
    extrapolation's truncation error. In diffusion mode the window and the
    step sizes live in lambda; in flow mode they live in t (descending).
    """
    if not isinstance(oracle, GaussianFamily):
        raise ConfigError("the error sweep needs a single-Gaussian oracle")
    mode = Mode(mode)
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ConfigError(f"window must be increasing, got ({lo}, {hi})")
    sch = oracle.schedule
    if x_start is None:
        x_start = np.random.default_rng(seed).standard_normal(oracle.dim)

    def node_times(h: float) -> list[float]:
        n_nodes = int(math.floor((hi - lo) / h + 1e-9)) + 1
        if n_nodes < order + 2:
            raise ConfigError(f"window too short for h={h} at order {order}")
        if mode == Mode.DIFFUSION:
            return [sch.t_of_lambda(lo + j * h) for j in range(n_nodes)]
        return [hi - j * h for j in range(n_nodes)]  # t descending

    errors: dict[float, float] = {}
    for h in h_values:
        ts = node_times(float(h))
        t0 = ts[0]
        xs = [np.asarray(x_start, dtype=float)]
        for t in ts[1:]:
            xs.append(exact_marginal_trajectory(oracle, x_start, t0, t))
        outputs = [oracle.probe(x, t) for x, t in zip(xs, ts)]
        coeffs = extrapolation_coefficients(order, float(h), mode)
        worst = 0.0
        for n in range(order, len(ts)):
            history = [outputs[n - i] for i in range(1, order + 1)]
            pred = extrapolate_output(history, coeffs)
            worst = max(worst, float(np.max(np.abs(pred - outputs[n]))))
        errors[float(h)] = worst
    return errors


# ---------------------------------------------------------------------------
# speedup accounting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostModel:
    """Per-step costs: c for a network evaluation, c_x for an extrapolation."""

    eval_cost: float = 1.0
    extrapolation_cost: float = 0.0

    def __post_init__(self):
        if self.eval_cost <= 0 or self.extrapolation_cost < 0:
            raise ConfigError("eval_cost must be > 0 and extrapolation_cost >= 0")


@dataclass(frozen=True)
class SpeedupReport:
    n_steps: int
    n_network_evals: int
    n_extrapolations: int
    eval_speedup: float
    projected_speedup: float

    def to_json(self) -> str:
        payload = {
            "n_steps": self.n_steps,
            "n_network_evals": self.n_network_evals,
            "n_extrapolations": self.n_extrapolations,
            "eval_speedup": self.eval_speedup,
            "projected_speedup": self.projected_speedup,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def speedup_report(trajectory: Trajectory,
                   cost_model: CostModel | None = None) -> SpeedupReport:
    """Eval-count speedup N / n_evals plus a projected wall-clock figure
    N c / (n_evals c + n_extrapolations c_x) under the given cost model."""
    cm = cost_model or CostModel()
    n = trajectory.n_steps
    evals = trajectory.n_network_evals
    extraps = trajectory.n_extrapolations
    projected = (n * cm.eval_cost
                 / (evals * cm.eval_cost + extraps * cm.extrapolation_cost))
    return SpeedupReport(n_steps=n, n_network_evals=evals,
                         n_extrapolations=extraps,
                         eval_speedup=n / evals,
                         projected_speedup=projected)
