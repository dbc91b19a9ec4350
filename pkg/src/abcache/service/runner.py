"""Experiment execution behind the service endpoints."""

from __future__ import annotations

import numpy as np

from .. import __version__  # noqa: F401  (re-exported for the app)
from ..analysis import (
    CostModel,
    estimate_order,
    extrapolation_error_sweep,
    scale_factor_curve,
    scale_factor_curve_csv,
    similarity_curve,
    speedup_report,
)
from ..config import ExperimentConfig
from ..errors import ConfigError
from ..integrator import ab_weights
from ..model import GaussianFamily, exact_marginal_trajectory
from ..sampler import Trajectory, run_ab_cache, run_baseline
from ..schedule import make_grid
from .schemas import (
    BenchResponse,
    BenchRow,
    ConvergenceResponse,
    CurveResponse,
    OrderEstimatePayload,
    RunSummary,
    SampleResponse,
    WeightsResponse,
)


def _endpoint_error(cfg: ExperimentConfig, predictor, traj: Trajectory) -> float | None:
    if not isinstance(predictor, GaussianFamily):
        return None
    x0 = traj.records[0].x
    ref = exact_marginal_trajectory(predictor, x0, float(traj.grid.times[0]),
                                    float(traj.grid.times[-1]))
    return float(np.max(np.abs(traj.x_final - ref)))


def _summarize(kind: str, cfg: ExperimentConfig, predictor,
               traj: Trajectory) -> RunSummary:
    rep = speedup_report(traj, CostModel(cfg.eval_cost, cfg.extrap_cost))
    return RunSummary(
        kind=kind, mode=cfg.mode.value, order=cfg.order, interval=cfg.interval,
        n_steps=traj.n_steps, seed=cfg.seed,
        n_network_evals=rep.n_network_evals,
        n_extrapolations=rep.n_extrapolations,
        eval_speedup=rep.eval_speedup,
        projected_speedup=rep.projected_speedup,
        x_final_norm=float(np.linalg.norm(traj.x_final)),
        endpoint_error=_endpoint_error(cfg, predictor, traj),
    )


def run_sample(cfg: ExperimentConfig, baseline: bool = False) -> SampleResponse:
    schedule = cfg.build_schedule()
    predictor = cfg.build_predictor(schedule)
    if baseline:
        traj = run_baseline(cfg.build_sampler_config(interval=1), predictor, schedule)
        kind = "baseline"
    else:
        traj = run_ab_cache(cfg.build_sampler_config(), predictor, schedule)
        kind = "sample"
    return SampleResponse(summary=_summarize(kind, cfg, predictor, traj),
                          trajectory_csv=traj.to_csv())


def run_convergence(cfg: ExperimentConfig) -> ConvergenceResponse:
    if cfg.synthetic_order is not None:
        # estimator sanity path: planted power-law errors
        errors = {h: h ** cfg.synthetic_order for h in cfg.h_values}
        synthetic = True
    else:
        schedule = cfg.build_schedule()
        predictor = cfg.build_predictor(schedule)
        errors = extrapolation_error_sweep(
            predictor, (cfg.window[0], cfg.window[1]), cfg.order,
            cfg.h_values, mode=cfg.mode, seed=cfg.seed,
        )
        synthetic = False
    est = estimate_order(errors)
    return ConvergenceResponse(
        order=cfg.order, mode=cfg.mode.value, window=list(cfg.window),
        synthetic=synthetic,
        estimate=OrderEstimatePayload(
            h_values=list(est.h_values), errors=list(est.errors),
            pair_orders=list(est.pair_orders), mean_order=est.mean_order,
            spread=est.spread,
        ),
    )


def run_scale_factor(cfg: ExperimentConfig) -> CurveResponse:
    schedule = cfg.build_schedule()
    grid = make_grid(schedule, cfg.steps, cfg.spacing)
    points = scale_factor_curve(schedule, grid)
    return CurveResponse(csv=scale_factor_curve_csv(points), n_rows=len(points))


def run_similarity(cfg: ExperimentConfig) -> CurveResponse:
    schedule = cfg.build_schedule()
    predictor = cfg.build_predictor(schedule)
    traj = run_baseline(cfg.build_sampler_config(interval=1), predictor, schedule)
    curve = similarity_curve(traj.eps_outputs)
    return CurveResponse(csv=curve.to_csv(), n_rows=len(curve.step_indices))


def run_bench(cfg: ExperimentConfig) -> BenchResponse:
    schedule = cfg.build_schedule()
    rows = []
    for order in cfg.bench_orders:
        for interval in cfg.bench_intervals:
            predictor = cfg.build_predictor(schedule)
            traj = run_ab_cache(cfg.build_sampler_config(interval=interval,
                                                         order=order),
                                predictor, schedule)
            rep = speedup_report(traj, CostModel(cfg.eval_cost, cfg.extrap_cost))
            rows.append(BenchRow(
                order=order, interval=interval, n_steps=traj.n_steps,
                n_network_evals=rep.n_network_evals,
                n_extrapolations=rep.n_extrapolations,
                eval_speedup=rep.eval_speedup,
                projected_speedup=rep.projected_speedup,
                endpoint_error=_endpoint_error(cfg, predictor, traj),
            ))
    header = ("order,interval,n_steps,n_network_evals,n_extrapolations,"
              "eval_speedup,projected_speedup,endpoint_error")
    lines = [header]
    for r in rows:
        err = "nan" if r.endpoint_error is None else format(r.endpoint_error, ".17g")
        lines.append(
            f"{r.order},{r.interval},{r.n_steps},{r.n_network_evals},"
            f"{r.n_extrapolations},{format(r.eval_speedup, '.17g')},"
            f"{format(r.projected_speedup, '.17g')},{err}"
        )
    return BenchResponse(rows=rows, csv="\n".join(lines) + "\n")


def weight_table(order: int) -> WeightsResponse:
    if not isinstance(order, int) or isinstance(order, bool):
        raise ConfigError(f"order must be an integer, got {order!r}")
    row = ab_weights(order)
    fractions = [str(w) for w in row.weights]
    return WeightsResponse(order=order, fractions=fractions,
                           floats=[float(w) for w in row.weights],
                           text=" ".join(fractions))
