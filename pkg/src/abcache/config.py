"""Experiment configuration: one flat, validated bag of settings.

The same model backs the config file, the CLI flags, and the service request
bodies. The config file is flat `key = value` text; `#` starts a comment,
list values are comma-separated. Flags override file values override
defaults, and serialize/parse round-trips are lossless.
"""

from __future__ import annotations

from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import ConfigError
from .integrator import Mode
from .model import GaussianOracle, GaussianVelocityOracle, MixtureOracle, Predictor
from .sampler import SamplerConfig, Strictness
from .schedule import GridSpacing, NoiseSchedule, ScheduleKind

_LIST_FIELDS = {"mixture_weights", "mixture_means", "mixture_stds",
                "h_values", "window", "bench_orders", "bench_intervals"}


class ExperimentConfig(BaseModel):
    """Everything a run needs; subcommands read the fields they use."""

    model_config = ConfigDict(use_enum_values=False, extra="forbid",
                              validate_assignment=True)

    # schedule
    schedule_kind: ScheduleKind = ScheduleKind.VP_LINEAR
    beta_min: float = Field(default=0.1, gt=0)
    beta_max: float = Field(default=20.0, gt=0)
    t_min: float = Field(default=1e-3, gt=0)
    t_max: float | None = Field(default=None, description="default: 0.999 for vp_cosine, else 1.0")

    # predictor
    oracle: str | None = Field(default=None, description="gaussian | mixture | velocity")
    dim: int = Field(default=8, ge=1)
    mean: float = 1.0
    std: float = Field(default=0.7, gt=0)
    mixture_weights: list[float] = [0.5, 0.5]
    mixture_means: list[float] = [0.3, -0.3]
    mixture_stds: list[float] = [0.3, 0.3]

    # sampler
    order: int = 2
    interval: int = 1
    steps: int = 50
    mode: Mode = Mode.DIFFUSION
    spacing: GridSpacing = GridSpacing.UNIFORM_T
    strictness: Strictness = Strictness.LENIENT
    final_eval: bool = True
    record_eps_error: bool = False
    seed: int = 0

    # convergence study
    h_values: list[float] = [0.2, 0.1, 0.05, 0.025]
    window: list[float] = [-2.0, 1.0]
    synthetic_order: float | None = None

    # speedup / bench
    eval_cost: float = 1.0
    extrap_cost: float = 0.0
    bench_orders: list[int] = [1, 2, 3]
    bench_intervals: list[int] = [1, 2, 3, 5]

    # output
    out_dir: str | None = None
    formats: list[str] = ["csv", "json"]

    @field_validator(*_LIST_FIELDS, "formats", mode="before")
    @classmethod
    def _split_commas(cls, v):
        if isinstance(v, str):
            return [item.strip() for item in v.split(",") if item.strip()]
        return v

    @field_validator("order")
    @classmethod
    def _order_range(cls, v):
        if not 1 <= v <= 4:
            raise ValueError(f"order {v} unsupported; supported range 1..4")
        return v

    @field_validator("interval", "steps")
    @classmethod
    def _positive(cls, v, info):
        if v < 1:
            raise ValueError(f"{info.field_name} must be >= 1, got {v}")
        return v

    @model_validator(mode="after")
    def _cross_checks(self):
        if self.steps < self.order:
            raise ValueError(f"steps={self.steps} cannot warm an order-{self.order} cache")
        if self.oracle is None:
            self.__dict__["oracle"] = ("velocity" if self.mode == Mode.FLOW
                                       else "gaussian")
        if self.oracle not in ("gaussian", "mixture", "velocity"):
            raise ValueError(f"unknown oracle {self.oracle!r}")
        if self.mode == Mode.FLOW and self.oracle != "velocity":
            raise ValueError("flow mode needs oracle = velocity")
        if self.mode == Mode.DIFFUSION and self.oracle == "velocity":
            raise ValueError("oracle = velocity needs mode = flow")
        if len(self.window) != 2 or not self.window[0] < self.window[1]:
            raise ValueError(f"window must be [lo, hi] with lo < hi, got {self.window}")
        return self

    # -- resolved pieces ---------------------------------------------------

    def resolved_t_max(self) -> float:
        if self.t_max is not None:
            return self.t_max
        return 0.999 if self.schedule_kind == ScheduleKind.VP_COSINE else 1.0

    def build_schedule(self) -> NoiseSchedule:
        return NoiseSchedule(kind=self.schedule_kind, beta_min=self.beta_min,
                             beta_max=self.beta_max, t_min=self.t_min,
                             t_max=self.resolved_t_max())

    def build_predictor(self, schedule: NoiseSchedule | None = None) -> Predictor:
        sch = schedule or self.build_schedule()
        if self.oracle == "gaussian":
            return GaussianOracle(self.mean, self.std, sch, dim=self.dim)
        if self.oracle == "velocity":
            return GaussianVelocityOracle(self.mean, self.std, sch, dim=self.dim)
        return MixtureOracle(self.mixture_weights, self.mixture_means,
                             self.mixture_stds, sch, dim=self.dim)

    def build_sampler_config(self, interval: int | None = None,
                             order: int | None = None) -> SamplerConfig:
        return SamplerConfig(
            order=order if order is not None else self.order,
            cache_interval=interval if interval is not None else self.interval,
            n_steps=self.steps, mode=self.mode, spacing=self.spacing,
            strictness=self.strictness, seed=self.seed,
            force_final_eval=self.final_eval,
            record_eps_error=self.record_eps_error,
        )

    # -- flat-file round trip ------------------------------------------------

    def to_file_text(self) -> str:
        lines = []
        for key, value in self.model_dump(mode="json").items():
            if value is None:
                continue
            if isinstance(value, list):
                value = ", ".join(str(v) for v in value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat `key = value` lines; `#` comments and blanks are skipped."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path | None = None,
                overrides: dict | None = None) -> ExperimentConfig:
    """Defaults <- config file <- overrides, validated as one unit."""
    data: dict = {}
    if path is not None:
        data.update(parse_config_text(Path(path).read_text()))
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return ExperimentConfig(**data)
