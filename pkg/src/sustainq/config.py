"""Run configuration: defaults, JSON loading and bounds checking."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .bayes import ModelConfig, Priors
from .metrics import MetricsConfig
from .quality.analysis import DEFAULT_DEFECT_LABELS, DEFAULT_TEST_PATTERN, QualityThresholds


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    corpus: Optional[str] = None
    out: Optional[str] = None
    seed: int = 0
    jobs: int = 1

    # sustainability metrics
    window_weeks: int = 12
    activity_window_days: int = 90
    turnover_lookback_months: int = 6
    dormancy_lookback_days: int = 365
    dormancy_window_weeks: int = 4
    dormancy_threshold: float = 1.0
    as_of_year: int = 2023
    doc_extensions: tuple = ("txt", "md")

    # code quality
    medium_cc_low: int = 11
    medium_cc_high: int = 25
    very_high_cc: int = 50
    very_large_file_sloc: int = 1000
    very_large_function_sloc: int = 100
    duplication_block: int = 6
    defect_labels: tuple = DEFAULT_DEFECT_LABELS
    defect_density_denominator: str = "kb"
    test_path_pattern: str = DEFAULT_TEST_PATTERN

    # inference
    chains: int = 4
    draws: int = 3000
    warmup: int = 1000
    hdi_mass: float = 0.95
    retries: int = 2
    min_observations: int = 10
    coef_prior_sd: float = 10.0
    intercept_prior_sd: float = 10.0
    group_prior_sd: float = 1.0
    sigma_low: float = 0.001
    sigma_high: float = 10.0

    # reporting
    flip_rendering: bool = False
    export_posteriors: bool = True
    figures: bool = True
    plot_bins: int = 50

    def __post_init__(self):
        problems = []

        def need(cond, msg):
            if not cond:
                problems.append(msg)

        need(self.jobs >= 1, "jobs must be >= 1")
        need(self.window_weeks >= 1, "window_weeks must be >= 1")
        need(self.activity_window_days >= 1, "activity_window_days must be >= 1")
        need(self.turnover_lookback_months >= 1, "turnover_lookback_months must be >= 1")
        need(self.dormancy_lookback_days >= 7 * self.dormancy_window_weeks,
             "dormancy_lookback_days must cover at least one dormancy window")
        need(self.dormancy_window_weeks >= 1, "dormancy_window_weeks must be >= 1")
        need(self.dormancy_threshold >= 0, "dormancy_threshold must be >= 0")
        need(1970 <= self.as_of_year <= 2200, "as_of_year out of range")
        need(1 <= self.medium_cc_low <= self.medium_cc_high <= self.very_high_cc,
             "need 1 <= medium_cc_low <= medium_cc_high <= very_high_cc")
        need(self.very_large_file_sloc >= 1, "very_large_file_sloc must be >= 1")
        need(self.very_large_function_sloc >= 1, "very_large_function_sloc must be >= 1")
        need(self.duplication_block >= 2, "duplication_block must be >= 2")
        need(self.defect_density_denominator in ("kb", "kloc"), "defect_density_denominator must be kb or kloc")
        need(self.chains >= 2, "chains must be >= 2")
        need(self.draws >= 100, "draws must be >= 100")
        need(self.warmup >= 0, "warmup must be >= 0")
        need(0 < self.hdi_mass < 1, "hdi_mass must lie in (0, 1)")
        need(self.retries >= 0, "retries must be >= 0")
        need(self.min_observations >= 3, "min_observations must be >= 3")
        need(min(self.coef_prior_sd, self.intercept_prior_sd, self.group_prior_sd) > 0,
             "prior standard deviations must be positive")
        need(0 < self.sigma_low < self.sigma_high, "need 0 < sigma_low < sigma_high")
        need(self.plot_bins >= 1, "plot_bins must be >= 1")
        if problems:
            raise ConfigError("; ".join(problems))

    def metrics_config(self) -> MetricsConfig:
        return MetricsConfig(
            window_weeks=self.window_weeks,
            activity_window_days=self.activity_window_days,
            turnover_lookback_months=self.turnover_lookback_months,
            dormancy_lookback_days=self.dormancy_lookback_days,
            dormancy_window_weeks=self.dormancy_window_weeks,
            dormancy_threshold=self.dormancy_threshold,
            as_of_year=self.as_of_year,
            doc_extensions=tuple(self.doc_extensions),
        )

    def thresholds(self) -> QualityThresholds:
        return QualityThresholds(
            medium_cc_low=self.medium_cc_low,
            medium_cc_high=self.medium_cc_high,
            very_high_cc=self.very_high_cc,
            very_large_file_sloc=self.very_large_file_sloc,
            very_large_function_sloc=self.very_large_function_sloc,
            duplication_block=self.duplication_block,
        )

    def model_config(self, seed: Optional[int] = None) -> ModelConfig:
        return ModelConfig(
            chains=self.chains,
            draws=self.draws,
            warmup=self.warmup,
            seed=self.seed if seed is None else seed,
            hdi_mass=self.hdi_mass,
            retries=self.retries,
            priors=Priors(self.coef_prior_sd, self.intercept_prior_sd, self.group_prior_sd,
                          self.sigma_low, self.sigma_high),
        )

    def with_overrides(self, **overrides) -> "RunConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


_FIELDS = {f.name: f for f in fields(RunConfig)}
_DEFAULTS = RunConfig()


def _coerce(name: str, value):
    default = getattr(_DEFAULTS, name)
    if name in ("corpus", "out"):
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"{name}: expected a path string")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{name}: expected a list of strings")
        return tuple(value)
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string")
    return value


def config_from_mapping(data: dict, base: RunConfig = _DEFAULTS) -> RunConfig:
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    return replace(base, **{k: _coerce(k, v) for k, v in data.items()})


def load_config(path) -> RunConfig:
    """Read a flat JSON object of RunConfig keys; unknown keys are an error."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return config_from_mapping(data)


def config_keys() -> list[str]:
    return list(_FIELDS)
