"""Observation preparation, model fitting, impact decisions and effect sizes."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .diagnostics import Diagnostics, Hdi, diagnose, hdi
from .models import GaussianLogModel, PoissonLogModel, Priors
from .sampler import sample

logger = logging.getLogger(__name__)

GAUSSIAN_QUALITY = ("SWQ-1", "SWQ-2.1", "SWQ-2.6")
POISSON_QUALITY = ("SWQ-2.2", "SWQ-2.3", "SWQ-2.4", "SWQ-2.5", "SWQ-2.7")
POISSON_EXCLUDED = ("STA-4", "STA-7", "TEC-1")
GROUP_PREDICTOR = "STA-6"
HIGHER_IS_BETTER = frozenset({"SWQ-2.1"})
FLIP_SET = frozenset({"STA-2", "STA-5", "STA-9", "TEC-2"})
MIN_OBSERVATIONS = 10

NO_EVIDENCE, INCREASE, DECREASE = "NoEvidence", "Increase", "Decrease"
IMPACT_NONE, IMPROVES, DEGRADES = "None", "Improves", "Degrades"


class ModelNotApplicable(ValueError):
    """The predictor cannot enter this model kind (e.g. log of zeros for Poisson)."""


class InsufficientData(ValueError):
    def __init__(self, message: str, n_included: int, n_excluded: int):
        super().__init__(message)
        self.n_included = n_included
        self.n_excluded = n_excluded


def model_kind(quality_id: str) -> str:
    if quality_id in GAUSSIAN_QUALITY:
        return "gaussian"
    if quality_id in POISSON_QUALITY:
        return "poisson"
    raise KeyError(quality_id)


@dataclass(frozen=True)
class ModelConfig:
    chains: int = 4
    draws: int = 3000
    warmup: int = 1000
    seed: int = 0
    hdi_mass: float = 0.95
    retries: int = 2
    priors: Priors = Priors()

    def __post_init__(self):
        if self.chains < 2:
            raise ValueError("chains must be >= 2")
        if not 0 < self.hdi_mass < 1:
            raise ValueError("hdi_mass must lie in (0, 1)")


def standardize(xs) -> tuple[np.ndarray, float, float]:
    """Zero-mean, unit-sd rescaling with the n-1 sample standard deviation."""
    x = np.asarray(xs, dtype=float)
    if x.size < 2:
        raise ValueError("standardization needs at least two values")
    mean = float(x.mean())
    sd = float(x.std(ddof=1))
    if not sd > 0:
        raise ValueError("zero-variance predictor; model is degenerate")
    return (x - mean) / sd, mean, sd


@dataclass(frozen=True)
class ObservationSet:
    predictor_id: str
    quality_id: str
    kind: str
    project_ids: tuple[str, ...]
    x: np.ndarray                      # raw predictor values (dormancy flag for STA-6)
    y: np.ndarray                      # raw outcome values
    n_excluded: int = 0
    x_mean: Optional[float] = None     # standardization (Gaussian, continuous predictor)
    x_sd: Optional[float] = None

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def grouped(self) -> bool:
        return self.predictor_id == GROUP_PREDICTOR

    @property
    def groups(self) -> Optional[np.ndarray]:
        return self.x.astype(float) if self.grouped else None

    def predictor(self) -> Optional[np.ndarray]:
        """Transformed predictor entering the linear term (None for the dormancy groups)."""
        if self.grouped:
            return None
        if self.kind == "gaussian":
            return (self.x - self.x_mean) / self.x_sd
        return np.log(self.x)

    def model(self, priors: Priors = Priors()):
        if self.kind == "gaussian":
            return GaussianLogModel(np.log(self.y), self.predictor(), self.groups, priors)
        return PoissonLogModel(self.y, self.predictor(), self.groups, priors)


def observations_from_arrays(x, y, kind: str, predictor_id: str = "X", quality_id: str = "Y",
                             project_ids: Optional[Sequence[str]] = None, n_excluded: int = 0) -> ObservationSet:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ids = tuple(project_ids) if project_ids is not None else tuple(str(i) for i in range(len(y)))
    mean = sd = None
    if kind == "gaussian" and predictor_id != GROUP_PREDICTOR:
        _, mean, sd = standardize(x)
    return ObservationSet(predictor_id, quality_id, kind, ids, x, y, n_excluded, mean, sd)


def prepare_observations(metrics: Mapping[str, Mapping[str, Optional[float]]],
                         quality: Mapping[str, Mapping[str, Optional[float]]],
                         predictor_id: str, quality_id: str, kind: Optional[str] = None,
                         min_rows: int = MIN_OBSERVATIONS) -> ObservationSet:
    """Join metric and quality tables on project id and apply the model's exclusions.

    Gaussian: outcomes must be positive (they are log-transformed). Poisson:
    outcomes must be non-negative integers and predictors positive; STA-4, STA-7
    and TEC-1 are rejected outright.
    """
    kind = kind or model_kind(quality_id)
    if kind == "poisson" and predictor_id in POISSON_EXCLUDED:
        raise ModelNotApplicable(f"{predictor_id} is not modelled with Poisson regression")
    grouped = predictor_id == GROUP_PREDICTOR

    candidates = sorted(set(metrics) | set(quality))
    ids, xs, ys = [], [], []
    for pid in candidates:
        x = (metrics.get(pid) or {}).get(predictor_id)
        y = (quality.get(pid) or {}).get(quality_id)
        if x is None or y is None or not (math.isfinite(x) and math.isfinite(y)):
            continue
        if grouped and x not in (0, 1):
            continue
        if kind == "gaussian":
            if y <= 0:
                continue
        else:
            if y < 0 or y != round(y):
                continue
            if not grouped and x <= 0:
                continue
        ids.append(pid)
        xs.append(x)
        ys.append(y)

    n_excluded = len(candidates) - len(ids)
    if len(ids) < min_rows:
        raise InsufficientData(
            f"{predictor_id} on {quality_id}: {len(ids)} usable rows (< {min_rows})", len(ids), n_excluded
        )
    return observations_from_arrays(xs, ys, kind, predictor_id, quality_id, ids, n_excluded)


@dataclass
class Posterior:
    kind: str
    param_names: tuple[str, ...]
    samples: dict[str, np.ndarray]                 # name -> (chains, draws)
    diagnostics: dict[str, Diagnostics]
    converged: bool
    attempts: int = 1
    seed: int = 0
    info: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return next(iter(self.samples.values())).shape

    @property
    def mcse_max(self) -> float:
        return max(d.mcse for d in self.diagnostics.values())

    @property
    def rhat_max(self) -> float:
        vals = [d.rhat for d in self.diagnostics.values()]
        return math.nan if any(math.isnan(v) for v in vals) else max(vals)

    def stacked(self) -> np.ndarray:
        """Draws flattened over chains, shape (chains * draws, n_params)."""
        return np.column_stack([self.samples[p].ravel() for p in self.param_names])

    def hdi(self, name: str, mass: float = 0.95) -> Hdi:
        return hdi(self.samples[name], mass)

    def contrast(self) -> np.ndarray:
        return self.samples["delta_dormant"] - self.samples["delta_non_dormant"]


def _fit(obs: ObservationSet, config: ModelConfig, kind: str) -> Posterior:
    if obs.kind != kind:
        raise ValueError(f"observation set prepared for {obs.kind}, not {kind}")
    model = obs.model(config.priors)
    post = None
    for attempt in range(config.retries + 1):
        run = sample(model, chains=config.chains, draws=config.draws,
                     warmup=config.warmup, seed=config.seed, attempt=attempt)
        samples = {name: run.draws[:, :, j] for j, name in enumerate(model.param_names)}
        diags = {name: diagnose(s) for name, s in samples.items()}
        converged = all(d.ok for d in diags.values())
        post = Posterior(
            kind=kind,
            param_names=model.param_names,
            samples=samples,
            diagnostics=diags,
            converged=converged,
            attempts=attempt + 1,
            seed=config.seed,
            info={
                "step_size": run.step_size.tolist(),
                "accept_rate": run.accept_rate.tolist(),
                "divergences": run.divergences.tolist(),
            },
        )
        if converged:
            break
        logger.info("%s/%s attempt %d did not converge", obs.predictor_id, obs.quality_id, attempt + 1)
    return post


def fit_gaussian(obs: ObservationSet, config: ModelConfig = ModelConfig()) -> Posterior:
    """Posterior of the log-outcome Gaussian regression (reseeded up to ``retries`` times)."""
    return _fit(obs, config, "gaussian")


def fit_poisson(obs: ObservationSet, config: ModelConfig = ModelConfig()) -> Posterior:
    """Posterior of the log-link Poisson regression (reseeded up to ``retries`` times)."""
    return _fit(obs, config, "poisson")


def fit(obs: ObservationSet, config: ModelConfig = ModelConfig()) -> Posterior:
    return _fit(obs, config, obs.kind)


@dataclass(frozen=True)
class ImpactDecision:
    quality_id: str
    sust_id: str
    hdi: Hdi
    direction: str
    quality_impact: str
    higher_is_better: bool
    in_flip_set: bool
    parameter: str = "alpha"

    def symbol(self, flip: bool = False) -> str:
        """Matrix symbol: x (no evidence), + (improves), - (degrades)."""
        if self.direction == NO_EVIDENCE:
            return "✗"
        improves = self.quality_impact == IMPROVES
        if flip and self.in_flip_set:
            improves = not improves
        return "+" if improves else "−"


def direction_of(interval: Hdi) -> str:
    if interval.low <= 0.0 <= interval.high:
        return NO_EVIDENCE
    return INCREASE if interval.low > 0 else DECREASE


def quality_impact(direction: str, quality_id: str) -> str:
    if direction == NO_EVIDENCE:
        return IMPACT_NONE
    up_is_good = quality_id in HIGHER_IS_BETTER
    return IMPROVES if (direction == INCREASE) == up_is_good else DEGRADES


def decide_from_hdi(interval: Hdi, sust_id: str, quality_id: str, parameter: str = "alpha") -> ImpactDecision:
    direction = direction_of(interval)
    return ImpactDecision(
        quality_id=quality_id,
        sust_id=sust_id,
        hdi=interval,
        direction=direction,
        quality_impact=quality_impact(direction, quality_id),
        higher_is_better=quality_id in HIGHER_IS_BETTER,
        in_flip_set=sust_id.split(":")[0] in FLIP_SET,
        parameter=parameter,
    )


def decide_impact(posterior: Posterior, predictor_id: str, quality_id: str,
                  mass: float = 0.95) -> list[ImpactDecision]:
    """Apply the HDI decision rule; empty when the fit did not converge.

    Dormancy fits yield three decisions: one per group effect and their contrast
    (``STA-6:dormant``, ``STA-6:non-dormant``, ``STA-6:contrast``).
    """
    if not posterior.converged:
        return []
    if predictor_id != GROUP_PREDICTOR:
        return [decide_from_hdi(posterior.hdi("alpha", mass), predictor_id, quality_id)]
    return [
        decide_from_hdi(posterior.hdi("delta_dormant", mass), f"{predictor_id}:dormant",
                        quality_id, "delta_dormant"),
        decide_from_hdi(posterior.hdi("delta_non_dormant", mass), f"{predictor_id}:non-dormant",
                        quality_id, "delta_non_dormant"),
        decide_from_hdi(hdi(posterior.contrast(), mass), f"{predictor_id}:contrast",
                        quality_id, "delta_dormant-delta_non_dormant"),
    ]


@dataclass(frozen=True)
class Effect:
    low: float
    high: float
    unit: str                 # "percent" (Gaussian) or "outcome units" (Poisson)
    predictor_change: Optional[float] = None   # native-unit size of the predictor step


def effect_gaussian(alpha_hdi: Hdi, predictor_sd: Optional[float] = None) -> Effect:
    """Percent change of the outcome per one-sd increase of the predictor."""
    return Effect(
        (math.exp(alpha_hdi.low) - 1.0) * 100.0,
        (math.exp(alpha_hdi.high) - 1.0) * 100.0,
        "percent",
        predictor_sd,
    )


def effect_poisson(alpha_hdi: Hdi, predictor_mean: Optional[float] = None) -> Effect:
    """Outcome-unit change for a 10% predictor increase (0.1 * alpha)."""
    change = None if predictor_mean is None else 0.1 * predictor_mean
    return Effect(0.1 * alpha_hdi.low, 0.1 * alpha_hdi.high, "outcome units", change)


@dataclass(frozen=True)
class PredictiveCheck:
    observed_mean: float
    observed_sd: float
    replicate_mean: float
    mean_interval: tuple[float, float]
    sd_interval: tuple[float, float]

    @property
    def mean_inside(self) -> bool:
        return self.mean_interval[0] <= self.observed_mean <= self.mean_interval[1]

    @property
    def sd_inside(self) -> bool:
        return self.sd_interval[0] <= self.observed_sd <= self.sd_interval[1]

    @property
    def flagged(self) -> bool:
        return not (self.mean_inside and self.sd_inside)


def posterior_predictive_check(posterior: Posterior, obs: ObservationSet, *,
                               n_replicates: int = 1000, seed: int = 0,
                               mass: float = 0.95) -> PredictiveCheck:
    """Compare observed outcome mean/sd (on the modelled scale) with replicates.

    Gaussian fits are checked on log outcomes, Poisson fits on raw counts.
    """
    model = obs.model()
    draws = posterior.stacked()
    idx = np.linspace(0, len(draws) - 1, min(n_replicates, len(draws))).astype(int)
    rng = np.random.default_rng(seed)
    reps = model.simulate(draws[idx], rng)
    observed = np.log(obs.y) if obs.kind == "gaussian" else obs.y
    rep_means = reps.mean(axis=1)
    rep_sds = reps.std(axis=1, ddof=1)
    tail = (1.0 - mass) / 2.0
    return PredictiveCheck(
        observed_mean=float(observed.mean()),
        observed_sd=float(observed.std(ddof=1)),
        replicate_mean=float(rep_means.mean()),
        mean_interval=tuple(float(v) for v in np.quantile(rep_means, [tail, 1 - tail])),
        sd_interval=tuple(float(v) for v in np.quantile(rep_sds, [tail, 1 - tail])),
    )
