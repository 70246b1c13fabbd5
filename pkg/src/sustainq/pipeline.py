"""Stage orchestration: ingest -> metrics -> quality -> analyze -> report.

Every stage reads its inputs from, and writes its outputs to, the output
directory, so any stage can be rerun (or resumed) on its own. Work items are
spread over a process pool; results are collected in a fixed order and each
output file has a single writer, so outputs do not depend on ``jobs``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .bayes import (
    GAUSSIAN_QUALITY,
    GROUP_PREDICTOR,
    POISSON_EXCLUDED,
    POISSON_QUALITY,
    InsufficientData,
    ModelNotApplicable,
    decide_impact,
    effect_gaussian,
    effect_poisson,
    fit,
    posterior_predictive_check,
    prepare_observations,
)
from .config import RunConfig
from .ingest import DatasetError, ProjectDataset, assemble_dataset
from .metrics import METRIC_IDS, compute_vector, read_metrics_csv, write_metrics_csv
from .quality.analysis import project_quality, read_quality_csv, write_quality_csv

logger = logging.getLogger(__name__)

RESULTS_HEADER = (
    "quality_id", "sust_id", "model", "n_projects", "n_excluded", "hdi_low", "hdi_high",
    "direction", "quality_impact", "mcse_max", "rhat_max", "converged",
)
EFFECTS_HEADER = (
    "quality_id", "sust_id", "model", "effect_low", "effect_high", "effect_unit", "predictor_change",
    "ppc_observed_mean", "ppc_mean_low", "ppc_mean_high", "ppc_flagged",
)
FITS_HEADER = ("fit_id", "quality_id", "sust_id", "model", "status", "seed", "attempts", "message")
POSTERIOR_HEADER = ("chain", "draw", "parameter", "value")
STA6_PARTS = ("dormant", "non-dormant", "contrast")

DATASETS_DIR = "datasets"
MANIFEST = "manifest.json"
METRICS_CSV = "metrics.csv"
QUALITY_CSV = "quality.csv"
RESULTS_CSV = "results.csv"
EFFECTS_CSV = "effects.csv"
FITS_CSV = "fits.csv"
POSTERIORS_DIR = "posteriors"


class PipelineError(RuntimeError):
    """A stage cannot run at all (as opposed to a per-project failure)."""


@dataclass
class StageReport:
    stage: str
    n_ok: int = 0
    failures: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    skipped: bool = False

    @property
    def ok(self) -> bool:
        return not self.failures


def _pool_map(fn: Callable, items: Sequence, jobs: int) -> list:
    """Order-preserving map, in-process for one job."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise PipelineError(f"{stage}: missing input {path}; run the upstream stage first")
    return path


def _out(config: RunConfig) -> Path:
    if not config.out:
        raise PipelineError("no output directory configured")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _corpus(config: RunConfig) -> Path:
    if not config.corpus:
        raise PipelineError("no corpus directory configured")
    corpus = Path(config.corpus)
    if not corpus.is_dir():
        raise PipelineError(f"corpus directory not found: {corpus}")
    return corpus


# ---------------------------------------------------------------- ingest

def _ingest_one(project_dir: str):
    try:
        ds = assemble_dataset(Path(project_dir))
    except (DatasetError, OSError, ValueError, KeyError, TypeError) as exc:
        return project_dir, None, f"{type(exc).__name__}: {exc}"
    return project_dir, ds, None


def run_ingest(config: RunConfig) -> StageReport:
    corpus = _corpus(config)
    out = _out(config)
    dirs = sorted(p for p in corpus.iterdir() if p.is_dir() and not p.name.startswith("."))
    if not dirs:
        raise PipelineError(f"empty corpus: no project directories in {corpus}")

    report = StageReport("ingest")
    ds_dir = out / DATASETS_DIR
    ds_dir.mkdir(exist_ok=True)
    for stale in ds_dir.glob("*.json"):
        stale.unlink()

    projects, warnings = {}, {}
    for project_dir, ds, error in _pool_map(_ingest_one, [str(d) for d in dirs], config.jobs):
        name = Path(project_dir).name
        if error is None and ds.project_id in projects:
            error = f"duplicate project id {ds.project_id!r} (also in {projects[ds.project_id]})"
        if error is None and not re.fullmatch(r"[A-Za-z0-9._-]+", ds.project_id):
            error = f"project id {ds.project_id!r} is not filename-safe"
        if error is not None:
            logger.error("ingest %s: %s", name, error)
            report.failures[name] = error
            continue
        projects[ds.project_id] = name
        if ds.warnings:
            warnings[ds.project_id] = dict(sorted(ds.warnings.items()))
        (ds_dir / f"{ds.project_id}.json").write_text(ds.to_json() + "\n", encoding="utf-8")
        report.n_ok += 1

    manifest = {"projects": dict(sorted(projects.items())), "failures": report.failures, "warnings": warnings}
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    report.outputs = [str(ds_dir), str(out / MANIFEST)]
    if not projects:
        raise PipelineError("no project could be ingested")
    return report


def read_manifest(out: Path) -> dict:
    return json.loads(_require(out / MANIFEST, "manifest").read_text(encoding="utf-8"))


def load_datasets(out: Path) -> list[ProjectDataset]:
    manifest = read_manifest(out)
    datasets = []
    for pid in manifest["projects"]:
        path = _require(out / DATASETS_DIR / f"{pid}.json", "datasets")
        datasets.append(ProjectDataset.from_dict(json.loads(path.read_text(encoding="utf-8"))))
    return datasets


# ---------------------------------------------------------------- metrics

def _metrics_one(args):
    ds, mconfig = args
    try:
        return ds.project_id, compute_vector(ds, mconfig), None
    except (ValueError, ZeroDivisionError, KeyError) as exc:
        return ds.project_id, None, f"{type(exc).__name__}: {exc}"


def run_metrics(config: RunConfig) -> StageReport:
    out = _out(config)
    datasets = load_datasets(out)
    report = StageReport("metrics")
    mconfig = config.metrics_config()
    vectors = []
    for pid, vec, error in _pool_map(_metrics_one, [(ds, mconfig) for ds in datasets], config.jobs):
        if error is not None:
            logger.error("metrics %s: %s", pid, error)
            report.failures[pid] = error
            continue
        vectors.append(vec)
        report.n_ok += 1
    write_metrics_csv(out / METRICS_CSV, vectors)
    report.outputs = [str(out / METRICS_CSV)]
    return report


# ---------------------------------------------------------------- quality

def _quality_one(args):
    ds, project_dir, config = args
    try:
        prof = project_quality(
            ds.project_id, ds.issues, ds.repo, project_dir / "src",
            coverage_report=project_dir / "coverage.csv",
            thresholds=config.thresholds(),
            defect_labels=config.defect_labels,
            denominator=config.defect_density_denominator,
            test_pattern=config.test_path_pattern,
        )
    except (OSError, ValueError) as exc:
        return ds.project_id, None, f"{type(exc).__name__}: {exc}"
    return ds.project_id, prof, None


def run_quality(config: RunConfig) -> StageReport:
    corpus = _corpus(config)
    out = _out(config)
    manifest = read_manifest(out)
    datasets = load_datasets(out)
    report = StageReport("quality")
    items = [(ds, corpus / manifest["projects"][ds.project_id], config) for ds in datasets]
    profiles = []
    for pid, prof, error in _pool_map(_quality_one, items, config.jobs):
        if error is not None:
            logger.error("quality %s: %s", pid, error)
            report.failures[pid] = error
            continue
        profiles.append(prof)
        report.n_ok += 1
    write_quality_csv(out / QUALITY_CSV, profiles)
    report.outputs = [str(out / QUALITY_CSV)]
    return report


# ---------------------------------------------------------------- analyze

@dataclass(frozen=True)
class PlannedFit:
    index: int
    quality_id: str
    sust_id: str
    model: str

    @property
    def fit_id(self) -> str:
        return f"{self.quality_id}__{self.sust_id}"

    @property
    def applicable(self) -> bool:
        return not (self.model == "poisson" and self.sust_id in POISSON_EXCLUDED)


def analysis_plan() -> list[PlannedFit]:
    """Every (quality, sustainability) cell: 48 Gaussian, 65 Poisson and 15 not-applicable."""
    plan = []
    for qid in GAUSSIAN_QUALITY + POISSON_QUALITY:
        kind = "gaussian" if qid in GAUSSIAN_QUALITY else "poisson"
        for sid in METRIC_IDS:
            plan.append(PlannedFit(len(plan), qid, sid, kind))
    return plan


def fit_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


def _sust_ids(sid: str) -> list[str]:
    return [f"{sid}:{part}" for part in STA6_PARTS] if sid == GROUP_PREDICTOR else [sid]


@dataclass
class FitOutcome:
    planned: PlannedFit
    status: str                      # fitted | refused | not-applicable
    seed: int = 0
    attempts: int = 0
    message: str = ""
    results: list[tuple] = field(default_factory=list)
    effects: list[tuple] = field(default_factory=list)
    posterior_rows: Optional[list[tuple]] = None


def _blank_rows(p: PlannedFit, n_inc="", n_exc="", direction="", impact="", converged="") -> list[tuple]:
    return [(p.quality_id, s, p.model, n_inc, n_exc, "", "", direction, impact, "", "", converged)
            for s in _sust_ids(p.sust_id)]


def _run_fit(args) -> FitOutcome:
    p, metrics, quality, config = args
    if not p.applicable:
        return FitOutcome(p, "not-applicable", results=_blank_rows(p, direction="NA", impact="NA"))
    seed = fit_seed(config.seed, p.index)
    try:
        obs = prepare_observations(metrics, quality, p.sust_id, p.quality_id, p.model,
                                   min_rows=config.min_observations)
    except InsufficientData as exc:
        return FitOutcome(p, "refused", seed, message=str(exc),
                          results=_blank_rows(p, exc.n_included, exc.n_excluded))
    except (ModelNotApplicable, ValueError) as exc:
        return FitOutcome(p, "refused", seed, message=str(exc), results=_blank_rows(p))

    mconfig = config.model_config(seed)
    try:
        post = fit(obs, mconfig)
    except ValueError as exc:
        # e.g. a zero-variance predictor cannot be standardized
        return FitOutcome(p, "refused", seed, message=str(exc),
                          results=_blank_rows(p, obs.n, obs.n_excluded))

    decisions = {d.sust_id: d for d in decide_impact(post, p.sust_id, p.quality_id, config.hdi_mass)}
    mcse_max, rhat_max = _fmt(post.mcse_max), _fmt(post.rhat_max)
    converged = "true" if post.converged else "false"
    results, effects = [], []
    check = posterior_predictive_check(post, obs, seed=seed, mass=config.hdi_mass) if post.converged else None
    for sid in _sust_ids(p.sust_id):
        d = decisions.get(sid)
        if d is None:
            results.append((p.quality_id, sid, p.model, obs.n, obs.n_excluded, "", "", "", "",
                            mcse_max, rhat_max, converged))
            continue
        results.append((p.quality_id, sid, p.model, obs.n, obs.n_excluded, _fmt(d.hdi.low), _fmt(d.hdi.high),
                        d.direction, d.quality_impact, mcse_max, rhat_max, converged))
        if obs.grouped:
            eff = effect_gaussian(d.hdi)          # percent change of the outcome (rate)
            change = ""
        elif p.model == "gaussian":
            eff = effect_gaussian(d.hdi, obs.x_sd)
            change = _fmt(eff.predictor_change)
        else:
            eff = effect_poisson(d.hdi, float(np.mean(obs.x)))
            change = _fmt(eff.predictor_change)
        effects.append((p.quality_id, sid, p.model, _fmt(eff.low), _fmt(eff.high), eff.unit, change,
                        _fmt(check.observed_mean), _fmt(check.mean_interval[0]), _fmt(check.mean_interval[1]),
                        str(check.flagged).lower()))

    posterior_rows = None
    if config.export_posteriors:
        posterior_rows = []
        chains, draws = post.shape
        for name in post.param_names:
            arr = post.samples[name]
            for c in range(chains):
                posterior_rows.extend((c, k, name, repr(float(v))) for k, v in enumerate(arr[c]))
    status = "fitted" if post.converged else "non-converged"
    return FitOutcome(p, status, seed, post.attempts, "", results, effects, posterior_rows)


def _write_csv(path: Path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def run_analyze(config: RunConfig) -> StageReport:
    out = _out(config)
    metrics = read_metrics_csv(_require(out / METRICS_CSV, "analyze"))
    quality = read_quality_csv(_require(out / QUALITY_CSV, "analyze"))
    plan = analysis_plan()
    report = StageReport("analyze")

    post_dir = out / POSTERIORS_DIR
    if post_dir.exists():
        for stale in post_dir.glob("*.csv"):
            stale.unlink()
    if config.export_posteriors:
        post_dir.mkdir(exist_ok=True)

    outcomes = _pool_map(_run_fit, [(p, metrics, quality, config) for p in plan], config.jobs)
    results, effects, fits = [], [], []
    for o in outcomes:
        results.extend(o.results)
        effects.extend(o.effects)
        fits.append((o.planned.fit_id, o.planned.quality_id, o.planned.sust_id, o.planned.model,
                     o.status, o.seed if o.status != "not-applicable" else "", o.attempts, o.message))
        if o.posterior_rows is not None:
            _write_csv(post_dir / f"{o.planned.fit_id}.csv", POSTERIOR_HEADER, o.posterior_rows)
        if o.status in ("fitted", "non-converged", "refused"):
            report.n_ok += 1

    _write_csv(out / RESULTS_CSV, RESULTS_HEADER, results)
    _write_csv(out / EFFECTS_CSV, EFFECTS_HEADER, effects)
    _write_csv(out / FITS_CSV, FITS_HEADER, fits)
    report.outputs = [str(out / RESULTS_CSV), str(out / EFFECTS_CSV), str(out / FITS_CSV)]
    return report


def read_results_csv(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULTS_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return list(reader)


def attempted_fits(results: Iterable[dict[str, str]]) -> dict[str, int]:
    """Fits attempted per model kind (a dormancy fit counts once, NA cells not at all)."""
    seen = set()
    for row in results:
        if row["direction"] == "NA":
            continue
        seen.add((row["quality_id"], row["sust_id"].split(":")[0], row["model"]))
    counts = {"gaussian": 0, "poisson": 0}
    for _, _, model in seen:
        counts[model] += 1
    return counts


# ---------------------------------------------------------------- posteriors

def read_posterior(out: Path, fit_id: str) -> dict[str, np.ndarray]:
    """Posterior export as ``{parameter: (chains, draws)}``."""
    path = Path(out) / POSTERIORS_DIR / f"{fit_id}.csv"
    if not path.exists():
        raise PipelineError(f"no posterior export for fit {fit_id!r}")
    values: dict[str, dict[int, list[float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != POSTERIOR_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            values.setdefault(row["parameter"], {}).setdefault(int(row["chain"]), []).append(float(row["value"]))
    return {name: np.array([chains[c] for c in sorted(chains)]) for name, chains in values.items()}


def decision_samples(posterior: dict[str, np.ndarray], sust_id: str) -> np.ndarray:
    """Samples behind a results row: alpha, a dormancy effect, or their contrast."""
    if not sust_id.startswith(GROUP_PREDICTOR + ":"):
        return posterior["alpha"]
    part = sust_id.split(":", 1)[1]
    if part == "dormant":
        return posterior["delta_dormant"]
    if part == "non-dormant":
        return posterior["delta_non_dormant"]
    return posterior["delta_dormant"] - posterior["delta_non_dormant"]


# ---------------------------------------------------------------- whole run

@dataclass
class ReportBundle:
    stages: list[StageReport]
    out: Path

    @property
    def failed(self) -> bool:
        return any(not s.ok for s in self.stages)


STAGES = ("ingest", "metrics", "quality", "analyze", "report")


def _stage_done(stage: str, out: Path) -> bool:
    marker = {
        "ingest": out / MANIFEST,
        "metrics": out / METRICS_CSV,
        "quality": out / QUALITY_CSV,
        "analyze": out / RESULTS_CSV,
    }.get(stage)
    return marker is not None and marker.exists()


def run_stage(stage: str, config: RunConfig) -> StageReport:
    if stage == "ingest":
        return run_ingest(config)
    if stage == "metrics":
        return run_metrics(config)
    if stage == "quality":
        return run_quality(config)
    if stage == "analyze":
        return run_analyze(config)
    if stage == "report":
        from .report import run_report
        return run_report(config)
    raise ValueError(f"unknown stage {stage!r}")


def run_pipeline(config: RunConfig, *, resume: bool = False) -> ReportBundle:
    """Run every stage; with ``resume`` stages whose outputs exist are skipped."""
    out = _out(config)
    reports = []
    rerun = not resume
    for stage in STAGES:
        if not rerun and _stage_done(stage, out):
            rep = StageReport(stage, skipped=True)
            if stage == "ingest":
                rep.failures = dict(read_manifest(out).get("failures", {}))
            reports.append(rep)
            continue
        rerun = True          # everything downstream of a rerun stage is rebuilt
        reports.append(run_stage(stage, config))
    return ReportBundle(reports, out)
