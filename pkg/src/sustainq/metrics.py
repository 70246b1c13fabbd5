"""The sixteen community-sustainability metrics computed over a project dataset.

All windowing is calendar-agnostic: a week is 7 days, a month 30 days and a
year 365 days, each day being 86400 seconds.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .ingest import Commit, Issue, ProjectDataset, PullRequest, RepoInfo
from .truckfactor import truck_factor

logger = logging.getLogger(__name__)

DAY = 86400
WEEK = 7 * DAY
MONTH = 30 * DAY
YEAR = 365 * DAY

METRIC_IDS = (
    "COM-1", "COM-2", "POP-1",
    "STA-1", "STA-2", "STA-3", "STA-4", "STA-5", "STA-6", "STA-7", "STA-8", "STA-9",
    "TEC-1", "TEC-2", "TEC-3", "TEC-4",
)
UNITS = {
    "COM-1": "seconds", "COM-2": "count", "POP-1": "count",
    "STA-1": "years", "STA-2": "count", "STA-3": "count", "STA-4": "count",
    "STA-5": "count", "STA-6": "flag", "STA-7": "count", "STA-8": "count",
    "STA-9": "count", "TEC-1": "count", "TEC-2": "seconds", "TEC-3": "count",
    "TEC-4": "count",
}
METRICS_HEADER = ("project_id", "metric_id", "value", "unit", "computed")


@dataclass(frozen=True)
class MetricsConfig:
    window_weeks: int = 12
    activity_window_days: int = 90
    turnover_lookback_months: int = 6
    dormancy_lookback_days: int = 365
    dormancy_window_weeks: int = 4
    dormancy_threshold: float = 1.0
    as_of_year: int = 2023
    doc_extensions: tuple[str, ...] = ("txt", "md")


@dataclass(frozen=True)
class TimeWindow:
    """Left-to-right tiling of ``[init, end]`` into ``freq_weeks``-week periods.

    The last period may be short and is closed on the right so that the event
    defining ``end`` is counted.
    """

    init: int
    end: int
    freq_weeks: int

    def __post_init__(self):
        if self.freq_weeks < 1:
            raise ValueError("freq_weeks must be >= 1")
        if self.end < self.init:
            raise ValueError("window end precedes init")

    @property
    def length(self) -> int:
        return self.freq_weeks * WEEK

    def __len__(self) -> int:
        return max(1, math.ceil((self.end - self.init) / self.length))

    def periods(self) -> list[tuple[int, int]]:
        n = len(self)
        return [(self.init + k * self.length, min(self.end, self.init + (k + 1) * self.length)) for k in range(n)]

    def index(self, t: int) -> Optional[int]:
        if t < self.init or t > self.end:
            return None
        return min((t - self.init) // self.length, len(self) - 1)

    def counts(self, times: Iterable[int]) -> list[int]:
        out = [0] * len(self)
        for t in times:
            k = self.index(t)
            if k is not None:
                out[k] += 1
        return out


@dataclass(frozen=True)
class MetricValue:
    metric_id: str
    value: float
    unit: str


@dataclass
class SustainabilityVector:
    project_id: str
    values: dict[str, MetricValue] = field(default_factory=dict)

    @property
    def completeness(self) -> set[str]:
        return set(self.values)

    def get(self, metric_id: str) -> Optional[float]:
        mv = self.values.get(metric_id)
        return None if mv is None else mv.value

    def rows(self) -> list[tuple]:
        rows = []
        for mid in METRIC_IDS:
            mv = self.values.get(mid)
            if mv is None:
                rows.append((self.project_id, mid, "", UNITS[mid], "false"))
            else:
                rows.append((self.project_id, mid, format_value(mv.value), mv.unit, "true"))
        return rows


def format_value(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int) or (isinstance(value, float) and value.is_integer() and abs(value) < 2**53):
        return str(int(value))
    return repr(float(value))


def positive_part_sum(values: Sequence[float]) -> float:
    return sum(max(0, d) for d in values)


def response_time(issues: Iterable[Issue]) -> Optional[float]:
    """COM-1: mean delay between issue creation and its first reply.

    Comments stamped before the issue are ignored; issues without a qualifying
    comment are excluded. ``None`` when no issue qualifies.
    """
    delays = []
    for issue in issues:
        replies = [c.timestamp for c in issue.comments if c.timestamp >= issue.created_at]
        if replies:
            delays.append(min(replies) - issue.created_at)
    if not delays:
        return None
    return sum(delays) / len(delays)


def comm_frequency(issues: Sequence[Issue]) -> int:
    """COM-2: total comments plus total issues."""
    return sum(len(i.comments) for i in issues) + len(issues)


def popularity(repo: RepoInfo) -> tuple[int, int]:
    """POP-1 (forks + stars + watchers) and STA-3 (forks)."""
    return repo.forks + repo.stars + repo.watchers, repo.forks


def age(repo: RepoInfo, as_of_year: int = 2023) -> int:
    if as_of_year < repo.inception_year:
        raise ValueError(f"as_of_year {as_of_year} precedes inception year {repo.inception_year}")
    return as_of_year - repo.inception_year


def attrition(commits: Iterable[Commit], window: TimeWindow) -> int:
    """STA-2: cumulative drop in commit counts between consecutive periods."""
    counts = window.counts(c.timestamp for c in commits)
    return positive_part_sum(a - b for a, b in zip(counts, counts[1:]))


def growth(prs: Iterable[PullRequest], window: TimeWindow) -> int:
    """STA-4: cumulative rise in pull-request submissions between consecutive periods."""
    counts = window.counts(p.created_at for p in prs)
    return positive_part_sum(b - a for a, b in zip(counts, counts[1:]))


def dormancy(commits: Iterable[Commit], end: int, *, lookback_days: int = 365,
             window_weeks: int = 4, threshold: float = 1.0) -> int:
    """STA-6: 1 if the trailing-year average commits per window is below ``threshold``.

    The trailing period is ``floor(lookback / window)`` whole windows ending at
    ``end`` (13 four-week windows for the default year).
    """
    length = window_weeks * WEEK
    n_windows = max(1, (lookback_days * DAY) // length)
    lo = end - n_windows * length
    recent = sum(1 for c in commits if lo < c.timestamp <= end)
    return int(recent / n_windows < threshold)


def active_contributors_by_year(commits: Sequence[Commit], start: int, end: int,
                                snapshot_days: int = 90) -> list[int]:
    """Distinct active contributors per project year.

    Activity is judged per 90-day snapshot (one commit makes a contributor
    active in that snapshot); a snapshot belongs to the year in which it starts.
    Years are whole 365-day spans from ``start``; the final partial year is
    folded into the last whole year.
    """
    n_years = (end - start) // YEAR
    if n_years < 1:
        return []
    snap = snapshot_days * DAY
    years: list[set[str]] = [set() for _ in range(n_years)]
    for c in commits:
        if not start <= c.timestamp <= end:
            continue
        snap_start = start + ((c.timestamp - start) // snap) * snap
        y = min((snap_start - start) // YEAR, n_years - 1)
        years[y].add(c.author)
    return [len(s) for s in years]


def retention(commits: Sequence[Commit], start: int, end: int, snapshot_days: int = 90) -> int:
    """STA-7: cumulative annual increases in active contributors (0 below two years)."""
    per_year = active_contributors_by_year(commits, start, end, snapshot_days)
    return positive_part_sum(b - a for a, b in zip(per_year, per_year[1:]))


def community_size(dataset: ProjectDataset) -> int:
    """STA-8: distinct raw identities across commits, PRs, issues and comments."""
    people = {c.author for c in dataset.commits}
    people.update(p.author for p in dataset.prs)
    for issue in dataset.issues:
        people.add(issue.author)
        people.update(c.author for c in issue.comments)
    return len(people)


def turnover(commits: Iterable[Commit], end: int, lookback_months: int = 6) -> int:
    """STA-9: commit authors whose latest commit is older than ``end - lookback``."""
    last: dict[str, int] = {}
    for c in commits:
        if c.timestamp <= end:
            last[c.author] = max(last.get(c.author, c.timestamp), c.timestamp)
    cutoff = end - lookback_months * MONTH
    return sum(1 for t in last.values() if t < cutoff)


def non_maintainer_activity(commits: Iterable[Commit], prs: Iterable[PullRequest]) -> int:
    """TEC-1: commit authors who never merged a pull request."""
    mergers = {p.merger for p in prs if p.merged and p.merger is not None}
    return len({c.author for c in commits} - mergers)


def pr_efficiency(prs: Iterable[PullRequest]) -> Optional[float]:
    """TEC-2: mean time from PR creation to merge/close, over resolved PRs."""
    durations = [p.resolved_at - p.created_at for p in prs if p.resolved_at is not None]
    if not durations:
        return None
    return sum(durations) / len(durations)


def _is_doc(path: str, doc_extensions: set[str]) -> bool:
    name = path.rsplit("/", 1)[-1]
    if "." not in name:
        return False
    return name.rsplit(".", 1)[-1].lower() in doc_extensions


def commit_split(commits: Iterable[Commit], doc_extensions: Iterable[str] = ("txt", "md")) -> tuple[int, int]:
    """TEC-3 (commits touching a doc file) and TEC-4 (commits touching only non-doc files)."""
    exts = {e.lower().lstrip(".") for e in doc_extensions}
    if not exts:
        raise ValueError("doc_extensions must be non-empty")
    docs = code = 0
    for c in commits:
        if not c.files:
            continue
        flags = [_is_doc(f.path, exts) for f in c.files]
        if any(flags):
            docs += 1
        else:
            code += 1
    return docs, code


def compute_vector(dataset: ProjectDataset, config: MetricsConfig = MetricsConfig()) -> SustainabilityVector:
    """Evaluate every metric; a metric whose precondition fails is left out."""
    ds = dataset
    vec = SustainabilityVector(ds.project_id)

    def put(mid, value):
        if value is not None:
            vec.values[mid] = MetricValue(mid, value, UNITS[mid])

    window = TimeWindow(ds.start, ds.end, config.window_weeks)
    pop, forks = popularity(ds.repo)
    try:
        years = age(ds.repo, config.as_of_year)
    except ValueError as exc:
        logger.warning("%s: STA-1 not computed: %s", ds.project_id, exc)
        years = None
    tec3, tec4 = commit_split(ds.commits, config.doc_extensions)

    put("COM-1", response_time(ds.issues))
    put("COM-2", comm_frequency(ds.issues) if ds.issues else None)
    put("POP-1", pop)
    put("STA-1", years)
    put("STA-2", attrition(ds.commits, window))
    put("STA-3", forks)
    put("STA-4", growth(ds.prs, window))
    put("STA-5", truck_factor(ds.commits))
    put("STA-6", dormancy(
        ds.commits, ds.end,
        lookback_days=config.dormancy_lookback_days,
        window_weeks=config.dormancy_window_weeks,
        threshold=config.dormancy_threshold,
    ))
    put("STA-7", retention(ds.commits, ds.start, ds.end, config.activity_window_days) if ds.commits else None)
    put("STA-8", community_size(ds))
    put("STA-9", turnover(ds.commits, ds.end, config.turnover_lookback_months))
    put("TEC-1", non_maintainer_activity(ds.commits, ds.prs))
    put("TEC-2", pr_efficiency(ds.prs))
    put("TEC-3", tec3)
    put("TEC-4", tec4)
    return vec


def write_metrics_csv(path, vectors: Iterable[SustainabilityVector]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for vec in sorted(vectors, key=lambda v: v.project_id):
            writer.writerows(vec.rows())


def read_metrics_csv(path) -> dict[str, dict[str, Optional[float]]]:
    """Return ``{project_id: {metric_id: value or None}}``."""
    table: dict[str, dict[str, Optional[float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRICS_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            value = float(row["value"]) if row["computed"] == "true" else None
            table.setdefault(row["project_id"], {})[row["metric_id"]] = value
    return table
