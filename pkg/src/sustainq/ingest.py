"""Loading of pre-fetched repository exports into immutable per-project datasets.

A project directory holds four line-delimited exports::

    <project_id>/commits.jsonl   sha, author, timestamp, files[{path, kind}]
    <project_id>/issues.jsonl    id, created_at, labels[], author, source, comments[{author, created_at}]
    <project_id>/prs.jsonl       id, author, created_at, resolved_at, merged, merger
    <project_id>/repo.json       project_id, stars, watchers, forks, size_kb, inception_year

``commits.jsonl`` may be replaced by ``git.log``, a raw history dump produced by::

    git log --no-renames --name-status --format='@@@%H%x09%an <%ae>%x09%at'

Loaders never drop a record silently: every skipped record increments a
counter in the caller-supplied tally (a ``collections.Counter``).
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional

logger = logging.getLogger(__name__)

CHANGE_KINDS = ("added", "modified", "deleted")
TRACKER_SOURCES = ("github", "jira")
UNKNOWN_MERGER = "<unknown>"

_GIT_STATUS = {"A": "added", "M": "modified", "D": "deleted", "T": "modified"}


class DatasetError(Exception):
    """Raised when a project directory cannot be assembled into a dataset."""


@dataclass(frozen=True)
class FileChange:
    path: str
    kind: str


@dataclass(frozen=True)
class Commit:
    sha: str
    author: str
    timestamp: int
    files: tuple[FileChange, ...] = ()


@dataclass(frozen=True)
class Comment:
    author: str
    timestamp: int


@dataclass(frozen=True)
class Issue:
    id: str
    created_at: int
    author: str
    source: str = "github"
    labels: tuple[str, ...] = ()
    comments: tuple[Comment, ...] = ()

    @property
    def early_comments(self) -> tuple[Comment, ...]:
        """Comments stamped before the issue itself (tracker-migration noise)."""
        return tuple(c for c in self.comments if c.timestamp < self.created_at)


@dataclass(frozen=True)
class PullRequest:
    id: str
    author: str
    created_at: int
    resolved_at: Optional[int] = None
    merged: bool = False
    merger: Optional[str] = None


@dataclass(frozen=True)
class RepoInfo:
    project_id: str
    stars: int
    watchers: int
    forks: int
    size_kb: float
    inception_year: int


@dataclass(frozen=True)
class ProjectDataset:
    project_id: str
    commits: tuple[Commit, ...]
    issues: tuple[Issue, ...]
    prs: tuple[PullRequest, ...]
    repo: RepoInfo
    start: int
    end: int
    warnings: dict = field(default_factory=dict, compare=False)

    def clipped(self, end: int) -> "ProjectDataset":
        """Dataset restricted to activity at or before ``end``."""
        issues = tuple(
            replace(i, comments=tuple(c for c in i.comments if c.timestamp <= end))
            for i in self.issues
            if i.created_at <= end
        )
        return replace(
            self,
            commits=tuple(c for c in self.commits if c.timestamp <= end),
            issues=issues,
            prs=tuple(p for p in self.prs if p.created_at <= end),
            end=end,
        )

    def to_dict(self) -> dict:
        data = asdict(self)
        data.pop("warnings")
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "ProjectDataset":
        commits = tuple(
            Commit(c["sha"], c["author"], c["timestamp"], tuple(FileChange(**f) for f in c["files"]))
            for c in data["commits"]
        )
        issues = tuple(
            Issue(
                id=i["id"],
                created_at=i["created_at"],
                author=i["author"],
                source=i["source"],
                labels=tuple(i["labels"]),
                comments=tuple(Comment(**c) for c in i["comments"]),
            )
            for i in data["issues"]
        )
        prs = tuple(PullRequest(**p) for p in data["prs"])
        return cls(
            project_id=data["project_id"],
            commits=commits,
            issues=issues,
            prs=prs,
            repo=RepoInfo(**data["repo"]),
            start=data["start"],
            end=data["end"],
        )


def to_utc_seconds(value) -> int:
    """Normalize an epoch number or ISO-8601 string to integer UTC seconds."""
    if isinstance(value, bool):
        raise ValueError(f"not a timestamp: {value!r}")
    if isinstance(value, (int, float)):
        return int(value)
    if isinstance(value, str):
        text = value.strip()
        try:
            return int(float(text))
        except ValueError:
            pass
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        stamp = datetime.fromisoformat(text)
        if stamp.tzinfo is None:
            stamp = stamp.replace(tzinfo=timezone.utc)
        return int(stamp.timestamp())
    raise ValueError(f"not a timestamp: {value!r}")


def _iter_jsonl(path: Path) -> Iterator[tuple[int, object]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError:
                yield lineno, None


def _skip(tally: Optional[Counter], key: str, where: str, reason: str) -> None:
    logger.warning("skipping %s: %s", where, reason)
    if tally is not None:
        tally[key] += 1


def parse_git_log(raw_log: Iterable[str], tally: Optional[Counter] = None) -> list[Commit]:
    """Parse a ``git log --name-status`` dump (see module docstring for the format).

    Malformed entries are skipped and counted under ``tally["commits"]``.
    Output is sorted ascending by timestamp (stable on input order).
    """
    entries: list[list[str]] = []
    for line in raw_log:
        line = line.rstrip("\n")
        if line.startswith("@@@"):
            entries.append([line[3:]])
        elif entries and line.strip():
            entries[-1].append(line)

    commits = []
    seen = set()
    for entry in entries:
        header, *status_lines = entry
        parts = header.split("\t")
        if len(parts) != 3 or not parts[0] or not parts[1]:
            _skip(tally, "commits", "git log entry", f"bad header {header!r}")
            continue
        sha, author, stamp = parts
        try:
            timestamp = to_utc_seconds(stamp)
        except ValueError:
            _skip(tally, "commits", sha, f"bad timestamp {stamp!r}")
            continue
        files = []
        bad = False
        for status in status_lines:
            code, _, path = status.partition("\t")
            kind = _GIT_STATUS.get(code[:1])
            if kind is None or not path:
                bad = True
                break
            files.append(FileChange(path, kind))
        if bad or timestamp <= 0 or sha in seen:
            _skip(tally, "commits", sha, "malformed file status, timestamp or duplicate sha")
            continue
        seen.add(sha)
        commits.append(Commit(sha, author, timestamp, tuple(files)))
    commits.sort(key=lambda c: c.timestamp)
    return commits


def load_commits(path: Path, tally: Optional[Counter] = None) -> list[Commit]:
    commits = []
    seen = set()
    for lineno, rec in _iter_jsonl(path):
        where = f"{path.name}:{lineno}"
        try:
            sha = str(rec["sha"])
            files = tuple(FileChange(str(f["path"]), str(f["kind"])) for f in rec.get("files") or ())
            commit = Commit(sha, str(rec["author"]), to_utc_seconds(rec["timestamp"]), files)
        except (TypeError, KeyError, ValueError, AttributeError) as exc:
            _skip(tally, "commits", where, repr(exc))
            continue
        if not sha or sha in seen or commit.timestamp <= 0:
            _skip(tally, "commits", where, "empty/duplicate sha or non-positive timestamp")
            continue
        if any(f.kind not in CHANGE_KINDS for f in files):
            _skip(tally, "commits", where, "unknown change kind")
            continue
        seen.add(sha)
        commits.append(commit)
    commits.sort(key=lambda c: c.timestamp)
    return commits


def load_tracker_data(path: Path, source: str, tally: Optional[Counter] = None) -> list[Issue]:
    """Load an issue export.

    ``source`` is the tracker assumed for records that do not carry their own
    ``source`` field. Comments are re-sorted ascending and labels lower-cased.
    """
    if source not in TRACKER_SOURCES:
        raise ValueError(f"unknown tracker source {source!r}; expected one of {TRACKER_SOURCES}")
    issues = []
    for lineno, rec in _iter_jsonl(path):
        where = f"{path.name}:{lineno}"
        try:
            if rec.get("created_at") is None:
                raise KeyError("created_at")
            rec_source = rec.get("source") or source
            if rec_source not in TRACKER_SOURCES:
                raise ValueError(f"unknown source {rec_source!r}")
            comments = sorted(
                (
                    Comment(str(c["author"]), to_utc_seconds(c["created_at"]))
                    for c in rec.get("comments") or ()
                ),
                key=lambda c: c.timestamp,
            )
            issue = Issue(
                id=str(rec["id"]),
                created_at=to_utc_seconds(rec["created_at"]),
                author=str(rec["author"]),
                source=rec_source,
                labels=tuple(str(label).lower() for label in rec.get("labels") or ()),
                comments=tuple(comments),
            )
        except (TypeError, KeyError, ValueError, AttributeError) as exc:
            _skip(tally, "issues", where, repr(exc))
            continue
        if issue.created_at <= 0 or any(c.timestamp <= 0 for c in issue.comments):
            _skip(tally, "issues", where, "non-positive timestamp")
            continue
        if issue.early_comments:
            logger.info("%s: %d comment(s) predate issue %s", where, len(issue.early_comments), issue.id)
        issues.append(issue)
    issues.sort(key=lambda i: i.created_at)
    return issues


def load_prs(path: Path, tally: Optional[Counter] = None) -> list[PullRequest]:
    """Load a pull-request export.

    A resolution time earlier than creation is nulled (record kept) and counted
    under ``tally["prs.resolved_at"]``.
    """
    prs = []
    for lineno, rec in _iter_jsonl(path):
        where = f"{path.name}:{lineno}"
        try:
            created = to_utc_seconds(rec["created_at"])
            resolved = rec.get("resolved_at")
            resolved = None if resolved is None else to_utc_seconds(resolved)
            merged = bool(rec.get("merged", False))
            merger = rec.get("merger")
            pr = PullRequest(
                id=str(rec["id"]),
                author=str(rec["author"]),
                created_at=created,
                resolved_at=resolved,
                merged=merged,
                merger=(str(merger) if merger is not None else UNKNOWN_MERGER) if merged else None,
            )
        except (TypeError, KeyError, ValueError, AttributeError) as exc:
            _skip(tally, "prs", where, repr(exc))
            continue
        if pr.resolved_at is not None and pr.resolved_at < pr.created_at:
            logger.warning("%s: resolved_at precedes created_at; nulled", where)
            if tally is not None:
                tally["prs.resolved_at"] += 1
            pr = replace(pr, resolved_at=None)
        prs.append(pr)
    prs.sort(key=lambda p: p.created_at)
    return prs


def load_repo_info(path: Path) -> RepoInfo:
    with open(path, encoding="utf-8") as fh:
        rec = json.load(fh)
    try:
        repo = RepoInfo(
            project_id=str(rec["project_id"]),
            stars=int(rec["stars"]),
            watchers=int(rec["watchers"]),
            forks=int(rec["forks"]),
            size_kb=float(rec["size_kb"]),
            inception_year=int(rec["inception_year"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{path}: invalid repository record ({exc!r})") from exc
    if min(repo.stars, repo.watchers, repo.forks) < 0 or repo.size_kb <= 0:
        raise DatasetError(f"{path}: counts must be >= 0 and size_kb > 0")
    return repo


def _activity_times(commits, issues, prs) -> list[int]:
    times = [c.timestamp for c in commits]
    for issue in issues:
        times.append(issue.created_at)
        times.extend(c.timestamp for c in issue.comments)
    for pr in prs:
        times.append(pr.created_at)
        if pr.resolved_at is not None:
            times.append(pr.resolved_at)
    return times


def assemble_dataset(project_dir: Path) -> ProjectDataset:
    """Assemble the dataset for one project directory.

    ``start``/``end`` are the earliest/latest activity timestamps over commits,
    issues, comments and pull requests (creation and resolution).
    """
    project_dir = Path(project_dir)
    commit_file = project_dir / "commits.jsonl"
    git_log = project_dir / "git.log"
    required = [project_dir / "issues.jsonl", project_dir / "prs.jsonl", project_dir / "repo.json"]
    if not commit_file.exists() and not git_log.exists():
        raise DatasetError(f"missing required file: {commit_file}")
    for path in required:
        if not path.exists():
            raise DatasetError(f"missing required file: {path}")

    tally: Counter = Counter()
    if commit_file.exists():
        commits = load_commits(commit_file, tally)
    else:
        with open(git_log, encoding="utf-8") as fh:
            commits = parse_git_log(fh, tally)
    issues = load_tracker_data(required[0], "github", tally)
    prs = load_prs(required[1], tally)
    repo = load_repo_info(required[2])

    times = _activity_times(commits, issues, prs)
    if not times:
        raise DatasetError(f"{project_dir}: no activity records")
    return ProjectDataset(
        project_id=repo.project_id,
        commits=tuple(commits),
        issues=tuple(issues),
        prs=tuple(prs),
        repo=repo,
        start=min(times),
        end=max(times),
        warnings=dict(tally),
    )


def read_dataset(fh: IO[str]) -> ProjectDataset:
    return ProjectDataset.from_dict(json.load(fh))
