"""Truck factor via degree-of-authorship (DOA) and greedy author removal."""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Iterable, Optional

DOA_INTERCEPT = 3.293
DOA_FIRST_AUTHOR = 1.098
DOA_DELIVERIES = 0.164
DOA_ACCEPTANCES = 0.321
NORMALIZED_DOA_MIN = 0.75
COVERAGE_THRESHOLD = 0.5


def degree_of_authorship(first_author: bool, deliveries: int, acceptances: int) -> float:
    return (
        DOA_INTERCEPT
        + DOA_FIRST_AUTHOR * (1 if first_author else 0)
        + DOA_DELIVERIES * deliveries
        - DOA_ACCEPTANCES * math.log(1 + acceptances)
    )


def file_authorship(commits: Iterable) -> dict[str, set[str]]:
    """Map every live file to the contributors who author it.

    Files whose latest change is a deletion are dropped. A contributor authors a
    file when their DOA is at least ``DOA_INTERCEPT`` and at least 75% of the
    file's maximum DOA.
    """
    first_author: dict[str, str] = {}
    changes: dict[str, dict[str, int]] = defaultdict(lambda: defaultdict(int))
    deleted: set[str] = set()
    for commit in sorted(commits, key=lambda c: c.timestamp):
        for change in commit.files:
            path = change.path
            if change.kind == "deleted":
                deleted.add(path)
                continue
            if path in deleted or path not in first_author:
                # a re-added file starts a fresh authorship history
                if path in deleted:
                    deleted.discard(path)
                    changes.pop(path, None)
                first_author[path] = commit.author
            changes[path][commit.author] += 1

    authors: dict[str, set[str]] = {}
    for path, per_dev in changes.items():
        if path in deleted:
            continue
        total = sum(per_dev.values())
        doa = {
            dev: degree_of_authorship(dev == first_author[path], n, total - n)
            for dev, n in per_dev.items()
        }
        top = max(doa.values())
        authors[path] = {
            dev for dev, value in doa.items()
            if value >= DOA_INTERCEPT and value / top >= NORMALIZED_DOA_MIN
        }
    return authors


def _coverage(authors: dict[str, set[str]], removed: set[str]) -> float:
    covered = sum(1 for devs in authors.values() if devs - removed)
    return covered / len(authors)


def truck_factor(commits: Iterable, *, return_removed: bool = False):
    """Number of top authors whose removal orphans more than half of the files.

    Authors are ranked by authored-file count (descending, ties broken by
    contributor id) and removed greedily until fewer than 50% of files keep an
    author. Returns ``None`` when no live file exists.
    """
    authors = file_authorship(commits)
    if not authors:
        return None
    counts: dict[str, int] = defaultdict(int)
    for devs in authors.values():
        for dev in devs:
            counts[dev] += 1
    ranking = sorted(counts, key=lambda dev: (-counts[dev], dev))

    removed: list[str] = []
    for dev in ranking:
        if _coverage(authors, set(removed)) < COVERAGE_THRESHOLD:
            break
        removed.append(dev)
    result: Optional[int] = len(removed)
    if return_removed:
        return result, removed
    return result
