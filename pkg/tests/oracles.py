"""Brute-force reference implementations used to derive expected test values.

These work on the raw fixture records (plain dicts parsed from the JSON
exports) and deliberately avoid the package's own loaders and helpers.
"""

import json
import math
from pathlib import Path

DAY = 86400
WEEK = 7 * DAY
MONTH = 30 * DAY
YEAR = 365 * DAY


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def raw_project(project_dir, commits_file=None):
    project_dir = Path(project_dir)
    commits = read_jsonl(commits_file or project_dir / "commits.jsonl")
    issues = read_jsonl(project_dir / "issues.jsonl")
    prs = read_jsonl(project_dir / "prs.jsonl")
    repo = json.loads((project_dir / "repo.json").read_text(encoding="utf-8"))
    return commits, issues, prs, repo


def span(commits, issues, prs):
    times = [c["timestamp"] for c in commits]
    for i in issues:
        times.append(i["created_at"])
        for c in i["comments"]:
            times.append(c["created_at"])
    for p in prs:
        times.append(p["created_at"])
        if p["resolved_at"] is not None:
            times.append(p["resolved_at"])
    return min(times), max(times)


def window_counts(times, init, end, weeks):
    """Per-window event counts; windows [lo, hi) except the last, which includes ``end``."""
    length = weeks * WEEK
    bounds = []
    k = 0
    while True:
        lo = init + k * length
        if bounds and lo >= end:
            break
        bounds.append((lo, min(lo + length, end)))
        k += 1
    counts = []
    for idx, (lo, hi) in enumerate(bounds):
        last = idx == len(bounds) - 1
        counts.append(sum(1 for t in times if lo <= t < hi or (last and t == hi)))
    return counts


def drops(counts):
    total = 0
    for a, b in zip(counts, counts[1:]):
        if b < a:
            total += a - b
    return total


def rises(counts):
    return drops(counts[::-1])


def truck_factor(commits):
    """Step-by-step replay of the degree-of-authorship greedy algorithm."""
    files = {}  # path -> {"first": author, "changes": {author: n}, "alive": bool}
    for c in sorted(commits, key=lambda c: c["timestamp"]):
        for f in c["files"]:
            path, kind = f["path"], f["kind"]
            if kind == "deleted":
                if path in files:
                    files[path]["alive"] = False
                continue
            rec = files.get(path)
            if rec is None or not rec["alive"]:
                rec = files[path] = {"first": c["author"], "changes": {}, "alive": True}
            rec["changes"][c["author"]] = rec["changes"].get(c["author"], 0) + 1

    authors = {}
    for path, rec in files.items():
        if not rec["alive"]:
            continue
        total = sum(rec["changes"].values())
        doa = {}
        for dev, n in rec["changes"].items():
            fa = 1 if dev == rec["first"] else 0
            doa[dev] = 3.293 + 1.098 * fa + 0.164 * n - 0.321 * math.log(1 + total - n)
        best = max(doa.values())
        authors[path] = {d for d, v in doa.items() if v >= 3.293 and v / best >= 0.75}
    if not authors:
        return None, []

    authored = {}
    for devs in authors.values():
        for d in devs:
            authored[d] = authored.get(d, 0) + 1
    ranking = sorted(authored.items(), key=lambda kv: (-kv[1], kv[0]))

    def coverage(gone):
        kept = [p for p, devs in authors.items() if any(d not in gone for d in devs)]
        return len(kept) / len(authors)

    gone = []
    for dev, _ in ranking:
        if coverage(set(gone)) < 0.5:
            break
        gone.append(dev)
    return len(gone), gone


def yearly_active(commits, start, end, snapshot_days=90):
    n_years = (end - start) // YEAR
    if n_years < 1:
        return []
    snap = snapshot_days * DAY
    years = [set() for _ in range(n_years)]
    s = 0
    while start + s * snap <= end:
        lo, hi = start + s * snap, start + (s + 1) * snap
        year = min((s * snap) // YEAR, n_years - 1)
        for c in commits:
            if lo <= c["timestamp"] < hi and c["timestamp"] <= end:
                years[year].add(c["author"])
        s += 1
    return [len(y) for y in years]


def is_doc(path, exts=("txt", "md")):
    name = path.split("/")[-1]
    return "." in name and name.split(".")[-1].lower() in exts


def metrics(project_dir, commits_file=None, as_of_year=2023):
    commits, issues, prs, repo = raw_project(project_dir, commits_file)
    start, end = span(commits, issues, prs)
    out = {}

    delays = []
    for i in issues:
        ok = sorted(c["created_at"] for c in i["comments"] if c["created_at"] >= i["created_at"])
        if ok:
            delays.append(ok[0] - i["created_at"])
    if delays:
        out["COM-1"] = sum(delays) / len(delays)
    if issues:
        out["COM-2"] = len(issues) + sum(len(i["comments"]) for i in issues)
    out["POP-1"] = repo["forks"] + repo["stars"] + repo["watchers"]
    out["STA-1"] = as_of_year - repo["inception_year"]
    out["STA-2"] = drops(window_counts([c["timestamp"] for c in commits], start, end, 12))
    out["STA-3"] = repo["forks"]
    out["STA-4"] = rises(window_counts([p["created_at"] for p in prs], start, end, 12))
    tf, _ = truck_factor(commits)
    if tf is not None:
        out["STA-5"] = tf
    recent = sum(1 for c in commits if end - 13 * 4 * WEEK < c["timestamp"] <= end)
    out["STA-6"] = 1 if recent / 13 < 1.0 else 0
    per_year = yearly_active(commits, start, end)
    out["STA-7"] = sum(max(0, b - a) for a, b in zip(per_year, per_year[1:]))
    people = {c["author"] for c in commits} | {p["author"] for p in prs}
    for i in issues:
        people.add(i["author"])
        people |= {c["author"] for c in i["comments"]}
    out["STA-8"] = len(people)
    last_commit = {}
    for c in commits:
        last_commit[c["author"]] = max(last_commit.get(c["author"], 0), c["timestamp"])
    out["STA-9"] = sum(1 for t in last_commit.values() if t < end - 6 * MONTH)
    mergers = {p["merger"] for p in prs if p["merged"]}
    out["TEC-1"] = len({c["author"] for c in commits if c["author"] not in mergers})
    resolved = [p["resolved_at"] - p["created_at"] for p in prs if p["resolved_at"] is not None]
    if resolved:
        out["TEC-2"] = sum(resolved) / len(resolved)
    out["TEC-3"] = sum(1 for c in commits if any(is_doc(f["path"]) for f in c["files"]))
    out["TEC-4"] = sum(1 for c in commits if c["files"] and not any(is_doc(f["path"]) for f in c["files"]))
    return out


# ---------------------------------------------------------------- code quality

def duplicated_lines_bruteforce(files, block=6):
    """O(n^2) matcher: mark every line inside a ``block``-line run seen at two positions."""
    positions = [(fi, li) for fi, lines in enumerate(files) for li in range(len(lines) - block + 1)]
    marked = [[False] * len(lines) for lines in files]
    for a in range(len(positions)):
        fa, la = positions[a]
        for b in range(len(positions)):
            if a == b:
                continue
            fb, lb = positions[b]
            if all(files[fa][la + k] == files[fb][lb + k] for k in range(block)):
                for k in range(block):
                    marked[fa][la + k] = True
                break
    return sum(sum(m) for m in marked)


def narrowest_window(samples, mass):
    """Exhaustive HDI: try every start index of a ceil(mass*N) window, keep the first narrowest."""
    from fractions import Fraction

    xs = sorted(samples)
    n = len(xs)
    k = max(1, math.ceil(Fraction(repr(float(mass))) * n))
    best = None
    for i in range(n - k + 1):
        width = xs[i + k - 1] - xs[i]
        if best is None or width < best[0]:
            best = (width, xs[i], xs[i + k - 1])
    return best[1], best[2]
