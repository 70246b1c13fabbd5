"""Regenerate the bundled three-project fixture corpus.

Run from the repository root: ``python tests/fixtures/make_corpus.py``. Output
is deterministic; the generated files are committed alongside this script.
"""

import json
import random
import shutil
from pathlib import Path

HERE = Path(__file__).parent
CORPUS = HERE / "corpus"
DAY = 86400
T0 = 1546300800  # 2019-01-01T00:00:00Z

COMMENTS_PER_ISSUE = [0, 1, 2, 3, 4, 2, 3, 5, 1, 2]  # 23 comments over 10 issues
LABELS = [["Bug"], [], ["enhancement"], ["kind/bug", "area/core"], [], ["question"],
          ["BUG"], [], ["docs"], ["defect"]]


def commit_times(rng, start, segments):
    """``segments`` is a list of (offset_days, length_days, n_commits)."""
    times = []
    for offset, length, n in segments:
        for _ in range(n):
            times.append(start + offset * DAY + rng.randrange(length * DAY))
    return sorted(times)


def make_commits(rng, name, times, authors, code_files, doc_files):
    live = set()
    commits = []
    for k, t in enumerate(times):
        author = authors[k % len(authors)] if k % 7 else authors[0]
        files = []
        if k == 17:
            pass  # merge commit without file changes
        elif k % 9 == 4:
            files.append({"path": rng.choice(doc_files), "kind": "modified"})
        else:
            for path in rng.sample(code_files, rng.randint(1, 3)):
                files.append({"path": path, "kind": "modified" if path in live else "added"})
                live.add(path)
            if k % 11 == 5:
                files.append({"path": rng.choice(doc_files), "kind": "modified"})
        if k == 30 and live:
            victim = sorted(live)[0]
            files = [f for f in files if f["path"] != victim] + [{"path": victim, "kind": "deleted"}]
            live.discard(victim)
        commits.append({"sha": f"{name[:2]}{k:038x}", "author": author, "timestamp": t, "files": files})
    return commits


def make_issues(rng, name, start, span_days, handles):
    issues = []
    for k, n_comments in enumerate(COMMENTS_PER_ISSUE):
        created = start + rng.randrange(span_days * DAY)
        comments = []
        for j in range(n_comments):
            if k == 4 and j == 0:
                delay = 0  # answered at the creation instant
            else:
                delay = rng.randrange(60, 20 * DAY)
            comments.append({"author": rng.choice(handles), "created_at": created + delay})
        if k == 8:
            comments[0]["created_at"] = created - 3600  # migrated comment predating its issue
        rng.shuffle(comments)
        issues.append({
            "id": f"{name.upper()}-{k + 1}",
            "created_at": created,
            "labels": LABELS[k],
            "author": rng.choice(handles),
            "source": "jira" if k % 4 == 3 else "github",
            "comments": comments,
        })
    return issues


def make_prs(rng, start, span_days, authors, mergers, last_time):
    prs = []
    kinds = ["merged"] * 5 + ["closed"] * 2 + ["open"]
    for k, kind in enumerate(kinds):
        created = start + rng.randrange(span_days * DAY)
        resolved = None if kind == "open" else created + rng.randrange(3600, 15 * DAY)
        prs.append({
            "id": str(100 + k),
            "author": rng.choice(authors),
            "created_at": created,
            "resolved_at": resolved,
            "merged": kind == "merged",
            "merger": rng.choice(mergers) if kind == "merged" else None,
        })
    # the dataset's last activity is the resolution of the first merged PR
    prs[0]["resolved_at"] = last_time + 7200
    return prs


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_git_log(path, commits):
    code = {"added": "A", "modified": "M", "deleted": "D"}
    with open(path, "w", encoding="utf-8") as fh:
        for c in reversed(commits):  # git prints newest first
            fh.write(f"@@@{c['sha']}\t{c['author']}\t{c['timestamp']}\n")
            for f in c["files"]:
                fh.write(f"{code[f['kind']]}\t{f['path']}\n")
            fh.write("\n")
        fh.write("@@@deadbeef\tbroken header without timestamp\n\n")


def project(name, seed, *, inception, segments, span_days, src, coverage=None, git_log=False, repo=None):
    rng = random.Random(seed)
    root = CORPUS / name
    authors = [
        "Ada Lovelace <ada@example.org>",
        "Grace Hopper <grace@example.org>",
        "Alan Turing <alan@example.org>",
        "Ada Lovelace <ada@home.example>",
        "Edsger Dijkstra <edsger@example.org>",
    ]
    handles = ["ada", "grace", "linus", "margaret", "ken"]
    times = commit_times(rng, T0, segments)
    code_files = [f"src/{p}" for p in src] + [f"lib/mod{i}.c" for i in range(4)]
    commits = make_commits(rng, name, times, authors, code_files,
                           ["README.md", "docs/guide.txt", "CHANGES.MD"])
    issues = make_issues(rng, name, T0, span_days, handles)
    last = max([c["timestamp"] for c in commits]
               + [i["created_at"] for i in issues]
               + [c["created_at"] for i in issues for c in i["comments"]])
    prs = make_prs(rng, T0, span_days, handles, [authors[0], authors[1], "ken"], last)

    (root / "src").mkdir(parents=True)
    for rel, text in src.items():
        path = root / "src" / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    if git_log:
        write_git_log(root / "git.log", commits)
        write_jsonl(HERE / "git_log_expected.jsonl", commits)
    else:
        write_jsonl(root / "commits.jsonl", commits)
    write_jsonl(root / "issues.jsonl", issues)
    write_jsonl(root / "prs.jsonl", prs)
    (root / "repo.json").write_text(json.dumps(dict(repo, project_id=name, inception_year=inception),
                                               sort_keys=True, indent=2) + "\n", encoding="utf-8")
    if coverage:
        (root / "coverage.csv").write_text(coverage, encoding="utf-8")


QUALITY_SRC = HERE / "quality_project" / "src"


def sources(*subdirs):
    """Source files of the code-quality fixture tree, keyed by path below src/."""
    files = {}
    for sub in subdirs:
        for path in sorted((QUALITY_SRC / sub).rglob("*")):
            if path.is_file():
                files[path.relative_to(QUALITY_SRC).as_posix()] = path.read_text(encoding="utf-8")
    return files


def main():
    if CORPUS.exists():
        shutil.rmtree(CORPUS)
    project(
        "alpha", 11, inception=2018, span_days=1300,
        segments=[(0, 120, 14), (200, 90, 6), (400, 200, 12), (800, 150, 5), (1100, 190, 13)],
        src=sources("core", "py", "java", "tests"),
        coverage=(HERE / "quality_project" / "coverage.csv").read_text(encoding="utf-8"),
        repo={"stars": 120, "watchers": 14, "forks": 9, "size_kb": 2048.0},
    )
    project(
        "beta", 23, inception=2020, span_days=520, git_log=True,
        segments=[(0, 60, 20), (90, 120, 8), (300, 150, 22)],
        src=sources("java"),
        repo={"stars": 33, "watchers": 5, "forks": 2, "size_kb": 512.5},
    )
    project(
        "gamma", 37, inception=2017, span_days=1400,
        segments=[(0, 300, 25), (320, 200, 15), (600, 100, 10)],
        src=sources("py", "tests"),
        repo={"stars": 0, "watchers": 1, "forks": 0, "size_kb": 300.0},
    )


if __name__ == "__main__":
    main()
