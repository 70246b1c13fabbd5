"""Source-tree scanning and the eight software-quality measures."""

from __future__ import annotations

import csv
import logging
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from ..ingest import Issue, RepoInfo
from .lexer import LanguageRules, Line, lex_lines, load_rules, rules_by_extension

logger = logging.getLogger(__name__)

DEFAULT_DEFECT_LABELS = ("bug", "defect", "type: bug", "kind/bug")
DEFAULT_TEST_PATTERN = (
    r"(^|/)(tests?|specs?|__tests__)/"
    r"|(^|/)test_[^/]*$"
    r"|[._-](test|spec)s?\.[^/.]+$"
    r"|[a-z0-9](Test|Tests|Spec)\.[^/.]+$"
)
QUALITY_HEADER = (
    "project_id", "swq1", "swq2_1", "swq2_2", "swq2_3", "swq2_4",
    "swq2_5", "swq2_6", "swq2_7", "coverage_source",
)
QUALITY_IDS = ("SWQ-1", "SWQ-2.1", "SWQ-2.2", "SWQ-2.3", "SWQ-2.4", "SWQ-2.5", "SWQ-2.6", "SWQ-2.7")


@dataclass(frozen=True)
class FunctionSpan:
    path: str
    name: str
    start_line: int
    end_line: int
    sloc: int
    cyclomatic: int


@dataclass(frozen=True)
class FileProfile:
    path: str
    language: str
    sloc: int
    functions: tuple[FunctionSpan, ...]
    normalized_lines: tuple[str, ...]


@dataclass(frozen=True)
class QualityThresholds:
    medium_cc_low: int = 11
    medium_cc_high: int = 25
    very_high_cc: int = 50
    very_large_file_sloc: int = 1000
    very_large_function_sloc: int = 100
    duplication_block: int = 6


@dataclass
class QualityProfile:
    project_id: str = ""
    swq1: Optional[float] = None
    swq2_1: Optional[float] = None
    swq2_2: Optional[int] = None
    swq2_3: Optional[int] = None
    swq2_4: Optional[int] = None
    swq2_5: Optional[int] = None
    swq2_6: Optional[float] = None
    swq2_7: Optional[int] = None
    coverage_source: str = "none"

    def by_id(self) -> dict[str, Optional[float]]:
        values = [self.swq1, self.swq2_1, self.swq2_2, self.swq2_3,
                  self.swq2_4, self.swq2_5, self.swq2_6, self.swq2_7]
        return dict(zip(QUALITY_IDS, values))


def cyclomatic(tokens: Iterable[str], rules: LanguageRules) -> int:
    """McCabe complexity: one plus the decision tokens in a comment/string-free token stream."""
    decisions = rules.decision_tokens
    count = 0
    prev = None
    for tok in tokens:
        if tok in decisions and not (tok == "?" and prev in ("<", ",")):
            count += 1
        prev = tok
    return 1 + count


def _code_lines_between(lines: Sequence[Line], start: int, end: int) -> int:
    return sum(1 for ln in lines[start - 1:end] if ln.has_code)


def _brace_functions(path: str, lines: Sequence[Line], rules: LanguageRules) -> list[FunctionSpan]:
    toks: list[tuple[str, int]] = [(t, ln.number) for ln in lines for t in ln.tokens()]
    # index of the matching "(" for every ")"
    open_paren: dict[int, int] = {}
    pstack: list[int] = []
    for k, (t, _) in enumerate(toks):
        if t == "(":
            pstack.append(k)
        elif t == ")" and pstack:
            open_paren[k] = pstack.pop()

    trailer_ok = {",", ".", "::", ":", "->", "<", ">", "[", "]", "*", "&", "?"}

    def function_head(k: int) -> Optional[tuple[str, int]]:
        """Name and line of a function whose body opens at token ``k``."""
        j = k - 1
        if j >= 0 and toks[j][0] in ("=>", "->"):
            return "<lambda>", toks[j][1]
        while j >= 0 and toks[j][0] != ")":
            t = toks[j][0]
            if not (t in trailer_ok or re.match(r"[A-Za-z_$]", t)) or t in rules.non_function_keywords:
                return None
            j -= 1
        if j < 0 or j not in open_paren:
            return None
        name_at = open_paren[j] - 1
        if name_at < 0:
            return None
        name, line = toks[name_at]
        if not re.match(r"[A-Za-z_$]", name) or name in rules.non_function_keywords:
            return None
        if name_at >= 1 and (toks[name_at - 1][0] == "new" or toks[name_at - 1][0] in rules.non_function_keywords):
            return None
        return name, line

    spans: list[FunctionSpan] = []
    stack: list[Optional[dict]] = []
    active: list[dict] = []
    for k, (t, line) in enumerate(toks):
        if t == "{":
            head = function_head(k)
            if head is None:
                stack.append(None)
            else:
                fn = {"name": head[0], "start": head[1], "decisions": 0}
                stack.append(fn)
                active.append(fn)
            continue
        if t == "}":
            if not stack:
                continue
            fn = stack.pop()
            if fn is not None:
                active.pop()
                spans.append(FunctionSpan(
                    path, fn["name"], fn["start"], line,
                    max(1, _code_lines_between(lines, fn["start"], line)),
                    1 + fn["decisions"],
                ))
            continue
        if active and t in rules.decision_tokens:
            prev = toks[k - 1][0] if k else None
            if not (t == "?" and prev in ("<", ",")):
                active[-1]["decisions"] += 1
    # unbalanced input: close dangling functions at the last line
    last = lines[-1].number if lines else 1
    for fn in active:
        spans.append(FunctionSpan(path, fn["name"], fn["start"], last,
                                  max(1, _code_lines_between(lines, fn["start"], last)), 1 + fn["decisions"]))
    return sorted(spans, key=lambda s: (s.start_line, s.end_line))


_DEF_RE = re.compile(r"^(\s*)(?:async\s+)?def\s+([A-Za-z_]\w*)")


def _indent_functions(path: str, lines: Sequence[Line], rules: LanguageRules) -> list[FunctionSpan]:
    # logical-line starts: not inside a string or an open bracket
    logical = []
    depth = 0
    for ln in lines:
        logical.append(depth == 0 and not ln.in_string_at_start)
        for t in ln.tokens():
            if t in "([{":
                depth += 1
            elif t in ")]}":
                depth = max(0, depth - 1)

    def indent(ln: Line) -> int:
        return len(ln.code) - len(ln.code.lstrip())

    heads = []
    for idx, ln in enumerate(lines):
        m = _DEF_RE.match(ln.masked) if logical[idx] else None
        if m:
            heads.append((idx, m.group(2), indent(ln)))

    bounds = []
    for idx, name, col in heads:
        # the signature may span several physical lines
        j = idx
        while j + 1 < len(lines) and not logical[j + 1]:
            j += 1
        end = j
        k = j + 1
        while k < len(lines):
            ln = lines[k]
            if ln.has_code and logical[k] and indent(ln) <= col:
                break
            if ln.has_code:
                end = k
            k += 1
        bounds.append((idx, end, name))

    spans = []
    for idx, end, name in bounds:
        inner = [(a, b) for a, b, _ in bounds if idx < a <= end]
        tokens = []
        for row in range(idx, end + 1):
            if any(a <= row <= b for a, b in inner):
                continue
            tokens.extend(lines[row].tokens())
        spans.append(FunctionSpan(
            path, name, lines[idx].number, lines[end].number,
            max(1, _code_lines_between(lines, lines[idx].number, lines[end].number)),
            cyclomatic(tokens, rules),
        ))
    return spans


def normalize_line(code: str) -> str:
    return " ".join(code.split())


def profile_source(path: str, text: str, rules: LanguageRules) -> FileProfile:
    lines = lex_lines(text, rules)
    if rules.function_style == "indent":
        functions = _indent_functions(path, lines, rules)
    else:
        functions = _brace_functions(path, lines, rules)
    normalized = tuple(normalize_line(ln.code) for ln in lines if ln.has_code)
    return FileProfile(path, rules.name, len(normalized), tuple(functions), normalized)


def scan_tree(root, rules: Optional[Iterable[LanguageRules]] = None,
              tally: Optional[Counter] = None) -> list[FileProfile]:
    """Profile every recognized source file under ``root``.

    Hidden entries and bytecode caches (``__pycache__``) are skipped.

    Unrecognized extensions are counted under ``tally["unrecognized"]`` and
    unreadable files under ``tally["unreadable"]``.
    """
    table = rules_by_extension(rules if rules is not None else load_rules())
    root = Path(root)
    profiles = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = sorted(d for d in dirnames if not d.startswith(".") and d != "__pycache__")
        for fname in sorted(filenames):
            if fname.startswith("."):
                continue
            full = Path(dirpath) / fname
            rel = full.relative_to(root).as_posix()
            ext = fname.rsplit(".", 1)[-1].lower() if "." in fname else ""
            lang = table.get(ext)
            if lang is None:
                if tally is not None:
                    tally["unrecognized"] += 1
                continue
            try:
                text = full.read_bytes().decode("utf-8")
            except (OSError, UnicodeDecodeError) as exc:
                logger.warning("skipping unreadable %s: %s", rel, exc)
                if tally is not None:
                    tally["unreadable"] += 1
                continue
            profiles.append(profile_source(rel, text.replace("\r\n", "\n"), lang))
    return profiles


def _all_functions(files: Iterable[FileProfile]) -> list[FunctionSpan]:
    return [fn for f in files for fn in f.functions]


def quality_profile(files: Sequence[FileProfile], thresholds: QualityThresholds = QualityThresholds()) -> QualityProfile:
    """Complexity and size counts (SWQ-2.2 to 2.5 and 2.7)."""
    th = thresholds
    fns = _all_functions(files)
    prof = QualityProfile()
    prof.swq2_2 = sum(1 for f in fns if th.medium_cc_low <= f.cyclomatic <= th.medium_cc_high)
    prof.swq2_3 = sum(1 for f in fns if f.cyclomatic > th.very_high_cc)
    prof.swq2_4 = sum(1 for f in files if f.sloc > th.very_large_file_sloc)
    prof.swq2_5 = sum(1 for f in fns if f.sloc > th.very_large_function_sloc)
    if fns:
        top = min(fns, key=lambda f: (-f.cyclomatic, -f.sloc, f.path, f.start_line))
        prof.swq2_7 = top.sloc
    else:
        prof.swq2_7 = 0
    return prof


def duplicated_line_flags(files: Sequence[FileProfile], block: int = 6) -> list[list[bool]]:
    """Per file, whether each normalized line sits inside a repeated ``block``-line run."""
    occurrences: Counter = Counter()
    for f in files:
        lines = f.normalized_lines
        for i in range(len(lines) - block + 1):
            occurrences[lines[i:i + block]] += 1
    flags = []
    for f in files:
        lines = f.normalized_lines
        mark = [False] * len(lines)
        for i in range(len(lines) - block + 1):
            if occurrences[lines[i:i + block]] >= 2:
                mark[i:i + block] = [True] * block
        flags.append(mark)
    return flags


def duplication_pct(files: Sequence[FileProfile], block: int = 6) -> Optional[float]:
    """SWQ-2.6: percent of normalized lines inside a block repeated anywhere in the tree."""
    total = sum(len(f.normalized_lines) for f in files)
    if total == 0:
        return None
    duplicated = sum(sum(mark) for mark in duplicated_line_flags(files, block))
    return 100.0 * duplicated / total


def read_coverage_report(path) -> Optional[tuple[int, int]]:
    """Sum ``path,instrumented_lines,covered_lines`` rows; a header row is allowed."""
    instrumented = covered = 0
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            try:
                inst, cov = int(row[1]), int(row[2])
            except (IndexError, ValueError):
                continue
            instrumented += inst
            covered += cov
    if instrumented <= 0:
        return None
    return instrumented, covered


def coverage_metric(files: Sequence[FileProfile], external_report=None,
                    test_pattern: str = DEFAULT_TEST_PATTERN) -> tuple[Optional[float], str]:
    """SWQ-2.1 and its source: an external report if usable, else the test-SLOC proxy."""
    if external_report is not None and Path(external_report).exists():
        totals = read_coverage_report(external_report)
        if totals is not None:
            inst, cov = totals
            return 100.0 * min(cov, inst) / inst, "report"
    total = sum(f.sloc for f in files)
    if total == 0:
        return None, "none"
    pattern = re.compile(test_pattern)
    tests = sum(f.sloc for f in files if pattern.search(f.path))
    return 100.0 * tests / total, "proxy"


def defect_density(issues: Iterable[Issue], repo: RepoInfo,
                   defect_labels: Iterable[str] = DEFAULT_DEFECT_LABELS,
                   denominator: str = "kb", kloc: Optional[float] = None) -> float:
    """SWQ-1: defect-labelled issues per kilobyte of repository (or per KLOC)."""
    labels = {label.lower() for label in defect_labels}
    defects = sum(1 for i in issues if labels.intersection(l.lower() for l in i.labels))
    if denominator == "kloc":
        if not kloc or kloc <= 0:
            raise ValueError("KLOC denominator requires a positive code size")
        return defects / kloc
    if repo.size_kb <= 0:
        raise ValueError(f"repository size must be positive, got {repo.size_kb}")
    return defects / repo.size_kb


def write_quality_csv(path, profiles: Iterable[QualityProfile]) -> None:
    from ..metrics import format_value

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(QUALITY_HEADER)
        for p in sorted(profiles, key=lambda p: p.project_id):
            values = [p.swq1, p.swq2_1, p.swq2_2, p.swq2_3, p.swq2_4, p.swq2_5, p.swq2_6, p.swq2_7]
            writer.writerow([p.project_id] + ["" if v is None else format_value(v) for v in values]
                            + [p.coverage_source])


def read_quality_csv(path) -> dict[str, dict[str, Optional[float]]]:
    table = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != QUALITY_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            table[row["project_id"]] = {
                qid: (float(row[col]) if row[col] != "" else None)
                for qid, col in zip(QUALITY_IDS, QUALITY_HEADER[1:9])
            }
    return table


def project_quality(project_id: str, issues: Sequence[Issue], repo: RepoInfo, source_root=None, *,
                    coverage_report=None, thresholds: QualityThresholds = QualityThresholds(),
                    rules: Optional[Iterable[LanguageRules]] = None,
                    defect_labels: Iterable[str] = DEFAULT_DEFECT_LABELS,
                    denominator: str = "kb", test_pattern: str = DEFAULT_TEST_PATTERN,
                    tally: Optional[Counter] = None) -> QualityProfile:
    """All eight measures for one project; a missing source tree yields no code metrics."""
    files: list[FileProfile] = []
    if source_root is not None and Path(source_root).is_dir():
        files = scan_tree(source_root, rules, tally)
    if files:
        prof = quality_profile(files, thresholds)
        prof.swq2_6 = duplication_pct(files, thresholds.duplication_block)
    else:
        prof = QualityProfile()
    prof.project_id = project_id
    prof.swq2_1, prof.coverage_source = coverage_metric(files, coverage_report, test_pattern)
    kloc = sum(f.sloc for f in files) / 1000.0
    try:
        prof.swq1 = defect_density(issues, repo, defect_labels, denominator, kloc)
    except ValueError as exc:
        logger.warning("%s: SWQ-1 not computed: %s", project_id, exc)
    return prof
