"""Language rules and a comment/string-aware line lexer."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

RULE_KEYS = {
    "name", "extensions", "line_comments", "block_comments", "strings",
    "function_style", "decision_keywords", "decision_operators", "non_function_keywords",
}
FUNCTION_STYLES = ("brace", "indent")

TOKEN_RE = re.compile(
    r"[A-Za-z_$][\w$]*|\d[\w.]*|&&|\|\||\?\?|\?\.|\?:|::|->|=>|[^\s\w]"
)
STRING_MARK = '"S"'


@dataclass(frozen=True)
class StringRule:
    open: str
    close: str
    escape: Optional[str] = "\\"
    multiline: bool = False


@dataclass(frozen=True)
class LanguageRules:
    """Declarative lexical description of one language family.

    Loaded from JSON files with exactly the keys in ``RULE_KEYS``.
    """

    name: str
    extensions: tuple[str, ...]
    line_comments: tuple[str, ...]
    block_comments: tuple[tuple[str, str], ...]
    strings: tuple[StringRule, ...]
    function_style: str
    decision_keywords: frozenset
    decision_operators: frozenset
    non_function_keywords: frozenset

    @property
    def decision_tokens(self) -> frozenset:
        return self.decision_keywords | self.decision_operators

    @classmethod
    def from_dict(cls, data: dict) -> "LanguageRules":
        unknown = set(data) - RULE_KEYS
        missing = RULE_KEYS - set(data)
        if unknown or missing:
            raise ValueError(f"language rules: unknown keys {sorted(unknown)}, missing keys {sorted(missing)}")
        if data["function_style"] not in FUNCTION_STYLES:
            raise ValueError(f"function_style must be one of {FUNCTION_STYLES}")
        rules = cls(
            name=data["name"],
            extensions=tuple(e.lower().lstrip(".") for e in data["extensions"]),
            line_comments=tuple(data["line_comments"]),
            block_comments=tuple(tuple(pair) for pair in data["block_comments"]),
            # longest delimiters first so that triple quotes win over single ones
            strings=tuple(sorted((StringRule(**s) for s in data["strings"]), key=lambda s: -len(s.open))),
            function_style=data["function_style"],
            decision_keywords=frozenset(data["decision_keywords"]),
            decision_operators=frozenset(data["decision_operators"]),
            non_function_keywords=frozenset(data["non_function_keywords"]),
        )
        if not rules.decision_tokens:
            raise ValueError(f"{rules.name}: decision tokens must be non-empty")
        return rules

    @classmethod
    def load(cls, path) -> "LanguageRules":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def builtin_rules() -> list[LanguageRules]:
    folder = resources.files("sustainq.quality") / "rules"
    return [
        LanguageRules.from_dict(json.loads(entry.read_text(encoding="utf-8")))
        for entry in sorted(folder.iterdir(), key=lambda e: e.name)
        if entry.name.endswith(".json")
    ]


def rules_by_extension(rules: Iterable[LanguageRules]) -> dict[str, LanguageRules]:
    table: dict[str, LanguageRules] = {}
    for lang in rules:
        for ext in lang.extensions:
            if ext in table:
                raise ValueError(f"extension .{ext} claimed by both {table[ext].name} and {lang.name}")
            table[ext] = lang
    return table


def load_rules(extra_dir: Optional[Path] = None) -> list[LanguageRules]:
    rules = builtin_rules()
    if extra_dir is not None:
        rules.extend(LanguageRules.load(p) for p in sorted(Path(extra_dir).glob("*.json")))
    rules_by_extension(rules)
    return rules


@dataclass(frozen=True)
class Line:
    """One physical source line after comment removal.

    ``code`` keeps string literals verbatim; ``masked`` replaces each literal by
    a placeholder so that tokens inside strings are never seen as code.
    """

    number: int
    code: str
    masked: str
    in_string_at_start: bool = False

    @property
    def has_code(self) -> bool:
        return bool(self.code.strip())

    def tokens(self) -> list[str]:
        return TOKEN_RE.findall(self.masked)


def lex_lines(text: str, rules: LanguageRules) -> list[Line]:
    """Split ``text`` into lines, stripping comments and masking string contents."""
    code: list[str] = []
    masked: list[str] = []
    lines: list[Line] = []
    block_close: Optional[str] = None
    string: Optional[StringRule] = None
    line_no = 1
    starts_in_string = False
    i, n = 0, len(text)

    def flush():
        lines.append(Line(line_no, "".join(code), "".join(masked), starts_in_string))
        code.clear()
        masked.clear()

    while i < n:
        ch = text[i]
        if ch == "\n":
            if string is not None and not string.multiline:
                string = None  # unterminated single-line literal
            flush()
            line_no += 1
            starts_in_string = string is not None
            i += 1
            continue
        if block_close is not None:
            if text.startswith(block_close, i):
                i += len(block_close)
                block_close = None
            else:
                i += 1
            continue
        if string is not None:
            if string.escape and text.startswith(string.escape, i) and i + 1 < n and text[i + 1] != "\n":
                code.append(text[i:i + 2])
                i += 2
                continue
            if text.startswith(string.close, i):
                code.append(string.close)
                i += len(string.close)
                string = None
                continue
            code.append(ch)
            i += 1
            continue
        if any(text.startswith(m, i) for m in rules.line_comments):
            while i < n and text[i] != "\n":
                i += 1
            continue
        opened = next((pair for pair in rules.block_comments if text.startswith(pair[0], i)), None)
        if opened is not None:
            block_close = opened[1]
            i += len(opened[0])
            continue
        srule = next((s for s in rules.strings if text.startswith(s.open, i)), None)
        if srule is not None:
            string = srule
            code.append(srule.open)
            masked.append(f" {STRING_MARK} ")
            i += len(srule.open)
            continue
        code.append(ch)
        masked.append(ch)
        i += 1
    if text and (code or masked or not text.endswith("\n")):
        flush()
    return lines
