"""Lexical code-quality measurement (complexity, size, duplication, coverage, defects)."""

from .analysis import (
    DEFAULT_DEFECT_LABELS,
    QUALITY_HEADER,
    QUALITY_IDS,
    FileProfile,
    FunctionSpan,
    QualityProfile,
    QualityThresholds,
    coverage_metric,
    cyclomatic,
    defect_density,
    duplication_pct,
    profile_source,
    project_quality,
    quality_profile,
    read_quality_csv,
    scan_tree,
    write_quality_csv,
)
from .lexer import LanguageRules, builtin_rules, lex_lines, load_rules

__all__ = [
    "DEFAULT_DEFECT_LABELS", "QUALITY_HEADER", "QUALITY_IDS", "FileProfile", "FunctionSpan",
    "LanguageRules", "QualityProfile", "QualityThresholds", "builtin_rules", "coverage_metric",
    "cyclomatic", "defect_density", "duplication_pct", "lex_lines", "load_rules", "profile_source",
    "project_quality", "quality_profile", "read_quality_csv", "scan_tree", "write_quality_csv",
]
