"""Impact-matrix rendering, posterior plot data and figures."""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .bayes import FLIP_SET, hdi
from .config import RunConfig
from .metrics import METRIC_IDS
from .pipeline import (
    POSTERIORS_DIR,
    RESULTS_CSV,
    PipelineError,
    StageReport,
    decision_samples,
    read_posterior,
    read_results_csv,
)
from .quality.analysis import QUALITY_IDS

logger = logging.getLogger(__name__)

NO_IMPACT, IMPROVES, DEGRADES, NOT_COMPUTED = "✗", "+", "−", "NA"
MATRIX_HEADER = ("sust_id", "quality_id", "symbol", "n_projects")
PLOTDATA_HEADER = ("kind", "bin_low", "bin_high", "density")
MATRIX_ROWS = tuple(
    r for mid in METRIC_IDS
    for r in ((f"{mid}:dormant", f"{mid}:non-dormant") if mid == "STA-6" else (mid,))
)


def cell_symbol(row: dict[str, str], flip: bool = False) -> str:
    """Symbol for one results row; '' when no decision exists."""
    direction = row["direction"]
    if direction == "NA":
        return NOT_COMPUTED
    if direction == "NoEvidence":
        return NO_IMPACT
    impact = row["quality_impact"]
    if impact not in ("Improves", "Degrades"):
        return ""
    improves = impact == "Improves"
    if flip and row["sust_id"].split(":")[0] in FLIP_SET:
        improves = not improves
    return IMPROVES if improves else DEGRADES


@dataclass
class ImpactMatrix:
    rows: tuple[str, ...]
    columns: tuple[str, ...]
    symbols: dict[tuple[str, str], str] = field(default_factory=dict)
    counts: dict[tuple[str, str], Optional[int]] = field(default_factory=dict)

    @property
    def missing(self) -> int:
        return sum(1 for r in self.rows for c in self.columns if not self.symbols.get((r, c)))

    def column_default(self, column: str) -> Optional[int]:
        """Most common n in a column (largest on ties); NA cells do not vote."""
        ns = Counter(
            self.counts[(r, column)] for r in self.rows
            if self.counts.get((r, column)) is not None and self.symbols.get((r, column)) != NOT_COMPUTED
        )
        if not ns:
            return None
        return max(ns, key=lambda n: (ns[n], n))

    def cell_text(self, r: str, c: str) -> str:
        sym = self.symbols.get((r, c), "")
        n = self.counts.get((r, c))
        if sym and sym != NOT_COMPUTED and n is not None and n != self.column_default(c):
            return f"{sym} ({n})"
        return sym

    def to_text(self) -> str:
        defaults = {c: self.column_default(c) for c in self.columns}
        head = ["sust_id"] + [c if defaults[c] is None else f"{c} ({defaults[c]})" for c in self.columns]
        body = [[r] + [self.cell_text(r, c) for c in self.columns] for r in self.rows]
        widths = [max(len(line[i]) for line in [head] + body) for i in range(len(head))]
        fmt = lambda line: "  ".join(v.ljust(w) for v, w in zip(line, widths)).rstrip()
        lines = [fmt(head), fmt(["-" * w for w in widths])] + [fmt(line) for line in body]
        lines.append("")
        lines.append(f"{NO_IMPACT} no evidence   {IMPROVES} improves quality   {DEGRADES} degrades quality   "
                     f"{NOT_COMPUTED} not computed   (n) projects when different from the column default")
        if self.missing:
            lines.append(f"blank cells (no decision): {self.missing}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(MATRIX_HEADER)
            for r in self.rows:
                for c in self.columns:
                    n = self.counts.get((r, c))
                    writer.writerow((r, c, self.symbols.get((r, c), ""), "" if n is None else n))


def render_matrix(results: Iterable[dict[str, str]], flip: bool = False) -> ImpactMatrix:
    """Build the sustainability x quality matrix from results rows."""
    matrix = ImpactMatrix(MATRIX_ROWS, QUALITY_IDS)
    for row in results:
        key = (row["sust_id"], row["quality_id"])
        if key[0] not in MATRIX_ROWS or key[1] not in QUALITY_IDS:
            continue
        matrix.symbols[key] = cell_symbol(row, flip)
        matrix.counts[key] = int(row["n_projects"]) if row["n_projects"] else None
    return matrix


@dataclass(frozen=True)
class PlotData:
    edges: np.ndarray
    density: np.ndarray
    hdi_low: float
    hdi_high: float

    def rows(self) -> list[tuple]:
        rows = [("bin", repr(float(lo)), repr(float(hi)), repr(float(d)))
                for lo, hi, d in zip(self.edges[:-1], self.edges[1:], self.density)]
        rows.append(("hdi", repr(self.hdi_low), repr(self.hdi_high), ""))
        return rows


def posterior_plotdata(samples, bins: int = 50, mass: float = 0.95) -> PlotData:
    """Density histogram (integrating to one) and HDI of a sample set."""
    x = np.asarray(samples, dtype=float).ravel()
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        # a degenerate posterior occupies a single unit-width bin
        edges = np.array([lo - 0.5, lo + 0.5])
        density = np.array([1.0])
    else:
        counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
        density = counts / (counts.sum() * np.diff(edges))
    interval = hdi(x, mass)
    return PlotData(edges, density, interval.low, interval.high)


def plotdata_path(out, quality_id: str, sust_id: str) -> Path:
    return Path(out) / "plotdata" / f"{quality_id}__{sust_id.replace(':', '_')}.csv"


def write_plotdata(data: PlotData, dest) -> Path:
    dest = Path(dest)
    dest.parent.mkdir(parents=True, exist_ok=True)
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PLOTDATA_HEADER)
        writer.writerows(data.rows())
    return dest


def export_posterior_plotdata(out, fit_id: str, sust_id: Optional[str] = None, *,
                              bins: int = 50, mass: float = 0.95, dest=None) -> Path:
    """Write the histogram CSV for one fit's decision parameter and return its path."""
    quality_id, predictor = fit_id.split("__", 1)
    sust_id = sust_id or predictor
    data = posterior_plotdata(decision_samples(read_posterior(out, fit_id), sust_id), bins, mass)
    return write_plotdata(data, dest or plotdata_path(out, quality_id, sust_id))


def _matplotlib():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_posterior(data: PlotData, title: str, path) -> None:
    plt = _matplotlib()
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.stairs(data.density, data.edges, fill=True, alpha=0.6)
    ax.axvline(0.0, color="black", lw=0.8)
    ax.hlines(0, data.hdi_low, data.hdi_high, color="tab:red", lw=4, label="95% HDI")
    ax.set_title(title, fontsize=9)
    ax.set_xlabel("parameter value")
    ax.set_ylabel("density")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


_SYMBOL_CODE = {NO_IMPACT: 0, IMPROVES: 1, DEGRADES: -1}


def plot_matrix(matrix: ImpactMatrix, path) -> None:
    plt = _matplotlib()
    grid = np.full((len(matrix.rows), len(matrix.columns)), np.nan)
    for i, r in enumerate(matrix.rows):
        for j, c in enumerate(matrix.columns):
            code = _SYMBOL_CODE.get(matrix.symbols.get((r, c), ""))
            if code is not None:
                grid[i, j] = code
    fig, ax = plt.subplots(figsize=(7, 7))
    ax.imshow(grid, cmap="RdYlGn", vmin=-1.5, vmax=1.5, aspect="auto")
    for i, r in enumerate(matrix.rows):
        for j, c in enumerate(matrix.columns):
            ax.text(j, i, matrix.cell_text(r, c), ha="center", va="center", fontsize=7)
    ax.set_xticks(range(len(matrix.columns)), matrix.columns, rotation=45, fontsize=8)
    ax.set_yticks(range(len(matrix.rows)), matrix.rows, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def run_report(config: RunConfig) -> StageReport:
    if not config.out:
        raise PipelineError("no output directory configured")
    out = Path(config.out)
    results_path = out / RESULTS_CSV
    if not results_path.exists():
        raise PipelineError(f"report: missing input {results_path}; run the analyze stage first")
    results = read_results_csv(results_path)
    report = StageReport("report")

    matrix = render_matrix(results, config.flip_rendering)
    (out / "matrix.txt").write_text(matrix.to_text(), encoding="utf-8")
    matrix.write_csv(out / "matrix.csv")
    report.outputs = [str(out / "matrix.txt"), str(out / "matrix.csv")]

    fig_dir = out / "figures"
    if config.figures:
        fig_dir.mkdir(exist_ok=True)
        plot_matrix(matrix, fig_dir / "matrix.png")

    cache: dict[str, dict] = {}
    for row in results:
        if row["converged"] != "true":
            continue
        fit_id = f"{row['quality_id']}__{row['sust_id'].split(':')[0]}"
        if fit_id not in cache:
            if not (out / POSTERIORS_DIR / f"{fit_id}.csv").exists():
                continue
            cache.clear()
            cache[fit_id] = read_posterior(out, fit_id)
        data = posterior_plotdata(decision_samples(cache[fit_id], row["sust_id"]), config.plot_bins, config.hdi_mass)
        dest = write_plotdata(data, plotdata_path(out, row["quality_id"], row["sust_id"]))
        report.n_ok += 1
        if config.figures:
            plot_posterior(data, f"{row['sust_id']} on {row['quality_id']}", fig_dir / f"{dest.stem}.png")
    return report
