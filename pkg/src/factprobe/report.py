"""Render aggregates as markdown tables and CSV files.

Table layout follows the published convention: verbalization rows by
language columns, the R@n block before the Mean Rank block. Markdown is
emitted compactly (no column padding) so that removing a row never
changes the bytes of the remaining rows.
"""

from __future__ import annotations

import csv
import io
from typing import Mapping, Sequence

from .metrics import (
    AggregateCell,
    GenderRateCell,
    InflectionDeltaCell,
    QECorrelationCell,
    RankHistogram,
)

SOURCE_LABELS = {"TEMPLATE": "Template", "MT": "MT", "LLM": "LLM"}

NOT_AVAILABLE = "n/a"


def format_stripped(value: float, decimals: int) -> str:
    """Round to ``decimals`` places, then strip trailing zeros and the dot."""
    text = f"{value:.{decimals}f}"
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    if text in ("-0", ""):
        text = "0"
    return text


def format_fixed(value: float, decimals: int) -> str:
    return f"{value:.{decimals}f}"


def render_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(headers) + " |"]
    lines.append("|" + "|".join("---" for _ in headers) + "|")
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def source_label(source: str) -> str:
    return SOURCE_LABELS.get(source, source)


def render_main_table(
    cells: Mapping[tuple[str, str], AggregateCell],
    languages: Sequence[str],
    sources: Sequence[str],
    n: int = 1,
) -> str:
    """R@n block then Mean Rank block, one row per verbalization source."""
    headers = ["Verbalization"]
    headers.extend(f"R@{n} {lang}" for lang in languages)
    headers.extend(f"Mean Rank {lang}" for lang in languages)
    rows = []
    for source in sources:
        row = [source_label(source)]
        for lang in languages:
            cell = cells.get((lang, source))
            row.append(
                format_stripped(cell.r_at_n[n], 3) if cell and n in cell.r_at_n
                else NOT_AVAILABLE
            )
        for lang in languages:
            cell = cells.get((lang, source))
            row.append(format_stripped(cell.mean_rank, 2) if cell else NOT_AVAILABLE)
        rows.append(row)
    return render_table(headers, rows)


def render_delta_table(
    cells: Mapping[tuple[str, str], InflectionDeltaCell],
    languages: Sequence[str],
    sources: Sequence[str],
) -> str:
    """Average inflected-vs-non-inflected rank delta, two decimals."""
    headers = ["Verbalization"] + list(languages)
    rows = []
    for source in sources:
        row = [source_label(source)]
        for lang in languages:
            cell = cells.get((lang, source))
            row.append(format_fixed(cell.mean_delta, 2) if cell else NOT_AVAILABLE)
        rows.append(row)
    return render_table(headers, rows)


def render_qe_table(
    cells: Mapping[tuple[str, str], QECorrelationCell],
    languages: Sequence[str],
    sources: Sequence[str],
) -> str:
    """QE delta rows then correlation rows; significant r gets an asterisk."""
    headers = ["Metric", "Verbalization"] + list(languages)
    rows = []
    for source in sources:
        row = ["Delta QE", source_label(source)]
        for lang in languages:
            cell = cells.get((lang, source))
            row.append(format_stripped(cell.delta_qe, 3) if cell else NOT_AVAILABLE)
        rows.append(row)
    for source in sources:
        row = ["r", source_label(source)]
        for lang in languages:
            cell = cells.get((lang, source))
            if cell is None or cell.r is None:
                row.append(NOT_AVAILABLE)
            else:
                mark = "*" if cell.significant else ""
                row.append(format_stripped(cell.r, 3) + mark)
        rows.append(row)
    return render_table(headers, rows)


def render_gender_table(
    rate_cells: Mapping[tuple[str, str], GenderRateCell],
    subset_cells: Mapping[tuple[str, str], AggregateCell],
    languages: Sequence[str],
    sources: Sequence[str],
) -> str:
    """Feminine-form percentage and female-subset R@1 per language."""
    headers = ["Verbalization"]
    for lang in languages:
        headers.append(f"%(F) {lang}")
        headers.append(f"R@1(F) {lang}")
    rows = []
    for source in sources:
        row = [source_label(source)]
        for lang in languages:
            rate = rate_cells.get((lang, source))
            if rate is None or rate.rate is None:
                row.append(NOT_AVAILABLE)
            else:
                row.append(format_fixed(rate.rate * 100.0, 1))
            cell = subset_cells.get((lang, source))
            row.append(
                format_stripped(cell.r_at_n[1], 3) if cell and 1 in cell.r_at_n
                else NOT_AVAILABLE
            )
        rows.append(row)
    return render_table(headers, rows)


def cells_csv(cells: Mapping[tuple[str, str], AggregateCell], n_values) -> str:
    """Machine-readable dump of every aggregate cell."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    header = ["language", "source"]
    header.extend(f"r_at_{n}" for n in n_values)
    header.extend(["mean_rank", "count"])
    writer.writerow(header)
    for (lang, source), cell in sorted(cells.items()):
        row = [lang, source]
        row.extend(repr(cell.r_at_n[n]) for n in n_values)
        row.append(repr(cell.mean_rank))
        row.append(cell.count)
        writer.writerow(row)
    return out.getvalue()


def curves_csv(cells: Mapping[tuple[str, str], AggregateCell], n_values) -> str:
    """R@n against n, one row per (language, source, n) point."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["language", "source", "n", "recall"])
    for (lang, source), cell in sorted(cells.items()):
        for n in n_values:
            writer.writerow([lang, source, n, repr(cell.r_at_n[n])])
    return out.getvalue()


def histogram_csv(histograms: Mapping[tuple[str, str], RankHistogram]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["language", "source", "bucket", "count"])
    for (lang, source), hist in sorted(histograms.items()):
        for bucket in sorted(hist.counts):
            writer.writerow([lang, source, bucket, hist.counts[bucket]])
        writer.writerow([lang, source, "overflow", hist.overflow])
    return out.getvalue()


def quartiles_csv(histograms: Mapping[tuple[str, str], RankHistogram]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["language", "source", "q1", "median", "q3"])
    for (lang, source), hist in sorted(histograms.items()):
        writer.writerow([lang, source, hist.q1, hist.median, hist.q3])
    return out.getvalue()


def qe_csv(cells: Mapping[tuple[str, str], QECorrelationCell]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(
        ["language", "source", "delta_qe", "delta_r1", "r", "p", "significant",
         "n_relations", "note"]
    )
    for (lang, source), cell in sorted(cells.items()):
        writer.writerow(
            [
                lang,
                source,
                repr(cell.delta_qe),
                repr(cell.delta_r1),
                "" if cell.r is None else repr(cell.r),
                "" if cell.p is None else repr(cell.p),
                int(cell.significant),
                cell.n_relations,
                cell.note or "",
            ]
        )
    return out.getvalue()
