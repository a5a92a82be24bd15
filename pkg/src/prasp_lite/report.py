"""``--report DIR``: query results as CSV plus one bar chart per query file."""

from __future__ import annotations

import csv
import re
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .query import QueryResult  # noqa: E402

CSV_FIELDS = ["source", "query", "condition", "kind", "value", "lower", "upper"]


def result_row(source: str, r: QueryResult) -> dict:
    lo = hi = value = ""
    if r.kind == "interval":
        lo, hi = r.values
        value = r.value
    elif r.kind in ("point", "list"):
        value = r.value
        lo, hi = min(r.values), max(r.values)
    return {
        "source": source,
        "query": r.text.rstrip("."),
        "condition": r.condition or "",
        "kind": r.kind,
        "value": value,
        "lower": lo,
        "upper": hi,
    }


def _slug(source: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", Path(source).name) or "queries"


def _label(r: QueryResult) -> str:
    text = r.text.rstrip(".")
    return text if r.condition is None else f"{text} | {r.condition}"


def bar_chart(path: Path, title: str, results: Sequence[QueryResult]) -> None:
    """Horizontal bars at each query's value; intervals get error bars."""
    labels = [_label(r) for r in results]
    values = [r.value if r.value is not None else 0.0 for r in results]
    lower = [v - (min(r.values) if r.kind != "unknown" else v) for v, r in zip(values, results)]
    upper = [(max(r.values) if r.kind != "unknown" else v) - v for v, r in zip(values, results)]
    height = max(2.0, 0.45 * len(results) + 1.2)
    fig, ax = plt.subplots(figsize=(8, height))
    ys = range(len(results))
    colors = ["#bbbbbb" if r.kind == "unknown" else "#4c72b0" for r in results]
    ax.barh(list(ys), values, xerr=[lower, upper], color=colors, capsize=3)
    ax.set_yticks(list(ys))
    ax.set_yticklabels(labels, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlim(0, 1)
    ax.set_xlabel("probability")
    ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def write_report(directory, groups: Sequence[tuple]) -> list:
    """Write ``results.csv`` and ``<query file>.png`` charts into ``directory``.

    ``groups`` holds ``(source name, [QueryResult])`` pairs.  Returns the
    written paths.
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out / "results.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for source, results in groups:
            for r in results:
                writer.writerow(result_row(source, r))
    written.append(csv_path)
    for k, (source, results) in enumerate(groups):
        if not results:
            continue
        png = out / f"{k + 1:02d}_{_slug(source)}.png"
        bar_chart(png, source, results)
        written.append(png)
    return written
