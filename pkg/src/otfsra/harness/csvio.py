"""CSV emission with the fixed harness schema."""

from __future__ import annotations

import csv
import io

CSV_COLUMNS = ("run_id", "preset", "seed", "trial", "sweep_name",
               "sweep_value", "algorithm", "der", "den", "nmse_db", "sinr_db",
               "iterations", "wall_ms", "macs")


def format_value(value):
    """Deterministic cell formatting: empty for None/NaN, %.10g floats."""
    if value is None:
        return ""
    if isinstance(value, float):
        if value != value:                      # NaN
            return ""
        return f"{value:.10g}"
    return str(value)


def rows_to_csv(rows) -> str:
    """Render rows (dicts) to CSV text, sorted for order-independence.

    Sorting ignores wall_ms so parallel execution cannot reorder output.
    """
    def key(row):
        return (row.get("trial", 0), str(row.get("sweep_name", "")),
                float(row.get("sweep_value", 0) or 0),
                str(row.get("algorithm", "")))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in sorted(rows, key=key):
        writer.writerow([format_value(row.get(col)) for col in CSV_COLUMNS])
    return buf.getvalue()


def write_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows))
