"""Figure specification files: flat key = value documents."""

from __future__ import annotations

from dataclasses import dataclass


class SpecError(ValueError):
    """Malformed figure specification."""


SCALES = ("linear", "db", "log")

_KEYS = {"csv", "x", "y", "group", "scale", "out", "title", "x_label",
         "y_label", "aggregate"}


@dataclass(frozen=True)
class FigureSpec:
    """What to plot: one line per group value, median over trials."""

    csv: str
    x: str
    y: str
    out: str
    group: str | None = None
    scale: str = "linear"
    title: str = ""
    x_label: str = ""
    y_label: str = ""
    aggregate: str = "median"

    def __post_init__(self):
        if self.scale not in SCALES:
            raise SpecError(f"scale must be one of {SCALES}, got {self.scale!r}")
        if self.aggregate not in ("median", "mean"):
            raise SpecError("aggregate must be 'median' or 'mean'")


def parse_spec_text(text, source="<spec>") -> FigureSpec:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"{source}:{lineno}: expected key = value")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _KEYS:
            raise SpecError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = val.strip()
    for required in ("csv", "x", "y", "out"):
        if required not in values:
            raise SpecError(f"{source}: missing required key {required!r}")
    return FigureSpec(**values)


def read_spec(path) -> FigureSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_spec_text(fh.read(), source=str(path))
