"""figkit command line: render one or more figure spec files."""

from __future__ import annotations

import argparse
import sys

from .plot import plot
from .spec import SpecError, read_spec


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="figkit",
        description="Render otfs-ra CSV results into figures")
    parser.add_argument("specs", nargs="+", help="figure spec files")
    args = parser.parse_args(argv)

    status = 0
    for path in args.specs:
        try:
            result = plot(read_spec(path))
        except (SpecError, OSError) as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            status = 1
            continue
        print(f"{path} -> {result.path} ({len(result.series)} series)")
    return status


if __name__ == "__main__":
    sys.exit(main())
