"""Standalone renderer: `render --kind <k> --csv <rows.csv> --fit <fit.json>
--pred <prediction.json> --out <figure.png>`."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import KINDS, CrossCheckError, PlotRequest, SchemaError, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="render", description="render figures from experiment artifacts")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--csv", required=True, type=Path)
    parser.add_argument("--fit", type=Path)
    parser.add_argument("--pred", type=Path)
    parser.add_argument("--csv2", type=Path, help="second rows CSV (iid-vs-brw)")
    parser.add_argument("--fit2", type=Path, help="second fit JSON (iid-vs-brw)")
    parser.add_argument("--out", required=True, type=Path)
    args = parser.parse_args(argv)
    request = PlotRequest(kind=args.kind, csv_path=args.csv, out_path=args.out,
                          fit_path=args.fit, pred_path=args.pred,
                          csv2_path=args.csv2, fit2_path=args.fit2)
    try:
        out = render(request)
    except (SchemaError, OSError) as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 1
    except CrossCheckError as exc:
        print(f"cross-check error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
