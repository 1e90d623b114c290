"""Command-line figure rendering: ggnscore-plot --kind ... --in ... --out ..."""

import argparse

from .plots import KINDS, PlotSpec, render


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ggnscore-plot",
        description="Render figures from ggnscore experiment CSV logs")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        metavar="CSV", help="input CSV files")
    parser.add_argument("--out", required=True, help="output PNG path")
    parser.add_argument("--linear-y", action="store_true",
                        help="linear instead of log loss axis")
    parser.add_argument("--log-x", action="store_true")
    parser.add_argument("--title", default="")
    parser.add_argument("--bar-columns", nargs="+",
                        default=["final_accuracy", "ti_plain", "ti_incl_zeros"])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    spec = PlotSpec(inputs=args.inputs, kind=args.kind, out_path=args.out,
                    log_y=not args.linear_y, log_x=args.log_x,
                    title=args.title, bar_columns=args.bar_columns)
    render(spec)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
