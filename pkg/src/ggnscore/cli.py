"""Command-line entry point for the experiment protocols."""

import argparse
import json
import sys

from . import experiment as exp


def _add_common(p):
    p.add_argument("--config", help="JSON config file; omit for the desk defaults")
    p.add_argument("--seed", type=int, help="run seed (overrides the config)")
    p.add_argument("--out-dir", help="output directory for CSV logs")
    p.add_argument("--diag-every", type=int, help="dynamics-monitor cadence (0 = off)")


def _add_grid(p):
    p.add_argument("--full-grid", action="store_true",
                   help="run the full 41-point grid instead of the desk grid")
    p.add_argument("--log-grid", dest="log_grid", action="store_true", default=None,
                   help="log-spaced grid")
    p.add_argument("--linear-grid", dest="log_grid", action="store_false",
                   help="linearly spaced grid")
    p.add_argument("--workers", type=int, default=1, help="sweep worker processes")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ggnscore",
        description="Gauss-Newton training with self-concordant regularization")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single training run")
    _add_common(p)
    p.add_argument("--method", choices=["ggn-score", "gd"], help="override the method")

    p = sub.add_parser("sweep-mu", help="smoothing-parameter sweep")
    _add_common(p)
    _add_grid(p)

    p = sub.add_parser("sweep-tau", help="regularization-strength sweep")
    _add_common(p)
    _add_grid(p)

    p = sub.add_parser("compare-gd", help="GD vs GGN-SCORE from identical inits")
    _add_common(p)

    p = sub.add_parser("mnist", help="MNIST run (needs DATA_DIR or --data-dir)")
    _add_common(p)
    p.add_argument("--data-dir", help="directory holding the IDX files")
    p.add_argument("--subset-train", type=int, default=5000)
    p.add_argument("--method", choices=["ggn-score", "gd"], help="override the method")

    p = sub.add_parser("mnist-ts", help="MNIST teacher-student run")
    _add_common(p)
    p.add_argument("--data-dir", help="directory holding the IDX files")

    p = sub.add_parser("uci", help="UCI comparison run")
    _add_common(p)
    p.add_argument("--name", required=True, choices=sorted(exp.UCI_SETTINGS))
    p.add_argument("--data-dir", required=True,
                   help="directory with <name>_train.csv and <name>_test.csv")
    p.add_argument("--method", choices=["ggn-score", "gd"], help="override the method")
    return parser


def _config_for(args, default_factory):
    if args.config:
        config = exp.ExperimentConfig.load(args.config)
    else:
        config = default_factory()
    if args.seed is not None:
        config.seeds = [args.seed]
    if args.out_dir is not None:
        config.out_dir = args.out_dir
    if args.diag_every is not None:
        config.diag_every = args.diag_every
    if getattr(args, "method", None):
        config.method = args.method
    return config


def main(argv=None):
    args = build_parser().parse_args(argv)

    if args.command == "run":
        config = _config_for(args, exp.ExperimentConfig)
        log = run_and_report(config)
        return 0 if log else 1

    if args.command in ("sweep-mu", "sweep-tau"):
        config = _config_for(args, exp.desk_sweep_config)
        fn = exp.sweep_mu if args.command == "sweep-mu" else exp.sweep_tau
        rows = fn(config, out_dir=config.out_dir, full_grid=args.full_grid,
                  log_grid=args.log_grid, workers=args.workers)
        print(f"{len(rows)} grid rows written under {config.out_dir}")
        return 0

    if args.command == "compare-gd":
        config = _config_for(args, exp.desk_compare_config)
        log_ggn, log_gd = exp.compare_gd(config, out_dir=config.out_dir)
        print(json.dumps({
            "ggn_final_train_loss": log_ggn.summary["final_train_loss"],
            "gd_final_train_loss": log_gd.summary["final_train_loss"],
            "ggn_total_step_s": log_ggn.summary["total_step_s"],
            "gd_total_step_s": log_gd.summary["total_step_s"],
        }, indent=2))
        return 0

    if args.command == "mnist":
        config = _config_for(args, lambda: exp.mnist_config(
            dataset={"kind": "mnist", "subset_train": args.subset_train,
                     "path": args.data_dir}))
        log = run_and_report(config)
        return 0 if log else 1

    if args.command == "mnist-ts":
        config = _config_for(args, lambda: exp.mnist_ts_config(
            dataset={"kind": "mnist_ts", "n_star": 16, "seed": 0,
                     "path": args.data_dir}))
        log = run_and_report(config)
        return 0 if log else 1

    if args.command == "uci":
        config = _config_for(args, lambda: exp.uci_config(args.name, args.data_dir))
        log = run_and_report(config)
        return 0 if log else 1

    return 1


def run_and_report(config):
    log = exp.run(config)
    printable = {k: v for k, v in log.summary.items()}
    print(json.dumps(printable, indent=2, default=str))
    return log


if __name__ == "__main__":
    sys.exit(main())
