"""Command line interface: train runs, complexity tables, solution slices
and the self-check registry."""

import argparse
import os
import sys

from .complexity import crossover_csv, crossover_report


def _cmd_train(args) -> int:
    from .config import ConfigError, load_config, run_experiment

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError:
        print(f"error: config '{args.config}' not found", file=sys.stderr)
        return 2
    if args.engine is not None:
        cfg.engine = args.engine
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir
    try:
        out = run_experiment(cfg, workers=args.workers,
                             render_figures=not args.no_figures)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"final metric: {out['mean']:.6g} +/- {out['std']:.6g} "
          f"over {len(cfg.seeds)} seeds")
    print(f"artifacts in {cfg.output_dir}")
    return 0


def _cmd_complexity(args) -> int:
    rows = crossover_report(M=args.M, n_per_d=args.n_per_d, K=args.K,
                            n_r=args.n_r, n_e=args.n_e, d_max=args.d_max)
    sys.stdout.write(crossover_csv(rows))
    if args.figure is not None:
        from .figures import render_crossover

        render_crossover(args.figure, rows)
        print(f"figure written to {args.figure}", file=sys.stderr)
    return 0


def _cmd_slices(args) -> int:
    from .config import (
        ConfigError,
        compute_slices,
        load_checkpoint,
        write_slices_csv,
    )

    try:
        trial, problem, payload = load_checkpoint(args.checkpoint)
    except FileNotFoundError:
        print(f"error: checkpoint '{args.checkpoint}' not found",
              file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    fixed = None
    if args.fixed is not None:
        fixed = [float(v) for v in args.fixed.split(",")]
    try:
        rows = compute_slices(trial, problem, fixed, points=args.points)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = args.output
    if out is None:
        base = os.path.dirname(os.path.abspath(args.checkpoint))
        out = os.path.join(base, "slices.csv")
    write_slices_csv(out, rows)
    print(f"slices written to {out}")
    if not args.no_figure:
        from .figures import render_slices

        fig_path = os.path.splitext(out)[0] + ".png"
        render_slices(fig_path, rows, problem)
        print(f"figure written to {fig_path}")
    return 0


def _cmd_verify(args) -> int:
    from .config import default_workers
    from .verify import format_report, run_verify

    workers = args.workers if args.workers else default_workers()
    results = run_verify(args.level, workers=workers)
    print(format_report(results))
    return 0 if all(r.ok for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qpinn",
        description="Solve PDEs with random quantum networks simulated "
                    "classically; inspect the evaluation-cost calculus.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training config")
    p_train.add_argument("config", help="TOML run configuration")
    p_train.add_argument("--workers", type=int, default=None,
                         help="processes for seed parallelism "
                              "(default: QPINN_WORKERS or 1)")
    p_train.add_argument("--engine", choices=["fast", "shift"], default=None,
                         help="override the differentiation engine")
    p_train.add_argument("--output-dir", default=None,
                         help="override the config's output directory")
    p_train.add_argument("--no-figures", action="store_true",
                         help="skip figure rendering")
    p_train.set_defaults(fn=_cmd_train)

    p_cx = sub.add_parser("complexity",
                          help="evaluation-cost table across dimensions")
    p_cx.add_argument("--M", type=int, default=2, help="trainable layers")
    p_cx.add_argument("--n-per-d", dest="n_per_d", type=int, default=3,
                      help="qubits per input dimension")
    p_cx.add_argument("--K", type=int, default=1024,
                      help="Gaussian samples per smoothed expectation")
    p_cx.add_argument("--n-r", dest="n_r", type=int, default=64,
                      help="interior batch size")
    p_cx.add_argument("--n-e", dest="n_e", type=int, default=64,
                      help="boundary batch size")
    p_cx.add_argument("--d-max", dest="d_max", type=int, default=20,
                      help="largest dimension")
    p_cx.add_argument("--figure", default=None,
                      help="also render the comparison figure to this path")
    p_cx.set_defaults(fn=_cmd_complexity)

    p_sl = sub.add_parser("slices",
                          help="solution slices from a trained checkpoint")
    p_sl.add_argument("checkpoint", help="checkpoint JSON from a train run")
    p_sl.add_argument("--fixed", default=None,
                      help="comma-separated fixed values "
                           "(default 0,0.25,0.5,0.75,1)")
    p_sl.add_argument("--points", type=int, default=200,
                      help="points per slice")
    p_sl.add_argument("--output", default=None, help="CSV destination")
    p_sl.add_argument("--no-figure", action="store_true",
                      help="skip figure rendering")
    p_sl.set_defaults(fn=_cmd_slices)

    p_vf = sub.add_parser("verify", help="run the self-check registry")
    p_vf.add_argument("--level", choices=["fast", "full"], default="fast")
    p_vf.add_argument("--workers", type=int, default=None,
                      help="processes for the training checks")
    p_vf.set_defaults(fn=_cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
