"""Command line entry point: ``gritnet {generate,run,report,gradcheck,stats}``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import kernels


def _cmd_generate(args) -> int:
    from .config import synthetic_spec_from_text
    from .synthetic import SyntheticSpec, generate_synthetic

    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            spec = synthetic_spec_from_text(fh.read())
    else:
        spec = SyntheticSpec()
    for attr, val in (
        ("student_count", args.students),
        ("seed", args.seed),
        ("order_signal_strength", args.order_signal),
        ("graduation_rate_target", args.graduation_rate),
        ("horizon_weeks", args.weeks),
    ):
        if val is not None:
            setattr(spec, attr, val)
    data = generate_synthetic(spec)
    if args.output == "-":
        sys.stdout.buffer.write(data)
    else:
        with open(args.output, "wb") as fh:
            fh.write(data)
    return 0


def _cmd_run(args) -> int:
    from .config import load_config
    from .experiment import report, run_experiment

    config = load_config(args.config)
    result = run_experiment(config, args.output_dir)
    print(report(result.output_dir))
    print(f"results written to {result.output_dir}")
    return 0


def _cmd_report(args) -> int:
    from .experiment import report

    print(report(args.results_dir))
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck

    results = run_gradcheck(args.trials, args.seed)
    worst = max(r.max_error for r in results)
    for r in results:
        block = max(r.errors, key=r.errors.get)
        print(f"seed {r.seed:4d}  max rel err {r.max_error:.3e}  ({block})")
    ok = worst <= args.tolerance
    print(f"{'PASS' if ok else 'FAIL'}: worst relative error {worst:.3e} (tolerance {args.tolerance:g})")
    return 0 if ok else 1


def _cmd_stats(args) -> int:
    from .events import dataset_stats, filter_pre_enrollment, parse_event_log

    with open(args.input, "rb") as fh:
        records, vocab = parse_event_log(fh, deadline=args.deadline)
    st = dataset_stats([filter_pre_enrollment(r) for r in records])
    for k, v in st.__dict__.items():
        print(f"{k:>16}: {v}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gritnet", description=__doc__)
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic JSONL event log")
    g.add_argument("--spec", help="generator spec file (flat key = value)")
    g.add_argument("--output", default="-", help="output path, '-' for stdout")
    g.add_argument("--students", type=int, help="override student_count")
    g.add_argument("--seed", type=int, help="override seed")
    g.add_argument("--order-signal", type=float, help="override order_signal_strength")
    g.add_argument("--graduation-rate", type=float, help="override graduation_rate_target")
    g.add_argument("--weeks", type=int, help="override horizon_weeks")
    g.set_defaults(func=_cmd_generate)

    r = sub.add_parser("run", help="cross-validate baseline and GritNet week by week")
    r.add_argument("--config", required=True, help="experiment config file")
    r.add_argument("--output-dir", help="override output_dir from the config")
    r.set_defaults(func=_cmd_run)

    rep = sub.add_parser("report", help="print mean AUC by week and write auc_by_week.csv")
    rep.add_argument("--results-dir", required=True)
    rep.set_defaults(func=_cmd_report)

    gc = sub.add_parser("gradcheck", help="finite-difference check of GritNet gradients")
    gc.add_argument("--trials", type=int, default=20)
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--tolerance", type=float, default=1e-5)
    gc.set_defaults(func=_cmd_gradcheck)

    st = sub.add_parser("stats", help="dataset statistics for a JSONL event log")
    st.add_argument("--input", required=True)
    st.add_argument("--deadline", type=int, help="graduation cutoff day (strict)")
    st.set_defaults(func=_cmd_stats)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    logging.getLogger(__name__).info("LSTM kernels: %s", kernels.backend())
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"gritnet {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
