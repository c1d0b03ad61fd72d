"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from dogbo.bo import BoConfig, run_bo
from dogbo.errors import DogBoError, NumericalFailure
from dogbo.harness import report as rep
from dogbo.harness.campaign import (
    CampaignConfig,
    cost_kind,
    evaluation_model,
    history_rows,
    kernel_name,
    load_profile,
    make_objective,
    pilot_variance,
    run_campaign,
)
from dogbo.harness.correlate import phi_cost_pairs
from dogbo.tablegen import (
    SHORT_SIM_SECONDS,
    TABLE_TARGET_SPEED,
    SearchBounds,
    build_table,
    load_table,
    sample_grid,
    save_table,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
log = logging.getLogger("dogbo")


def _bounds(path: str | None) -> SearchBounds:
    if path is None:
        return SearchBounds.default()
    return SearchBounds.from_text(Path(path).read_text())


def cmd_tablegen(args) -> int:
    bounds = _bounds(args.bounds)
    grid = sample_grid(bounds, args.n, args.seed, args.scheme)
    table = build_table(grid, bounds, short_sim_duration=args.sim_seconds,
                        target_speed=args.target_speed, seed=args.seed, scheme=args.scheme,
                        workers=args.workers)
    save_table(table, args.out)
    walked = int((table.time_fraction >= 1.0).sum())
    print(f"wrote {len(table)} rows to {args.out} ({walked} survived the short sim)")
    return EXIT_OK


def cmd_optimize(args) -> int:
    table = load_table(args.table)
    kernel = kernel_name(args.kernel)
    profile = load_profile(args.profile)
    config = CampaignConfig(
        variant=table.bounds.variant, profile=profile, kernels=(kernel,), n_runs=1,
        trials_per_run=args.trials, seed=args.seed, perturbation=args.perturb,
        table_path=Path(args.table), cost_kind=cost_kind(args.cost), t_max=args.t_max,
        output_dir=None,
    )
    objective = make_objective(config, evaluation_model(config, 0), table.meta.short_sim_duration)
    bo_config = BoConfig(signal_variance=pilot_variance(config, table))
    history = run_bo(objective, table, kernel, args.trials, args.seed, config=bo_config)
    rows = history_rows(history, 0, kernel)
    text = rep.rows_to_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    first = history.trials_to_first_walk()
    print(f"best cost {history.best_cost!r}; first walk at trial {first}", file=sys.stderr)
    return EXIT_OK


def cmd_campaign(args) -> int:
    config = CampaignConfig.from_file(args.config)
    report = run_campaign(config)
    out = config.output_dir or Path(args.config).parent / "campaign_out"
    for fmt in ("csv", "json"):
        print(rep.emit_report(report, fmt, out))
    for name, s in rep.report_summary(report)["kernels"].items():
        print(f"{name:12s} success {s['success_rate_at_N']:.2f}  "
              f"median first walk {s['median_trials_to_first_walk']:.1f}")
    return EXIT_OK


def cmd_correlate(args) -> int:
    bounds = _bounds(args.bounds)
    profile = load_profile(args.profile)
    sample = phi_cost_pairs(args.n, args.seed, bounds, profile)
    Path(args.out).write_text(sample.to_csv(bounds.names))
    print(f"spearman(phi, cost) = {sample.spearman:.4f} over {args.n} controllers")
    return EXIT_OK


def cmd_report(args) -> int:
    rows = rep.read_rows(Path(args.inp) / rep.TRIALS_FILE)
    summary = rep.summarize(rows)
    text = rep.summary_to_json(summary) if args.format == "json" else rep.summary_to_csv(summary)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dogbo", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("tablegen", help="precompute a gait-score table")
    t.add_argument("--bounds", help="bounds file (default: built-in 9-D box)")
    t.add_argument("--n", type=int, required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--sim-seconds", type=float, default=SHORT_SIM_SECONDS)
    t.add_argument("--target-speed", type=float, default=TABLE_TARGET_SPEED)
    t.add_argument("--scheme", choices=("Sobol", "UniformRandom"), default="Sobol")
    t.add_argument("--workers", type=int, default=1)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_tablegen)

    o = sub.add_parser("optimize", help="one BO run on a perturbed model")
    o.add_argument("--table", required=True)
    o.add_argument("--kernel", choices=("se", "dog", "dog-adj"), required=True)
    o.add_argument("--trials", type=int, default=20)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--perturb", type=float, default=0.15)
    o.add_argument("--profile", default="speed-up-down", help="profile file or builtin name")
    o.add_argument("--cost", choices=("hw", "sim"), default="sim")
    o.add_argument("--t-max", type=float, default=30.0)
    o.add_argument("--out", help="trial CSV path (default: stdout)")
    o.set_defaults(func=cmd_optimize)

    c = sub.add_parser("campaign", help="run a campaign described by a config file")
    c.add_argument("--config", required=True)
    c.set_defaults(func=cmd_campaign)

    r = sub.add_parser("correlate", help="score/cost pairs for random controllers")
    r.add_argument("--n", type=int, required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--bounds")
    r.add_argument("--profile", default="easy")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_correlate)

    s = sub.add_parser("report", help="summarize a campaign output directory")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--format", choices=("csv", "json"), default="json")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalFailure as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (DogBoError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
