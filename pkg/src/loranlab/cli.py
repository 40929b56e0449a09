"""Command-line entry point: one subcommand per experiment.

Exit codes: 0 success; 2 configuration error (bad file, bad key, bad
value); 3 completed with diverged runs recorded in the outputs; 1 failed
check or internal error.  Every subcommand writes JSON and CSV reports
plus a PNG rendering into --out, and with --no-timestamp identical
config+seeds reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import figures, reporting
from .activations import ActivationSpec, sinter
from .adapters import AdapterError
from .config import ConfigError, default_config, load_config
from .experiments import (
    ablation_study,
    compare_study,
    grid_search,
    rank_study,
    run_matrix,
    spectrum_study,
)
from .gradcheck import SCOPES, run_suite
from .training import RunReport, variance_report

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as err:
        raise ConfigError(f"--seeds must be comma-separated integers: {err}") from err


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="path to the experiment JSON")
    sub.add_argument("--out", default="out", help="output directory (created)")
    sub.add_argument("--seeds", default=None, help="comma-separated seed override")
    sub.add_argument("--jobs", type=int, default=1, help="parallel runs (1 = serial)")
    sub.add_argument(
        "--no-timestamp",
        action="store_true",
        help="omit timestamps and wall-clock fields for bitwise-reproducible outputs",
    )
    sub.add_argument("--activation", default=None, help="override the adapter activation kind")
    sub.add_argument("--amplitude", type=float, default=None, help="sinter amplitude override")
    sub.add_argument("--omega", type=float, default=None, help="sinter angular frequency override")
    sub.add_argument("--beta", type=float, default=None, help="swish sharpness override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loranlab",
        description="Desk-scale laboratory for low-rank adapters with nonlinear update maps.",
    )
    parser.add_argument(
        "--print-defaults",
        choices=["teacher", "blobs"],
        default=None,
        help="print a fully-expanded default config and exit",
    )
    sub = parser.add_subparsers(dest="command")

    grad = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    grad.add_argument("--scope", choices=SCOPES, default="all")
    grad.add_argument("--seed", type=int, default=2024)

    for name, helptext in [
        ("train", "train one configuration over the seed list"),
        ("compare", "low-rank baseline vs nonlinear adapter with a delta column"),
        ("ablate", "activation ablation table (seven rows)"),
        ("grid", "amplitude x omega grid search"),
        ("spectrum", "singular spectra of linear, nonlinear and dense updates"),
        ("rank-study", "baseline-vs-nonlinear comparison at each configured rank"),
    ]:
        _add_common(sub.add_parser(name, help=helptext))
    return parser


def _resolved_config(args):
    cfg = load_config(args.config)
    if args.seeds is not None:
        seeds = _parse_seeds(args.seeds)
        if not seeds:
            raise ConfigError("--seeds override must name at least one seed")
        cfg = replace(cfg, seeds=tuple(seeds))
    if args.activation is not None or any(
        v is not None for v in (args.amplitude, args.omega, args.beta)
    ):
        base = cfg.adapter.activation.to_config()
        if args.activation is not None:
            base = {"kind": args.activation}
            if args.activation == "sinter":
                base.update({"amplitude": 5e-5, "omega": 1e4})
            if args.activation == "swish":
                base["beta"] = 1.0
        for key, value in (("amplitude", args.amplitude), ("omega", args.omega),
                           ("beta", args.beta)):
            if value is not None:
                base[key] = value
        try:
            spec = ActivationSpec.from_config(base)
        except ValueError as err:
            raise ConfigError(f"activation override: {err}") from err
        cfg = replace(cfg, adapter=replace(cfg.adapter, kind="loran", activation=spec))
    return cfg


def _exit_code(reports: list[RunReport]) -> int:
    return EXIT_DIVERGED if any(r.diverged for r in reports) else EXIT_OK


def _maybe_variance(groups: dict[str, list[RunReport]]) -> dict:
    """Variance summary when every group has >= 2 finished runs; else note why."""
    try:
        return variance_report(groups)
    except ValueError as err:
        return {"unavailable": str(err)}


def cmd_gradcheck(args) -> int:
    results = run_suite(scope=args.scope, seed=args.seed)
    worst = max(results, key=lambda r: r.max_rel_err)
    for res in results:
        print(f"{'PASS' if res.passed else 'FAIL'}  {res.name:42s} max rel err {res.max_rel_err:.3e}")
    print(f"worst: {worst.name} ({worst.max_rel_err:.3e}, threshold {worst.threshold:g})")
    return EXIT_OK if all(r.passed for r in results) else EXIT_INTERNAL


def cmd_train(args) -> int:
    cfg = _resolved_config(args)
    out = reporting.ensure_dir(args.out)
    stamp = not args.no_timestamp
    reports = run_matrix([cfg], list(cfg.seeds), jobs=args.jobs)[0]
    reporting.write_run_reports(out, [(cfg.name, r) for r in reports], stamp)
    reporting.write_csv(out / "train.csv", reporting.RUN_CSV_HEADER, reporting.run_rows(cfg.name, reports))
    reporting.write_csv(out / "losses.csv", reporting.LOSS_CSV_HEADER, reporting.loss_rows(cfg.name, reports))
    payload = {
        "command": "train",
        "config": cfg.to_dict(),
        "results": [reporting.report_payload(r, stamp) for r in reports],
        "variance": _maybe_variance({cfg.name: reports}),
    }
    reporting.write_json(out / "train.json", payload, stamp)
    figures.save_loss_curves(out / "train.png", [(cfg.name, reports)])
    return _exit_code(reports)


def cmd_compare(args) -> int:
    cfg = _resolved_config(args)
    out = reporting.ensure_dir(args.out)
    stamp = not args.no_timestamp
    result = compare_study(cfg, jobs=args.jobs)
    tagged = [("baseline", result.baseline), ("loran", result.loran)]
    reporting.write_run_reports(out, [(t, r) for t, rs in tagged for r in rs], stamp)
    rows = []
    for tag, reports in tagged:
        rows.extend(reporting.run_rows(tag, reports))
    reporting.write_csv(out / "compare.csv", reporting.RUN_CSV_HEADER, rows)
    reporting.write_csv(
        out / "compare_table.csv",
        ["metric", "baseline", "loran", "delta"],
        [[result.metric_name, result.baseline_mean, result.loran_mean, result.delta]],
    )
    payload = {
        "command": "compare",
        "config": cfg.to_dict(),
        "metric_name": result.metric_name,
        "baseline_mean": result.baseline_mean,
        "loran_mean": result.loran_mean,
        "delta": result.delta,
        "variance": _maybe_variance(dict(tagged)),
        "results": {
            tag: [reporting.report_payload(r, stamp) for r in reports]
            for tag, reports in tagged
        },
    }
    reporting.write_json(out / "compare.json", payload, stamp)
    figures.save_metric_bars(
        out / "compare.png",
        ["baseline", "loran"],
        [result.baseline_mean, result.loran_mean],
        result.metric_name,
    )
    return _exit_code(result.baseline + result.loran)


def cmd_ablate(args) -> int:
    cfg = _resolved_config(args)
    out = reporting.ensure_dir(args.out)
    stamp = not args.no_timestamp
    rows_by_activation = ablation_study(cfg, jobs=args.jobs)
    all_reports = [r for _, reports in rows_by_activation for r in reports]
    reporting.write_run_reports(
        out, [(label, r) for label, reports in rows_by_activation for r in reports], stamp
    )
    csv_rows = []
    table_rows = []
    for label, reports in rows_by_activation:
        csv_rows.extend(reporting.run_rows(label, reports))
        finished = [r.final_metric for r in reports if not r.diverged]
        mean = sum(finished) / len(finished) if finished else None
        table_rows.append([label, mean, len(finished), len(reports) - len(finished)])
    reporting.write_csv(out / "ablate.csv", reporting.RUN_CSV_HEADER, csv_rows)
    reporting.write_csv(
        out / "ablate_table.csv",
        ["activation", "mean_metric", "n_finished", "n_diverged"],
        table_rows,
    )
    payload = {
        "command": "ablate",
        "config": cfg.to_dict(),
        "metric_name": all_reports[0].metric_name,
        "table": [
            {"activation": row[0], "mean_metric": row[1], "n_finished": row[2], "n_diverged": row[3]}
            for row in table_rows
        ],
    }
    reporting.write_json(out / "ablate.json", payload, stamp)
    figures.save_metric_bars(
        out / "ablate.png",
        [row[0] for row in table_rows],
        [float("nan") if row[1] is None else row[1] for row in table_rows],
        all_reports[0].metric_name,
    )
    spec = cfg.adapter.activation
    amp, omega = (spec.amplitude, spec.omega) if spec.kind == "sinter" else (5e-5, 1e4)
    half_period = 3.141592653589793 / omega
    figures.save_activation_curves(
        out / "ablate_activations.png",
        [sinter(amp, omega), sinter(0.5, 5e3)],
        lo=-8 * half_period,
        hi=8 * half_period,
    )
    return _exit_code(all_reports)


def cmd_grid(args) -> int:
    cfg = _resolved_config(args)
    out = reporting.ensure_dir(args.out)
    stamp = not args.no_timestamp
    result = grid_search(
        list(cfg.grid.amplitudes), list(cfg.grid.omegas), cfg, list(cfg.seeds), jobs=args.jobs
    )
    rows = []
    flat_reports = []
    for ai, amplitude in enumerate(result.amplitudes):
        for wi, omega in enumerate(result.omegas):
            for report in result.reports[ai][wi]:
                rows.append(
                    [amplitude, omega, report.seed, report.final_metric, report.diverged]
                )
                flat_reports.append(report)
    reporting.write_csv(
        out / "grid.csv",
        ["amplitude", "omega", "seed", "final_metric", "diverged"],
        rows,
    )
    reporting.write_json(out / "grid.json", {"command": "grid", "config": cfg.to_dict(), **result.to_dict()}, stamp)
    figures.save_grid_heatmap(
        out / "grid.png",
        result.amplitudes,
        result.omegas,
        result.metric,
        result.metric_name,
        result.best,
    )
    return _exit_code(flat_reports)


def cmd_spectrum(args) -> int:
    cfg = _resolved_config(args)
    out = reporting.ensure_dir(args.out)
    stamp = not args.no_timestamp
    study = spectrum_study(cfg)
    value_rows = []
    hist_rows = []
    for rep in study.reports:
        for i, v in enumerate(rep.values):
            value_rows.append([rep.name, i, float(v)])
        edges = list(rep.edges)
        bounds = [(None, edges[0])] + list(zip(edges[:-1], edges[1:])) + [(edges[-1], None)]
        for (lo, hi), count in zip(bounds, rep.counts):
            hist_rows.append([rep.name, lo, hi, int(count)])
    reporting.write_csv(out / "spectrum_values.csv", ["source", "index", "sigma"], value_rows)
    reporting.write_csv(out / "spectrum_hist.csv", ["source", "bin_lo", "bin_hi", "count"], hist_rows)
    payload = {
        "command": "spectrum",
        "config": cfg.to_dict(),
        "summary": study.summary,
        "reports": [rep.to_dict() for rep in study.reports],
        "train_reports": {
            name: reporting.report_payload(r, stamp)
            for name, r in study.train_reports.items()
        },
    }
    reporting.write_json(out / "spectrum.json", payload, stamp)
    figures.save_spectrum_panels(out / "spectrum.png", study.reports)
    print(study.summary)
    return _exit_code(list(study.train_reports.values()))


def cmd_rank_study(args) -> int:
    cfg = _resolved_config(args)
    out = reporting.ensure_dir(args.out)
    stamp = not args.no_timestamp
    results = rank_study(cfg, list(cfg.ranks), jobs=args.jobs)
    table_rows = []
    all_reports = []
    for rank, comparison in results:
        table_rows.append(
            [rank, comparison.metric_name, comparison.baseline_mean, comparison.loran_mean, comparison.delta]
        )
        all_reports.extend(comparison.baseline + comparison.loran)
    reporting.write_csv(
        out / "rank_study.csv",
        ["rank", "metric", "baseline", "loran", "delta"],
        table_rows,
    )
    payload = {
        "command": "rank-study",
        "config": cfg.to_dict(),
        "table": [
            {"rank": row[0], "metric": row[1], "baseline": row[2], "loran": row[3], "delta": row[4]}
            for row in table_rows
        ],
    }
    reporting.write_json(out / "rank_study.json", payload, stamp)
    figures.save_rank_bars(
        out / "rank_study.png",
        [row[0] for row in table_rows],
        [row[2] for row in table_rows],
        [row[3] for row in table_rows],
        results[0][1].metric_name,
    )
    return _exit_code(all_reports)


_COMMANDS = {
    "gradcheck": cmd_gradcheck,
    "train": cmd_train,
    "compare": cmd_compare,
    "ablate": cmd_ablate,
    "grid": cmd_grid,
    "spectrum": cmd_spectrum,
    "rank-study": cmd_rank_study,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults is not None:
        print(json.dumps(default_config(args.print_defaults), indent=2, sort_keys=True))
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, AdapterError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:  # pragma: no cover - defensive
        print(f"internal error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
