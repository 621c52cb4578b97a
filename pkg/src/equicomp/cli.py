"""Command line interface: ``equicomp <subcommand> --spectrum FILE ...``.

Exit codes: 0 success, 2 validation error, 3 guard exceeded, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

from .befit import fit_bose
from .ensemble import (
    build_count_table,
    count_variants,
    exact_tail_count,
    full_energy_cap,
    log_count,
    sample_many,
)
from .errors import GuardExceeded, ValidationError
from .harness import (
    ExperimentConfig,
    Report,
    emit_report,
    report_to_csv,
    report_to_json,
    run_concentration,
    run_lemma2,
    run_saddle_scan,
    select_split,
)
from .partition import TailBoundParams, chernoff_tail_bound, partition_exact, partition_saddle
from .spectrum import as_fraction, budget_from_energy, load_spectrum, make_budget

EXIT_OK, EXIT_VALIDATION, EXIT_GUARD, EXIT_IO = 0, 2, 3, 4


def _ladder(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad ladder {text!r}") from exc


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spectrum", required=True, help="CSV (value,multiplicity) or JSON spectrum")
    common.add_argument("--quantum", default=None, help="energy grid unit, decimal or p/q (default 1)")
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--max-cells", type=int, default=10**6, help="table size guard")
    common.add_argument("-v", "--verbose", action="store_true")

    budget = argparse.ArgumentParser(add_help=False)
    budget.add_argument("--n", type=int, required=True, help="particle count N")
    budget.add_argument("--mean", required=True, help="mean energy M (E = M*N)")

    parser = argparse.ArgumentParser(prog="equicomp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("fit", parents=[common, budget], help="fit beta', nu'")
    sub.add_parser("count", parents=[common, budget], help="exact number of variants")

    p = sub.add_parser("sample", parents=[common, budget], help="uniform variant samples (CSV)")
    p.add_argument("--samples", type=int, default=10)

    p = sub.add_parser("tail", parents=[common, budget], help="exact tail count at one threshold")
    p.add_argument("--l", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=0.05, help="Delta = N^(3/4+eps) if no --delta")

    p = sub.add_parser("partition", parents=[common], help="exact vs saddle-point ln Z")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--ladder", type=_ladder, required=True)

    p = sub.add_parser("bound", parents=[common, budget], help="tail bound over a (c, Delta) grid")
    p.add_argument("--l", type=int, default=None)
    p.add_argument("--c-grid", type=_floats, default=None, help="tilts; default 5 points in (0, gap)")
    p.add_argument("--delta-grid", type=_floats, default=None, help="default 5 points in [1, N/2]")
    p.add_argument("--unrefined", action="store_true", help="use the unrefined closed form")

    for name, help_text in (("concentration", "tail fraction along an N ladder"),
                            ("lemma2", "constrained Boltzmann average along an N ladder")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--mean", required=True)
        p.add_argument("--ladder", type=_ladder, default=(20, 40, 80))
        p.add_argument("--epsilon", type=float, default=0.05)
        p.add_argument("--l", type=int, default=None)
        p.add_argument("--samples", type=int, default=1000)
        p.add_argument("--mode", choices=("exact", "mc", "both"), default="exact")
        p.add_argument("--delta", type=float, default=None, help="override Delta")
        p.add_argument("--replicate", action="store_true", help="scale multiplicities with N")

    p = sub.add_parser("saddle-scan", parents=[common], help="saddle-point error along a ladder")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--ladder", type=_ladder, required=True)
    return parser


def _write(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _emit(report: Report, args) -> None:
    if args.out is None:
        sys.stdout.write(report_to_json(report) if args.format == "json" else report_to_csv(report))
    else:
        emit_report(report, args.out, args.format)


def _emit_json(payload: dict, args) -> None:
    _write(json.dumps(payload, sort_keys=True, indent=2) + "\n", args.out)


def _setup(args):
    spectrum = load_spectrum(args.spectrum, args.quantum)
    budget = None
    if getattr(args, "n", None) is not None and getattr(args, "mean", None) is not None \
            and args.command not in ("concentration", "lemma2"):
        budget = make_budget(spectrum, args.n, args.mean)
    return spectrum, budget


def _cmd_fit(args):
    spectrum, budget = _setup(args)
    _emit_json(fit_bose(spectrum, budget).to_json(), args)


def _cmd_count(args):
    spectrum, budget = _setup(args)
    table = build_count_table(spectrum, budget, max_cells=args.max_cells)
    _emit_json({"N": budget.n, "E": str(budget.energy), "total_count": count_variants(table)}, args)


def _cmd_sample(args):
    spectrum, budget = _setup(args)
    table = build_count_table(spectrum, budget, max_cells=args.max_cells)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"n_{i + 1}" for i in range(spectrum.s)] + ["energy"])
    for occ in sample_many(table, args.samples, args.seed):
        writer.writerow(list(occ.counts) + [str(occ.energy)])
    _write(buf.getvalue(), args.out)


def _cmd_tail(args):
    spectrum, budget = _setup(args)
    fit = fit_bose(spectrum, budget)
    l = args.l if args.l is not None else select_split(spectrum)
    delta = args.delta if args.delta is not None else budget.n ** (0.75 + args.epsilon)
    table = build_count_table(spectrum, budget, max_cells=args.max_cells)
    total = count_variants(table)
    tail = exact_tail_count(table, fit, l, delta)
    _emit_json({
        "l": l, "delta": float(f"{delta:.12g}"), "tail_count": tail, "total_count": total,
        "fraction": float(f"{tail / total:.12g}") if total else None,
    }, args)


def _cmd_partition(args):
    report = run_saddle_scan(load_spectrum(args.spectrum, args.quantum), args.beta, args.ladder,
                             max_cells=args.max_cells)
    report.kind = "partition"
    report.columns = ["N", "lnZ_exact", "lnZ_saddle", "rel_err"]
    _emit(report, args)


def _cmd_bound(args):
    spectrum, budget = _setup(args)
    fit = fit_bose(spectrum, budget)
    n, energy = budget.n, float(budget.energy)
    l = args.l if args.l is not None else select_split(spectrum)
    gap = fit.beta * spectrum.x[0] - fit.nu
    cs = args.c_grid or [gap * f for f in (0.05, 0.2, 0.4, 0.6, 0.8)]
    deltas = args.delta_grid or [1 + (n / 2 - 1) * k / 4 for k in range(5)]
    table = build_count_table(spectrum, budget, max_cells=args.max_cells)
    rows = []
    for delta in deltas:
        ln_exact = log_count(exact_tail_count(table, fit, l, delta))
        for c in cs:
            lnb = chernoff_tail_bound(spectrum, fit, TailBoundParams(c, delta, l), n, energy,
                                      rigorous=not args.unrefined)
            rows.append({"c": c, "delta": delta, "log_bound": lnb, "log_exact_count": ln_exact,
                         "holds": lnb >= ln_exact})
    report = Report("bound", ["c", "delta", "log_bound", "log_exact_count", "holds"], rows,
                    {"l": l, "beta": fit.beta, "nu": fit.nu, "N": n, "E": energy})
    _emit(report, args)


def _experiment_config(args) -> ExperimentConfig:
    return ExperimentConfig(
        epsilon=args.epsilon, n_ladder=args.ladder, num_samples=args.samples, seed=args.seed,
        mode=args.mode, l=args.l, delta_override=args.delta, replicate=args.replicate,
        max_cells=args.max_cells,
    )


def _cmd_concentration(args):
    spectrum = load_spectrum(args.spectrum, args.quantum)
    _emit(run_concentration(spectrum, as_fraction(args.mean), _experiment_config(args)), args)


def _cmd_lemma2(args):
    spectrum = load_spectrum(args.spectrum, args.quantum)
    _emit(run_lemma2(spectrum, as_fraction(args.mean), _experiment_config(args)), args)


def _cmd_saddle_scan(args):
    spectrum = load_spectrum(args.spectrum, args.quantum)
    _emit(run_saddle_scan(spectrum, args.beta, args.ladder, max_cells=args.max_cells), args)


COMMANDS = {
    "fit": _cmd_fit, "count": _cmd_count, "sample": _cmd_sample, "tail": _cmd_tail,
    "partition": _cmd_partition, "bound": _cmd_bound, "concentration": _cmd_concentration,
    "lemma2": _cmd_lemma2, "saddle-scan": _cmd_saddle_scan,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except GuardExceeded as exc:
        print(f"equicomp: guard exceeded: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except ValidationError as exc:
        print(f"equicomp: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"equicomp: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
