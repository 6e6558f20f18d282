"""Command-line entry point.

Exit codes: 0 success, 1 invalid input, 2 numerical or conditioning failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import mitigation, stats
from ..contexts import CONTEXTS
from ..errors import NumericalError, PipelineError, ValidationError
from . import io, report
from .config import ExperimentConfig, NoiseConfig, load_config
from .pipeline import analyze_counts, bin_scan, run_experiment

log = logging.getLogger("belldrift")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML experiment config; flags below override its keys")
    p.add_argument("--seed", type=int, required=True, help="root seed (mandatory)")
    p.add_argument("--shots-per-bin", type=int)
    p.add_argument("--num-bins", type=int)
    p.add_argument("--schedule", choices=["round_robin", "blocked"])
    p.add_argument("--drift-index-rule", choices=["per_bin", "per_slot"])
    p.add_argument("--null-trials", type=int)
    p.add_argument("--bootstrap", type=int)
    p.add_argument("--mitigation", action="store_true", default=None)
    p.add_argument("--calibration-shots", type=int)
    p.add_argument("--kappa-max", type=float)
    p.add_argument("--experiment-id")
    src = p.add_argument_group("source (used when no --config is given)")
    src.add_argument("--source", choices=["quantum", "lhv"])
    src.add_argument("--theta-max", type=float)
    src.add_argument("--axes", choices=["pauli", "chsh_optimal"])
    src.add_argument("--profile", choices=["constant", "linear_ramp"])
    src.add_argument("--p", type=float)
    src.add_argument("--p-lo", type=float)
    src.add_argument("--p-hi", type=float)
    src.add_argument("--depolarizing-rate", type=float)
    src.add_argument("--readout-flip", type=float, nargs=2, metavar=("EPS_A", "EPS_B"))


def _build_config(args) -> ExperimentConfig:
    data: dict = {}
    if args.config is not None:
        data = load_config(args.config).to_dict()
    if args.source is not None:
        if args.source == "quantum":
            data["source"] = {"type": "quantum", "theta_max": args.theta_max or 0.0, "axes": args.axes or "pauli"}
        else:
            data["source"] = {"type": "lhv", "profile": args.profile or "constant", "p": args.p,
                              "p_lo": args.p_lo, "p_hi": args.p_hi}
    elif "source" in data:
        src = data["source"]
        for key in ("theta_max", "axes", "profile", "p", "p_lo", "p_hi"):
            v = getattr(args, key)
            if v is not None:
                src[key] = v
    for key in ("seed", "shots_per_bin", "num_bins", "schedule", "drift_index_rule", "null_trials", "bootstrap",
                "mitigation", "calibration_shots", "kappa_max", "experiment_id"):
        v = getattr(args, key)
        if v is not None:
            data[key] = v
    noise = dict(data.get("noise") or {})
    if args.depolarizing_rate is not None:
        noise["depolarizing_rate"] = args.depolarizing_rate
    if args.readout_flip is not None:
        noise["readout_flip"] = list(args.readout_flip)
    data["noise"] = noise
    return ExperimentConfig.from_dict(data)


def cmd_simulate(args) -> int:
    cfg = _build_config(args)
    rec = run_experiment(cfg)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(rec.to_dict(), out / "run.json")
    io.write_counts(rec.counts, out / "counts.csv", cfg.experiment_id)
    report.write_drift_table(rec, out / "drift.csv")
    report.write_schedule_table([rec], out / "schedule_table.csv")
    report.write_no_signaling_table({cfg.experiment_id: rec}, out / "no_signaling.csv")
    print(f"S = {rec.chsh.S:.4f} +/- {rec.chsh.S_err:.4f}")
    if rec.chsh_mitigated is not None:
        print(f"S (mitigated) = {rec.chsh_mitigated.S:.4f} +/- {rec.chsh_mitigated.S_err:.4f}")
    d = rec.drift_mitigated or rec.drift
    print(f"delta_op(global) = {d.delta_op_global:.4f}  null {d.null_mean_global:.4f} +/- {d.null_std_global:.4f}"
          f"  p = {d.p_value_global:.4g}")
    print(f"verdict: {rec.certificate.verdict.value}  (S_LHV^min = {rec.certificate.s_lhv_min:.4f})")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_binscan(args) -> int:
    cfg = _build_config(args)
    rows = bin_scan(cfg, args.bins, args.amplitudes, args.schedules, bootstrap=args.bootstrap_scan)
    path = report.write_binscan_table(rows, args.out)
    for r in rows:
        print(f"B={r['B']:>2} amp={r['amplitude']:<6g} {r['schedule']:<11} obs={r['observed']:.4f} "
              f"null={r['null_mean']:.4f}+/-{r['null_std']:.4f} p={r['p_value']:.3g} {r['stars']}")
    if args.svg is not None:
        report.binscan_svg(report.read_csv_rows(path), args.svg)
    return EXIT_OK


def cmd_analyze(args) -> int:
    ing = io.read_counts(args.counts, args.experiment_id)
    assignment = None
    if args.calibration is not None:
        assignment = io.read_calibration(args.calibration)
    elif args.calibration_label is not None:
        if args.calibration_label not in ing.calibration:
            raise ValidationError(f"no calibration {args.calibration_label!r} in {args.counts}")
        assignment = ing.calibration[args.calibration_label]
    out = analyze_counts(ing.counts, args.schedule, args.seed, args.null_trials, assignment, args.kappa_max,
                         args.bootstrap)
    out["experiment_id"] = ing.experiment_id
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        io.write_json(out, args.out / "analysis.json")
        report.write_drift_table(out, args.out / "drift.csv")
        report.write_no_signaling_table({ing.experiment_id: out}, args.out / "no_signaling.csv")
    chsh = out.get("chsh_mitigated") or out["chsh"]
    drift = out.get("drift_mitigated") or out["drift"]
    cert = out["certificate"]
    print(f"S = {chsh['S']:.4f} +/- {chsh['S_err']:.4f}")
    print(f"delta_op(global) = {drift['delta_op_global']:.4f}  p = {drift['p_value_global']:.4g}")
    print(f"delta_ens_min = {cert['delta_ens_min']:.4f}  S_LHV^min = {cert['s_lhv_min']:.4f}  "
          f"verdict: {cert['verdict']}")
    return EXIT_OK


def cmd_null(args) -> int:
    if args.counts is not None:
        ing = io.read_counts(args.counts)
        pooled = ing.counts.pooled()
        shots = args.shots_per_bin or ing.counts.shots_per_bin
        bins = args.num_bins or {c: len(ing.counts.bins[c]) for c in ing.counts.contexts}
    else:
        if args.shots_per_bin is None or args.num_bins is None:
            raise ValidationError("without --counts, give --shots-per-bin and --num-bins")
        dist = np.array(args.dist if args.dist else [0.25] * 4, dtype=float)
        if dist.shape != (4,):
            raise ValidationError("--dist needs four probabilities")
        pooled = {c: dist for c in CONTEXTS}
        shots, bins = args.shots_per_bin, args.num_bins
    null = stats.mc_null(shots, bins, pooled, args.trials, args.seed)
    g = null.global_
    summary = {
        "trials": int(g.size),
        "mean": float(g.mean()),
        "std": float(g.std(ddof=1)) if g.size > 1 else 0.0,
        "q95": float(np.quantile(g, 0.95)),
        "q99": float(np.quantile(g, 0.99)),
        "per_context_mean": {c: float(v.mean()) for c, v in null.per_context.items()},
    }
    print(json.dumps(summary, indent=1, sort_keys=True))
    if args.out is not None:
        io.write_json(summary, args.out)
    return EXIT_OK


def cmd_mitigate(args) -> int:
    if args.action == "calibrate":
        if args.seed is None and args.shots is not None:
            raise ValidationError("--seed is required when sampling calibration shots")
        noise = NoiseConfig(depolarizing_rate=0.0, readout_flip=tuple(args.flip)).spec()
        m = mitigation.calibrate(noise, args.shots, args.seed, label="cli")
        io.write_calibration(m, args.out)
        print(f"kappa = {mitigation.condition_number(m):.6g}; wrote {args.out}")
    elif args.action == "condition":
        m = io.read_calibration(args.matrix)
        kappa = mitigation.condition_number(m)
        print(f"kappa = {kappa:.6g}")
        mitigation.check_conditioning(m, args.kappa_max)
    elif args.action == "apply":
        m = io.read_calibration(args.matrix)
        ing = io.read_counts(args.counts)
        mit = mitigation.mitigate_binned(ing.counts, m, args.kappa_max)
        rows = []
        for c in mit.contexts:
            for b, p, clip in zip(mit.bins[c], mit.probs[c], mit.clipped[c]):
                rows.append({"context": c, "bin": b, **{f"p{o}": float(v) for o, v in zip(("00", "01", "10", "11"), p)},
                             "clipped": bool(clip)})
        text = report.to_csv(rows, ["context", "bin", "p00", "p01", "p10", "p11", "clipped"])
        if args.out is not None:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
    elif args.action == "compare":
        ref, other = io.read_calibration(args.matrix), io.read_calibration(args.other)
        print(json.dumps(mitigation.calibration_drift(ref, other), indent=1, sort_keys=True))
    return EXIT_OK


def cmd_report(args) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    wrote = []
    if args.runs:
        records = [io.read_json(p) for p in args.runs]
        wrote.append(report.write_schedule_table(records, args.out / "schedule_table.csv"))
        for p, rec in zip(args.runs, records):
            wrote.append(report.write_drift_table(rec, args.out / f"drift_{Path(p).parent.name or Path(p).stem}.csv"))
    if args.analyses:
        datasets = {}
        for spec in args.analyses:
            name, _, path = spec.partition("=")
            if not path:
                name, path = Path(spec).stem, spec
            datasets[name] = io.read_json(path)
        wrote.append(report.write_no_signaling_table(datasets, args.out / "no_signaling_table.csv"))
    if args.binscan:
        rows = report.read_csv_rows(args.binscan)
        wrote.append(report.write_binscan_table(rows, args.out / "binscan.csv"))
        if args.svg:
            wrote.append(report.binscan_svg(rows, args.out / "binscan.svg"))
    if not wrote:
        raise ValidationError("nothing to report: pass --runs, --analyses or --binscan")
    for p in wrote:
        print(f"wrote {p}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; here 2 is reserved for numerical failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="belldrift", description="CHSH drift and schedule diagnostics")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one simulated experiment")
    _add_experiment_flags(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("binscan", help="observed vs null delta_op over bins and drift amplitudes")
    _add_experiment_flags(p)
    p.add_argument("--bins", type=_ints, default=[3, 6, 9, 12])
    p.add_argument("--amplitudes", type=_floats, default=[0.0, 0.01, 0.1])
    p.add_argument("--schedules", nargs="+", default=["round_robin", "blocked"])
    p.add_argument("--bootstrap-scan", type=int, default=200, help="bootstrap resamples for error bars")
    p.add_argument("--out", type=Path, required=True, help="CSV path")
    p.add_argument("--svg", type=Path)
    p.set_defaults(func=cmd_binscan)

    p = sub.add_parser("analyze", help="analyze an external counts file")
    p.add_argument("counts", type=Path)
    p.add_argument("--schedule", required=True, choices=["round_robin", "blocked"])
    p.add_argument("--seed", type=int, required=True, help="seed for the MC null")
    p.add_argument("--experiment-id")
    p.add_argument("--null-trials", type=int, default=stats.DEFAULT_NULL_TRIALS)
    p.add_argument("--bootstrap", type=int, default=0)
    p.add_argument("--calibration", type=Path, help="4x4 assignment matrix CSV")
    p.add_argument("--calibration-label", help="use a calibration embedded in a JSON counts file")
    p.add_argument("--kappa-max", type=float, default=mitigation.DEFAULT_KAPPA_MAX)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("null", help="standalone MC null distribution of delta_op")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--trials", type=int, default=stats.DEFAULT_NULL_TRIALS)
    p.add_argument("--counts", type=Path, help="resample from this file's pooled distributions")
    p.add_argument("--shots-per-bin", type=int)
    p.add_argument("--num-bins", type=int)
    p.add_argument("--dist", type=_floats, help="outcome distribution (default uniform)")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_null)

    p = sub.add_parser("mitigate", help="readout calibration tools")
    p.add_argument("action", choices=["calibrate", "condition", "apply", "compare"])
    p.add_argument("--matrix", type=Path, help="calibration CSV (condition, apply, compare)")
    p.add_argument("--other", type=Path, help="second calibration CSV (compare)")
    p.add_argument("--counts", type=Path, help="counts file (apply)")
    p.add_argument("--flip", type=float, nargs=2, default=(0.0, 0.0), metavar=("EPS_A", "EPS_B"))
    p.add_argument("--shots", type=int, help="shots per basis state; omit for the exact matrix")
    p.add_argument("--seed", type=int)
    p.add_argument("--kappa-max", type=float, default=mitigation.DEFAULT_KAPPA_MAX)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_mitigate)

    p = sub.add_parser("report", help="render CSV tables (and optional SVG) from saved results")
    p.add_argument("--runs", nargs="+", type=Path, help="run.json files from simulate")
    p.add_argument("--analyses", nargs="+", help="NAME=analysis.json entries")
    p.add_argument("--binscan", type=Path, help="binscan CSV")
    p.add_argument("--svg", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_report)
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, PipelineError):
        return _exit_code(exc.cause)
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_VALIDATION


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "mitigate":
        needs = {"condition": ["matrix"], "apply": ["matrix", "counts"], "compare": ["matrix", "other"],
                 "calibrate": ["out"]}[args.action]
        missing = [n for n in needs if getattr(args, n) is None]
        if missing:
            parser.error(f"mitigate {args.action} needs --{' --'.join(missing)}")
    try:
        return args.func(args)
    except (ValidationError, NumericalError, PipelineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
