"""Command line entry point: ``qeraser run`` and ``qeraser verify``."""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .analysis import binned_density_oracle, chi_square_gof, judge_audit, read_report, write_report
from .apparatus import IDLER_DETECTORS
from .coincidence import ALL, JointHistogram, read_histograms_csv, write_histograms_csv
from .config import CliConfig, dump_config, load_config, parse_config_text, resolve
from .events import write_events_csv
from .exceptions import ConfigError, QEraserError
from .pipeline import analysis_edges, analyze, build_report, run_pipeline
from .plot import render_svg

log = logging.getLogger("qeraser")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 2, 3, 4
CONFIG_FILE = "config.cfg"
HIST_FILE = "histograms.csv"
REPORT_FILE = "report.json"
PLOT_FILE = "plot.svg"
EVENTS_FILE = "events.csv"
CHI2_ALPHA = 1e-3
VALUE_RTOL = 1e-12


def _override(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qeraser", description="Delayed-choice quantum eraser simulator"
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate, match, histogram and analyze one run")
    run.add_argument("--config", required=True, type=Path, help="key = value config file")
    run.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    run.add_argument("--seed", type=int)
    run.add_argument("--pairs", type=int, dest="n_pairs")
    run.add_argument("--mode", choices=["plain", "marked", "kim"])
    run.add_argument("--set", type=_override, action="append", default=[], metavar="KEY=VALUE",
                     help="override any config key (repeatable)")
    run.add_argument("--emit-events", action="store_true", help="also write events.csv")
    run.add_argument("--force", action="store_true", help="overwrite an existing report")

    verify = sub.add_parser("verify", help="re-derive the analysis of a finished run")
    verify.add_argument("run_dir", type=Path)
    return parser


def cmd_run(args):
    overrides = dict(args.set)
    for key in ("seed", "n_pairs", "mode"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    cli = CliConfig(args.config, args.out, overrides)
    run, window, bins = resolve(load_config(cli.config_path), cli.overrides)

    report_path = cli.out_dir / REPORT_FILE
    if report_path.exists() and not args.force:
        raise ConfigError(f"{report_path} exists; pass --force to overwrite", key="out")
    cli.out_dir.mkdir(parents=True, exist_ok=True)

    log.info("running %s mode, %d pairs, seed %d", run.mode.value, run.n_pairs, run.seed)
    result = run_pipeline(run, window=window, bins=bins)
    n_matched = len(result.pairs) if result.pairs is not None else 0
    report = build_report(run, result.analysis, result.audit, n_matched, result.wall_clock_s)

    (cli.out_dir / CONFIG_FILE).write_text(dump_config(run, window, bins), encoding="utf-8")
    write_histograms_csv(result.histograms(), cli.out_dir / HIST_FILE)
    write_report(report, report_path)
    fits = {det.name: rep for det, rep in result.analysis.visibility.items()}
    fits[ALL] = result.analysis.marginal
    svg = render_svg(result.histograms(), fits, run.geometry, run.scan_positions)
    (cli.out_dir / PLOT_FILE).write_text(svg, encoding="utf-8")
    if args.emit_events:
        write_events_csv(result.stream, cli.out_dir / EVENTS_FILE)

    print(f"verdict: {report['verdict']}")
    for name, det in report["detectors"].items():
        print(f"  {name}: V={det['V']:.4f} D={det['D']:.3f} phase={det['phase']:+.4f}")
    print(f"  marginal V={report['marginal_V']:.4f}")
    print(f"wrote {cli.out_dir}")
    return EXIT_OK


def _close(a, b):
    if a is None or b is None:
        return a is b
    if isinstance(a, (bool, str)) or isinstance(b, (bool, str)):
        return a == b
    return bool(np.isclose(a, b, rtol=VALUE_RTOL, atol=0.0))


def verify_run_dir(run_dir):
    """Return a list of failed-check messages (empty when the run verifies)."""
    raw = parse_config_text((run_dir / CONFIG_FILE).read_text(encoding="utf-8"),
                            str(run_dir / CONFIG_FILE))
    run, window, bins = resolve(raw)
    net = run.network()
    stored = read_report(run_dir / REPORT_FILE)
    table = read_histograms_csv(run_dir / HIST_FILE)
    failures = []

    edges = analysis_edges(run, bins)
    centers = [format(float(c), ".17g") for c in 0.5 * (edges[:-1] + edges[1:])]
    expected_labels = [d.name for d in IDLER_DETECTORS] + [ALL] if net.has_idler else [ALL]
    if sorted(table) != sorted(expected_labels):
        failures.append(f"histogram detectors {sorted(table)} != {sorted(expected_labels)}")
        return failures
    for label, (got_centers, _, _) in table.items():
        if got_centers != centers:
            failures.append(f"binning mismatch for {label}: bin centers differ from the config")
    if failures:
        return failures

    hists = {label: JointHistogram(label, edges, counts, overflow)
             for label, (_, counts, overflow) in table.items()}
    marginal = hists[ALL]
    joints = {d: JointHistogram(d, edges, hists[d.name].counts, hists[d.name].overflow)
              for d in IDLER_DETECTORS if d.name in hists}

    if marginal.total != run.n_pairs:
        failures.append(f"conservation: marginal holds {marginal.total} counts, "
                        f"expected n_pairs={run.n_pairs}")
    if joints:
        joint_total = sum(h.total for h in joints.values())
        if joint_total != stored.get("n_matched"):
            failures.append(f"conservation: joint histograms hold {joint_total} counts, "
                            f"report says n_matched={stored.get('n_matched')}")
    for key, value in (("mode", run.mode.value), ("n_pairs", run.n_pairs), ("seed", run.seed)):
        if stored.get(key) != value:
            failures.append(f"report {key}={stored.get(key)!r} disagrees with the config")

    try:
        analysis = analyze(joints, marginal, net, run)
    except QEraserError as exc:
        failures.append(f"re-analysis failed: {exc}")
        return failures
    audit = None
    if stored.get("min_delay_s") is not None:
        audit = judge_audit(stored["min_delay_s"], stored["max_delay_s"],
                            analysis.visibility, analysis.distinguishability)
    fresh = build_report(run, analysis, audit, stored.get("n_matched"))
    for key, value in fresh.items():
        if key == "detectors":
            if sorted(value) != sorted(stored.get("detectors", {})):
                failures.append("report detector set differs from recomputation")
                continue
            for name, fields in value.items():
                for f, v in fields.items():
                    s = stored["detectors"][name].get(f)
                    if not _close(v, s):
                        failures.append(f"report {name}.{f}={s!r}, recomputed {v!r}")
        elif not _close(value, stored.get(key)):
            failures.append(f"report {key}={stored.get(key)!r}, recomputed {value!r}")

    oracle = binned_density_oracle(net, run.geometry, edges, run.scan_positions)
    checks = dict(joints)
    checks[ALL] = marginal
    for key, hist in checks.items():
        if key == ALL:
            probs = sum(oracle.values())
        else:
            probs = oracle[key]
        if hist.counts.sum() == 0:
            if probs.sum() > 0 and run.n_pairs >= 1000:
                failures.append(f"chi-square {hist.label}: empty histogram, oracle expects counts")
            continue
        if probs.sum() == 0:
            failures.append(f"chi-square {hist.label}: counts where the oracle forbids any")
            continue
        try:
            stat, dof, p = chi_square_gof(hist.counts, probs)
        except QEraserError:
            continue
        if p <= CHI2_ALPHA:
            failures.append(f"chi-square {hist.label}: p={p:.3g} (stat={stat:.1f}, dof={dof})")
    return failures


def cmd_verify(args):
    run_dir = args.run_dir
    for name in (CONFIG_FILE, HIST_FILE, REPORT_FILE):
        if not (run_dir / name).is_file():
            raise ConfigError(f"{run_dir} is not a run directory (missing {name})", key=name)
    failures = verify_run_dir(run_dir)
    if failures:
        print(f"verification FAILED for {run_dir}:", file=sys.stderr)
        for msg in failures:
            print(f"  - {msg}", file=sys.stderr)
        return EXIT_VERIFY
    print(f"verification passed for {run_dir}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "verify": cmd_verify}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        where = f" [key: {exc.key}]" if exc.key else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QEraserError as exc:
        print(f"error in {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error in {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
