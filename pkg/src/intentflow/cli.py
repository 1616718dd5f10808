"""Command-line front end: analyze, fixpoint, report, stats, score, run.

Exit status is 0 when every step succeeded, 1 when some apps failed to
analyze, and 2 on configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .intentdb import IntentDb, SchemaVersionMismatch, StoreIO, fixpoint_resolve, load_db, save_db
from .pipeline import ConfigError, RunConfig, Timer, analyze, derive_flows, discover_apps, render_reports, report
from .report import IntraFlow, MissingFlows, load_flows, save_flows
from .scoring import MalformedGroundTruth, load_ground_truth, score_reports
from .stats import compute_stats, write_stats
from .strings import DEFAULT_CAP

LOG = logging.getLogger("intentflow")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--catalog", type=Path, help="sources/sinks catalog TSV (default: bundled)")
    p.add_argument("--compat-table", type=Path, help="get/put compatibility TSV (default: bundled)")
    p.add_argument("--sender-catalog", type=Path, help="intent sender API TSV (default: bundled)")
    p.add_argument("--string-cap", type=int, default=DEFAULT_CAP,
                   help="max candidate strings per value before giving up (default: %(default)s)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _report_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--flows", type=Path, help="intra-component flows (JSON lines)")
    p.add_argument("--derive-flows", nargs="+", type=Path, metavar="APP",
                   help="derive flows from these decoded apps instead of reading --flows")
    p.add_argument("--strict", action="store_true", help="also report values of unknown origin")
    p.add_argument("--format", dest="fmt", choices=("text", "records"), default="text")
    p.add_argument("--out", type=Path, help="write reports here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="intentflow",
        description="Find privacy leaks that travel between Android apps through intents.",
        epilog="Scores use 1.0 for precision or recall when the denominator is zero.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="extract intent summaries of decoded apps into the store")
    p.add_argument("apps", nargs="*", type=Path, help="decoded app dirs or directories of them")
    p.add_argument("--db", type=Path, required=True)
    _common(p)

    p = sub.add_parser("fixpoint", help="resolve values forwarded between intents")
    p.add_argument("--db", type=Path, required=True)
    p.add_argument("--max-chain", type=int, help="longest intent chain to resolve")
    _common(p)

    p = sub.add_parser("report", help="match flows against the store and print leaks")
    p.add_argument("--db", type=Path, required=True)
    _report_opts(p)
    _common(p)

    p = sub.add_parser("stats", help="corpus statistics tables and figures")
    p.add_argument("--db", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, help="write TSV tables (and figures) here")
    p.add_argument("--no-figures", action="store_true")
    _common(p)

    p = sub.add_parser("score", help="compare leak records with a ground-truth list")
    p.add_argument("--reports", type=Path, required=True, help="reports in records format")
    p.add_argument("--ground-truth", type=Path, required=True)
    _common(p)

    p = sub.add_parser("run", help="all phases into one output directory")
    p.add_argument("apps", nargs="*", type=Path)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--flows", type=Path, help="use these flows instead of deriving them")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--format", dest="fmt", choices=("text", "records"), default="text")
    p.add_argument("--max-chain", type=int)
    p.add_argument("--ground-truth", type=Path)
    p.add_argument("--no-figures", action="store_true")
    _common(p)
    return parser


def _config(args) -> RunConfig:
    return RunConfig(
        apps=list(getattr(args, "apps", None) or []),
        db=getattr(args, "db", None),
        flows=getattr(args, "flows", None),
        catalog=args.catalog,
        compat_table=args.compat_table,
        sender_catalog=args.sender_catalog,
        strict=getattr(args, "strict", False),
        fmt=getattr(args, "fmt", "text"),
        string_cap=args.string_cap,
        max_chain=getattr(args, "max_chain", None),
    )


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")


def _open_db(path: Path) -> IntentDb:
    return load_db(path) if path.exists() else IntentDb()


def _analyze_into(db: IntentDb, cfg: RunConfig, catalogs, flows: list | None = None) -> int:
    results = analyze(db, discover_apps(cfg.apps), catalogs, cfg.string_cap, flows)
    failed = [r for r in results if not r.ok]
    for r in failed:
        print(f"failed: {r.path}: {r.error}", file=sys.stderr)
    print(f"analyzed {len(results) - len(failed)}/{len(results)} apps, {len(db)} rows", file=sys.stderr)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _config(args)
    catalogs = cfg.catalogs()
    db = _open_db(cfg.db)
    status = _analyze_into(db, cfg, catalogs)
    save_db(db, cfg.db)
    return status


def cmd_fixpoint(args) -> int:
    cfg = _config(args)
    if not cfg.db.exists():
        raise StoreIO(f"{cfg.db}: no such store")
    db = load_db(cfg.db)
    added = fixpoint_resolve(db, cfg.catalogs().compat, cfg.fixpoint_rounds)
    save_db(db, cfg.db)
    print(f"fixpoint added {added} rows, {len(db)} total")
    return EXIT_OK


def _flows_for(cfg: RunConfig, derive_from, catalogs):
    if derive_from:
        return derive_flows(discover_apps(derive_from), catalogs, cfg.string_cap)
    if cfg.flows is None:
        raise MissingFlows("no flows given: pass --flows or --derive-flows")
    return load_flows(cfg.flows)


def cmd_report(args) -> int:
    cfg = _config(args)
    catalogs = cfg.catalogs()
    db = load_db(cfg.db)
    flows = _flows_for(cfg, args.derive_flows, catalogs)
    _emit(render_reports(report(db, flows, catalogs, cfg.strict), cfg.fmt), args.out)
    return EXIT_OK


def cmd_stats(args) -> int:
    st = compute_stats(load_db(args.db))
    if args.out_dir is not None:
        write_stats(st, args.out_dir, figures=not args.no_figures)
    for name, value in st.summary_rows():
        print(f"{name}\t{value}")
    return EXIT_OK


class _ScoredReport:
    def __init__(self, rec: dict):
        self._key = (rec["app"], rec["component"], rec["origin"]["detail"].split("(", 1)[0],
                     rec["sink"]["signature"].split("(", 1)[0])

    def score_key(self):
        return self._key


def cmd_score(args) -> int:
    truth = load_ground_truth(args.ground_truth)
    try:
        lines = args.reports.read_text(encoding="utf-8").splitlines()
        reports = [_ScoredReport(json.loads(line)) for line in lines if line.strip()]
    except (ValueError, KeyError) as err:
        raise ConfigError(f"{args.reports}: not a records-format report file: {err}") from err
    sys.stdout.write(score_reports(reports, truth).render())
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    catalogs = cfg.catalogs()
    truth = load_ground_truth(args.ground_truth) if args.ground_truth else None
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    timer = Timer()
    db = IntentDb()
    derived: list | None = None if cfg.flows else []
    with timer.phase("analysis"):
        status = _analyze_into(db, cfg, catalogs, derived)
        added = fixpoint_resolve(db, catalogs.compat, cfg.fixpoint_rounds)
    save_db(db, out / "intentdb.jsonl")
    with timer.phase("reporting"):
        flows = load_flows(cfg.flows) if cfg.flows else sorted(set(derived), key=IntraFlow.sort_key)
        reports = report(db, flows, catalogs, cfg.strict)
    save_flows(flows, out / "flows.jsonl")
    (out / "reports.txt").write_text(render_reports(reports, "text"), encoding="utf-8")
    (out / "reports.jsonl").write_text(render_reports(reports, "records"), encoding="utf-8")
    write_stats(compute_stats(db), out / "stats", figures=not args.no_figures)
    if truth is not None:
        (out / "score.tsv").write_text(score_reports(reports, truth).render(), encoding="utf-8")
    sys.stdout.write(render_reports(reports, cfg.fmt))
    # timings go to stderr so the output directory stays byte-identical across runs
    print(f"fixpoint added {added} rows; " + ", ".join(f"{k} {v:.2f}s" for k, v in timer.phases.items()),
          file=sys.stderr)
    return status


COMMANDS = {
    "analyze": cmd_analyze,
    "fixpoint": cmd_fixpoint,
    "report": cmd_report,
    "stats": cmd_stats,
    "score": cmd_score,
    "run": cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, StoreIO, SchemaVersionMismatch, MissingFlows, MalformedGroundTruth, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
