"""Command-line surface: mine, generate, evaluate, report.

Exit statuses: 0 success, 1 user/config error, 2 pipeline error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import analyzer, orchestrator, store
from .errors import AssertGenError, ConfigError
from .llm import GenerationConfig, make_client
from .metrics import EquivalenceTable, summarize

log = logging.getLogger("assertgen")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are user errors (exit 1)
        raise ConfigError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="assertgen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    mine = sub.add_parser("mine", help="mine a project checkout into a dataset file")
    mine.add_argument("root", help="project checkout directory")
    mine.add_argument("-o", "--out", required=True, help="dataset output path (jsonl)")
    mine.add_argument("--project", help="project name (default: directory name)")
    mine.add_argument("--revision", help="revision label (default: git short hash)")
    mine.add_argument("--budget", type=int, default=analyzer.DEFAULT_CHAR_BUDGET,
                      help="prompt character budget before flagging oversize")
    mine.set_defaults(func=cmd_mine)

    gen = sub.add_parser("generate", help="run the dialogue pipeline over a dataset")
    gen.add_argument("-d", "--dataset", required=True)
    gen.add_argument("-o", "--out", required=True, help="results output path (jsonl)")
    gen.add_argument("--config", help="flat dotted-key config file")
    gen.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config key (repeatable)")
    gen.add_argument("--filter", action="append", default=[], metavar="KEY=VALUE",
                     help="entry filter: project=NAME, flavor=keyword|library, asserts=single|multi")
    gen.add_argument("--project-root", help="checkout root for the entries being generated")
    gen.set_defaults(func=cmd_generate)

    ev = sub.add_parser("evaluate", help="score a results file against its dataset")
    ev.add_argument("-r", "--results", required=True)
    ev.add_argument("-d", "--dataset", required=True)
    ev.add_argument("-o", "--out", required=True, help="summary output path (jsonl)")
    ev.add_argument("--table", help="equivalence table file (default: packaged)")
    ev.add_argument("--config", help="flat dotted-key config file")
    ev.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    ev.set_defaults(func=cmd_evaluate)

    rep = sub.add_parser("report", help="print a summary as an aligned table")
    rep.add_argument("-s", "--summary", required=True)
    rep.add_argument("--slice", help="only rows whose slice key contains this text")
    rep.set_defaults(func=cmd_report)
    return parser


def _parse_kv(pairs: list[str], what: str) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"bad {what} (expected KEY=VALUE): {pair!r}")
        key, _, value = pair.partition("=")
        out[key.strip()] = value.strip()
    return out


def _load_config(args) -> store.RunConfig:
    return store.load_run_config(args.config, _parse_kv(args.set, "--set"))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_mine(args) -> int:
    root = Path(args.root)
    if not root.is_dir():
        raise ConfigError(f"not a directory: {root}")
    result = analyzer.mine_project(
        root, project=args.project, revision=args.revision, char_budget=args.budget
    )
    for rejection in result.rejections:
        log.warning("rejected %s::%s reason=%s", rejection.file_path, rejection.test_name,
                    rejection.reason)
    single = sum(1 for e in result.entries if len(e.asserts) == 1)
    multi = len(result.entries) - single
    print("single-assert / multi-assert / total")
    print(f"{single} / {multi} / {len(result.entries)}")
    if not result.entries:
        log.error("no entries mined from %s", root)
        return 2
    store.write_dataset(result.entries, args.out)
    log.info("wrote %d entries to %s (%d rejections)", len(result.entries), args.out,
             len(result.rejections))
    return 0


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    if args.project_root:
        cfg.project_root = args.project_root
    store.validate_generation_config(cfg)
    if cfg.mode in ("live", "record") and not os.environ.get(cfg.api_key_env):
        raise ConfigError(f"{cfg.mode} mode requires the {cfg.api_key_env} environment variable")
    if not cfg.project_root:
        raise ConfigError("generate requires --project-root (or pipeline.project_root)")
    entries = store.read_dataset(args.dataset)
    filters = _parse_kv(args.filter, "--filter")
    client = make_client(
        cfg.mode,
        endpoint=cfg.endpoint,
        api_key=os.environ.get(cfg.api_key_env),
        replay_path=cfg.replay_path or None,
    )
    gen_cfg = GenerationConfig(temperature=cfg.temperature, model_name=cfg.model)
    projects = {e.project for e in orchestrator.apply_filters(entries, filters)}
    roots = {project: Path(cfg.project_root) for project in projects}
    stats = orchestrator.run_pipeline(
        entries,
        args.out,
        client=client,
        gen_cfg=gen_cfg,
        project_roots=roots,
        template_dir=cfg.template_dir or None,
        timeout_s=cfg.timeout_s,
        workers=cfg.workers,
        filters=filters,
    )
    log.info("processed=%d resumed-past=%d no-sample=%d",
             stats.processed, stats.skipped_resume, stats.skipped_no_sample)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    table_path = args.table or cfg.table_path or None
    table = EquivalenceTable.load(table_path)
    records = store.read_records(args.results)
    truth = {e.id: e for e in store.read_dataset(args.dataset)}
    summary = summarize(records, truth, table, lcs_unit=cfg.lcs_unit)
    store.write_summary(summary, args.out)
    print(f"scored {summary.n} asserts across {len(records)} records "
          f"(skipped {summary.skipped} without dataset entries)")
    return 0


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.1f}"
    return str(value)


def cmd_report(args) -> int:
    rows = store.read_summary(args.summary)
    if args.slice:
        rows = [r for r in rows if args.slice in r["slice"]]
    header = ["slice", "n", "AM%", "LCS%", "ED", "AMM%"]
    body = [
        [r["slice"], _fmt(r["n"]), _fmt(r["am_pct"]), _fmt(r["lcs_pct"]),
         _fmt(r["ed_mean"]), _fmt(r["amm_pct"])]
        for r in rows
    ]
    widths = [max(len(header[i]), *(len(row[i]) for row in body)) if body else len(header[i])
              for i in range(len(header))]
    print("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip())
    for row in body:
        print("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return 1
    except AssertGenError as exc:
        log.error("%s", exc)
        return 2
    except OSError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
