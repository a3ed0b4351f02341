"""Command line: ``fedstdp <verb> ...``.

Verbs: ``trial``, ``sweep``, ``phase``, ``report``, ``worker``,
``orchestrate``.  Exit codes: 0 ok, 1 usage or invalid configuration,
2 runtime error, 3 some trials failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .config import ExperimentConfig, paper_scale
from .errors import ConfigurationError, FedStdpError
from .phases import PHASES, PhaseRunner
from .report import DEFAULT_ANALYSES, emit_report, read_records
from .stdp import StdpConfig
from .sweep import run_sweep, safe_trial

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3

log = logging.getLogger("fedstdp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_seeds(text: str) -> list[int]:
    """``"42,43"`` or ``"42-51"`` or a mix; an empty string means no seeds."""
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _seeds_arg(text: str) -> list[int]:
    try:
        return parse_seeds(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if getattr(args, "config", None) else ExperimentConfig()
    if getattr(args, "paper_scale", False):
        cfg = paper_scale(cfg)
    over = {}
    if getattr(args, "seeds", None) is not None:
        if not args.seeds:
            raise ConfigurationError("at least one seed is required")
        over["seeds"] = args.seeds
    for name in ("nw", "npc", "lc"):
        if getattr(args, name, None):
            over[name] = getattr(args, name)
    if getattr(args, "workers", None):
        over["workers"] = args.workers
    if getattr(args, "out", None):
        over["output"] = args.out
    return cfg.with_overrides(**over)


def _status(records) -> int:
    failed = sum(not r.ok for r in records)
    if failed:
        log.error("%d of %d trials failed", failed, len(records))
        return EXIT_PARTIAL
    return EXIT_OK


# -- verbs -------------------------------------------------------------------

def cmd_trial(args) -> int:
    cfg = _load_config(args)
    stdp = StdpConfig(num_weights=cfg.nw[0], neurons_per_class=cfg.npc[0], learning_competition=cfg.lc[0],
                      epochs=cfg.epochs, swap_budget=cfg.swap_budget)
    spec = replace(cfg.base_spec(), seed=args.seed, stdp=stdp)
    if cfg.in_process:
        rec = safe_trial(spec)
    else:
        from .fednet.orchestrator import orchestrate_trial
        rec = orchestrate_trial(list(cfg.nodes), spec, cfg.timeout)
    print(json.dumps(rec.to_dict(), indent=2, sort_keys=True))
    if args.out:
        emit_report([rec], DEFAULT_ANALYSES, args.out)
    return _status([rec])


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if args.addresses:
        cfg = replace(cfg, nodes=tuple(args.addresses.split(",")))
    n = len(cfg.specs())
    log.info("sweep: %d trials -> %s", n, cfg.output)
    records = run_sweep(cfg, cfg.output, progress=lambda r: log.info("seed %s %s", r.seed, r.status))
    paths = emit_report(records, DEFAULT_ANALYSES, cfg.output)
    print(json.dumps({k: str(v) for k, v in paths.items()}, sort_keys=True))
    return _status(records)


def cmd_phase(args) -> int:
    cfg = _load_config(args)
    runner = PhaseRunner(cfg, cfg.output, paper_scale=args.paper_scale, seeds=args.seeds, log=log.info)
    if args.phase.upper() == "ALL":
        reports = runner.run_all()
        failed = sum(r["failed"] for k, r in reports.items() if k != "total_runs")
        print(json.dumps({"total_runs": reports["total_runs"], "failed": failed}))
    else:
        report = runner.run(args.phase)
        failed = report["failed"]
        print(json.dumps({k: report[k] for k in ("phase", "runs", "failed")}))
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_report(args) -> int:
    records = read_records(args.records)
    if not records:
        raise ConfigurationError(f"{args.records} holds no records")
    paths = emit_report(records, () if args.dump_only else DEFAULT_ANALYSES, args.out)
    print(json.dumps({k: str(v) for k, v in paths.items()}, sort_keys=True))
    return EXIT_OK


def cmd_worker(args) -> int:
    from .fednet.orchestrator import parse_address
    from .fednet.worker import Worker, worker_serve
    from .fstd import load_features
    preload = load_features(args.features) if args.features else None
    host, port = parse_address(args.bind)
    log.info("worker %s listening on %s:%d", args.name, host, port)
    worker_serve((host, port), Worker(args.name, preload))
    return EXIT_OK


def cmd_orchestrate(args) -> int:
    args.addresses = args.addresses or ""
    if not args.addresses:
        raise UsageError("orchestrate needs --addresses host:port,host:port")
    return cmd_sweep(args)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fedstdp", description="Federated STDP prototype learning simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(sp, grid=True):
        sp.add_argument("--config", help="TOML experiment file")
        sp.add_argument("--seeds", type=_seeds_arg, help="e.g. 42,43 or 42-51")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--paper-scale", action="store_true", help="full grid and seed counts")
        if grid:
            sp.add_argument("--nw", type=int, nargs="+")
            sp.add_argument("--npc", type=int, nargs="+")
            sp.add_argument("--lc", type=float, nargs="+")
        sp.add_argument("--workers", type=int, help="concurrent in-process trials")

    sp = sub.add_parser("trial", help="run one seeded trial and print its record")
    common(sp)
    sp.add_argument("--seed", type=int, default=42)
    sp.set_defaults(func=cmd_trial)

    sp = sub.add_parser("sweep", help="grid x seeds, streamed and resumable")
    common(sp)
    sp.add_argument("--addresses", help="comma-separated worker addresses (default: in-process)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("phase", help="run one analysis phase (A-H) or all")
    sp.add_argument("phase", choices=[*PHASES, *(x.lower() for x in PHASES), "all", "ALL"])
    common(sp, grid=False)
    sp.set_defaults(func=cmd_phase)

    sp = sub.add_parser("report", help="re-summarize a records.jsonl or records.csv dump")
    sp.add_argument("records")
    sp.add_argument("--out", required=True)
    sp.add_argument("--dump-only", action="store_true", help="write the record dump without analyses")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("worker", help="serve one node over TCP")
    sp.add_argument("--bind", default="127.0.0.1:7070")
    sp.add_argument("--name", default="worker")
    sp.add_argument("--features", help="FSTD feature file preloaded for row-index configs")
    sp.set_defaults(func=cmd_worker)

    sp = sub.add_parser("orchestrate", help="sweep over remote workers")
    common(sp)
    sp.add_argument("--addresses", help="comma-separated worker addresses")
    sp.set_defaults(func=cmd_orchestrate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"fedstdp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FedStdpError, OSError, ValueError) as exc:
        print(f"fedstdp: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
