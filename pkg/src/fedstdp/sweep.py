"""Grid sweeps: run many trials, stream records to disk, resume after a crash.

Records are appended to ``<out>/records.jsonl`` as each trial finishes.  On
restart every ``(config point, seed)`` already present with status ``ok``
is skipped; failed trials are retried.  When the sweep ends the dump is
rewritten in spec order, so a finished sweep's files do not depend on
completion order or on how many restarts it took.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

from .errors import FedStdpError
from .experiment import TrialRecord, TrialSpec, failed_record, run_trial

log = logging.getLogger(__name__)

STREAM = "records.jsonl"


def safe_trial(spec: TrialSpec) -> TrialRecord:
    """``run_trial`` that turns library and numeric errors into failed records."""
    try:
        return run_trial(spec)
    except (FedStdpError, ValueError, ArithmeticError) as exc:
        log.warning("trial seed=%s failed: %s", spec.seed, exc)
        return failed_record(spec, exc)


def load_stream(path) -> dict:
    """Latest record per key from a (possibly truncated) JSONL stream."""
    path = Path(path)
    done = {}
    if not path.exists():
        return done
    for line in path.read_text().splitlines():
        try:
            rec = TrialRecord.from_dict(json.loads(line))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            continue                    # a partially written last line
        done[rec.key()] = rec
    return done


def _append(fh, rec: TrialRecord):
    fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
    fh.flush()


def run_specs(specs, out_dir=None, workers: int = 1, nodes="in-process", timeout: float = 30.0,
              progress=None) -> list[TrialRecord]:
    """Run ``specs`` and return their records in spec order.

    ``nodes`` is ``"in-process"`` or a list of ``host:port`` worker
    addresses; over the wire trials run one at a time.  ``progress`` is
    called with each fresh record.
    """
    specs = list(specs)
    keys = [s.key() for s in specs]
    if len(set(keys)) != len(keys):
        raise ValueError("duplicate (config, seed) pairs in the sweep")
    stream = Path(out_dir) / STREAM if out_dir is not None else None
    done = {}
    if stream is not None:
        stream.parent.mkdir(parents=True, exist_ok=True)
        done = {k: r for k, r in load_stream(stream).items() if r.ok}
    todo = [s for s in specs if s.key() not in done]
    if done:
        log.info("resuming: %d of %d trials already complete", len(specs) - len(todo), len(specs))

    fh = stream.open("a") if stream is not None else None
    try:
        def sink(rec):
            done[rec.key()] = rec
            if fh is not None:
                _append(fh, rec)
            if progress is not None:
                progress(rec)

        if nodes != "in-process":
            from .fednet.orchestrator import orchestrate_sweep
            orchestrate_sweep(list(nodes), todo, timeout=timeout, sink=sink)
        elif workers > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = {pool.submit(safe_trial, s): s for s in todo}
                for fut in as_completed(futures):
                    sink(fut.result())
        else:
            for s in todo:
                sink(safe_trial(s))
    finally:
        if fh is not None:
            fh.close()

    records = [done[k] for k in keys]
    if stream is not None:
        stream.write_text("".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in records))
    return records


def run_sweep(cfg, out_dir=None, progress=None) -> list[TrialRecord]:
    """Every grid point x every seed of an :class:`ExperimentConfig`."""
    cfg.validate()
    return run_specs(cfg.specs(), out_dir if out_dir is not None else cfg.output, workers=cfg.workers,
                     nodes=cfg.nodes, timeout=cfg.timeout, progress=progress)
