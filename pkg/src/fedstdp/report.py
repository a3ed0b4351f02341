"""Record dumps, summaries and plot-ready tables.

``records.csv`` columns, in order:

==================  ==========================================================
seed                trial seed
nw .. regime        the config point (see ``CONFIG_COLUMNS``)
status, error       ``ok`` or ``failed`` plus the failure message
individual          mean per-node accuracy of the local models
fedavg .. fedmaj.   mean per-node accuracy after each merge (round 1)
best                oracle: rowwise max of the four strategy columns
best_strategies     every strategy attaining ``best``, ``|``-joined
<baseline>_ind/fed  baseline accuracy per node (mean) and pooled
payload_bytes       weight bytes one node exchanges per round
individual_nodes    JSON object node -> accuracy
federated_nodes     JSON object strategy -> node -> accuracy
neuron_counts       JSON list, per round, class -> rows
round_metrics       JSON list, per round, metric -> mean accuracy
train_s, total_s    wall-clock timing; excluded from determinism checks
==================  ==========================================================

Floats are written with ``repr`` so a reload reproduces every value exactly.
"""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import BASELINES
from .experiment import STRATEGY_NAMES, TrialRecord
from .rng import SeededRng
from .stats import paired_comparison, welch_t

CONFIG_COLUMNS = (
    "nw", "npc", "lc", "epochs", "dim", "quality", "separation", "data_seed",
    "n_nodes", "per_class", "method", "thresholds", "rounds", "regime",
)
TIMING_COLUMNS = ("train_s", "total_s")
_INT_CONFIG = {"nw", "npc", "epochs", "dim", "data_seed", "n_nodes", "per_class", "rounds"}
_FLOAT_CONFIG = {"lc", "separation"}


def csv_header() -> list[str]:
    cols = ["seed", *CONFIG_COLUMNS, "status", "error", "individual", *STRATEGY_NAMES, "best", "best_strategies"]
    for b in BASELINES:
        cols += [f"{b}_ind", f"{b}_fed"]
    cols += ["payload_bytes", "individual_nodes", "federated_nodes", "neuron_counts", "round_metrics", *TIMING_COLUMNS]
    return cols


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json(v) -> str:
    return json.dumps(v, sort_keys=True, separators=(",", ":"))


def record_row(rec: TrialRecord) -> dict:
    d = rec.to_dict()
    row = {"seed": rec.seed, **{k: rec.config.get(k) for k in CONFIG_COLUMNS},
           "status": rec.status, "error": rec.error}
    if rec.ok:
        row["individual"] = rec.individual_mean
        for s in STRATEGY_NAMES:
            row[s] = rec.strategy_mean(s)
        row["best"] = rec.best
        row["best_strategies"] = "|".join(rec.best_strategies)
    for b in BASELINES:
        res = rec.baselines.get(b)
        row[f"{b}_ind"] = res["individual"] if res else None
        row[f"{b}_fed"] = res["federated"] if res else None
    row["payload_bytes"] = rec.payload_bytes
    row["individual_nodes"] = _json(d["individual"])
    row["federated_nodes"] = _json(d["federated"])
    row["neuron_counts"] = _json(d["neuron_counts"])
    row["round_metrics"] = _json(d["rounds"])
    for t in TIMING_COLUMNS:
        row[t] = rec.timing.get(t)
    return row


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = csv_header()
    w.writerow(header)
    for rec in records:
        row = record_row(rec)
        w.writerow([_fmt(row.get(c)) for c in header])
    return buf.getvalue()


def _parse_config(k: str, v: str):
    if v == "":
        return None
    if k in _INT_CONFIG:
        return int(v)
    if k in _FLOAT_CONFIG:
        return float(v)
    return v


def records_from_csv(text: str) -> list[TrialRecord]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        baselines = {}
        for b in BASELINES:
            if row[f"{b}_ind"] != "":
                baselines[b] = {"individual": float(row[f"{b}_ind"]), "federated": float(row[f"{b}_fed"])}
        timing = {t: float(row[t]) for t in TIMING_COLUMNS if row.get(t, "") != ""}
        out.append(TrialRecord.from_dict({
            "seed": int(row["seed"]),
            "config": {k: _parse_config(k, row[k]) for k in CONFIG_COLUMNS},
            "status": row["status"],
            "error": row["error"] or None,
            "individual": json.loads(row["individual_nodes"]),
            "federated": json.loads(row["federated_nodes"]),
            "baselines": baselines,
            "neuron_counts": json.loads(row["neuron_counts"]),
            "rounds": json.loads(row["round_metrics"]),
            "payload_bytes": int(row["payload_bytes"]),
            "timing": timing,
        }))
    return out


def strip_timing(csv_text: str) -> str:
    """The CSV without its timing columns, for determinism checks."""
    rows = list(csv.reader(io.StringIO(csv_text)))
    keep = [i for i, c in enumerate(rows[0]) if c not in TIMING_COLUMNS]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([r[i] for i in keep])
    return buf.getvalue()


def record_json(rec: TrialRecord) -> str:
    return json.dumps(rec.to_dict(), sort_keys=True)


def read_records(path) -> list[TrialRecord]:
    """Load a ``.jsonl`` or ``.csv`` record dump."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".csv":
        return records_from_csv(text)
    return [TrialRecord.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


# -- summaries ----------------------------------------------------------------

def config_label(config: dict) -> str:
    return json.dumps(config, sort_keys=True)


def group_by_config(records) -> dict:
    groups = defaultdict(list)
    for r in records:
        if r.ok:
            groups[config_label(r.config)].append(r)
    return groups


def _mean(xs) -> float | None:
    xs = list(xs)
    return float(np.mean(xs)) if xs else None


def _std(xs) -> float | None:
    xs = list(xs)
    return float(np.std(xs, ddof=1)) if len(xs) > 1 else None


def config_table(records) -> list[dict]:
    """One row per config point, ordered by mean best accuracy (descending)."""
    rows = []
    for label, recs in group_by_config(records).items():
        row = {"config": recs[0].config, "n": len(recs),
               "individual": _mean(r.individual_mean for r in recs)}
        for s in STRATEGY_NAMES:
            row[s] = _mean(r.strategy_mean(s) for r in recs)
        row["best"] = _mean(r.best for r in recs)
        row["best_std"] = _std(r.best for r in recs)
        row["_label"] = label
        rows.append(row)
    rows.sort(key=lambda r: (-r["best"], r["_label"]))
    for r in rows:
        del r["_label"]
    return rows


def top_configs(records, k: int) -> list[dict]:
    return [row["config"] for row in config_table(records)[:k]]


def strategy_dominance(records) -> dict:
    """Mean accuracy and times-best per strategy; ties credit every tied strategy."""
    ok = [r for r in records if r.ok]
    out = {}
    for s in STRATEGY_NAMES:
        wins = sum(s in r.best_strategies for r in ok)
        out[s] = {"mean": _mean(r.strategy_mean(s) for r in ok), "times_best": wins,
                  "pct_best": wins / len(ok) if ok else None}
    return out


def sensitivity(records, params=("nw", "npc", "lc", "method", "dim")) -> dict:
    """Mean best accuracy per value of each parameter, marginalizing the rest."""
    ok = [r for r in records if r.ok]
    out = {}
    for p in params:
        vals = defaultdict(list)
        for r in ok:
            vals[r.config.get(p)].append(r.best)
        if len(vals) > 1:
            out[p] = {str(v): _mean(x) for v, x in sorted(vals.items(), key=lambda kv: str(kv[0]))}
    return out


def baseline_table(records) -> dict:
    out = {}
    for b in BASELINES:
        vals = [r.baselines[b] for r in records if r.ok and b in r.baselines]
        if vals:
            out[b] = {"individual": _mean(v["individual"] for v in vals),
                      "federated": _mean(v["federated"] for v in vals), "n": len(vals)}
    return out


def summarize(records) -> dict:
    records = list(records)
    ok = [r for r in records if r.ok]
    return {
        "records": len(records),
        "ok": len(ok),
        "failed": len(records) - len(ok),
        "individual": _mean(r.individual_mean for r in ok),
        "best": _mean(r.best for r in ok),
        "dominance": strategy_dominance(records),
        "configs": config_table(records),
        "sensitivity": sensitivity(records),
        "baselines": baseline_table(records),
    }


# -- plot-ready long tables ------------------------------------------------------

def curve_rows(records) -> list[dict]:
    """Long format: one row per (config point, metric) with mean and std."""
    rows = []
    for row, recs in zip(config_table(records), _groups_in_table_order(records)):
        c = row["config"]
        metrics = {"individual": [r.individual_mean for r in recs], "best": [r.best for r in recs]}
        metrics.update({s: [r.strategy_mean(s) for r in recs] for s in STRATEGY_NAMES})
        for m, xs in metrics.items():
            rows.append({"dim": c.get("dim"), "nw": c.get("nw"), "npc": c.get("npc"), "lc": c.get("lc"),
                         "method": c.get("method"), "metric": m, "mean": _mean(xs), "std": _std(xs), "n": len(xs)})
    rows.sort(key=lambda r: (r["dim"], r["nw"], r["npc"], r["lc"], str(r["method"]), r["metric"]))
    return rows


def _groups_in_table_order(records):
    groups = group_by_config(records)
    return [groups[config_label(row["config"])] for row in config_table(records)]


def dim_rows(records) -> list[dict]:
    """Per width: the best config's mean best accuracy and its nw."""
    by_dim = defaultdict(list)
    for row in config_table(records):
        by_dim[row["config"].get("dim")].append(row)
    out = []
    for dim in sorted(by_dim):
        top = by_dim[dim][0]
        out.append({"dim": dim, "metric": "best", "mean": top["best"], "best_nw": top["config"].get("nw"),
                    "n": top["n"]})
        out.append({"dim": dim, "metric": "individual", "mean": top["individual"],
                    "best_nw": top["config"].get("nw"), "n": top["n"]})
    return out


def _write_rows(path: Path, rows: list[dict], columns: list[str]):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    path.write_text(buf.getvalue())


# -- comparisons ----------------------------------------------------------------

@dataclass
class Comparison:
    """A named paired (or, with ``paired=False``, Welch) comparison ``x - y``."""

    name: str
    x: list
    y: list
    paired: bool = True

    def evaluate(self, seed: int = 0) -> dict:
        if self.paired:
            out = paired_comparison(self.x, self.y, rng=SeededRng(seed).derive("bootstrap", self.name))
        else:
            t, p, dof = welch_t(self.x, self.y)
            out = {"n_x": len(self.x), "n_y": len(self.y), "mean_x": float(np.mean(self.x)),
                   "mean_y": float(np.mean(self.y)), "delta": float(np.mean(self.x) - np.mean(self.y)),
                   "t": t, "p": p, "dof": dof}
        return {"name": self.name, "paired": self.paired, **out}


def pair_by(records_x, records_y, metric, match=("seed",)) -> tuple[list, list]:
    """Align two record sets on ``match`` keys; ``metric`` maps a record to a float."""
    def k(r):
        return tuple(r.seed if m == "seed" else r.config.get(m) for m in match)
    ys = {k(r): r for r in records_y if r.ok}
    xs, yv = [], []
    for r in sorted((r for r in records_x if r.ok), key=lambda r: (str(k(r)))):
        if k(r) in ys:
            xs.append(metric(r))
            yv.append(metric(ys[k(r)]))
    return xs, yv


DEFAULT_ANALYSES = ("summary", "curves")


def emit_report(records, analyses=DEFAULT_ANALYSES, out_dir=".", extra: dict | None = None) -> dict:
    """Write the record dump and the requested analyses into ``out_dir``.

    ``analyses`` holds ``"summary"``, ``"curves"`` and/or
    :class:`Comparison` objects; an empty list writes the dump only.
    Returns the paths written.
    """
    records = list(records)
    if not records:
        raise ValueError("a report needs at least one record")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "records.csv", "jsonl": out / "records.jsonl"}
    paths["csv"].write_text(records_to_csv(records))
    paths["jsonl"].write_text("".join(record_json(r) + "\n" for r in records))
    analyses = list(analyses)
    if not analyses:
        return paths
    summary = {}
    if "summary" in analyses:
        summary.update(summarize(records))
    comps = [a.evaluate() for a in analyses if isinstance(a, Comparison)]
    if comps:
        summary["comparisons"] = comps
    if extra:
        summary.update(extra)
    if summary:
        paths["summary"] = out / "summary.json"
        paths["summary"].write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if "curves" in analyses and any(r.ok for r in records):
        paths["curve_nw"] = out / "accuracy_vs_nw.csv"
        _write_rows(paths["curve_nw"], curve_rows(records),
                    ["dim", "nw", "npc", "lc", "method", "metric", "mean", "std", "n"])
        paths["curve_dim"] = out / "accuracy_vs_dim.csv"
        _write_rows(paths["curve_dim"], dim_rows(records), ["dim", "metric", "mean", "best_nw", "n"])
    return paths
