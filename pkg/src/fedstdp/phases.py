"""The analysis phases A-H, at desk scale by default.

=====  =========================================================  ============
phase  content                                                    needs
=====  =========================================================  ============
A      generator calibration (stands in for extractor training)   -
B      main sweep with software baselines                         -
C      top-5 configs of B x {mean, median, entropy}               B
D      top-5 configs of B on the ``medium`` quality generator     B
E      width scaling over 64 / 128 / 256 features                 -
F      top-3 configs of B x {FedUnion, FedAvg} retraining x 5     B
G      entropy thresholds on 256-wide features vs E's mean runs   E
H      four virtual nodes vs two, top-3 configs of B              B
=====  =========================================================  ============

Each phase writes ``<out>/phase_<X>/`` holding the record dump, a
``summary.json`` and a ``phase.json`` with the phase-specific tables and
statistics.  Counts reported are the exact numbers of trials run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .calibration import calibrate
from .config import DESK_GRID, DESK_SEEDS, PAPER_GRID, PAPER_SEEDS, ExperimentConfig
from .errors import ConfigurationError, PrerequisiteError
from .experiment import TrialRecord, TrialSpec, stdp_grid, trial_specs
from .features import QUALITY_SEPARATION
from .report import Comparison, config_table, emit_report, pair_by, read_records, top_configs
from .stdp import StdpConfig
from .sweep import STREAM, run_specs

PHASES = tuple("ABCDEFGH")
PREREQUISITES = {"C": "B", "D": "B", "F": "B", "H": "B", "G": "E"}
METHODS = ("mean", "median", "entropy")
MULTI_ROUND_REGIMES = ("fedunion", "fedavg")


@dataclass(frozen=True)
class PhaseScale:
    seeds: tuple                 # phases B, D, F, H
    long_seeds: tuple            # phases C, E, G
    grid: dict
    widths: dict                 # dim -> nw list, at npc=25, lc=0.1
    calib_iterations: int = 8
    rounds: int = 5


DESK = PhaseScale(
    seeds=tuple(DESK_SEEDS),
    long_seeds=tuple(DESK_SEEDS),
    grid=DESK_GRID,
    widths={64: (10, 20, 30, 40), 128: (20, 30, 40, 50, 60), 256: (20, 40, 60, 80, 100)},
)
PAPER = PhaseScale(
    seeds=tuple(PAPER_SEEDS),
    long_seeds=tuple(range(42, 72)),
    grid=PAPER_GRID,
    widths={64: (10, 15, 20, 25, 30, 35, 40), 128: (15, 20, 30, 40, 50, 60), 256: (20, 30, 40, 60, 80, 100)},
    calib_iterations=12,
)


def scale_for(paper_scale: bool, seeds=None) -> PhaseScale:
    scale = PAPER if paper_scale else DESK
    if seeds is not None:
        seeds = tuple(int(s) for s in seeds)
        if not seeds:
            raise ConfigurationError("a phase needs at least one seed")
        scale = replace(scale, seeds=seeds, long_seeds=seeds)
    return scale


def phase_dir(out, phase: str) -> Path:
    return Path(out) / f"phase_{phase}"


def load_phase_records(out, phase: str, needed_by: str) -> list[TrialRecord]:
    path = phase_dir(out, phase) / STREAM
    if not path.exists():
        raise PrerequisiteError(
            f"phase {needed_by} needs the results of phase {phase} in {path.parent}; run phase {phase} first"
        )
    return read_records(path)


def _stdp_from(config: dict) -> StdpConfig:
    return StdpConfig(num_weights=int(config["nw"]), neurons_per_class=int(config["npc"]),
                      learning_competition=float(config["lc"]), epochs=int(config.get("epochs", 5)))


def _best(r):
    return r.best


class PhaseRunner:
    """Runs phases against one output root; ``cfg`` supplies data and partition."""

    def __init__(self, cfg: ExperimentConfig | None = None, out=None, paper_scale: bool = False,
                 seeds=None, progress=None, log=None):
        self.cfg = cfg or ExperimentConfig()
        self.out = Path(out if out is not None else self.cfg.output)
        self.scale = scale_for(paper_scale, seeds)
        self.progress = progress
        self.log = log or (lambda msg: None)

    def base(self, **kw) -> TrialSpec:
        return replace(self.cfg.base_spec(), **kw)

    def _run(self, phase: str, specs, tag: str | None = None) -> list[TrialRecord]:
        where = phase_dir(self.out, phase) if tag is None else phase_dir(self.out, phase) / tag
        return run_specs(specs, where, workers=self.cfg.workers, nodes=self.cfg.nodes,
                         timeout=self.cfg.timeout, progress=self.progress)

    def _finish(self, phase: str, records, report: dict, comparisons=()) -> dict:
        report = {"phase": phase, "runs": len(records),
                  "failed": sum(not r.ok for r in records), **report}
        d = phase_dir(self.out, phase)
        d.mkdir(parents=True, exist_ok=True)
        if records:
            emit_report(records, ("summary", "curves", *comparisons), d)
        evaluated = [c.evaluate() for c in comparisons]
        if evaluated:
            report["comparisons"] = evaluated
        (d / "phase.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=str) + "\n")
        return report

    def _top(self, needed_by: str, k: int) -> tuple[list[TrialRecord], list[dict]]:
        recs = load_phase_records(self.out, PREREQUISITES[needed_by], needed_by)
        tops = top_configs(recs, k)
        if not tops:
            raise PrerequisiteError(f"phase {PREREQUISITES[needed_by]} has no successful trials to rank")
        return recs, tops

    # -- phases -----------------------------------------------------------------

    def phase_A(self) -> dict:
        seeds = self.scale.seeds
        report = calibrate(seeds=seeds, iterations=self.scale.calib_iterations, data=self.cfg.data, log=self.log)
        return self._finish("A", [], {"calibration": report, "frozen_separation": dict(QUALITY_SEPARATION),
                                      "seeds": list(seeds)})

    def phase_B(self) -> dict:
        g = self.scale.grid
        grid = stdp_grid(g["nw"], g["npc"], g["lc"], epochs=self.cfg.epochs)
        specs = trial_specs(self.base(baselines=True), grid, self.scale.seeds)
        recs = self._run("B", specs)
        table = config_table(recs)
        comps = []
        if table:
            top = [r for r in recs if r.ok and r.config == table[0]["config"]]
            comps = [
                Comparison("fedunion_vs_individual", [r.strategy_mean("fedunion") for r in top],
                           [r.individual_mean for r in top]),
                Comparison("fedavg_vs_individual", [r.strategy_mean("fedavg") for r in top],
                           [r.individual_mean for r in top]),
            ]
        return self._finish("B", recs, {"top5": table[:5], "grid_points": len(grid)}, comps)

    def phase_C(self) -> dict:
        _, tops = self._top("C", 5)
        specs = [spec for m in METHODS
                 for spec in trial_specs(self.base(method=m, baselines=False), [_stdp_from(c) for c in tops],
                                         self.scale.long_seeds)]
        recs = self._run("C", specs)
        by = {m: [r for r in recs if r.config["method"] == m] for m in METHODS}
        match = ("nw", "npc", "lc", "seed")
        comps = [Comparison(f"{a}_vs_{b}", *pair_by(by[a], by[b], _best, match))
                 for a, b in (("entropy", "mean"), ("entropy", "median"), ("mean", "median"))]
        table = [{"config": row["config"], "individual": row["individual"], "fedunion": row["fedunion"],
                  "best": row["best"]} for row in config_table(recs)]
        return self._finish("C", recs, {"configs": table}, comps)

    def phase_D(self) -> dict:
        b_recs, tops = self._top("D", 5)
        data = replace(self.cfg.data, quality="medium", separation=None)
        specs = trial_specs(self.base(data=data, baselines=True), [_stdp_from(c) for c in tops], self.scale.seeds)
        recs = self._run("D", specs)
        match = ("nw", "npc", "lc", "seed")
        comps = [Comparison("medium_vs_high_best", *pair_by(recs, b_recs, _best, match))]
        return self._finish("D", recs, {"configs": config_table(recs)}, comps)

    def phase_E(self) -> dict:
        specs = []
        for dim, nws in self.scale.widths.items():
            data = replace(self.cfg.data, dim=dim)
            grid = stdp_grid(nws, (25,), (0.1,), epochs=self.cfg.epochs)
            specs += trial_specs(self.base(data=data, baselines=False), grid, self.scale.long_seeds)
        recs = self._run("E", specs)
        widths, comps = {}, []
        optimum = {}
        for dim in self.scale.widths:
            sub = [r for r in recs if r.config["dim"] == dim]
            table = config_table(sub)
            if not table:
                continue
            widths[dim] = {"best_nw": table[0]["config"]["nw"], "best": table[0]["best"],
                           "individual": table[0]["individual"],
                           "by_nw": {row["config"]["nw"]: {"best": row["best"], "individual": row["individual"]}
                                     for row in sorted(table, key=lambda r: r["config"]["nw"])}}
            optimum[dim] = [r.best for r in sub if r.ok and r.config == table[0]["config"]]
        dims = sorted(optimum)
        for lo, hi in zip(dims, dims[1:]):
            comps.append(Comparison(f"best_{hi}_vs_{lo}", optimum[hi], optimum[lo], paired=False))
        if len(dims) > 2:
            comps.append(Comparison(f"best_{dims[-1]}_vs_{dims[0]}", optimum[dims[-1]], optimum[dims[0]], paired=False))
        return self._finish("E", recs, {"widths": widths}, comps)

    def phase_F(self) -> dict:
        _, tops = self._top("F", 3)
        specs = [spec for regime in MULTI_ROUND_REGIMES
                 for spec in trial_specs(self.base(rounds=self.scale.rounds, regime=regime, baselines=False),
                                         [_stdp_from(c) for c in tops], self.scale.seeds)]
        recs = self._run("F", specs)
        table = {}
        for regime in MULTI_ROUND_REGIMES:
            sub = [r for r in recs if r.ok and r.config["regime"] == regime]
            if not sub:
                continue
            series = np.array([r.round_series("fedunion") for r in sub])
            own = np.array([r.round_series(regime) for r in sub])
            indiv = np.array([[x["individual"] for x in r.rounds] for r in sub])
            table[f"{regime}_retrain"] = {
                "rounds": series.mean(axis=0).tolist(),
                f"{regime}_evaluated": own.mean(axis=0).tolist(),
                "individual": indiv.mean(axis=0).tolist(),
                "n": len(sub),
            }
        counts = {regime: [r.neuron_counts for r in recs if r.ok and r.config["regime"] == regime][:1]
                  for regime in MULTI_ROUND_REGIMES}
        return self._finish("F", recs, {"table": table, "neuron_counts_example": counts})

    def phase_G(self) -> dict:
        e_recs = load_phase_records(self.out, "E", "G")
        wide = max(self.scale.widths)
        mean_recs = [r for r in e_recs if r.config["dim"] == wide and r.config["method"] == "mean"]
        if not mean_recs:
            raise PrerequisiteError(f"phase E holds no {wide}-wide results; run phase E first")
        data = replace(self.cfg.data, dim=wide)
        grid = stdp_grid(self.scale.widths[wide], (25,), (0.1,), epochs=self.cfg.epochs)
        specs = trial_specs(self.base(data=data, method="entropy", baselines=False), grid, self.scale.long_seeds)
        recs = self._run("G", specs)
        comps, rows = [], []
        for nw in self.scale.widths[wide]:
            ent = [r for r in recs if r.config["nw"] == nw]
            mean = [r for r in mean_recs if r.config["nw"] == nw]
            x, y = pair_by(ent, mean, _best)
            if x:
                comps.append(Comparison(f"entropy_vs_mean_nw{nw}", x, y))
                rows.append({"nw": nw, "mean": float(np.mean(y)), "entropy": float(np.mean(x)), "n": len(x)})
        return self._finish("G", recs, {"table": rows}, comps)

    def phase_H(self) -> dict:
        b_recs, tops = self._top("H", 3)
        specs = trial_specs(self.base(n_nodes=4, per_class=None, baselines=False),
                            [_stdp_from(c) for c in tops], self.scale.seeds)
        recs = self._run("H", specs)
        match = ("nw", "npc", "lc", "seed")
        two = [r for r in b_recs if r.config["n_nodes"] == 2]
        comps = [Comparison(f"{s}_n4_vs_n2", *pair_by(recs, two, lambda r, s=s: r.strategy_mean(s), match))
                 for s in ("fedunion", "fedavg")]
        return self._finish("H", recs, {"configs": tops}, comps)

    def run(self, phase: str) -> dict:
        phase = phase.upper()
        if phase not in PHASES:
            raise ConfigurationError(f"unknown phase {phase!r}; choose from {', '.join(PHASES)}")
        self.log(f"phase {phase}")
        return getattr(self, f"phase_{phase}")()

    def run_all(self) -> dict:
        reports = {p: self.run(p) for p in PHASES}
        reports["total_runs"] = sum(r["runs"] for r in reports.values())
        return reports


def run_phase(phase: str, cfg: ExperimentConfig | None = None, out=None, paper_scale: bool = False,
              seeds=None, progress=None, log=None) -> dict:
    return PhaseRunner(cfg, out, paper_scale, seeds, progress, log).run(phase)
