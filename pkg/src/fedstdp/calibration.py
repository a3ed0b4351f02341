"""Generator calibration: map extractor quality levels to a separation.

Each quality level has a target individual accuracy for the default edge
learner (nw=20, npc=50, lc=0.1) on the paired partition; the separation
hitting it is found by bisection, relying on accuracy rising with
separation.  ``medium`` sits halfway between the low and high separations.
The k-NN int8 individual accuracy at each level is reported alongside as a
sanity check against the extractor regime it stands in for.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .baselines import evaluate_baseline
from .experiment import DataSpec, TrialSpec, build_pool, run_trial
from .features import PartitionPlan, partition_noniid
from .rng import SeededRng

# target-finetuned extractor at nw=20 and the untuned extractor, respectively
QUALITY_TARGETS = {"high": 0.594, "low": 0.473}
KNN_BAND = (0.55, 0.70)


def learner_accuracy(separation: float, seeds, data: DataSpec = DataSpec()) -> float:
    spec_data = replace(data, separation=float(separation))
    accs = [run_trial(TrialSpec(seed=int(s), data=spec_data, baselines=False)).individual_mean for s in seeds]
    return float(np.mean(accs))


def knn_individual(separation: float, seeds, data: DataSpec = DataSpec(), k: int = 5) -> float:
    pool = build_pool(replace(data, separation=float(separation)))
    plan = PartitionPlan.paired()
    accs = []
    for s in seeds:
        part = partition_noniid(pool, plan, SeededRng(int(s)).derive("partition"))
        for n in plan.nodes:
            accs.append(evaluate_baseline("knn_int8", part.train[n], part.eval))
    return float(np.mean(accs))


def bisect_separation(target: float, seeds, lo: float = 0.0, hi: float = 80.0, iterations: int = 12,
                      data: DataSpec = DataSpec(), log=None) -> float:
    f_lo, f_hi = learner_accuracy(lo, seeds, data), learner_accuracy(hi, seeds, data)
    if not f_lo <= target <= f_hi:
        raise ValueError(f"target {target} outside [{f_lo:.3f}, {f_hi:.3f}] on [{lo}, {hi}]")
    for _ in range(iterations):
        mid = (lo + hi) / 2.0
        f = learner_accuracy(mid, seeds, data)
        if log:
            log(f"separation {mid:.4f} -> {f:.4f}")
        if f < target:
            lo = mid
        else:
            hi = mid
    return round((lo + hi) / 2.0, 2)


def calibrate(seeds=range(42, 52), iterations: int = 12, data: DataSpec = DataSpec(), log=None) -> dict:
    seps = {q: bisect_separation(t, seeds, iterations=iterations, data=data, log=log)
            for q, t in QUALITY_TARGETS.items()}
    seps["medium"] = round((seps["low"] + seps["high"]) / 2.0, 2)
    report = {}
    for q, s in sorted(seps.items()):
        report[q] = {
            "separation": s,
            "target": QUALITY_TARGETS.get(q),
            "learner_individual": learner_accuracy(s, seeds, data),
            "knn_int8_individual": knn_individual(s, seeds, data),
        }
    return report
