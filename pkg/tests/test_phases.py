import json
from dataclasses import replace

import pytest

from fedstdp.baselines import BaselineConfig
from fedstdp.config import ExperimentConfig
from fedstdp.errors import ConfigurationError, PrerequisiteError
from fedstdp.phases import DESK, PAPER, PhaseRunner, phase_dir, scale_for

CFG = ExperimentConfig(epochs=1, baseline_cfg=BaselineConfig(epochs=1))
TINY = replace(DESK, seeds=(42, 43), long_seeds=(42, 43),
               grid={"nw": [20, 30], "npc": [10], "lc": [0.1]},
               widths={64: (20,), 128: (20, 40)}, rounds=3)


def _runner(out):
    r = PhaseRunner(CFG, out)
    r.scale = TINY
    return r


@pytest.fixture(scope="module")
def after_b(tmp_path_factory):
    out = tmp_path_factory.mktemp("phases")
    r = _runner(out)
    return out, r, r.run("B")


def test_scales():
    assert scale_for(False) is DESK and scale_for(True) is PAPER
    assert scale_for(False, [1, 2]).long_seeds == (1, 2)
    with pytest.raises(ConfigurationError):
        scale_for(False, [])


def test_prerequisites_are_named(tmp_path):
    r = _runner(tmp_path)
    for phase, needs in (("C", "B"), ("D", "B"), ("F", "B"), ("H", "B"), ("G", "E")):
        with pytest.raises(PrerequisiteError, match=f"run phase {needs} first"):
            r.run(phase)
    with pytest.raises(ConfigurationError):
        r.run("Z")


def test_phase_b_report(after_b):
    out, _, rep = after_b
    assert rep["runs"] == 4 and rep["failed"] == 0 and rep["grid_points"] == 2
    assert [c["name"] for c in rep["comparisons"]] == ["fedunion_vs_individual", "fedavg_vs_individual"]
    on_disk = json.loads((phase_dir(out, "B") / "phase.json").read_text())
    assert on_disk["runs"] == 4
    assert (phase_dir(out, "B") / "records.csv").exists()


def test_phase_f_table_shape(after_b):
    _, r, _ = after_b
    rep = r.run("F")
    assert rep["runs"] == 2 * 2 * 2
    for regime in ("fedunion", "fedavg"):
        row = rep["table"][f"{regime}_retrain"]
        assert len(row["rounds"]) == 3 and len(row[f"{regime}_evaluated"]) == 3 and row["n"] == 4
    union_counts = rep["neuron_counts_example"]["fedunion"][0]
    assert union_counts[1] == union_counts[2]


def test_phase_h_pairs_with_b(after_b):
    _, r, _ = after_b
    rep = r.run("H")
    assert rep["runs"] == 4
    names = {c["name"]: c for c in rep["comparisons"]}
    assert set(names) == {"fedunion_n4_vs_n2", "fedavg_n4_vs_n2"}
    assert names["fedavg_n4_vs_n2"]["n"] == 4


def test_phase_c_and_d(after_b):
    _, r, _ = after_b
    c = r.run("C")
    assert c["runs"] == 3 * 2 * 2
    assert {x["name"] for x in c["comparisons"]} == {"entropy_vs_mean", "entropy_vs_median", "mean_vs_median"}
    d = r.run("D")
    assert d["runs"] == 4 and d["comparisons"][0]["n"] == 4


def test_phase_e_then_g(tmp_path):
    r = _runner(tmp_path)
    e = r.run("E")
    assert e["runs"] == 3 * 2
    assert set(e["widths"]) == {64, 128}
    assert e["comparisons"][0]["paired"] is False
    g = r.run("G")
    assert g["runs"] == 2 * 2
    assert [row["nw"] for row in g["table"]] == [20, 40]


def test_frozen_separations_hit_their_targets():
    from fedstdp.calibration import QUALITY_TARGETS, learner_accuracy
    from fedstdp.features import QUALITY_SEPARATION

    accs = {q: learner_accuracy(s, range(42, 52)) for q, s in QUALITY_SEPARATION.items()}
    assert accs["low"] < accs["medium"] < accs["high"]
    for q, target in QUALITY_TARGETS.items():
        assert accs[q] == pytest.approx(target, abs=0.01)
    assert QUALITY_SEPARATION["medium"] == pytest.approx(
        (QUALITY_SEPARATION["low"] + QUALITY_SEPARATION["high"]) / 2, abs=0.01)


def test_bisection_brackets():
    from fedstdp.calibration import bisect_separation

    with pytest.raises(ValueError):
        bisect_separation(0.99, [42], iterations=1)
