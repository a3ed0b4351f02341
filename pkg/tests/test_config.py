import pytest

from fedstdp.config import DESK_GRID, PAPER_GRID, ExperimentConfig, paper_scale, validate_document
from fedstdp.errors import ConfigurationError
from fedstdp.experiment import DataSpec

FULL = """
[data]
quality = "low"
dim = 128

[partition]
n_nodes = 4
eval_per_class = 50

[binarize]
method = "entropy"
thresholds = "shared"

[stdp]
nw = [10, 20]
npc = [25]
lc = [0.1, 1]
epochs = 2

[federation]
strategies = ["fedavg", "fedunion"]
rounds = 3
regime = "fedavg"

[baselines]
enabled = false
k = 3

[run]
seeds = [1, 2, 3]
nodes = ["127.0.0.1:7070", "127.0.0.1:7071"]
output = "runs/x"
workers = 2
timeout = 5
"""


def test_defaults():
    cfg = ExperimentConfig().validate()
    assert cfg.in_process and cfg.seeds == (42, 43, 44, 45, 46)
    assert len(cfg.grid()) == 12 and len(cfg.specs()) == 60


def test_full_document_round_trip():
    cfg = ExperimentConfig.from_toml(FULL)
    assert cfg.data == DataSpec(quality="low", dim=128)
    assert (cfg.n_nodes, cfg.eval_per_class, cfg.method, cfg.thresholds) == (4, 50, "entropy", "shared")
    assert cfg.lc == (0.1, 1.0) and cfg.epochs == 2
    assert cfg.nodes == ("127.0.0.1:7070", "127.0.0.1:7071") and not cfg.in_process
    assert cfg.baseline_cfg.k == 3 and cfg.baselines is False
    specs = cfg.specs()
    assert len(specs) == 4 * 3
    # grid-major: the first three specs share a config point
    assert [s.seed for s in specs[:3]] == [1, 2, 3]
    assert len({s.stdp for s in specs[:3]}) == 1
    assert specs[0].rounds == 3 and specs[0].regime == "fedavg"


def test_load_from_file(tmp_path):
    p = tmp_path / "e.toml"
    p.write_text(FULL)
    assert ExperimentConfig.load(p).source == str(p)


@pytest.mark.parametrize("doc,where", [
    ({"stdp": {"nw": []}}, "stdp.nw"),
    ({"stdp": {"lc": [1.5]}}, "stdp.lc.0"),
    ({"data": {"quality": "ultra"}}, "data.quality"),
    ({"federation": {"regime": "fedbest"}}, "federation.regime"),
    ({"run": {"seeds": []}}, "run.seeds"),
    ({"run": {"nodes": ["no-port"]}}, "run.nodes"),
    ({"bogus": {}}, "<root>"),
    ({"stdp": {"nw": [20], "extra": 1}}, "stdp"),
])
def test_schema_errors_name_the_key(doc, where):
    with pytest.raises(ConfigurationError, match=f"config {where}"):
        validate_document(doc)


def test_bad_toml_is_a_configuration_error():
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_toml("[stdp\nnw = 3")


def test_zero_seeds_rejected():
    with pytest.raises(ConfigurationError):
        ExperimentConfig().with_overrides(seeds=[])


def test_semantic_validation():
    with pytest.raises(ConfigurationError):
        ExperimentConfig().with_overrides(nw=[80])
    with pytest.raises(ConfigurationError):
        ExperimentConfig(rounds=0).validate()
    with pytest.raises(ConfigurationError):
        ExperimentConfig(strategies=("fedprox",)).validate()


def test_overrides_cast_lc():
    cfg = ExperimentConfig().with_overrides(nw=[30], npc=[25], lc=[1])
    assert cfg.lc == (1.0,) and isinstance(cfg.lc[0], float)
    assert len(cfg.specs()) == 5


def test_full_scale_counts():
    cfg = paper_scale(ExperimentConfig())
    assert len(cfg.grid()) == 42
    assert len(cfg.specs()) == 420
    assert list(cfg.nw) == PAPER_GRID["nw"] and list(ExperimentConfig().nw) == DESK_GRID["nw"]
