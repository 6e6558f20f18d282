import pytest

from belldrift.errors import SchemaError
from belldrift.harness.config import ExperimentConfig, LhvSource, QuantumSource, dump_config, load_config
from belldrift.schedule import DriftIndexRule, ScheduleKind


def _base(**extra):
    d = {"seed": 1, "shots_per_bin": 1024, "source": {"type": "quantum", "theta_max": 0.1}}
    d.update(extra)
    return d


def test_minimal_quantum():
    cfg = ExperimentConfig.from_dict(_base())
    assert isinstance(cfg.source, QuantumSource)
    assert cfg.schedule is ScheduleKind.ROUND_ROBIN
    assert cfg.num_bins == 6
    assert cfg.null_trials == 1000


def test_lhv_ramp():
    cfg = ExperimentConfig.from_dict(_base(schedule="blocked", num_bins=12,
                                           source={"type": "lhv", "profile": "linear_ramp", "p_lo": 0, "p_hi": 0.15}))
    assert isinstance(cfg.source, LhvSource)
    assert cfg.source.p_profile(12).values[-1] == pytest.approx(0.15)
    assert cfg.schedule is ScheduleKind.BLOCKED


@pytest.mark.parametrize("key", ["seed", "shots_per_bin", "source"])
def test_required_keys(key):
    d = _base()
    del d[key]
    with pytest.raises(SchemaError, match=key):
        ExperimentConfig.from_dict(d)


@pytest.mark.parametrize("data", [
    _base(bogus=1),
    _base(source={"type": "quantum", "theta": 0.1}),
    _base(noise={"readout": 0.1}),
    _base(source={"type": "wave"}),
    _base(seed="abc"),
    _base(seed=True),
    _base(num_bins=0),
    _base(shots_per_bin=-5),
    _base(schedule="zigzag"),
    _base(schedule="custom"),
    _base(source={"type": "quantum", "axes": "bogus"}),
    _base(source={"type": "lhv", "profile": "constant"}),
    _base(source={"type": "lhv", "profile": "linear_ramp", "p_lo": 0.0}),
    _base(source={"type": "lhv", "profile": "constant", "p": 0.5}),
    _base(noise={"readout_flip": [0.1, 0.2, 0.3]}),
    _base(noise={"depolarizing_rate": 2.0}),
])
def test_invalid_rejected(data):
    with pytest.raises(SchemaError):
        ExperimentConfig.from_dict(data)


def test_readout_flip_scalar_expands():
    cfg = ExperimentConfig.from_dict(_base(noise={"readout_flip": 0.02}))
    assert cfg.noise.readout_flip == (0.02, 0.02)
    assert cfg.noise.spec().assignment.shape == (4, 4)


def test_drift_index_rule_parsed():
    cfg = ExperimentConfig.from_dict(_base(drift_index_rule="per_slot"))
    assert cfg.drift_index_rule is DriftIndexRule.PER_SLOT


def test_yaml_round_trip(tmp_path):
    cfg = ExperimentConfig.from_dict(_base(mitigation=True, noise={"readout_flip": [0.01, 0.03]}, experiment_id="x"))
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


def test_yaml_syntax_error_has_line(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("seed: 1\nsource: [unclosed\n")
    with pytest.raises(SchemaError, match="line"):
        load_config(path)
