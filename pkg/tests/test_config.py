import pytest
import yaml

from dcesim.config import (
    ExperimentConfig,
    dump_config,
    load_config,
    validate_config,
    with_overrides,
)
from dcesim.errors import ConfigError


def _problems(text):
    with pytest.raises(ConfigError) as info:
        validate_config(text)
    return info.value.problems


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.optics.pump_strength_sq == 4.1
    assert cfg.optics.detuning == 3.2
    assert cfg.optics.grid_points == 1024
    assert cfg.mw.mode_harmonics == (1, 2, 3)
    assert cfg.mw.n_modes == 3
    assert cfg.quantum.levels == 9
    assert cfg.quantum.decay_rate_per_s == 1e5
    assert cfg.analysis.measurement_time_us == 5.0
    assert validate_config("") == cfg
    assert load_config(None) == cfg


def test_dump_round_trip(tmp_path):
    cfg = with_overrides(ExperimentConfig(), optics={"overlap": 0.05}, quantum={"snapshot_times_us": [1.0, 2.5]})
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(cfg))
    back = load_config(path)
    assert back == cfg
    assert back.quantum.snapshot_times_us == (1.0, 2.5)


def test_hash_ignores_io_and_tracks_science():
    base = ExperimentConfig()
    moved = with_overrides(base, io={"output_dir": "elsewhere", "columnar_format": "json"})
    assert moved.config_hash == base.config_hash
    assert with_overrides(base, optics={"overlap": 0.2}).config_hash != base.config_hash
    assert with_overrides(base, quantum={"levels": 8}, analysis={"max_fock": 7}).config_hash != base.config_hash


def test_integers_accept_integral_floats():
    assert validate_config("quantum: {levels: 5.0}\nanalysis: {max_fock: 4}").quantum.levels == 5


def test_every_problem_is_reported_at_once():
    problems = _problems(
        """
optics:
  grid_points: 1000
  overlap: 2
  detuning: fast
quantum:
  levels: 1
"""
    )
    text = "\n".join(problems)
    assert "optics.grid_points" in text
    assert "optics.overlap" in text
    assert "optics.detuning: expected a number" in text
    assert "quantum.levels" in text
    assert len(problems) >= 4


def test_unknown_key_suggestions():
    (msg,) = _problems("optics: {detunning: 3.0}")
    assert "did you mean 'detuning'" in msg
    (msg,) = _problems("optics: {levels: 9}")
    assert "did you mean quantum.levels" in msg
    (msg,) = _problems("solitonn: {}")
    assert "unknown section 'solitonn'" in msg and "valid:" in msg and "optics" in msg
    (msg,) = _problems("mww: {}")
    assert "did you mean 'mw'" in msg


@pytest.mark.parametrize(
    "text, key",
    [
        ("mw: {time_samples: 66}", "mw.time_samples"),
        ("mw: {mode_harmonics: [1, 1, 2]}", "mw.mode_harmonics"),
        ("mw: {mode_harmonics: [0, 1]}", "mw.mode_harmonics"),
        ("optics: {mask: ring}", "optics.mask"),
        ("optics: {split_order: 3}", "optics.split_order"),
        ("optics: {step: -1}", "optics.step"),
        ("io: {columnar_format: xml}", "io.columnar_format"),
        ("analysis: {measurement_time_us: 6.0}", "analysis.measurement_time_us"),
        ("analysis: {measured_modes: [3]}", "analysis.measured_modes"),
        ("analysis: {max_fock: 9}", "analysis.max_fock"),
        ("quantum: {decay_rate_per_s: -1}", "quantum.decay_rate_per_s"),
        ("io: {figures: 1}", "io.figures"),
        ("mw: {mode_harmonics: 3}", "mw.mode_harmonics"),
    ],
)
def test_invalid_values(text, key):
    assert any(p.startswith(key) for p in _problems(text))


def test_yaml_and_shape_errors():
    assert "YAML syntax error" in _problems("optics: [unclosed")[0]
    with pytest.raises(ConfigError):
        validate_config("- just\n- a list\n")
    assert _problems("optics: 3") == ["optics: expected a mapping"]


def test_dump_is_plain_yaml():
    doc = yaml.safe_load(dump_config(ExperimentConfig()))
    assert set(doc) == {"optics", "mw", "quantum", "analysis", "io"}
    assert doc["mw"]["mode_harmonics"] == [1, 2, 3]
