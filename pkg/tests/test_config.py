import json
from pathlib import Path

import pytest

from core.config import ConfigError, RunConfig, apply_overrides, load_config, output_root, parse_override
from core.consts import OUTPUT_ENV_VAR


def test_defaults_are_valid():
    config = load_config()
    assert config == RunConfig()
    assert config.qd_params().tau_xx == 35
    assert config.durations() == [1.3, 2.5, 5.0, 10.0, 15.0, 20.0]
    assert len(config.digest()) == 64


def test_digest_tracks_the_content():
    assert load_config().digest() == RunConfig().digest()
    assert load_config(overrides=['seed=2']).digest() != RunConfig().digest()


def test_overrides_are_json_with_string_fallback():
    assert parse_override('pulse.tau_l=5') == (['pulse', 'tau_l'], 5)
    assert parse_override('pulse.shape=square') == (['pulse', 'shape'], 'square')
    config = load_config(overrides=['pulse.tau_l=5', 'pulse.shape=square', 'sweeps.durations=[1, 2]'])
    assert config.pulse.tau_l == 5.0 and isinstance(config.pulse.tau_l, float)
    assert config.pulse.shape == 'square'
    assert config.sweeps.durations == (1.0, 2.0)


def test_overrides_do_not_mutate_their_input():
    data = {'pulse': {'tau_l': 3}}
    assert apply_overrides(data, ['pulse.tau_l=4'])['pulse']['tau_l'] == 4
    assert data['pulse']['tau_l'] == 3


def test_malformed_override():
    with pytest.raises(ConfigError):
        parse_override('pulse.tau_l')


def test_unknown_keys_are_errors():
    with pytest.raises(ConfigError) as info:
        load_config(overrides=['qd.tau_zz=3', 'colour=blue'])
    assert any(p.startswith('qd.tau_zz: unknown key') for p in info.value.problems)
    assert any(p.startswith('colour: unknown key') for p in info.value.problems)


def test_every_invalid_field_is_reported():
    with pytest.raises(ConfigError) as info:
        load_config(overrides=['qd.tau_xx=-1', 'spectra.window_x=[1.59, 1.58]', 'tomography.g2_x=1'])
    paths = {p.split(':')[0] for p in info.value.problems}
    assert {'qd.tau_xx', 'spectra.window_x', 'tomography.g2_x'} <= paths


def test_type_errors_are_reported():
    with pytest.raises(ConfigError) as info:
        load_config(overrides=['pulse.tau_l="abc"', 'tomography.enabled=1', 'sweeps.durations=5'])
    paths = {p.split(':')[0] for p in info.value.problems}
    assert {'pulse.tau_l', 'tomography.enabled', 'sweeps.durations'} <= paths


def test_binding_energy_band():
    with pytest.raises(ConfigError) as info:
        load_config(overrides=['qd.e_xx_line=1.588'])
    assert any(p.startswith('qd.e_xx_line') for p in info.value.problems)


def test_bandwidths_replace_durations():
    config = load_config(overrides=['sweeps.bandwidths_ueV=[78, 1170]'])
    first, second = config.durations()
    assert abs(first - 19.8) < 0.05 and abs(second - 1.32) < 0.005


def test_config_file(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'qd': {'fss': 2.0}, 'seed': 9}))
    config = load_config(path, ['pulse.area_over_pi=2'])
    assert config.qd.fss == 2.0 and config.seed == 9 and config.pulse.area_over_pi == 2.0
    assert load_config(path) == load_config(path)

    path.write_text('{not json')
    with pytest.raises(ConfigError):
        load_config(path)


def test_resolved_config_round_trips(tmp_path):
    config = load_config(overrides=['sweeps.durations=[2, 4, 8]', 'spectra.n_angles=8'])
    path = tmp_path / 'config.json'
    path.write_text(config.to_json())
    assert load_config(path) == config


def test_output_root_precedence(monkeypatch):
    config = RunConfig()
    monkeypatch.delenv(OUTPUT_ENV_VAR, raising=False)
    assert output_root(None, config) == Path('results')
    monkeypatch.setenv(OUTPUT_ENV_VAR, '/tmp/cascata-env')
    assert output_root(None, config) == Path('/tmp/cascata-env')
    assert output_root(Path('elsewhere'), config) == Path('elsewhere')
