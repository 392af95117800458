import glob
import json
import os

import numpy as np
import pytest

import config_manager
from config_manager import (DEFAULT_SETTINGS, config_hash, get_setting, load_config, load_settings,
                            save_settings, validate_config)
from IBPLab.drift_models import MollifiedDrift, PositionDrift, SineDrift
from IBPLab.errors import ConfigError

from conftest import CONFIG_DIR


def _write(tmp_path, payload, name="settings.json"):
    path = tmp_path / name
    path.write_text(payload if isinstance(payload, str) else json.dumps(payload))
    return str(path)


def test_empty_object_gives_defaults(tmp_path):
    settings = load_settings(_write(tmp_path, "{}"))
    assert settings == DEFAULT_SETTINGS


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_settings(str(tmp_path / "absent.json"))
    assert info.value.field == "config"


@pytest.mark.parametrize("payload", ["{not json", "[1, 2]", json.dumps({"colour": "red"})])
def test_unreadable_settings(tmp_path, payload):
    with pytest.raises(ConfigError):
        load_settings(_write(tmp_path, payload))


def test_nested_sections_are_merged(tmp_path):
    settings = load_settings(_write(tmp_path, {"mc": {"paths": 10}}))
    assert settings['mc']['paths'] == 10
    assert settings['mc']['seed'] == DEFAULT_SETTINGS['mc']['seed']


def test_save_and_reload(tmp_path):
    path = str(tmp_path / "saved.json")
    save_settings(DEFAULT_SETTINGS, path)
    assert load_settings(path) == DEFAULT_SETTINGS


def test_hash_is_stable_and_short(ou_settings):
    digest = config_hash(ou_settings)
    assert len(digest) == 16
    int(digest, 16)
    assert config_hash(json.loads(json.dumps(ou_settings))) == digest
    assert config_hash(dict(ou_settings, model="delay")) != digest


def test_dotted_lookup(ou_settings):
    assert get_setting(ou_settings, 'mc.paths') == 4000
    assert get_setting(ou_settings, 'mc.missing', 'x') == 'x'
    assert get_setting(ou_settings, 'model.sub') is None


def test_ou_settings_resolve(ou_settings):
    cfg = validate_config(ou_settings)
    assert cfg.model == 'semilinear'
    assert cfg.op.dim == 1
    assert cfg.grid.steps == 32
    assert [fn.label for fn in cfg.functions] == ['x']
    assert np.array_equal(cfg.initial, np.zeros(1))
    assert cfg.fomin['directions'] == [[1.0]]


def test_overrides_revalidate(ou_settings):
    cfg = validate_config(ou_settings).with_overrides(mc={'paths': 10})
    assert cfg.mc.paths == 10
    assert cfg.mc.seed == ou_settings['mc']['seed']
    with pytest.raises(ConfigError):
        cfg.with_overrides(mc={'paths': 0})


@pytest.mark.parametrize("change,field", [
    ({"model": "jump"}, "model"),
    ({"mc": {"paths": 0}}, "mc.paths"),
    ({"mc": {"seed": -1}}, "mc.seed"),
    ({"tolerances": {"z_max": 0.0}}, "tolerances.z_max"),
    ({"direction": {"coefficients": [1.0, 2.0]}}, "direction.coefficients"),
    ({"output": {"format": "xml"}}, "output.format"),
    ({"invariance": {"source": "guess"}}, "invariance.source"),
    ({"girsanov": {"eps": [0.1, -0.1]}}, "girsanov.eps"),
])
def test_invalid_fields_are_named(ou_settings, change, field):
    settings = config_manager._merge(ou_settings, change)
    with pytest.raises(ConfigError) as info:
        validate_config(settings)
    assert info.value.field == field


def test_delay_needs_horizon_beyond_lag():
    settings = {"model": "delay", "delay": {"tau": 1.0}, "grid": {"T": 1.0, "steps": 64},
                "drift": {"name": "delay_terminal", "params": {"c": 0.5}}}
    with pytest.raises(ConfigError) as info:
        validate_config(settings)
    assert info.value.field == "grid.T"


def test_delay_functions_need_lags():
    settings = {"model": "delay", "delay": {"tau": 0.5}, "grid": {"T": 1.0, "steps": 64},
                "drift": {"name": "delay_terminal", "params": {"c": 0.5}},
                "functions": [{"outer": "sin", "coordinates": [0], "label": "s"}]}
    with pytest.raises(ConfigError):
        validate_config(settings)


def test_segment_drift_needs_delay_model():
    with pytest.raises(ConfigError) as info:
        validate_config({"drift": {"name": "delay_terminal", "params": {"c": 0.5, "tau": 0.5}}})
    assert info.value.field == "drift.name"


def test_mollify_only_for_semilinear():
    settings = {"model": "hamiltonian", "drift": {"name": "sine", "params": {"c": 0.5},
                                                  "mollify": {"eps": 0.1}}}
    with pytest.raises(ConfigError):
        validate_config(settings)


def test_mollified_drift_is_built():
    cfg = validate_config({"operator": {"dim": 2}, "drift": {"name": "sine", "params": {"c": 0.5},
                                                             "mollify": {"eps": 0.1, "nodes": 11}}})
    assert isinstance(cfg.drift, MollifiedDrift)


def test_hamiltonian_lifts_position_drift():
    cfg = validate_config({"model": "hamiltonian", "operator": {"dim": 2},
                           "drift": {"name": "sine", "params": {"c": 0.5}}})
    assert isinstance(cfg.drift, PositionDrift)
    assert isinstance(cfg.drift.base, SineDrift)
    assert cfg.initial.shape == (4,)
    assert cfg.hamiltonian['k1'] == [1.0, 0.0]


def test_sigma_variants():
    cfg = validate_config({"operator": {"dim": 3}, "sigma": {"diag_rule": "power", "p": -0.5}})
    assert np.allclose(np.diag(cfg.sig.matrix), np.arange(1, 4) ** -0.5)
    with pytest.raises(ConfigError):
        validate_config({"operator": {"dim": 2}, "sigma": {"matrix": [[1.0]]}})


def test_default_config_file_loads():
    cfg = load_config()
    assert cfg.model in config_manager.MODEL_CLASSES


@pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(CONFIG_DIR, "*.json"))),
                         ids=os.path.basename)
def test_shipped_configs_validate(path):
    cfg = load_config(path)
    assert cfg.functions
    assert len(cfg.hash) == 16
