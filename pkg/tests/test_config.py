import json

import pytest

from hybridcache.config import (
    NetworkConfig,
    dbm_to_watt,
    load_config,
    parse_config_text,
    thermal_noise_watt,
    validate_config,
)
from hybridcache.errors import ConfigError


def test_defaults_are_valid(cfg):
    assert validate_config(cfg) == []
    assert len(cfg.nu) == cfg.f_count == 20
    assert cfg.p_m_tx == pytest.approx(1.0)
    assert cfg.p_mu_tx == pytest.approx(dbm_to_watt(46.0))


def test_noise_defaults_to_thermal(cfg):
    assert cfg.sigma2_m == pytest.approx(thermal_noise_watt(1e9))
    assert cfg.sigma2_mu == pytest.approx(10 ** (-17.4) * 2e8 / 1000)


def test_key_value_document_with_dbm_and_comments():
    cfg = parse_config_text("# tweaks\nupsilon = 1.2\np_m_tx_dbm = 20  # 100 mW\nnu = 2e6\n")
    assert cfg.upsilon == 1.2
    assert cfg.p_m_tx == pytest.approx(0.1)
    assert cfg.nu == (2e6,) * 20


def test_unknown_key_reports_line_and_field():
    with pytest.raises(ConfigError) as info:
        parse_config_text("upsilon = 1\nbogus = 3\n")
    assert info.value.line == 2 and info.value.field == "bogus"


def test_bad_literal_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config_text("upsilon = one\n")
    assert info.value.line == 1


def test_integer_field_rejects_fraction():
    with pytest.raises(ConfigError) as info:
        parse_config_text("n_retx = 2.5\n")
    assert info.value.field == "n_retx"


def test_manifest_json_is_accepted(cfg):
    doc = json.dumps({"config": cfg.replace(upsilon=1.1).to_dict(), "sweep": {}})
    assert parse_config_text(doc) == cfg.replace(upsilon=1.1)


def test_env_overrides(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("upsilon = 0.5\n")
    cfg = load_config(path, environ={"HYBRIDCACHE_UPSILON": "1.5", "HYBRIDCACHE_F_COUNT": "30", "OTHER": "x"})
    assert cfg.upsilon == 1.5 and cfg.f_count == 30 and len(cfg.nu) == 30


def test_unreadable_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.cfg")


def test_hash_stable_and_sensitive(cfg):
    assert cfg.config_hash() == NetworkConfig().config_hash()
    assert cfg.config_hash() != cfg.replace(upsilon=0.9).config_hash()


def test_density_ordering_diagnostic(cfg):
    diags = validate_config(cfg.replace(lambda_u=1e-6))
    assert any("lambda_u > lambda_m > lambda_mu" in d for d in diags)


def test_campbell_diagnostic(cfg):
    diags = validate_config(cfg.replace(alpha_mu=2.0))
    assert any("Campbell" in d for d in diags)


def test_cache_and_path_diagnostics(cfg):
    diags = validate_config(cfg.replace(c_m=5, c_mu=3, eta_los=6))
    assert any(d.startswith("cache sizes") for d in diags)
    assert any(d.startswith("eta_los < eta_nlos") for d in diags)
