"""Network configuration: defaults, parsing, validation.

All quantities are stored in linear SI units.  Transmit and noise powers may
be given in dBm in a configuration document (``*_dbm`` keys); they are
converted to watts once, here, and never again.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

ENV_PREFIX = "HYBRIDCACHE_"

THERMAL_NOISE_DBM_PER_HZ = -174.0

INTERFERENCE_REGIONS = ("association", "displayed")


def dbm_to_watt(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt):
    return 10.0 * math.log10(watt) + 30.0


def thermal_noise_watt(bandwidth_hz):
    return dbm_to_watt(THERMAL_NOISE_DBM_PER_HZ + 10.0 * math.log10(bandwidth_hz))


@dataclass(frozen=True)
class NetworkConfig:
    """Physical-layer, topology, caching and delay constants.

    Defaults reproduce the baseline parameter table of the evaluated
    network.  ``nu`` is always a tuple of length ``f_count`` after
    construction; a scalar is broadcast.
    """

    # densities, nodes/m^2
    lambda_mu: float = 5e-6
    lambda_m: float = 1e-5
    lambda_u: float = 8e-5
    lambda_g: float = 5e-7
    # transmit powers, W (46 dBm and 30 dBm)
    p_mu_tx: float = dbm_to_watt(46.0)
    p_m_tx: float = dbm_to_watt(30.0)
    # antennas and RF chains
    nt_mu: int = 100
    nt_m: int = 256
    nr_mu: int = 1
    nr_m: int = 16
    n_rf: int = 10
    # bandwidths, Hz
    w_mu: float = 200e6
    w_m: float = 1e9
    # catalog and caching
    f_count: int = 20
    nu: tuple = 1e6
    upsilon: float = 0.8
    c_mu: int = 3
    c_m: int = 2
    # backhaul capacity coefficients
    c1: float = 60.0
    c2: float = 0.0
    n_retx: int = 1
    # blockage and propagation
    beta: float = 0.008
    alpha_los: float = 2.0
    alpha_nlos: float = 4.0
    alpha_mu: float = 3.5
    b_mu: float = 1.0
    b_m: float = 0.5
    rho_ue: float = 0.5
    rho_bs: float = 0.5
    eta_los: int = 3
    eta_nlos: int = 5
    # backhaul delay model
    relay_r: float = 200.0
    k1: float = 10.0
    k2: float = 1.0
    a_proc: float = 1e-5
    omega_proc: float = 1e-8
    s_file: float = 1e6
    # noise powers, W; None -> thermal noise over the band
    sigma2_m: float = None
    sigma2_mu: float = None
    # which interferers survive conditioning on the serving link (both tiers)
    interference_region: str = "association"

    def __post_init__(self):
        nu = self.nu
        if isinstance(nu, (int, float)):
            nu = (float(nu),) * int(self.f_count)
        else:
            nu = tuple(float(v) for v in nu)
        object.__setattr__(self, "nu", nu)
        if self.sigma2_m is None:
            object.__setattr__(self, "sigma2_m", thermal_noise_watt(self.w_m))
        if self.sigma2_mu is None:
            object.__setattr__(self, "sigma2_mu", thermal_noise_watt(self.w_mu))

    # -- derived helpers -------------------------------------------------

    @property
    def nu_uniform(self):
        """True when every file carries the same target rate."""
        return len(set(self.nu)) <= 1

    def replace(self, **changes):
        """Copy with changes; a uniform ``nu`` follows a change of ``f_count``."""
        if "f_count" in changes and "nu" not in changes and self.nu_uniform and self.nu:
            changes["nu"] = self.nu[0]
        if "w_m" in changes and "sigma2_m" not in changes:
            changes["sigma2_m"] = None
        if "w_mu" in changes and "sigma2_mu" not in changes:
            changes["sigma2_mu"] = None
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["nu"] = list(self.nu)
        return d

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


FIELD_NAMES = tuple(f.name for f in dataclasses.fields(NetworkConfig))

_INT_FIELDS = {
    f.name for f in dataclasses.fields(NetworkConfig) if f.type in ("int", int)
}

# document keys that are converted before reaching a field
_DBM_ALIASES = {
    "p_mu_tx_dbm": "p_mu_tx",
    "p_m_tx_dbm": "p_m_tx",
    "sigma2_m_dbm": "sigma2_m",
    "sigma2_mu_dbm": "sigma2_mu",
}


def _coerce(name, value, line=None):
    if name == "nu":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            return tuple(float(v) for v in value)
        raise ConfigError("expected a number or a list of numbers", line, name)
    if name == "interference_region":
        if value not in INTERFERENCE_REGIONS:
            raise ConfigError(f"expected one of {INTERFERENCE_REGIONS}", line, name)
        return value
    if name in ("sigma2_m", "sigma2_mu") and value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", line, name)
    if name in _INT_FIELDS:
        if float(value) != int(value):
            raise ConfigError(f"expected an integer, got {value!r}", line, name)
        return int(value)
    return float(value)


def config_from_mapping(mapping, lines=None):
    """Build a config from a flat mapping of document keys to JSON values.

    ``lines`` optionally maps keys to source line numbers for diagnostics.
    Unknown keys are rejected.
    """
    lines = lines or {}
    values = {}
    for key, raw in mapping.items():
        line = lines.get(key)
        if key in _DBM_ALIASES:
            target = _DBM_ALIASES[key]
            if target in mapping:
                raise ConfigError(f"both '{key}' and '{target}' given", line, key)
            if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                raise ConfigError(f"expected a number in dBm, got {raw!r}", line, key)
            values[target] = dbm_to_watt(float(raw))
        elif key in FIELD_NAMES:
            values[key] = _coerce(key, raw, line)
        else:
            raise ConfigError("unknown key", line, key)
    try:
        return NetworkConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config_text(text):
    """Parse a ``key = value`` document; values are JSON literals.

    Blank lines and ``#`` comments are ignored.  A document that is itself a
    JSON object (for instance a run manifest) is accepted too; a top-level
    ``"config"`` entry is used when present.
    """
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from exc
        if isinstance(obj.get("config"), dict):
            obj = obj["config"]
        return config_from_mapping(obj)

    mapping, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("missing key", lineno)
        if key in mapping:
            raise ConfigError("duplicate key", lineno, key)
        try:
            mapping[key] = json.loads(value)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"value is not a JSON literal ({exc.msg})", lineno, key) from exc
        lines[key] = lineno
    return config_from_mapping(mapping, lines)


def env_overrides(environ=None):
    """Collect ``HYBRIDCACHE_<KEY>=<json>`` overrides as a document mapping."""
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower()
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            raise ConfigError(f"environment override {name} is not a JSON literal", field=key)
    return out


def load_config(path=None, environ=None):
    """Read a config file (or defaults when ``path`` is None) and apply env overrides."""
    if path is None:
        base = NetworkConfig()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
        base = parse_config_text(text)
    overrides = env_overrides(environ)
    if not overrides:
        return base
    mapping = base.to_dict()
    for alias, target in _DBM_ALIASES.items():
        if alias in overrides:
            mapping.pop(target, None)
    if "f_count" in overrides and "nu" not in overrides and base.nu_uniform:
        mapping["nu"] = base.nu[0]
    for bw, noise in (("w_m", "sigma2_m"), ("w_mu", "sigma2_mu")):
        if bw in overrides and noise not in overrides:
            mapping[noise] = None
    mapping.update(overrides)
    return config_from_mapping(mapping)


def validate_config(cfg):
    """Return one diagnostic string per violated invariant (empty if valid)."""
    diags = []

    def need(cond, msg):
        if not cond:
            diags.append(msg)

    for name in ("lambda_mu", "lambda_m", "lambda_u", "lambda_g"):
        need(getattr(cfg, name) > 0, f"{name}: density must be > 0")
    for name in ("p_mu_tx", "p_m_tx", "w_mu", "w_m", "sigma2_m", "sigma2_mu", "s_file"):
        need(getattr(cfg, name) > 0, f"{name}: must be > 0")
    need(
        cfg.lambda_u > cfg.lambda_m > cfg.lambda_mu,
        "densities: require lambda_u > lambda_m > lambda_mu (more users than small "
        "cells, more small cells than macro cells)",
    )
    for name in ("nt_mu", "nt_m", "nr_mu", "nr_m", "n_rf"):
        need(getattr(cfg, name) >= 1, f"{name}: must be >= 1")
    need(cfg.f_count >= 1, "f_count: must be >= 1")
    need(len(cfg.nu) == cfg.f_count, f"nu: expected {cfg.f_count} rates, got {len(cfg.nu)}")
    need(all(v > 0 for v in cfg.nu), "nu: target rates must be > 0")
    need(cfg.upsilon >= 0, "upsilon: Zipf skewness must be >= 0")
    need(0 <= cfg.c_m <= cfg.f_count, "c_m: cache size must lie in [0, f_count]")
    need(0 <= cfg.c_mu <= cfg.f_count, "c_mu: cache size must lie in [0, f_count]")
    need(cfg.c_m < cfg.c_mu, "cache sizes: require c_m < c_mu (macro caches are larger)")
    need(cfg.c1 >= 0 and cfg.c2 >= 0, "c1, c2: backhaul coefficients must be >= 0")
    need(cfg.n_retx >= 1, "n_retx: at least one transmission attempt")
    need(cfg.beta >= 0, "beta: blockage density must be >= 0")
    need(
        cfg.alpha_mu > 2,
        "alpha_mu: must be > 2, otherwise the mean macro-cell interference "
        "(Campbell integral) diverges",
    )
    need(cfg.alpha_nlos > 2, "alpha_nlos: must be > 2 for finite NLOS interference")
    need(
        cfg.alpha_los > 2 or (cfg.alpha_los > 0 and cfg.beta > 0),
        "alpha_los: must be > 2 unless blockage (beta > 0) bounds the LOS interference",
    )
    need(cfg.b_mu > 0 and cfg.b_m > 0, "b_mu, b_m: bias factors must be > 0")
    need(0 < cfg.rho_ue < 1 and 0 < cfg.rho_bs < 1, "rho_ue, rho_bs: must lie in (0, 1)")
    need(cfg.eta_los >= 1 and cfg.eta_nlos >= 1, "eta_los, eta_nlos: path counts must be >= 1")
    need(cfg.eta_los < cfg.eta_nlos, "eta_los < eta_nlos: LOS links have fewer paths")
    need(cfg.relay_r > 0, "relay_r: must be > 0")
    need(
        cfg.k1 >= 0 and cfg.k2 >= 0 and cfg.a_proc >= 0 and cfg.omega_proc >= 0,
        "k1, k2, a_proc, omega_proc: processing constants must be >= 0",
    )
    need(
        cfg.interference_region in INTERFERENCE_REGIONS,
        f"interference_region: expected one of {INTERFERENCE_REGIONS}",
    )
    return diags
