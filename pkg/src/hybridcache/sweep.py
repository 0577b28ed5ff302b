"""Parameter sweeps over both engines, with CSV and manifest output.

A sweep crosses a list of *series* (fixed config overrides such as cache
sizes or the retransmission budget) with policies and the values of one
swept parameter.  Every point is evaluated independently, so points can
be farmed out to worker processes; rows are always written in task order
and simulation streams are keyed by the point's resolved config, which
makes the CSVs independent of the worker count.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .catalog import Policy, profile_for, zipf_popularity
from .config import NetworkConfig, config_from_mapping
from .errors import InvalidArgument, NumericFailure
from .link import BoundSide
from .qos import evaluate
from .simulator import run_trials, stream_key

SWEEP_PARAMS = ("upsilon", "c1", "cache_sizes", "f_count", "nu", "beta", "n_retx")
METRICS = ("asp", "latency", "backhaul_load")
ENGINES = ("analytic", "simulate", "both")

COLUMNS = (
    "swept_value",
    "policy",
    "engine",
    "bound_side",
    "asp",
    "asp_ci_lo",
    "asp_ci_hi",
    "latency",
    "latency_ci_lo",
    "latency_ci_hi",
    "backhaul_load",
    "trials",
    "seed",
    "series",
    "n_retx",
    "c_mu",
    "c_m",
    "config_hash",
)

_UPSILONS = [round(0.1 * k, 1) for k in range(1, 16)]
_CACHES = [{"c_mu": 3, "c_m": 2}, {"c_mu": 10, "c_m": 8}]
_ALL_POLICIES = ["MC", "UC", "RC", "NoCache"]


def _cross(first, key, values):
    return [dict(s, **{key: v}) for s in first for v in values]


PRESETS = {
    "fig1": dict(
        param="upsilon",
        values=_UPSILONS,
        policies=["MC", "UC", "NoCache"],
        metric="asp",
        series=[{"n_retx": n} for n in (1, 3, 5)],
    ),
    "fig2": dict(
        param="c1",
        values=[5, 10, 15, 30, 60, 90, 120, 180, 240, 480],
        policies=_ALL_POLICIES,
        metric="asp",
        series=_cross(_CACHES, "n_retx", [1, 3]),
    ),
    "fig3": dict(
        param="upsilon",
        values=_UPSILONS,
        policies=_ALL_POLICIES,
        metric="backhaul_load",
        series=_CACHES + [{"c_mu": 17, "c_m": 15}],
    ),
    "fig4": dict(
        param="f_count",
        values=[20, 30, 40, 60, 80, 100],
        policies=_ALL_POLICIES,
        metric="asp",
        series=_cross(_CACHES, "n_retx", [1, 3]),
    ),
    "fig5": dict(
        param="nu",
        values=[1e6, 3e6, 1e7, 3e7, 1e8, 3e8, 1e9],
        policies=_ALL_POLICIES,
        metric="asp",
        series=_cross(_CACHES, "beta", [0.008, 0.02]),
    ),
    "fig6": dict(
        param="c1",
        values=[5, 10, 15, 30, 60, 90, 120, 180, 240, 480],
        policies=_ALL_POLICIES,
        metric="latency",
        series=_cross(_CACHES, "nt_mu", [64, 100, 128]),
    ),
    "fig7": dict(
        param="upsilon",
        values=_UPSILONS,
        policies=_ALL_POLICIES,
        metric="latency",
        series=_cross(_CACHES, "n_retx", [1, 3, 5]),
    ),
}


@dataclass
class SweepSpec:
    param: str
    values: list
    policies: list = field(default_factory=lambda: list(_ALL_POLICIES))
    engines: str = "both"
    sides: list = field(default_factory=lambda: [BoundSide.LOWER.value, BoundSide.UPPER.value])
    trials: int = 20000
    seed: int = 0
    metric: str = "asp"
    series: list = field(default_factory=lambda: [{}])
    name: str = "custom"

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise InvalidArgument(f"cannot sweep {self.param!r}; choose from {SWEEP_PARAMS}")
        if not self.values:
            raise InvalidArgument("the value list is empty")
        if self.param == "cache_sizes":
            self.values = [tuple(int(c) for c in v) for v in self.values]
            keys = [(v[1], v[0]) for v in self.values]
        else:
            self.values = [float(v) for v in self.values]
            keys = self.values
        if list(keys) != sorted(keys):
            raise InvalidArgument("the value list must be sorted")
        self.policies = [Policy.parse(p).value for p in self.policies]
        if not self.policies:
            raise InvalidArgument("no policies selected")
        if self.engines not in ENGINES:
            raise InvalidArgument(f"engines must be one of {ENGINES}")
        self.sides = [BoundSide.parse(s).value for s in self.sides]
        if self.metric not in METRICS:
            raise InvalidArgument(f"metric must be one of {METRICS}")
        if self.engines != "analytic" and self.trials < 1:
            raise InvalidArgument("trials must be >= 1")
        self.series = [dict(s) for s in self.series] or [{}]

    def to_dict(self):
        d = asdict(self)
        d["values"] = [list(v) if isinstance(v, tuple) else v for v in self.values]
        return d


def preset(name, **overrides):
    """Sweep spec for a named figure family, with optional field overrides."""
    if name not in PRESETS:
        raise InvalidArgument(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    fields = dict(PRESETS[name], name=name)
    fields.update({k: v for k, v in overrides.items() if v is not None})
    return SweepSpec(**fields)


def apply_value(cfg, param, value):
    """``cfg`` with the swept parameter set to ``value``."""
    if param == "cache_sizes":
        c_mu, c_m = value
        return cfg.replace(c_mu=int(c_mu), c_m=int(c_m))
    if param in ("f_count", "n_retx"):
        if value != int(value):
            raise InvalidArgument(f"{param} needs integer values, got {value!r}")
        return cfg.replace(**{param: int(value)})
    if param == "nu":
        return cfg.replace(nu=float(value))
    return cfg.replace(**{param: float(value)})


def apply_series(cfg, series):
    if not series:
        return cfg
    mapping = cfg.to_dict()
    if "f_count" in series and "nu" not in series and cfg.nu_uniform:
        mapping["nu"] = cfg.nu[0]
    for bw, noise in (("w_m", "sigma2_m"), ("w_mu", "sigma2_mu")):
        if bw in series and noise not in series:
            mapping[noise] = None
    mapping.update(series)
    return config_from_mapping(mapping)


def series_label(series):
    return ";".join(f"{k}={series[k]}" for k in sorted(series))


def format_value(value):
    if isinstance(value, tuple):
        return "/".join(str(v) for v in value)
    return repr(float(value))


def _cell(x):
    return x if isinstance(x, str) else _fmt(x)


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@dataclass(frozen=True)
class PointTask:
    index: int
    series: dict
    policy: str
    value: object
    cfg: NetworkConfig
    engines: str
    sides: tuple
    trials: int
    seed: int


class PointFailure(Exception):
    """A sweep point failed; carries the point labels for the exit message."""

    def __init__(self, policy, value, event, message, numeric=True):
        self.policy = policy
        self.value = value
        self.event = event
        self.numeric = numeric
        self.message = message
        super().__init__(f"policy={policy} value={value} event={event}: {message}")

    def __reduce__(self):
        # worker processes send failures back by pickling
        return (PointFailure, (self.policy, self.value, self.event, self.message, self.numeric))


def build_tasks(base_cfg, spec):
    tasks = []
    for series in spec.series:
        cfg_s = apply_series(base_cfg, series)
        for policy in spec.policies:
            for value in spec.values:
                cfg = apply_value(cfg_s, spec.param, value)
                tasks.append(
                    PointTask(
                        len(tasks), series, policy, value, cfg, spec.engines,
                        tuple(spec.sides), spec.trials, spec.seed,
                    )
                )
    return tasks


def run_point(task):
    """Evaluate one sweep point; returns a list of CSV row dicts."""
    cfg = task.cfg
    base = {
        "swept_value": format_value(task.value),
        "policy": task.policy,
        "series": series_label(task.series),
        "n_retx": cfg.n_retx,
        "c_mu": cfg.c_mu,
        "c_m": cfg.c_m,
        "config_hash": cfg.config_hash(),
    }
    value_label = format_value(task.value)
    try:
        popularity = zipf_popularity(cfg.f_count, cfg.upsilon)
        profile = profile_for(cfg, task.policy, task.seed)
    except InvalidArgument as exc:
        raise PointFailure(task.policy, value_label, "-", str(exc), numeric=False) from exc
    rows = []
    if task.engines in ("analytic", "both"):
        for side in task.sides:
            try:
                rep = evaluate(cfg, profile, side, popularity)
            except NumericFailure as exc:
                event = exc.context.get("event", "geometry")
                raise PointFailure(task.policy, value_label, event, str(exc)) from exc
            rows.append(
                dict(
                    base,
                    engine="analytic",
                    bound_side=side,
                    asp=rep.asp_retx,
                    latency=rep.latency_mean,
                    backhaul_load=rep.backhaul_load,
                )
            )
    if task.engines in ("simulate", "both"):
        key = stream_key(task.policy, cfg.config_hash())
        sim = run_trials(cfg, popularity, profile, task.trials, task.seed, key)
        rows.append(
            dict(
                base,
                engine="simulate",
                bound_side="",
                asp=sim.asp,
                asp_ci_lo=sim.asp_ci[0],
                asp_ci_hi=sim.asp_ci[1],
                latency=sim.latency,
                latency_ci_lo=sim.latency_ci[0],
                latency_ci_hi=sim.latency_ci[1],
                backhaul_load=sim.backhaul_load,
                trials=sim.trials,
                seed=sim.seed,
            )
        )
    return rows


def execute(tasks, workers=1):
    """Run tasks, returning their rows in task order whatever the pool size."""
    if workers <= 1 or len(tasks) <= 1:
        return [run_point(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_point, tasks, chunksize=1))


def render_csv(rows, header_comment):
    buf = io.StringIO(newline="")
    buf.write(header_comment + "\n")
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n", extrasaction="raise")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: _cell(row.get(c)) for c in COLUMNS})
    return buf.getvalue()


def manifest_for(base_cfg, spec, tasks):
    return {
        "sweep": spec.to_dict(),
        "config": base_cfg.to_dict(),
        "config_hash": base_cfg.config_hash(),
        "points": {t.cfg.config_hash(): t.cfg.to_dict() for t in tasks},
    }


def spec_from_manifest(manifest):
    return SweepSpec(**manifest["sweep"])


def run_sweep(base_cfg, spec, out_dir, workers=1):
    """Run ``spec`` and write ``<metric>_<policy>.csv`` files plus ``manifest.json``.

    Returns the list of files written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = build_tasks(base_cfg, spec)
    results = execute(tasks, workers)
    header = "# config=" + base_cfg.canonical_json()
    written = []
    for policy in spec.policies:
        rows = [r for t, rs in zip(tasks, results) if t.policy == policy for r in rs]
        path = out / f"{spec.metric}_{policy}.csv"
        with open(path, "w", newline="") as fh:
            fh.write(render_csv(rows, header))
        written.append(path)
    manifest = manifest_for(base_cfg, spec, tasks)
    mpath = out / "manifest.json"
    with open(mpath, "w", newline="") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(mpath)
    return written


def compare_rows(rows_per_point):
    """Per-point bracket check: does ``[Lower, Upper]`` hold the simulated ASP?

    ``contains`` tests the point estimate, ``contains_ci`` lets the bracket
    touch the 95% interval instead.
    """
    out = []
    for rows in rows_per_point:
        ana = {r["bound_side"]: r for r in rows if r["engine"] == "analytic"}
        sims = [r for r in rows if r["engine"] == "simulate"]
        if len(ana) < 2 or not sims:
            continue
        lo, up = ana["Lower"]["asp"], ana["Upper"]["asp"]
        lo, up = min(lo, up), max(lo, up)
        s = sims[0]
        out.append(
            {
                "swept_value": s["swept_value"],
                "policy": s["policy"],
                "series": s["series"],
                "lower": lo,
                "upper": up,
                "simulated": s["asp"],
                "ci_lo": s["asp_ci_lo"],
                "ci_hi": s["asp_ci_hi"],
                "contains": lo <= s["asp"] <= up,
                "contains_ci": s["asp_ci_lo"] <= up and s["asp_ci_hi"] >= lo,
                "config_hash": s["config_hash"],
            }
        )
    return out


COMPARE_COLUMNS = (
    "swept_value", "policy", "series", "lower", "upper", "simulated",
    "ci_lo", "ci_hi", "contains", "contains_ci", "config_hash",
)


def render_compare(rows):
    buf = io.StringIO(newline="")
    writer = csv.DictWriter(buf, fieldnames=COMPARE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({c: _cell(r[c]) for c in COMPARE_COLUMNS})
    return buf.getvalue()

