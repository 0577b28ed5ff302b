"""Command line entry point: ``hybridcache <subcommand> [options]``.

Exit codes: 0 success, 1 validation diagnostics or bracket misses
(``validate`` / ``compare --strict``), 2 configuration or argument
errors, 3 numeric failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .catalog import Policy, profile_for, zipf_popularity
from .config import config_from_mapping, load_config, validate_config
from .errors import ConfigError, InvalidArgument, NumericFailure
from .link import BoundSide
from .qos import evaluate
from .simulator import run_trials, stream_key
from .sweep import (
    METRICS,
    PRESETS,
    SWEEP_PARAMS,
    PointFailure,
    SweepSpec,
    build_tasks,
    compare_rows,
    execute,
    preset,
    render_compare,
    run_sweep,
    spec_from_manifest,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _sides(bound):
    if bound == "both":
        return [BoundSide.LOWER.value, BoundSide.UPPER.value]
    return [BoundSide.parse(bound).value]


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_validate(args):
    cfg = load_config(args.config)
    diags = validate_config(cfg)
    for d in diags:
        print(d)
    if not diags:
        print(f"ok ({cfg.config_hash()})")
    return EXIT_OK if not diags else EXIT_FAIL


def cmd_analytic(args):
    cfg = load_config(args.config)
    profile = profile_for(cfg, Policy.parse(args.policy), args.seed)
    popularity = zipf_popularity(cfg.f_count, cfg.upsilon)
    out = {"policy": Policy.parse(args.policy).value, "config_hash": cfg.config_hash()}
    for side in _sides(args.bound):
        try:
            rep = evaluate(cfg, profile, side, popularity)
        except NumericFailure as exc:
            event = exc.context.get("event", "geometry")
            raise PointFailure(out["policy"], "-", event, str(exc)) from exc
        out[side] = {
            "asp": rep.asp_retx,
            "latency": rep.latency_mean,
            "backhaul_load": rep.backhaul_load,
            "event_asp": {e.value: v for e, v in rep.event_asp.items()},
        }
    _emit(json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_simulate(args):
    cfg = load_config(args.config)
    policy = Policy.parse(args.policy).value
    profile = profile_for(cfg, policy, args.seed)
    popularity = zipf_popularity(cfg.f_count, cfg.upsilon)
    rep = run_trials(
        cfg, popularity, profile, args.trials, args.seed,
        stream_key(policy, cfg.config_hash()), keep_raw=args.raw is not None,
    )
    out = {
        "policy": policy,
        "config_hash": cfg.config_hash(),
        "trials": rep.trials,
        "seed": rep.seed,
        "asp": rep.asp,
        "asp_ci": list(rep.asp_ci),
        "latency": rep.latency,
        "latency_ci": list(rep.latency_ci),
        "backhaul_load": rep.backhaul_load,
        "backhaul_load_ci": list(rep.backhaul_load_ci),
        "event_counts": {e.value: c for e, c in rep.event_counts.items()},
        "resampled": rep.resampled,
    }
    if args.raw is not None:
        _write_raw(args.raw, rep)
    _emit(json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_OK


def _write_raw(path, rep):
    from .geometry import EVENTS

    raw = rep.raw
    lines = ["seed,file,event,distance,attempts,delivered,delay"]
    for i in range(rep.trials):
        lines.append(
            f"{rep.seed},{int(raw['file'][i]) + 1},{EVENTS[raw['event'][i]].value},"
            f"{float(raw['distance'][i])!r},{int(raw['attempts'][i])},"
            f"{'true' if raw['delivered'][i] else 'false'},{float(raw['delay'][i])!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_values(text, param):
    if text is None:
        return None
    items = [t for t in text.split(",") if t.strip()]
    if param == "cache_sizes":
        return [tuple(int(c) for c in t.split("/")) for t in items]
    return [float(t) for t in items]


def _spec_from_args(args):
    """Build the sweep spec from a manifest, a preset, or explicit flags."""
    if args.manifest:
        try:
            manifest = json.loads(Path(args.manifest).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read manifest {args.manifest}: {exc}") from exc
        return config_from_mapping(manifest["config"]), spec_from_manifest(manifest)
    cfg = load_config(args.config)
    overrides = dict(
        values=_parse_values(args.values, args.param or PRESETS.get(args.preset, {}).get("param")),
        policies=args.policies.split(",") if args.policies else None,
        engines=args.engines,
        sides=_sides(args.bound) if args.bound else None,
        trials=args.trials,
        seed=args.seed,
        metric=args.metric,
    )
    if args.preset:
        if args.param:
            raise InvalidArgument("--param cannot be combined with --preset")
        return cfg, preset(args.preset, **overrides)
    if not args.param:
        raise InvalidArgument("give --preset, --manifest, or --param with --values")
    if overrides["values"] is None:
        raise InvalidArgument("--values is required with --param")
    fields = {k: v for k, v in overrides.items() if v is not None}
    return cfg, SweepSpec(param=args.param, **fields)


def cmd_sweep(args):
    cfg, spec = _spec_from_args(args)
    files = run_sweep(cfg, spec, args.out, args.workers)
    for f in files:
        print(f)
    return EXIT_OK


def cmd_compare(args):
    cfg, spec = _spec_from_args(args)
    spec.engines = "both"
    spec.sides = _sides("both")
    tasks = build_tasks(cfg, spec)
    rows = compare_rows(execute(tasks, args.workers))
    _emit(render_compare(rows), None if args.out is None else Path(args.out))
    misses = sum(not r["contains_ci"] for r in rows)
    print(f"{len(rows) - misses}/{len(rows)} points bracketed within CI", file=sys.stderr)
    return EXIT_FAIL if (args.strict and misses) else EXIT_OK


def _add_common(p):
    p.add_argument("--config", help="config document (key = value lines or JSON)")
    p.add_argument("--out", help="output path (directory for sweep)")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (simulation, RC placement)")


def _add_sweep_args(p):
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--manifest", help="rerun exactly the sweep recorded in a manifest.json")
    p.add_argument("--param", choices=SWEEP_PARAMS)
    p.add_argument("--values", help="comma separated; cache sizes as c_mu/c_m")
    p.add_argument("--policies", help="comma separated subset of MC,UC,RC,NoCache")
    p.add_argument("--engines", choices=("analytic", "simulate", "both"))
    p.add_argument("--bound", choices=("Lower", "Upper", "both"))
    p.add_argument("--metric", choices=METRICS)
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int, default=1)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hybridcache",
        description="Analytic and Monte Carlo evaluation of cache-enabled hybrid mmWave/uWave networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a config against the model's invariants")
    p.add_argument("--config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("analytic", help="bounded ASP, latency and backhaul load for one policy")
    _add_common(p)
    p.add_argument("--policy", default="MC")
    p.add_argument("--bound", choices=("Lower", "Upper", "both"), default="both")
    p.set_defaults(func=cmd_analytic, seed=0)

    p = sub.add_parser("simulate", help="Monte Carlo estimates for one policy")
    _add_common(p)
    p.add_argument("--policy", default="MC")
    p.add_argument("--trials", type=int, default=20000)
    p.add_argument("--raw", help="also dump one CSV row per trial to this path")
    p.set_defaults(func=cmd_simulate, seed=0)

    p = sub.add_parser("sweep", help="sweep one parameter; one CSV per (metric, policy)")
    _add_common(p)
    _add_sweep_args(p)
    p.set_defaults(func=cmd_sweep, out="results")

    p = sub.add_parser("compare", help="per-point check that the analytic bracket holds the simulated ASP")
    _add_common(p)
    _add_sweep_args(p)
    p.add_argument("--strict", action="store_true", help="exit 1 if any point is not bracketed")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PointFailure as exc:
        if not exc.numeric:
            print(f"invalid sweep point: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InvalidArgument as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
