"""Acceptance criteria, one test each; every test records a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -s`` to see the lines as they happen;
they are also collected into the terminal summary.
"""

import math
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy import integrate as sp_integrate
from scipy import stats

from conftest import ACCEPTANCE_LINES
from hybridcache.catalog import backhaul_capacity, profile_for, zipf_popularity
from hybridcache.config import NetworkConfig
from hybridcache.geometry import (
    EVENTS,
    LOS,
    AssociationEvent,
    TierLoad,
    association_probabilities,
    distance_pdf,
    joint_density,
    loads_for,
    state_masses,
)
from hybridcache.link import (
    backhaul_admission,
    backhaul_asp,
    backhaul_budget,
    mm_conditional_asp,
    mu_conditional_asp,
    mu_mean_rate,
)
from hybridcache.numerics import integrate
from hybridcache.qos import backhaul_delay, backhaul_load_density, evaluate
from hybridcache.simulator import _admission, association_drops, conditional_mm_success
from hybridcache.sweep import build_tasks, preset

from oracles import BACKHAUL_DELAY_M, BACKHAUL_LOAD_MC_17_15, BACKHAUL_LOAD_MC_3_2, BACKHAUL_LOAD_NOCACHE

UPSILONS = [round(0.1 * k, 1) for k in range(1, 16)]


def record(number, ok, detail, elapsed=None, limit=None):
    within = limit is None or elapsed <= limit
    timing = "" if elapsed is None else f" [{elapsed:.1f} s" + (f" / limit {limit:.0f} s]" if limit else "]")
    line = f"criterion {number}: {'PASS' if ok and within else 'FAIL'} {detail}{timing}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok and within


def clopper_pearson(k, n, alpha):
    lo = stats.beta.ppf(alpha / 2, k, n - k + 1) if k > 0 else 0.0
    hi = stats.beta.ppf(1 - alpha / 2, k + 1, n - k) if k < n else 1.0
    return lo, hi


def random_config(rng):
    return NetworkConfig(
        lambda_m=1e-5 * rng.uniform(0.5, 2.0),
        lambda_mu=5e-6 * rng.uniform(0.5, 2.0),
        beta=0.008 * rng.uniform(0.5, 2.0),
        b_m=rng.uniform(0.2, 1.0),
        alpha_nlos=rng.uniform(3.0, 4.5),
        alpha_mu=rng.uniform(3.0, 4.5),
    )


def test_criterion_1_probability_closure():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_sum, worst_pdf = 0.0, 0.0
    for _ in range(50):
        cfg = random_config(rng)
        p_m, p_mu = rng.uniform(0.05, 0.95, size=2)
        worst_sum = max(worst_sum, abs(association_probabilities(cfg, p_m, p_mu).total() - 1.0))
        for event in EVENTS:
            q = integrate(lambda r: distance_pdf(event, r, cfg, p_m, p_mu), 0.0, math.inf, scale=30.0)
            worst_pdf = max(worst_pdf, abs(q.value - 1.0))
    ok = worst_sum <= 1e-6 and worst_pdf <= 1e-5
    elapsed = time.perf_counter() - t0
    assert record(1, ok, f"max |sum-1| = {worst_sum:.2e}, max |pdf mass-1| = {worst_pdf:.2e}", elapsed, 60)


def test_criterion_2_association_frequencies():
    t0 = time.perf_counter()
    cfg = NetworkConfig()
    n = 100_000
    events, dist, _ = association_drops(cfg, 0.5, 0.5, n, seed=2024)
    a = association_probabilities(cfg, 0.5, 0.5)
    expect = [a.mm_hit_los, a.mm_hit_nlos, a.mm_miss_los, a.mm_miss_nlos, a.mu_hit, a.mu_miss]
    counts = np.bincount(events, minlength=6)
    z = [(k - n * p) / math.sqrt(n * p * (1 - p)) for k, p in zip(counts, expect)]
    # CDF of the MmHitLos serving distance by cumulative quadrature of its density
    grid = np.concatenate([np.linspace(0.0, 1000.0, 20_001), np.linspace(1000.0, 5000.0, 4001)[1:]])
    pdf = np.array([distance_pdf(AssociationEvent.MM_HIT_LOS, r, cfg, 0.5, 0.5) for r in grid])
    cdf = sp_integrate.cumulative_trapezoid(pdf, grid, initial=0.0)
    ks = stats.kstest(dist[events == 0], lambda x: np.interp(x, grid, cdf))
    ok = max(abs(v) for v in z) <= 3.0 and ks.pvalue >= 0.01
    elapsed = time.perf_counter() - t0
    zs = ", ".join(f"{e.value} {v:+.2f}" for e, v in zip(EVENTS, z))
    assert record(2, ok, f"z-scores {zs}; KS p = {ks.pvalue:.3f}", elapsed, 300)


def _analytic_mm_event(event, nu, cfg, loads, p, side):
    mass = state_masses(cfg)[0 if event.state == LOS else 1]
    f = lambda r: mm_conditional_asp(event, r, nu, cfg, loads, p, side) * joint_density(event.state, r, cfg) if r > 0 else 0.0
    return integrate(f, 0.0, math.inf, scale=30.0).value / mass


def test_criterion_3_bound_bracketing():
    """Event-level single-attempt ASP: analytic bracket vs simulated drops.

    Each grid point draws a random config, rate target and caching
    probability.  Serving distances come from full association drops; the
    mmWave link is then re-simulated against a Palm-conditioned interferer
    field at that distance, and miss events also draw backhaul admission.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    points, per_event_cap = 20, 3000
    checks = points * len(EVENTS)
    alpha = 0.05 / checks
    misses = []
    for k in range(points):
        cfg = random_config(rng).replace(alpha_nlos=4.0, alpha_mu=4.0)
        nu = 10 ** rng.uniform(5.0, 8.3)
        p = rng.uniform(0.1, 0.9)
        loads = loads_for(cfg)
        n_b = backhaul_budget(cfg, nu)
        events, dist, _ = association_drops(cfg, p, p, 40_000, seed=k, key=1)
        sim_rng = np.random.default_rng([303, k])
        for i, event in enumerate(EVENTS):
            d = dist[events == i][:per_event_cap]
            if d.size == 0:
                misses.append(f"point {k} {event.value}: no drops")
                continue
            if event.tier == "m":
                bracket = [_analytic_mm_event(event, nu, cfg, loads, p, s) for s in ("Lower", "Upper")]
                ok = conditional_mm_success(cfg, event.state, d, nu, d.size, seed=k, key=10 + i, loads=loads)
            else:
                bracket = [mu_conditional_asp(event.hit, nu, cfg, loads, p, s) for s in ("Lower", "Upper")]
                ok = mu_mean_rate(event.hit, d, cfg, loads, p) >= nu
            if not event.hit:
                u = loads.u_m if event.tier == "m" else loads.u_mu
                pb = backhaul_asp(event.tier, nu, cfg, loads, p)
                bracket = [b * pb for b in bracket]
                ok = ok & _admission(sim_rng, u, p, n_b, d.size)
            lo, hi = clopper_pearson(int(ok.sum()), d.size, alpha)
            if not (hi >= bracket[0] - 1e-12 and lo <= bracket[1] + 1e-12):
                misses.append(
                    f"point {k} {event.value}: sim {ok.mean():.4f} [{lo:.4f}, {hi:.4f}] "
                    f"vs [{bracket[0]:.4f}, {bracket[1]:.4f}]"
                )
    elapsed = time.perf_counter() - t0
    detail = f"{checks - len(misses)}/{checks} event checks bracketed (Bonferroni 95%)"
    if misses:
        detail += "; " + "; ".join(misses)
    assert record(3, not misses, detail, elapsed, 600)


def test_criterion_4_closed_forms():
    cfg = NetworkConfig()
    full = TierLoad(10.0, 10.0, 5.0, 5.0, 10.0, 10.0)
    zf = (1 - Fraction(1, 16)) ** 9
    checks = {}
    for side in ("Lower", "Upper"):
        v = mm_conditional_asp(AssociationEvent.MM_HIT_LOS, 50.0, 1e-30, cfg, full, 0.5, side)
        checks[f"nu->0 {side}"] = v == pytest.approx(float(zf), rel=1e-12)
    checks["admission 7/12"] = backhaul_admission(3, 0.5, 1) == pytest.approx(7 / 12, rel=1e-15)
    checks["delay 3.042"] = abs(backhaul_delay("m", cfg) - 3.042) <= 1e-3 and backhaul_delay(
        "m", cfg
    ) == pytest.approx(BACKHAUL_DELAY_M, rel=1e-12)
    checks["capacity 4e6"] = backhaul_capacity(cfg) == 4.0e6
    failed = [k for k, v in checks.items() if not v]
    assert record(4, not failed, "all spot checks exact" if not failed else f"failed: {failed}")


def test_criterion_5_asp_vs_skewness():
    t0 = time.perf_counter()
    cfg = NetworkConfig(c_mu=3, c_m=2)
    asp = {}
    for n in (1, 3, 5):
        for u in UPSILONS:
            c = cfg.replace(upsilon=u, n_retx=n)
            f = zipf_popularity(c.f_count, u)
            for policy in ("NoCache", "UC", "MC"):
                asp[policy, n, u] = evaluate(c, profile_for(c, policy), "Lower", f).asp_retx
    bad = []
    for n in (1, 3, 5):
        for u in UPSILONS:
            if not asp["NoCache", n, u] <= asp["UC", n, u] <= asp["MC", n, u]:
                bad.append(f"order N={n} u={u}")
    for policy in ("NoCache", "UC", "MC"):
        for u in UPSILONS:
            if not asp[policy, 1, u] <= asp[policy, 3, u] <= asp[policy, 5, u]:
                bad.append(f"N-monotone {policy} u={u}")
    elapsed = time.perf_counter() - t0
    detail = (
        f"u=0.8 N=1 Lower: NoCache {asp['NoCache', 1, 0.8]:.4f} <= UC {asp['UC', 1, 0.8]:.4f}"
        f" <= MC {asp['MC', 1, 0.8]:.4f}"
    )
    if bad:
        detail += "; violations: " + ", ".join(bad)
    assert record(5, not bad, detail, elapsed, 120)


def _analytic_grid(name, sides=("Lower", "Upper")):
    spec = preset(name, engines="analytic", sides=list(sides))
    out = {}
    for task in build_tasks(NetworkConfig(), spec):
        f = zipf_popularity(task.cfg.f_count, task.cfg.upsilon)
        prof = profile_for(task.cfg, task.policy, task.seed)
        key = tuple(sorted(task.series.items()))
        for side in sides:
            out[key, task.policy, side, task.value] = evaluate(task.cfg, prof, side, f)
    return spec, out


def test_criterion_6_asp_vs_backhaul():
    spec, res = _analytic_grid("fig2")
    bad, gaps = [], []
    c1s = spec.values
    for series in spec.series:
        key = tuple(sorted(series.items()))
        for side in ("Lower", "Upper"):
            mc = [res[key, "MC", side, c].asp_retx for c in c1s]
            if any(b < a for a, b in zip(mc, mc[1:])):
                bad.append(f"MC not monotone {dict(key)} {side}")
            gaps.append(mc[-1] - mc[-2])
            if mc[-1] - mc[-2] >= 1e-3:
                bad.append(f"MC not saturated {dict(key)} {side}: {mc[-1] - mc[-2]:.2e}")
            low = res[key, "NoCache", side, c1s[0]].asp_retx
            for policy in ("MC", "UC", "RC"):
                if not low < res[key, policy, side, c1s[0]].asp_retx:
                    bad.append(f"NoCache not below {policy} {dict(key)} {side}")
    detail = f"largest top-two c1 gap {max(gaps):.2e}"
    if bad:
        detail += "; " + "; ".join(bad)
    assert record(6, not bad, detail)


def test_criterion_7_backhaul_load():
    base = NetworkConfig()
    f = zipf_popularity(base.f_count, base.upsilon)
    big = base.replace(c_mu=17, c_m=15)
    small = base.replace(c_mu=3, c_m=2)
    l_big = backhaul_load_density(big, f, profile_for(big, "MC"))
    l_small = backhaul_load_density(small, f, profile_for(small, "MC"))
    l_none = backhaul_load_density(base, f, profile_for(base, "NoCache"))
    oracle = (
        l_big == pytest.approx(BACKHAUL_LOAD_MC_17_15, rel=1e-12)
        and l_small == pytest.approx(BACKHAUL_LOAD_MC_3_2, rel=1e-12)
        and l_none == pytest.approx(BACKHAUL_LOAD_NOCACHE, rel=1e-12)
    )
    ok = l_big < l_small < l_none and oracle
    assert record(7, ok, f"MC(17,15) {l_big:.4f} < MC(3,2) {l_small:.4f} < NoCache {l_none:.4f}; oracle match {oracle}")


def test_criterion_8_latency():
    spec, res = _analytic_grid("fig7")
    bad = []
    for series in spec.series:
        key = tuple(sorted(series.items()))
        for side in ("Lower", "Upper"):
            mc = [res[key, "MC", side, u].latency_mean for u in UPSILONS]
            if any(not b < a for a, b in zip(mc, mc[1:])):
                bad.append(f"MC not strictly decreasing {dict(key)} {side}")
            for u in UPSILONS:
                if not res[key, "MC", side, u].latency_mean <= res[key, "NoCache", side, u].latency_mean:
                    bad.append(f"MC above NoCache {dict(key)} {side} u={u}")
    caches = sorted({(s["c_mu"], s["c_m"]) for s in spec.series})
    for c_mu, c_m in caches:
        for policy in spec.policies:
            for side in ("Lower", "Upper"):
                for u in UPSILONS:
                    lat = [
                        res[tuple(sorted({"c_mu": c_mu, "c_m": c_m, "n_retx": n}.items())), policy, side, u].latency_mean
                        for n in (1, 3, 5)
                    ]
                    if not lat[0] <= lat[1] <= lat[2]:
                        bad.append(f"N-monotone {policy} ({c_mu},{c_m}) {side} u={u}")
    ref = tuple(sorted({"c_mu": 3, "c_m": 2, "n_retx": 1}.items()))
    detail = (
        f"(3,2) N=1 Lower MC latency {res[ref, 'MC', 'Lower', 0.1].latency_mean:.3f} s at u=0.1"
        f" -> {res[ref, 'MC', 'Lower', 1.5].latency_mean:.3f} s at u=1.5"
    )
    if bad:
        detail += "; " + "; ".join(bad[:10]) + (f" (+{len(bad) - 10} more)" if len(bad) > 10 else "")
    assert record(8, not bad, detail)


@pytest.mark.slow
def test_criterion_9_determinism(tmp_path):
    t0 = time.perf_counter()
    outs = []
    for workers in (1, 2):
        out = tmp_path / f"w{workers}"
        cmd = [sys.executable, "-m", "hybridcache", "sweep", "--preset", "fig1", "--trials", "20000",
               "--seed", "42", "--workers", str(workers), "--out", str(out)]
        subprocess.run(cmd, check=True, capture_output=True)
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    same = names == sorted(p.name for p in outs[1].iterdir()) and all(
        (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names
    )
    elapsed = time.perf_counter() - t0
    assert record(9, same, f"{len(names)} files compared byte for byte, workers 1 vs 2", elapsed)
