import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridcache.catalog import CacheProfile, make_cache_profile, profile_for, zipf_popularity
from hybridcache.geometry import LOS, MU, NLOS, AssociationEvent, joint_density, loads_for
from hybridcache.link import backhaul_asp, mm_conditional_asp, mu_conditional_asp, mu_mean_rate
from hybridcache.numerics import integrate
from hybridcache.qos import (
    average_latency,
    backhaul_delay,
    backhaul_load_density,
    evaluate,
    expected_attempts,
    retransmission_asp,
    success_within,
    t0_access,
)

from oracles import (
    BACKHAUL_DELAY_M,
    BACKHAUL_DELAY_MU,
    BACKHAUL_LOAD_MC_3_2,
    BACKHAUL_LOAD_NOCACHE,
)


@given(st.floats(0, 1), st.integers(1, 20))
def test_attempt_algebra(p, n):
    assert 0.0 <= success_within(p, n) <= 1.0
    assert 1.0 <= expected_attempts(p, n) <= n
    assert expected_attempts(p, n) <= expected_attempts(p, n + 1)
    if p > 0:
        assert expected_attempts(p, n) == pytest.approx(success_within(p, n) / p, rel=1e-9)


def test_certain_success():
    assert success_within(1.0, 5) == 1.0 and expected_attempts(1.0, 5) == 1.0


def test_access_time():
    assert t0_access(1e6, 1e6) == 1.0
    assert t0_access(2e6, 1e6) == 0.5
    assert math.isinf(t0_access(0.0, 1e6))


def test_access_time_from_macro_rate(cfg):
    loads = loads_for(cfg)
    rate = mu_mean_rate(True, 100.0, cfg, loads, 0.5)
    assert t0_access(rate, 1e6) == 1e6 / rate


def test_backhaul_delay_arithmetic(cfg):
    assert backhaul_delay("m", cfg) == pytest.approx(BACKHAUL_DELAY_M, abs=1e-9)
    assert backhaul_delay("mu", cfg) == pytest.approx(BACKHAUL_DELAY_MU, abs=1e-9)
    assert backhaul_delay("m", cfg.replace(k1=0.0, k2=0.0)) == pytest.approx(1.0)
    d1 = backhaul_delay("m", cfg.replace(s_file=1e6))
    d2 = backhaul_delay("m", cfg.replace(s_file=2e6))
    d3 = backhaul_delay("m", cfg.replace(s_file=3e6))
    assert d3 - d2 == pytest.approx(d2 - d1, rel=1e-12)


def test_backhaul_load_extremes_and_oracle(cfg):
    f = zipf_popularity(20, 0.8)
    ones = CacheProfile(np.ones(20), np.ones(20), "UC")
    zeros = CacheProfile(np.zeros(20), np.zeros(20), "NoCache")
    assert backhaul_load_density(cfg, f, ones) == 0.0
    assert backhaul_load_density(cfg, f, zeros) == pytest.approx(BACKHAUL_LOAD_NOCACHE, rel=1e-14)
    mc = profile_for(cfg, "MC")
    assert backhaul_load_density(cfg, f, mc) == pytest.approx(BACKHAUL_LOAD_MC_3_2, rel=1e-9)


@settings(max_examples=30)
@given(st.lists(st.floats(0, 1), min_size=20, max_size=20), st.integers(0, 19), st.floats(0, 1))
def test_backhaul_load_nonincreasing_in_caching(cfg, p, i, bump):
    f = zipf_popularity(20, 0.8)
    base = CacheProfile(np.array(p), np.array(p), "RC")
    q = np.array(p)
    q[i] = max(q[i], bump)
    more = CacheProfile(q, q, "RC")
    assert backhaul_load_density(cfg, f, more) <= backhaul_load_density(cfg, f, base) + 1e-12


def test_backhaul_load_strictly_falls_with_cache_size(cfg):
    f = zipf_popularity(20, 0.8)
    for policy in ("MC", "UC"):
        loads = [backhaul_load_density(cfg, f, make_cache_profile(policy, c, c + 1, 20)) for c in range(0, 19)]
        assert all(b < a for a, b in zip(loads, loads[1:]))


def test_single_attempt_assembly_nocache(cfg):
    """N = 1: an independent assembly of the six event integrals."""
    loads = loads_for(cfg)
    f = zipf_popularity(20, 0.8)
    prof = profile_for(cfg, "NoCache")
    pb_m = backhaul_asp("m", 1e6, cfg, loads, 0.0)
    pb_mu = backhaul_asp("mu", 1e6, cfg, loads, 0.0)
    total = 0.0
    for state, ev in ((LOS, AssociationEvent.MM_MISS_LOS), (NLOS, AssociationEvent.MM_MISS_NLOS)):
        g = lambda r: mm_conditional_asp(ev, r, 1e6, cfg, loads, 0.0, "Lower") * joint_density(state, r, cfg) if r > 0 else 0.0
        total += pb_m * integrate(g, 0.0, math.inf, scale=30.0).value
    a_mu = integrate(lambda r: joint_density(MU, r, cfg), 0.0, math.inf, scale=30.0).value
    total += pb_mu * a_mu * mu_conditional_asp(False, 1e6, cfg, loads, 0.0, "Lower")
    assert retransmission_asp(cfg, f, prof, "Lower") == pytest.approx(total, rel=1e-6)


@pytest.mark.parametrize("policy", ["NoCache", "UC", "MC"])
def test_asp_nondecreasing_in_attempts(cfg, policy):
    for side in ("Lower", "Upper"):
        vals = [evaluate(cfg.replace(n_retx=n), profile_for(cfg, policy), side).asp_retx for n in (1, 3, 5)]
        assert vals[0] <= vals[1] <= vals[2]


@pytest.mark.parametrize("policy", ["NoCache", "UC", "MC"])
def test_latency_nondecreasing_in_attempts(cfg, policy):
    vals = [evaluate(cfg.replace(n_retx=n), profile_for(cfg, policy), "Lower").latency_mean for n in (1, 3, 5)]
    assert vals[0] <= vals[1] <= vals[2]


def test_policy_ordering_at_default_skew(cfg):
    for side in ("Lower", "Upper"):
        asp = {p: evaluate(cfg, profile_for(cfg, p), side).asp_retx for p in ("NoCache", "UC", "MC")}
        assert asp["NoCache"] <= asp["UC"] <= asp["MC"]


@pytest.mark.parametrize("policy", ["MC", "UC"])
def test_bigger_caches_never_hurt(cfg, policy):
    small = evaluate(cfg, profile_for(cfg, policy), "Lower").asp_retx
    big_cfg = cfg.replace(c_mu=10, c_m=8)
    big = evaluate(big_cfg, profile_for(big_cfg, policy), "Lower").asp_retx
    assert big >= small


def test_report_invariants(cfg):
    rep = evaluate(cfg.replace(n_retx=3), profile_for(cfg, "UC"), "Upper")
    assert 0.0 <= rep.asp_retx <= 1.0
    assert sum(rep.event_asp.values()) == pytest.approx(rep.asp_retx, rel=1e-12)
    assert sum(rep.event_latency.values()) == pytest.approx(rep.latency_mean, rel=1e-12)
    assert np.all(np.isfinite(rep.file_latency)) and rep.backhaul_load >= 0
    # every delivery needs at least the fastest possible access time
    assert rep.latency_mean >= cfg.s_file / (cfg.w_m * 40)


def test_mc_latency_falls_with_skew(cfg):
    lats = [average_latency(cfg.replace(upsilon=u), zipf_popularity(20, u), profile_for(cfg, "MC"), "Lower")
            for u in (0.1, 0.8, 1.5)]
    assert lats[0] > lats[1] > lats[2]
