"""Retransmission success probability, mean delivery latency and backhaul load.

A request for file ``i`` lands in one of six association events.  Each
attempt succeeds with the single-attempt probability of the access link,
multiplied for cache misses by the backhaul admission probability; at most
``N`` attempts are made.  Latency counts attempts times the per-attempt
time (access transfer, plus the backhaul fetch on a miss).
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from functools import lru_cache
from dataclasses import dataclass, field

import numpy as np

from .catalog import Policy, hit_probability, profile_for, zipf_popularity
from .errors import InvalidArgument, NumericFailure
from .geometry import (
    EVENTS,
    LOS,
    MU,
    NLOS,
    AssociationEvent,
    association_probabilities,
    distance_scale,
    joint_density,
    loads_for,
    state_masses,
)
from .link import (
    BoundSide,
    backhaul_asp,
    mm_conditional_asp,
    mm_mean_rate,
    mu_conditional_asp,
    mu_mean_rate,
)
from .numerics import DEFAULT_SPEC, integrate


def success_within(p, n):
    """Probability that one of ``n`` independent attempts succeeds."""
    return -math.expm1(n * math.log1p(-p)) if p < 1.0 else 1.0


def expected_attempts(p, n):
    """Mean number of attempts when stopping at the first success or after ``n``."""
    q = 1.0 - p
    return sum(q**k for k in range(n))


def t0_access(mean_rate, s_file):
    """Time to push ``s_file`` bits at ``mean_rate``; ``inf`` for a dead link."""
    if mean_rate <= 0:
        return math.inf
    return s_file / mean_rate


def backhaul_delay(tier, cfg, nu_i=None):
    """Fetch time over the backhaul: transfer at ``nu_i`` plus relay processing."""
    if tier == "m":
        lam = cfg.lambda_m
    elif tier == "mu":
        lam = cfg.lambda_mu
    else:
        raise InvalidArgument(f"tier must be 'm' or 'mu', got {tier!r}")
    if nu_i is None:
        nu_i = cfg.nu[0]
    hops = lam / cfg.lambda_g * cfg.k1 + (1.0 / (cfg.relay_r * math.sqrt(2.0 * cfg.lambda_g)) - 1.0) * cfg.k2
    return cfg.s_file / nu_i + hops * (cfg.a_proc + cfg.s_file * cfg.omega_proc)


def backhaul_load_density(cfg, popularity, profile, assoc_per_file=None):
    """Backhaul traffic per unit area (bits/s/m^2) with unconstrained backhaul."""
    f = np.asarray(popularity, dtype=float)
    nu = np.asarray(cfg.nu, dtype=float)
    if assoc_per_file is None:
        p_am = association_probabilities(cfg, 0.0, 0.0).p_am
    else:
        p_am = assoc_per_file[0].p_am
    miss_m = (1.0 - profile.p_m) * p_am
    miss_mu = (1.0 - profile.p_mu) * (1.0 - p_am)
    return float(cfg.lambda_u * np.sum(f * nu * (miss_m + miss_mu)))


@dataclass
class QosReport:
    """Analytic metrics for one configuration, cache profile and bound side.

    ``latency_mean`` belongs to the same side as ``asp_retx``: the lower
    side is pessimistic, so its latency is the larger one.
    """

    asp_retx: float
    latency_mean: float
    backhaul_load: float
    side: BoundSide
    event_asp: dict = field(default_factory=dict)
    event_latency: dict = field(default_factory=dict)
    file_asp: np.ndarray = None
    file_latency: np.ndarray = None


class _Evaluator:
    """Shared state for one (cfg, side) evaluation; memoizes distance integrals."""

    def __init__(self, cfg, side, spec):
        self.cfg = cfg
        self.side = BoundSide.parse(side)
        self.spec = spec
        self.loads = loads_for(cfg, spec)
        self.masses = dict(zip((LOS, NLOS, MU), state_masses(cfg, spec)))
        self.scale = distance_scale(cfg)
        self._mm = {}

    def _mm_t0(self, state, hit, p_m_i, R):
        event = AssociationEvent.from_parts(state, hit)
        rate = mm_mean_rate(event, R, self.cfg, self.loads, p_m_i, self.side)
        return t0_access(rate, self.cfg.s_file)

    def mm_terms(self, state, hit, nu_i, factor, extra_delay, p_m_i):
        """Memoized :meth:`mm_integrals`."""
        if self.cfg.interference_region == "association":
            p_m_i = 0.0  # interferers ignore caching; share across files
        key = (state, hit, nu_i, factor, extra_delay, p_m_i)
        if key not in self._mm:
            self._mm[key] = self.mm_integrals(state, hit, nu_i, factor, extra_delay, p_m_i)
        return self._mm[key]

    def mm_integrals(self, state, hit, nu_i, factor, extra_delay, p_m_i):
        """``(asp, latency)`` mass of one mmWave state with per-attempt ``factor``.

        Both are integrals against the unnormalized state density, so they
        already carry the geometric event probability.
        """
        cfg, n = self.cfg, self.cfg.n_retx
        event = AssociationEvent.from_parts(state, hit)
        if self.masses[state] <= 0 or factor <= 0:
            return 0.0, self._zero_factor_latency(state, hit, p_m_i, extra_delay)

        def ps(R):
            if R <= 0:
                return mm_conditional_asp(event, 1e-9, nu_i, cfg, self.loads, p_m_i, self.side, self.spec)
            return mm_conditional_asp(event, R, nu_i, cfg, self.loads, p_m_i, self.side, self.spec)

        def f_asp(R):
            return success_within(factor * ps(R), n) * joint_density(state, R, cfg)

        def f_lat(R):
            dens = joint_density(state, R, cfg) if R > 0 else 0.0
            if dens == 0.0:
                return 0.0
            t0 = self._mm_t0(state, hit, p_m_i, R) + extra_delay
            return t0 * expected_attempts(factor * ps(R), n) * dens

        asp = integrate(f_asp, 0.0, math.inf, self.spec, self.scale).value
        lat = integrate(f_lat, 0.0, math.inf, self.spec, self.scale).value
        return asp, lat

    def _zero_factor_latency(self, state, hit, p_m_i, extra_delay):
        cfg = self.cfg

        def f(R):
            dens = joint_density(state, R, cfg) if R > 0 else 0.0
            if dens == 0.0:
                return 0.0
            return (self._mm_t0(state, hit, p_m_i, R) + extra_delay) * dens

        if self.masses[state] <= 0:
            return 0.0
        return cfg.n_retx * integrate(f, 0.0, math.inf, self.spec, self.scale).value

    def mu_t0(self, hit, p_mu_i):
        """Mean access time of uWave users, averaged over their distance."""
        if self.masses[MU] <= 0:
            return 0.0
        if self.cfg.interference_region == "association":
            hit, p_mu_i = True, 0.0
        return _mu_t0(bool(hit), float(p_mu_i), self.cfg, self.loads, self.spec)


@lru_cache(maxsize=4096)
def _mu_t0(hit, p_mu_i, cfg, loads, spec):
    mass = state_masses(cfg, spec)[2]

    def f(r):
        dens = joint_density(MU, r, cfg)
        if dens == 0.0:
            return 0.0
        return t0_access(mu_mean_rate(hit, r, cfg, loads, p_mu_i), cfg.s_file) * dens

    return integrate(f, 0.0, math.inf, spec, distance_scale(cfg)).value / mass


@contextmanager
def _naming(event, **extra):
    """Attach the failing event (and any extra labels) to a numeric failure."""
    try:
        yield
    except NumericFailure as exc:
        exc.context.setdefault("event", AssociationEvent(event).value)
        for k, v in extra.items():
            exc.context.setdefault(k, v)
        raise


def _file_terms(ev, nu_i, p_m_i, p_mu_i, pb_m, pb_mu, d_bh_m, d_bh_mu):
    """Per-event ``(probability-weighted asp, probability-weighted latency)`` for one file."""
    cfg, n = ev.cfg, ev.cfg.n_retx
    out = {}
    for state in (LOS, NLOS):
        with _naming(AssociationEvent.from_parts(state, True)):
            asp_h, lat_h = ev.mm_terms(state, True, nu_i, 1.0, 0.0, p_m_i)
        with _naming(AssociationEvent.from_parts(state, False)):
            asp_m, lat_m = ev.mm_terms(state, False, nu_i, pb_m, d_bh_m, p_m_i)
        out[AssociationEvent.from_parts(state, True)] = (p_m_i * asp_h, p_m_i * lat_h)
        out[AssociationEvent.from_parts(state, False)] = ((1 - p_m_i) * asp_m, (1 - p_m_i) * lat_m)
    a_mu = ev.masses[MU]
    for hit in (True, False):
        weight = p_mu_i if hit else 1.0 - p_mu_i
        if a_mu <= 0 or weight <= 0:
            out[AssociationEvent.from_parts(MU, hit)] = (0.0, 0.0)
            continue
        with _naming(AssociationEvent.from_parts(MU, hit)):
            p = mu_conditional_asp(hit, nu_i, cfg, ev.loads, p_mu_i, ev.side, ev.spec)
            t0 = ev.mu_t0(hit, p_mu_i)
        if not hit:
            p *= pb_mu
            t0 += d_bh_mu
        out[AssociationEvent.from_parts(MU, hit)] = (
            weight * a_mu * success_within(p, n),
            weight * a_mu * t0 * expected_attempts(p, n),
        )
    return out


def evaluate(cfg, profile, side, popularity=None, spec=DEFAULT_SPEC):
    """All three metrics for ``profile`` on one bound side."""
    if cfg.n_retx < 1:
        raise InvalidArgument("n_retx must be >= 1")
    if popularity is None:
        popularity = zipf_popularity(cfg.f_count, cfg.upsilon)
    popularity = np.asarray(popularity, dtype=float)
    if popularity.size != profile.f_count or popularity.size != len(cfg.nu):
        raise InvalidArgument("popularity, profile and nu lengths differ")
    ev = _Evaluator(cfg, side, spec)
    hit_m = hit_probability(popularity, profile, "m")
    hit_mu = hit_probability(popularity, profile, "mu")
    file_asp = np.zeros(popularity.size)
    file_lat = np.zeros(popularity.size)
    event_asp = {e: 0.0 for e in EVENTS}
    event_lat = {e: 0.0 for e in EVENTS}
    for i, f_i in enumerate(popularity):
        nu_i = cfg.nu[i]
        try:
            terms = _file_terms(
                ev,
                nu_i,
                float(profile.p_m[i]),
                float(profile.p_mu[i]),
                backhaul_asp("m", nu_i, cfg, ev.loads, hit_m),
                backhaul_asp("mu", nu_i, cfg, ev.loads, hit_mu),
                backhaul_delay("m", cfg, nu_i),
                backhaul_delay("mu", cfg, nu_i),
            )
        except NumericFailure as exc:
            exc.context.setdefault("file", i + 1)
            raise
        for e, (a, d) in terms.items():
            event_asp[e] += f_i * a
            event_lat[e] += f_i * d
            file_asp[i] += a
            file_lat[i] += d
    asp = float(np.clip(np.dot(popularity, file_asp), 0.0, 1.0))
    return QosReport(
        asp_retx=asp,
        latency_mean=float(np.dot(popularity, file_lat)),
        backhaul_load=backhaul_load_density(cfg, popularity, profile),
        side=ev.side,
        event_asp=event_asp,
        event_latency=event_lat,
        file_asp=file_asp,
        file_latency=file_lat,
    )


def retransmission_asp(cfg, popularity, profile, side, spec=DEFAULT_SPEC):
    return evaluate(cfg, profile, side, popularity, spec).asp_retx


def average_latency(cfg, popularity, profile, side, spec=DEFAULT_SPEC):
    return evaluate(cfg, profile, side, popularity, spec).latency_mean


def evaluate_policy(cfg, policy, side, rng_seed=None, spec=DEFAULT_SPEC):
    """Convenience: metrics under a named placement policy at ``cfg``'s cache sizes."""
    profile = profile_for(cfg, Policy.parse(policy), rng_seed)
    return evaluate(cfg, profile, side, None, spec)
