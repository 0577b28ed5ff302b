"""Single-attempt success probabilities of the access and backhaul links.

mmWave links: zero-forcing penalty x noise x interference Laplace
transform, the last one bounded from below (pathwise Cauchy-Schwarz on the
multipath beam gains) and from above (every interfering beam leaks at
least the double sidelobe level).  uWave links: massive-MIMO mean rate
with Campbell mean interference, compared against the target rate.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.special import exp1, gamma, gammaincc, gammaln

from .catalog import backhaul_capacity
from .errors import InvalidArgument
from .geometry import LOS, MU, NLOS, AssociationEvent, distance_scale, joint_density, state_masses
from .numerics import DEFAULT_SPEC, find_root_bisect, integrate


class BoundSide(str, Enum):
    LOWER = "Lower"
    UPPER = "Upper"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        for s in cls:
            if s.value.lower() == str(value).lower():
                return s
        raise InvalidArgument(f"unknown bound side {value!r}")


def _path_params(cfg, state):
    if state == LOS:
        return cfg.alpha_los, cfg.eta_los
    if state == NLOS:
        return cfg.alpha_nlos, cfg.eta_nlos
    raise InvalidArgument(f"not a mmWave link state: {state!r}")


def _state_weight(state, r, beta):
    p_los = math.exp(-beta * r)
    return p_los if state == LOS else 1.0 - p_los


# -- mmWave -------------------------------------------------------------


def mm_threshold(nu_i, cfg, loads):
    """SINR threshold ``2^(nu U / W) - 1`` of an equal-share mmWave link."""
    return math.expm1(nu_i * loads.u_m / cfg.w_m * math.log(2.0))


def mm_gain(state, cfg, loads):
    """Beamforming gain times per-user power, ``(P/U) n_r n_t / eta``."""
    _, eta = _path_params(cfg, state)
    return cfg.p_m_tx / loads.u_m * cfg.nr_m * cfg.nt_m / eta


def zf_penalty(cfg, loads):
    """Probability that zero forcing leaves the intended beam usable."""
    return (1.0 - 1.0 / cfg.nr_m) ** (loads.u_m - 1.0)


def _interferer_regions(event, R, cfg, p_m_i):
    """``(state, thinning, lower limit)`` triples of the interfering mmWave processes."""
    state = event.state
    alpha_j, _ = _path_params(cfg, state)
    regions = []
    if cfg.interference_region == "association":
        # everything the serving BS beat: same state beyond R, other state
        # beyond the distance of equal path loss
        for s in (LOS, NLOS):
            alpha_s, _ = _path_params(cfg, s)
            r0 = R if s == state else R ** (alpha_j / alpha_s)
            regions.append((s, 1.0, r0))
    else:
        p = p_m_i if event.hit else 1.0 - p_m_i
        regions.append((state, p, R))
        regions.append((state, 1.0 - p, 0.0))
        other = NLOS if state == LOS else LOS
        regions.append((other, 1.0, 0.0))
    return regions


def _pgfl_exponent(state, weight, r0, c, kappa, e, cfg, spec):
    """``int_r0^inf [1 - (1 + kappa c r^-alpha)^-e] 2 pi lambda p_state(r) r dr``."""
    if weight <= 0.0:
        return 0.0
    alpha_s, _ = _path_params(cfg, state)
    kc = kappa * c
    beta = cfg.beta
    top = spec.truncation_radius

    def f(r):
        if r <= 0.0:
            return 0.0
        x = kc * r ** (-alpha_s)
        term = -math.expm1(-e * math.log1p(x))
        return term * _state_weight(state, r, beta) * r

    body = 0.0
    if r0 < top:
        scale = max(1.0, 0.25 * distance_scale(cfg), 0.5 * r0, kc ** (1.0 / alpha_s))
        body = integrate(f, r0, top, spec, scale).value
    # beyond the truncation radius the bracket is linear in x
    lo = max(r0, top)
    if state == NLOS:
        tail = lo ** (2.0 - alpha_s) / (alpha_s - 2.0) if alpha_s > 2.0 else math.inf
    elif beta > 0.0:
        tail = lo ** (1.0 - alpha_s) * math.exp(-beta * lo) / beta
    else:
        tail = lo ** (2.0 - alpha_s) / (alpha_s - 2.0) if alpha_s > 2.0 else math.inf
    tail *= e * kc
    return 2.0 * math.pi * cfg.lambda_m * weight * (body + tail)


def _bound_constants(side, cfg, interferer_state):
    _, eta_s = _path_params(cfg, interferer_state)
    if side is BoundSide.LOWER:
        return 1.0, float(eta_s)
    return (cfg.rho_bs * cfg.rho_ue) ** 2, 1.0


def mm_conditional_asp(event, R, nu_i, cfg, loads, p_m_i, side, spec=DEFAULT_SPEC):
    """Single-attempt success probability of a mmWave link of length ``R``.

    ``side`` selects the lower or upper bound of the interference Laplace
    transform.  Cache status only matters through the interferer regions,
    and only when ``cfg.interference_region == "displayed"``.
    """
    event = AssociationEvent(event)
    if event.tier != "m":
        raise InvalidArgument(f"{event.value} is not a mmWave event")
    if not R > 0:
        raise InvalidArgument("serving distance must be > 0")
    if loads.u_m < 1:
        raise InvalidArgument("u_m must be >= 1")
    side = BoundSide.parse(side)
    if cfg.interference_region == "association":
        # interferers do not depend on caching: share the cache entry
        key_event = AssociationEvent.from_parts(event.state, True)
        key_p = 0.0
    else:
        key_event, key_p = event, float(p_m_i)
    return _mm_asp_cached(key_event, float(R), float(nu_i), link_view(cfg), loads, key_p, side, spec)


_LINK_IRRELEVANT = dict(
    upsilon=0.0, c_mu=0, c_m=0, c1=0.0, c2=0.0, n_retx=1, f_count=1, nu=1.0,
    relay_r=1.0, k1=0.0, k2=0.0, a_proc=0.0, omega_proc=0.0, s_file=1.0, lambda_g=1.0,
)


def link_view(cfg):
    """``cfg`` with caching, catalog and delay fields blanked, for memo keys."""
    return _link_view(cfg)


@lru_cache(maxsize=4096)
def _link_view(cfg):
    return dataclasses.replace(cfg, **_LINK_IRRELEVANT)


@lru_cache(maxsize=200_000)
def _mm_asp_cached(event, R, nu_i, cfg, loads, p_m_i, side, spec):
    state = event.state
    alpha_j, eta_j = _path_params(cfg, state)
    q = mm_threshold(nu_i, cfg, loads)
    g = mm_gain(state, cfg, loads)
    log_p = (loads.u_m - 1.0) * math.log1p(-1.0 / cfg.nr_m)
    log_p -= q * cfg.sigma2_m * R**alpha_j / g
    if q > 0.0 and math.isfinite(log_p):
        # Laplace argument scaled by interferer array gain and full power
        c = q * loads.u_m * eta_j * R**alpha_j
        for s, weight, r0 in _interferer_regions(event, R, cfg, p_m_i):
            kappa, e = _bound_constants(side, cfg, s)
            log_p -= _pgfl_exponent(s, weight, r0, c, kappa, e, cfg, spec)
    return min(1.0, max(0.0, math.exp(log_p)))


def upper_gamma(s, x):
    """Upper incomplete gamma ``Gamma(s, x)`` for real ``s <= 1`` and ``x > 0``.

    Non-positive orders are reached from ``(0, 1]`` by the downward
    recurrence ``Gamma(s, x) = (Gamma(s + 1, x) - x^s e^-x) / s``.
    """
    x = np.asarray(x, dtype=float)
    n = max(0, math.ceil(-s)) if s <= 0 else 0
    top = s + n
    if top == 0:
        g = exp1(x)
    else:
        g = gammaincc(top, x) * gamma(top)
    for j in range(n - 1, -1, -1):
        sj = s + j
        g = (g - x**sj * np.exp(-x)) / sj
    return g


def path_moment(state, r0, alpha, beta):
    """``int_r0^inf p_state(r) r^(1 - alpha) dr`` for ``r0 > 0`` (array-valued)."""
    r0 = np.asarray(r0, dtype=float)
    free = r0 ** (2.0 - alpha) / (alpha - 2.0) if alpha > 2.0 else np.full_like(r0, np.inf)
    if beta == 0.0:
        return free if state == LOS else np.zeros_like(r0)
    los = beta ** (alpha - 2.0) * upper_gamma(2.0 - alpha, beta * r0)
    if state == LOS:
        return los
    return free - los


def mm_mean_interference(event, R, cfg, loads, p_m_i, side):
    """Campbell mean of mmWave interference power at a user served from ``R``.

    Per interferer the mean power is ``P n_r n_t k r^-alpha``, with ``k``
    the double-sidelobe level on the upper side, ``eta'`` on the lower side
    (the Cauchy-Schwarz envelope) and ``E[gamma^2]`` for ``side=None``, the
    exact mean of the sampled beam model.  Interferers closer than 1 m are
    ignored.  ``R`` may be an array.
    """
    event = AssociationEvent(event)
    R = np.asarray(R, dtype=float)
    total = np.zeros_like(R)
    for s, weight, r0 in _interferer_regions(event, R, cfg, p_m_i):
        alpha_s, eta_s = _path_params(cfg, s)
        if side is None:
            leak = mean_beam_leakage(cfg)
        elif BoundSide.parse(side) is BoundSide.LOWER:
            leak = float(eta_s)
        else:
            leak = (cfg.rho_bs * cfg.rho_ue) ** 2
        amp = cfg.p_m_tx * cfg.nr_m * cfg.nt_m * leak
        moment = path_moment(s, np.maximum(r0, 1.0), alpha_s, cfg.beta)
        total = total + 2.0 * math.pi * cfg.lambda_m * weight * amp * moment
    return float(total) if total.ndim == 0 else total


def mean_beam_leakage(cfg):
    """``E[gamma^2]`` of one interfering path under random AoA/AoD alignment."""
    a = 1.0 / cfg.nr_m
    d = 1.0 / cfg.nt_m
    return (
        a * d
        + (1 - a) * d * cfg.rho_bs**2
        + a * (1 - d) * cfg.rho_ue**2
        + (1 - a) * (1 - d) * (cfg.rho_bs * cfg.rho_ue) ** 2
    )


def mm_mean_rate(event, R, cfg, loads, p_m_i, side):
    """Equal-share mmWave rate at mean SINR (signal over mean interference and noise).

    ``side=None`` uses the mean beam leakage of the sampled beam model.
    ``R`` may be an array.
    """
    event = AssociationEvent(event)
    alpha_j, _ = _path_params(cfg, event.state)
    R = np.asarray(R, dtype=float)
    signal = mm_gain(event.state, cfg, loads) * R ** (-alpha_j)
    interference = mm_mean_interference(event, R, cfg, loads, p_m_i, side)
    out = cfg.w_m / loads.u_m * np.log1p(signal / (interference + cfg.sigma2_m)) / math.log(2.0)
    return float(out) if out.ndim == 0 else out


# -- uWave --------------------------------------------------------------


@dataclass(frozen=True)
class MuRateConstants:
    c1: float
    c2: float
    c3p: float
    c3pp: float


def mu_constants(hit, cfg, loads, p_mu_i):
    return _mu_constants(bool(hit), cfg, loads, float(p_mu_i))


@lru_cache(maxsize=4096)
def _mu_constants(hit, cfg, loads, p_mu_i):
    u = loads.u_mu
    if cfg.nt_mu < u:
        raise InvalidArgument(f"nt_mu={cfg.nt_mu} below served users {u:g}")
    if u < 1:
        raise InvalidArgument("u_mu must be >= 1")
    per_user = cfg.p_mu_tx / u
    dof = cfg.nt_mu - u + 1.0
    c1 = per_user * math.exp(2.0 * (gammaln(dof + 0.5) - gammaln(dof)))
    c2 = max(0.0, per_user * dof - c1)
    campbell = cfg.p_mu_tx * 2.0 * math.pi * cfg.lambda_mu / (cfg.alpha_mu - 2.0)
    if cfg.interference_region == "association":
        # the serving BS is the nearest one, so every interferer lies beyond r
        p_same = 1.0
    else:
        # same-status BSs lie beyond r, the rest anywhere beyond 1 m
        p_same = p_mu_i if hit else 1.0 - p_mu_i
    return MuRateConstants(c1=c1, c2=c2, c3p=campbell * p_same, c3pp=campbell * (1.0 - p_same))


def mu_mean_rate(hit, r, cfg, loads, p_mu_i):
    """Mean-SINR rate (bits/s) of a uWave user at distance ``r`` (clamped to >= 1 m).

    Interference enters through its Campbell mean; ``cfg.interference_region``
    decides whether BSs of the other cache status may sit closer than ``r``.
    """
    k = mu_constants(hit, cfg, loads, p_mu_i)
    a = cfg.alpha_mu
    if isinstance(r, (float, int)):
        r = max(float(r), 1.0)
        sinr = k.c1 * r**-a / (k.c2 * r**-a + k.c3p * r ** (2.0 - a) + k.c3pp + cfg.sigma2_mu)
        return cfg.w_mu / loads.u_mu * math.log1p(sinr) / math.log(2.0)
    r = np.maximum(np.asarray(r, dtype=float), 1.0)
    sig = k.c1 * r ** (-a)
    den = k.c2 * r ** (-a) + k.c3p * r ** (2.0 - a) + k.c3pp + cfg.sigma2_mu
    out = cfg.w_mu / loads.u_mu * np.log1p(sig / den) / math.log(2.0)
    return float(out) if out.ndim == 0 else out


def mu_critical_radius(hit, nu_i, cfg, loads, p_mu_i, spec=DEFAULT_SPEC):
    """Largest distance whose mean rate meets ``nu_i``.

    ``0.0`` when even 1 m falls short; ``inf`` when the truncation radius
    still meets the target.
    """
    g = lambda r: mu_mean_rate(hit, r, cfg, loads, p_mu_i) - nu_i
    if g(1.0) < 0:
        return 0.0
    if g(spec.truncation_radius) >= 0:
        return math.inf
    return find_root_bisect(g, 1.0, spec.truncation_radius, tol=1e-9)


def mu_conditional_asp(hit, nu_i, cfg, loads, p_mu_i, side, spec=DEFAULT_SPEC):
    """Probability that a uWave user of the hit (miss) event meets ``nu_i``.

    The distance integral runs from 1 m to ``floor(R*)`` (lower side) or
    ``ceil(R*)`` (upper side).
    """
    side = BoundSide.parse(side)
    if cfg.interference_region == "association":
        hit, p_mu_i = True, 0.0
    return _mu_asp_cached(bool(hit), float(nu_i), link_view(cfg), loads, float(p_mu_i), side, spec)


@lru_cache(maxsize=100_000)
def _mu_asp_cached(hit, nu_i, cfg, loads, p_mu_i, side, spec):
    r_star = mu_critical_radius(hit, nu_i, cfg, loads, p_mu_i, spec)
    if r_star == 0.0:
        return 0.0
    if math.isinf(r_star):
        top = math.inf
    else:
        top = math.floor(r_star) if side is BoundSide.LOWER else math.ceil(r_star)
    if top <= 1.0:
        return 0.0
    mass = state_masses(cfg, spec)[2]
    val = integrate(
        lambda r: joint_density(MU, r, cfg), 1.0, top, spec, distance_scale(cfg)
    ).value
    return min(1.0, max(0.0, val / mass))


# -- backhaul -----------------------------------------------------------


def backhaul_budget(cfg, nu_i):
    """Users a backhaul link can carry at ``nu_i`` each."""
    ratio = backhaul_capacity(cfg) / nu_i
    # guard against a ratio landing a rounding error below an integer
    return int(math.floor(ratio * (1.0 + 1e-12)))


def _admission_integer(u, p_hit, n_b):
    if u <= 1:
        return 1.0 if n_b >= 1 else 0.0
    m = u - 1
    total = 0.0
    for n in range(m + 1):
        total += math.comb(m, n) * p_hit ** (m - n) * (1.0 - p_hit) ** n * min(1.0, n_b / (n + 1))
    return total


def backhaul_admission(u, p_hit, n_b):
    """Admission probability of a cache-miss user sharing a cell with ``u - 1`` others.

    The competing users each miss with probability ``1 - p_hit``; a budget
    of ``n_b`` is shared uniformly among the misses.  Fractional ``u`` is
    linear interpolation between neighbouring integers (the simulator
    rounds ``u`` randomly with the same mean).
    """
    if not 0.0 <= p_hit <= 1.0:
        raise InvalidArgument("p_hit outside [0, 1]")
    if u < 1:
        raise InvalidArgument("cell load must be >= 1")
    lo = math.floor(u)
    frac = u - lo
    val = _admission_integer(lo, p_hit, n_b)
    if frac > 0:
        val = (1.0 - frac) * val + frac * _admission_integer(lo + 1, p_hit, n_b)
    return min(1.0, max(0.0, val))


def backhaul_asp(tier, nu_i, cfg, loads, p_hit):
    """Backhaul success probability of a cache miss served by ``tier`` ("m" or "mu")."""
    if tier == "m":
        u = loads.u_m
    elif tier == "mu":
        u = loads.u_mu
    else:
        raise InvalidArgument(f"tier must be 'm' or 'mu', got {tier!r}")
    return backhaul_admission(u, p_hit, backhaul_budget(cfg, nu_i))


@dataclass(frozen=True)
class LinkConstants:
    """Derived per-evaluation scalars, mostly for reporting."""

    q_i: float
    g_gain: float
    s_lap: float
    c1_mimo: float
    c2_mimo: float
    c3p: float
    c3pp: float
    n_b: int
    r_star: float


def link_constants(cfg, loads, nu_i, R, state=LOS, hit=True, p_mu_i=0.0):
    alpha_j, _ = _path_params(cfg, state)
    q = mm_threshold(nu_i, cfg, loads)
    g = mm_gain(state, cfg, loads)
    k = mu_constants(hit, cfg, loads, p_mu_i)
    return LinkConstants(
        q_i=q,
        g_gain=g,
        s_lap=-q / (g * R ** (-alpha_j)),
        c1_mimo=k.c1,
        c2_mimo=k.c2,
        c3p=k.c3p,
        c3pp=k.c3pp,
        n_b=backhaul_budget(cfg, nu_i),
        r_star=mu_critical_radius(hit, nu_i, cfg, loads, p_mu_i),
    )
