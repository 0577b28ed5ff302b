"""Blockage, biased association, serving-distance densities and cell loads.

Every association event is the product of a geometric part (which tier
and link state wins the biased path-loss comparison at distance R) and a
cache part (whether the winner holds the file).  Competing base stations
are never thinned by cache contents, so the cache part is a plain factor
``p`` or ``1 - p`` and the geometric parts are shared by all files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.special import gammainc

from .errors import DegenerateEvent, InvalidArgument
from .numerics import DEFAULT_SPEC, integrate

DEGENERATE_PROBABILITY = 1e-12

# the three geometric states a serving link can be in
LOS, NLOS, MU = "los", "nlos", "mu"


class AssociationEvent(str, Enum):
    MM_HIT_LOS = "MmHitLos"
    MM_HIT_NLOS = "MmHitNlos"
    MM_MISS_LOS = "MmMissLos"
    MM_MISS_NLOS = "MmMissNlos"
    MU_HIT = "MuHit"
    MU_MISS = "MuMiss"

    @property
    def tier(self):
        return "mu" if self in (AssociationEvent.MU_HIT, AssociationEvent.MU_MISS) else "m"

    @property
    def hit(self):
        return self in (
            AssociationEvent.MM_HIT_LOS,
            AssociationEvent.MM_HIT_NLOS,
            AssociationEvent.MU_HIT,
        )

    @property
    def state(self):
        if self.tier == "mu":
            return MU
        return LOS if self in (AssociationEvent.MM_HIT_LOS, AssociationEvent.MM_MISS_LOS) else NLOS

    @classmethod
    def from_parts(cls, state, hit):
        table = {
            (LOS, True): cls.MM_HIT_LOS,
            (NLOS, True): cls.MM_HIT_NLOS,
            (LOS, False): cls.MM_MISS_LOS,
            (NLOS, False): cls.MM_MISS_NLOS,
            (MU, True): cls.MU_HIT,
            (MU, False): cls.MU_MISS,
        }
        return table[(state, bool(hit))]


EVENTS = tuple(AssociationEvent)
MM_EVENTS = EVENTS[:4]
MU_EVENTS = EVENTS[4:]


def blockage_probs(r, beta):
    """``(p_los, p_nlos)`` of a link of length ``r`` under blockage density ``beta``."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0) or beta < 0:
        raise InvalidArgument("distance and blockage density must be >= 0")
    p_los = np.exp(-beta * r_arr)
    if p_los.ndim == 0:
        p_los = float(p_los)
    return p_los, 1.0 - p_los


def aux_Z(R, beta):
    """LOS-weighted area integral ``int_0^R r exp(-beta r) dr``.

    Written through the regularized lower incomplete gamma function, which
    stays accurate where the textbook closed form cancels (small beta*R).
    """
    R = np.asarray(R, dtype=float)
    if np.any(R < 0) or beta < 0:
        raise InvalidArgument("R and beta must be >= 0")
    if beta == 0:
        out = 0.5 * R * R
    else:
        out = gammainc(2.0, beta * R) / (beta * beta)
    return float(out) if out.ndim == 0 else out


def aux_Zhat(R, beta):
    """NLOS-weighted counterpart ``int_0^R r (1 - exp(-beta r)) dr = R^2/2 - Z(R)``."""
    R = np.asarray(R, dtype=float)
    if np.any(R < 0) or beta < 0:
        raise InvalidArgument("R and beta must be >= 0")
    out = np.vectorize(_zhat_scalar, otypes=[float])(R, float(beta))
    return float(out) if out.ndim == 0 else out


def _gamma2(x):
    """Lower incomplete gamma ``gamma(2, x) = 1 - (1 + x) e^-x`` without cancellation."""
    if x < 1e-2:
        return x * x * (0.5 - x * (1.0 / 3.0 - x * (0.125 - x * (1.0 / 30.0 - x / 144.0))))
    return -math.expm1(-x) - x * math.exp(-x)


def _z_scalar(R, beta):
    if beta == 0.0:
        return 0.5 * R * R
    return _gamma2(beta * R) / (beta * beta)


def _zhat_scalar(R, beta):
    if beta == 0.0:
        return 0.0
    x = beta * R
    if x < 1e-2:
        return R * R * x * (1.0 / 3.0 - x * (0.125 - x * (1.0 / 30.0 - x / 144.0)))
    return 0.5 * R * R - _gamma2(x) / (beta * beta)


def _joint_density_scalar(state, R, cfg):
    if R <= 0.0:
        return 0.0
    lm, lmu, beta = cfg.lambda_m, cfg.lambda_mu, cfg.beta
    aL, aN, amu = cfg.alpha_los, cfg.alpha_nlos, cfg.alpha_mu
    bias = cfg.b_mu / cfg.b_m
    two_pi_lm = 2.0 * math.pi * lm
    if state == LOS:
        log_void = (
            -math.pi * lmu * (bias * R**aL) ** (2.0 / amu)
            - two_pi_lm * _z_scalar(R, beta)
            - two_pi_lm * _zhat_scalar(R ** (aL / aN), beta)
        )
        return math.exp(log_void - beta * R) * two_pi_lm * R
    if state == NLOS:
        log_void = (
            -math.pi * lmu * (bias * R**aN) ** (2.0 / amu)
            - two_pi_lm * _z_scalar(R ** (aN / aL), beta)
            - two_pi_lm * _zhat_scalar(R, beta)
        )
        return math.exp(log_void) * two_pi_lm * R * -math.expm1(-beta * R)
    if state == MU:
        reach = R**amu / bias
        log_void = (
            -math.pi * lmu * R * R
            - two_pi_lm * _z_scalar(reach ** (1.0 / aL), beta)
            - two_pi_lm * _zhat_scalar(reach ** (1.0 / aN), beta)
        )
        return math.exp(log_void) * 2.0 * math.pi * lmu * R
    raise InvalidArgument(f"unknown link state {state!r}")


def joint_density(state, R, cfg):
    """Density (1/m) that the winning BS is in ``state`` at distance ``R``.

    Cache-agnostic; multiply by ``p`` or ``1 - p`` for the hit/miss events.
    """
    if isinstance(R, (float, int)):
        return _joint_density_scalar(state, float(R), cfg)
    R = np.asarray(R, dtype=float)
    out = np.array([_joint_density_scalar(state, float(r), cfg) for r in R.ravel()])
    out = out.reshape(R.shape)
    return float(out) if out.ndim == 0 else out


def distance_scale(cfg):
    """Length scale (m) of typical serving distances, used to seed quadrature segments."""
    return 0.5 / math.sqrt(math.pi * (cfg.lambda_m + cfg.lambda_mu))


def geometry_key(cfg):
    return (
        cfg.lambda_mu,
        cfg.lambda_m,
        cfg.beta,
        cfg.alpha_los,
        cfg.alpha_nlos,
        cfg.alpha_mu,
        cfg.b_mu,
        cfg.b_m,
    )


@lru_cache(maxsize=512)
def _state_masses(key, spec):
    cfg = _GeomView(*key)
    scale = distance_scale(cfg)
    return tuple(
        integrate(lambda r, s=s: joint_density(s, r, cfg), 0.0, math.inf, spec, scale).value
        for s in (LOS, NLOS, MU)
    )


@dataclass(frozen=True)
class _GeomView:
    lambda_mu: float
    lambda_m: float
    beta: float
    alpha_los: float
    alpha_nlos: float
    alpha_mu: float
    b_mu: float
    b_m: float


def state_masses(cfg, spec=DEFAULT_SPEC):
    """Probabilities that the winner is mmWave LOS, mmWave NLOS, or uWave."""
    return _state_masses(geometry_key(cfg), spec)


@dataclass(frozen=True)
class AssociationProbabilities:
    """The six per-file association event probabilities and tier aggregates."""

    mm_hit_los: float
    mm_hit_nlos: float
    mm_miss_los: float
    mm_miss_nlos: float
    mu_hit: float
    mu_miss: float
    p_am: float
    p_amu: float

    def __getitem__(self, event):
        return getattr(self, _EVENT_FIELDS[AssociationEvent(event)])

    def items(self):
        return [(e, self[e]) for e in EVENTS]

    def total(self):
        return sum(v for _, v in self.items())


_EVENT_FIELDS = {
    AssociationEvent.MM_HIT_LOS: "mm_hit_los",
    AssociationEvent.MM_HIT_NLOS: "mm_hit_nlos",
    AssociationEvent.MM_MISS_LOS: "mm_miss_los",
    AssociationEvent.MM_MISS_NLOS: "mm_miss_nlos",
    AssociationEvent.MU_HIT: "mu_hit",
    AssociationEvent.MU_MISS: "mu_miss",
}


def association_probabilities(cfg, p_m_i, p_mu_i, spec=DEFAULT_SPEC):
    for name, p in (("p_m_i", p_m_i), ("p_mu_i", p_mu_i)):
        if not 0.0 <= p <= 1.0:
            raise InvalidArgument(f"{name}={p} outside [0, 1]")
    a_los, a_nlos, a_mu = state_masses(cfg, spec)
    return AssociationProbabilities(
        mm_hit_los=p_m_i * a_los,
        mm_hit_nlos=p_m_i * a_nlos,
        mm_miss_los=(1.0 - p_m_i) * a_los,
        mm_miss_nlos=(1.0 - p_m_i) * a_nlos,
        mu_hit=p_mu_i * a_mu,
        mu_miss=(1.0 - p_mu_i) * a_mu,
        p_am=a_los + a_nlos,
        p_amu=a_mu,
    )


def distance_pdf(event, D, cfg, p_m_i, p_mu_i, spec=DEFAULT_SPEC):
    """Serving-distance density conditioned on ``event``."""
    event = AssociationEvent(event)
    D_arr = np.asarray(D, dtype=float)
    if np.any(D_arr < 0):
        raise InvalidArgument("distance must be >= 0")
    prob = association_probabilities(cfg, p_m_i, p_mu_i, spec)[event]
    if prob <= DEGENERATE_PROBABILITY:
        raise DegenerateEvent(f"{event.value} has probability {prob:.3g}")
    mass = state_masses(cfg, spec)[(LOS, NLOS, MU).index(event.state)]
    # the cache factor p (or 1 - p) appears in numerator and denominator alike
    return joint_density(event.state, D, cfg) / mass


@dataclass(frozen=True)
class TierLoad:
    """Mean associated and served users per cell (fractional values allowed)."""

    n_assoc_tagged_m: float
    n_assoc_tagged_mu: float
    n_assoc_other_m: float
    n_assoc_other_mu: float
    u_m: float
    u_mu: float


def tier_loads(cfg, assoc):
    """Mean cell loads from the tier association probabilities.

    A tagged cell (the one serving the typical user) is size-biased, hence
    the ``1 + 1.28 x`` form; other cells carry the plain mean ``x``.
    """
    x_m = cfg.lambda_u * assoc.p_am / cfg.lambda_m
    x_mu = cfg.lambda_u * assoc.p_amu / cfg.lambda_mu
    tagged_m = 1.0 + 1.28 * x_m
    tagged_mu = 1.0 + 1.28 * x_mu
    return TierLoad(
        n_assoc_tagged_m=tagged_m,
        n_assoc_tagged_mu=tagged_mu,
        n_assoc_other_m=x_m,
        n_assoc_other_mu=x_mu,
        u_m=min(float(cfg.n_rf), tagged_m),
        u_mu=min(float(cfg.nt_mu), tagged_mu),
    )


def loads_for(cfg, spec=DEFAULT_SPEC):
    """Tier loads at ``cfg``; the cache profile does not enter."""
    return tier_loads(cfg, association_probabilities(cfg, 0.0, 0.0, spec))
