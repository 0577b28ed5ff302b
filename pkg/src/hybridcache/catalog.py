"""Content popularity, probabilistic cache placement and backhaul capacity."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from .errors import InvalidArgument


class Policy(str, Enum):
    UC = "UC"  # uniform caching
    MC = "MC"  # most popular contents
    RC = "RC"  # random caching probabilities
    NO_CACHE = "NoCache"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        for p in cls:
            if p.value.lower() == str(value).lower():
                return p
        raise InvalidArgument(f"unknown caching policy {value!r}")


def zipf_popularity(f_count, upsilon):
    """Request probabilities ``f_i = i^-upsilon / sum_j j^-upsilon``, i = 1..F."""
    if f_count < 1:
        raise InvalidArgument("f_count must be >= 1")
    if upsilon < 0:
        raise InvalidArgument("upsilon must be >= 0")
    w = np.arange(1, f_count + 1, dtype=float) ** (-float(upsilon))
    return w / w.sum()


@dataclass(frozen=True)
class CacheProfile:
    """Per-file caching probabilities of the mmWave (``p_m``) and uWave (``p_mu``) tiers."""

    p_m: np.ndarray
    p_mu: np.ndarray
    policy: Policy

    def __post_init__(self):
        p_m = np.asarray(self.p_m, dtype=float)
        p_mu = np.asarray(self.p_mu, dtype=float)
        if p_m.shape != p_mu.shape or p_m.ndim != 1:
            raise InvalidArgument("p_m and p_mu must be 1-d vectors of equal length")
        if np.any((p_m < 0) | (p_m > 1)) or np.any((p_mu < 0) | (p_mu > 1)):
            raise InvalidArgument("caching probabilities must lie in [0, 1]")
        p_m.setflags(write=False)
        p_mu.setflags(write=False)
        object.__setattr__(self, "p_m", p_m)
        object.__setattr__(self, "p_mu", p_mu)
        object.__setattr__(self, "policy", Policy.parse(self.policy))

    @property
    def f_count(self):
        return self.p_m.size

    def tier(self, tier):
        if tier == "m":
            return self.p_m
        if tier == "mu":
            return self.p_mu
        raise InvalidArgument(f"tier must be 'm' or 'mu', got {tier!r}")


def random_caching_probabilities(c, f_count, rng):
    """One tier of random caching.

    Each probability is a uniform draw scaled by ``min(1, 2c/F)`` so that the
    expected total is about ``c``; if a draw still exceeds the cache budget
    the vector is rescaled to sum to exactly ``c``.
    """
    u = rng.random(f_count)
    p = np.clip(u * min(1.0, 2.0 * c / f_count), 0.0, 1.0)
    total = p.sum()
    if total > c:
        p = p * (c / total)
    return p


def _tier_vector(policy, c, f_count, rng):
    if policy is Policy.UC:
        return np.full(f_count, c / f_count)
    if policy is Policy.MC:
        p = np.zeros(f_count)
        p[:c] = 1.0
        return p
    if policy is Policy.NO_CACHE:
        return np.zeros(f_count)
    return random_caching_probabilities(c, f_count, rng)


def make_cache_profile(policy, c_m, c_mu, f_count, rng_seed=None):
    """Caching probabilities for both tiers under one placement policy.

    ``rng_seed`` is required for RC (and ignored otherwise).  The mmWave
    vector is drawn first, then the uWave vector, from one
    ``numpy.random.default_rng(rng_seed)`` stream.
    """
    policy = Policy.parse(policy)
    for name, c in (("c_m", c_m), ("c_mu", c_mu)):
        if c < 0 or c > f_count:
            raise InvalidArgument(f"{name}={c} outside [0, {f_count}]")
        if policy is Policy.MC and int(c) != c:
            raise InvalidArgument(f"{name} must be an integer for MC")
    rng = None
    if policy is Policy.RC:
        if rng_seed is None:
            raise InvalidArgument("random caching needs an rng_seed")
        rng = np.random.default_rng(rng_seed)
    p_m = _tier_vector(policy, int(c_m) if policy is Policy.MC else c_m, f_count, rng)
    p_mu = _tier_vector(policy, int(c_mu) if policy is Policy.MC else c_mu, f_count, rng)
    return CacheProfile(p_m=p_m, p_mu=p_mu, policy=policy)


def profile_for(cfg, policy, rng_seed=None):
    """Cache profile for ``cfg``'s cache sizes and catalog."""
    return make_cache_profile(policy, cfg.c_m, cfg.c_mu, cfg.f_count, rng_seed)


def backhaul_capacity(cfg):
    """Per-BS backhaul capacity ``c1 / (lambda_m + lambda_mu) + c2`` in bits/s."""
    # decimal-exact arithmetic on the shortest reprs, so 60 / (1e-5 + 5e-6)
    # is exactly 4e6 and the user budget floor(C_b / nu) does not lose one
    dec = lambda x: Fraction(repr(float(x)))
    total = dec(cfg.lambda_m) + dec(cfg.lambda_mu)
    if total <= 0:
        raise InvalidArgument("combined BS density must be > 0")
    return float(dec(cfg.c1) / total + dec(cfg.c2))


def hit_probability(popularity, profile, tier):
    """Probability that a random request is cached at a BS of ``tier``."""
    p = profile.tier(tier)
    f = np.asarray(popularity, dtype=float)
    if f.shape != p.shape:
        raise InvalidArgument(f"popularity has {f.size} entries, profile has {p.size}")
    return float(np.clip(np.dot(f, p), 0.0, 1.0))
