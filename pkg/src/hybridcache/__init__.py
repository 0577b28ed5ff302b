"""Dual-engine (analytic + Monte Carlo) evaluation of cache-enabled hybrid mmWave/uWave networks."""

from .catalog import (
    CacheProfile,
    Policy,
    backhaul_capacity,
    hit_probability,
    make_cache_profile,
    profile_for,
    zipf_popularity,
)
from .config import NetworkConfig, load_config, validate_config
from .errors import (
    BracketFailure,
    ConfigError,
    DegenerateEvent,
    HybridCacheError,
    InvalidArgument,
    NumericFailure,
)
from .geometry import (
    AssociationEvent,
    AssociationProbabilities,
    TierLoad,
    association_probabilities,
    blockage_probs,
    distance_pdf,
    tier_loads,
)
from .link import BoundSide, backhaul_asp, mm_conditional_asp, mu_conditional_asp, mu_mean_rate
from .numerics import QuadratureSpec, find_root_bisect, integrate
from .qos import QosReport, average_latency, backhaul_delay, backhaul_load_density, evaluate, retransmission_asp
from .simulator import SimReport, run_trials

__version__ = "0.1.0"
