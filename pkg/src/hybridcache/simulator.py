"""Monte Carlo engine: sampled networks, association, SINR and retransmissions.

Base stations are drawn as Poisson point processes in a square window
around the typical user at the origin.  Everything is vectorized over
blocks of trials; block ``b`` of stream ``key`` draws from
``SeedSequence(seed, spawn_key=(key, b))`` so results do not depend on how
blocks are scheduled.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .catalog import hit_probability
from .errors import InvalidArgument
from .geometry import LOS, MU, NLOS, AssociationEvent, loads_for
from .link import (
    backhaul_budget,
    mm_mean_rate,
    mm_threshold,
    mu_mean_rate,
    zf_penalty,
)
from .qos import backhaul_delay

BLOCK_SIZE = 1000
Z95 = 1.959963984540054


def default_window(cfg):
    """Half-width (m) of the simulation square: five mean macro-cell radii."""
    return 5.0 / math.sqrt(math.pi * cfg.lambda_mu)


def block_rng(seed, key, block):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key, block)))


def stream_key(*parts):
    """Stable 32-bit key from strings (independent of PYTHONHASHSEED)."""
    return zlib.crc32("|".join(str(p) for p in parts).encode())


# -- single realizations ---------------------------------------------------


@dataclass
class Realization:
    """One sampled network around the typical user at the origin."""

    half_width: float
    mm_xy: np.ndarray
    mm_los: np.ndarray
    mm_cache: np.ndarray  # (BS, F) cached-file indicators
    mu_xy: np.ndarray
    mu_cache: np.ndarray

    @property
    def mm_dist(self):
        return np.hypot(self.mm_xy[:, 0], self.mm_xy[:, 1])

    @property
    def mu_dist(self):
        return np.hypot(self.mu_xy[:, 0], self.mu_xy[:, 1])


def sample_realization(cfg, profile, window=None, seed=0):
    """Draw BS positions, LOS marks and cache contents; bit-identical per seed."""
    h = default_window(cfg) if window is None else float(window)
    rng = np.random.default_rng(seed)
    area = (2.0 * h) ** 2
    n_m = rng.poisson(cfg.lambda_m * area)
    n_mu = rng.poisson(cfg.lambda_mu * area)
    mm_xy = rng.uniform(-h, h, size=(n_m, 2))
    mu_xy = rng.uniform(-h, h, size=(n_mu, 2))
    mm_los = rng.random(n_m) < np.exp(-cfg.beta * np.hypot(mm_xy[:, 0], mm_xy[:, 1]))
    mm_cache = rng.random((n_m, profile.f_count)) < profile.p_m
    mu_cache = rng.random((n_mu, profile.f_count)) < profile.p_mu
    return Realization(h, mm_xy, mm_los, mm_cache, mu_xy, mu_cache)


@dataclass(frozen=True)
class Serving:
    event: AssociationEvent
    tier: str
    index: int
    distance: float


def _scores(d, alpha, bias):
    with np.errstate(divide="ignore"):
        return math.log(bias) - alpha * np.log(d)


def associate(realization, cfg, file_index):
    """Serving BS by largest biased received power; ``None`` if the window is empty."""
    r = realization
    mm_alpha = np.where(r.mm_los, cfg.alpha_los, cfg.alpha_nlos)
    mm_s = _scores(r.mm_dist, mm_alpha, cfg.b_m) if r.mm_los.size else np.empty(0)
    mu_s = _scores(r.mu_dist, cfg.alpha_mu, cfg.b_mu) if r.mu_xy.shape[0] else np.empty(0)
    if mm_s.size == 0 and mu_s.size == 0:
        return None
    best_mm = int(np.argmax(mm_s)) if mm_s.size else -1
    best_mu = int(np.argmax(mu_s)) if mu_s.size else -1
    if best_mu < 0 or (best_mm >= 0 and mm_s[best_mm] >= mu_s[best_mu]):
        state = LOS if r.mm_los[best_mm] else NLOS
        hit = bool(r.mm_cache[best_mm, file_index])
        return Serving(AssociationEvent.from_parts(state, hit), "m", best_mm, float(r.mm_dist[best_mm]))
    hit = bool(r.mu_cache[best_mu, file_index])
    return Serving(AssociationEvent.from_parts(MU, hit), "mu", best_mu, float(r.mu_dist[best_mu]))


# -- mmWave link sampling --------------------------------------------------


def other_cell_beams(loads):
    """Beams transmitted by an interfering mmWave BS (its mean load, at least 1)."""
    return max(1, int(round(loads.n_assoc_other_m)))


def _interference(rng, d, los, mask, cfg, loads):
    """Sampled mmWave interference at the origin; rows are independent trials.

    Each interferer sends ``U_b`` beams with power ``P/U_b`` over its
    ``eta`` paths.  A path's beam gain is ``A_k D_kt``: ``A_k = 1`` when the
    user's receive beam happens to align with the path (probability
    ``1/n_r``), else ``rho_bs``; ``D_kt = 1`` when transmit beam ``t``
    aligns with it (probability ``1/n_t``), else ``rho_ue``.  This
    reproduces the four-level gain table ``{1, rho_bs, rho_ue, rho_bs rho_ue}``.
    """
    b, k = d.shape
    if k == 0:
        return np.zeros(b)
    u_b = other_cell_beams(loads)
    eta = np.where(los, cfg.eta_los, cfg.eta_nlos)
    eta_max = max(cfg.eta_los, cfg.eta_nlos)
    path_on = np.arange(eta_max) < eta[..., None]
    x = (rng.standard_normal((b, k, eta_max)) + 1j * rng.standard_normal((b, k, eta_max))) / math.sqrt(2.0)
    a = np.where(rng.random((b, k, eta_max)) < 1.0 / cfg.nr_m, 1.0, cfg.rho_bs)
    xa = np.where(path_on, x * a, 0.0)
    g = _beam_energy(rng, xa, u_b, cfg.nt_m, cfg.rho_ue)
    alpha = np.where(los, cfg.alpha_los, cfg.alpha_nlos)
    with np.errstate(divide="ignore", over="ignore"):
        pl = np.where(mask, d ** (-alpha), 0.0)
    power = cfg.p_m_tx / u_b * cfg.nr_m * cfg.nt_m / eta * pl * g
    return np.sum(np.where(mask, power, 0.0), axis=1)


def _beam_energy(rng, xa, u_b, n_t, rho):
    """``sum_t |sum_p xa_p D_pt|^2`` with ``D_pt = 1`` w.p. ``1/n_t``, else ``rho``.

    Writing ``D = rho + (1 - rho) delta`` splits the sum into a dense part
    ``u_b rho^2 |S|^2`` and corrections at the aligned slots.  Aligned slots
    are drawn as a binomial count placed uniformly without replacement,
    which has the same law as independent per-slot draws but touches only
    about ``1/n_t`` of them.
    """
    b, k, eta_max = xa.shape
    s = xa.sum(axis=2)
    g = u_b * rho * rho * (s.real**2 + s.imag**2)
    n_slots = b * k * eta_max * u_b
    count = rng.binomial(n_slots, 1.0 / n_t)
    if count == 0:
        return g
    pos = rng.choice(n_slots, size=count, replace=False)
    path = pos // u_b
    key = (path // eta_max) * u_b + pos % u_b
    ukey, inv = np.unique(key, return_inverse=True)
    vals = xa.ravel()[path]
    c = np.bincount(inv, vals.real, ukey.size) + 1j * np.bincount(inv, vals.imag, ukey.size)
    bk = ukey // u_b
    sc = s.ravel()[bk]
    corr = 2.0 * rho * (1.0 - rho) * (sc.real * c.real + sc.imag * c.imag) + (1.0 - rho) ** 2 * (
        c.real**2 + c.imag**2
    )
    return g + np.bincount(bk, corr, b * k).reshape(b, k)


def _mm_signal(rng, d, los, cfg, loads):
    eta = np.where(los, cfg.eta_los, cfg.eta_nlos)
    alpha = np.where(los, cfg.alpha_los, cfg.alpha_nlos)
    x2 = rng.exponential(1.0, size=d.shape)
    z = rng.random(d.shape) < zf_penalty(cfg, loads)
    return cfg.p_m_tx / loads.u_m * cfg.nr_m * cfg.nt_m / eta * x2 * d ** (-alpha) * z


def mm_sinr_sample(realization, serving, cfg, loads, rng):
    """One SINR draw (fresh fading and beam alignment) for a mmWave serving link."""
    if serving.tier != "m":
        raise InvalidArgument("serving BS is not a mmWave BS")
    r = realization
    d = r.mm_dist[None, :]
    mask = np.ones_like(d, dtype=bool)
    mask[0, serving.index] = False
    interference = _interference(rng, d, r.mm_los[None, :], mask, cfg, loads)[0]
    los = np.array([bool(r.mm_los[serving.index])])
    signal = _mm_signal(rng, np.array([serving.distance]), los, cfg, loads)[0]
    return signal / (interference + cfg.sigma2_m)


def mu_rate_sample(realization, serving, cfg, loads, hit, p_mu_i=0.0):
    """uWave rate of the serving link: the mean-SINR rate at the sampled distance."""
    if serving.tier != "mu":
        raise InvalidArgument("serving BS is not a uWave BS")
    return mu_mean_rate(hit, serving.distance, cfg, loads, p_mu_i)


def mu_gain_samples(cfg, loads, size, rng):
    """Serving and interfering channel gains of the massive-MIMO link (diagnostics)."""
    serving = rng.gamma(cfg.nt_mu - loads.u_mu + 1.0, 1.0, size=size)
    interferer = rng.gamma(max(loads.n_assoc_other_mu, 1e-9), 1.0, size=size)
    return serving, interferer


# -- batched drops ----------------------------------------------------------


def _ppp(rng, lam, h, n):
    counts = rng.poisson(lam * (2.0 * h) ** 2, size=n)
    width = max(int(counts.max()) if n else 0, 1)
    xy = rng.uniform(-h, h, size=(n, width, 2))
    mask = np.arange(width)[None, :] < counts[:, None]
    return np.hypot(xy[..., 0], xy[..., 1]), mask


@dataclass
class _Drops:
    mm_d: np.ndarray
    mm_mask: np.ndarray
    mm_los: np.ndarray
    mu_d: np.ndarray
    mu_mask: np.ndarray


def _drop(rng, cfg, h, n):
    mm_d, mm_mask = _ppp(rng, cfg.lambda_m, h, n)
    mu_d, mu_mask = _ppp(rng, cfg.lambda_mu, h, n)
    mm_los = rng.random(mm_d.shape) < np.exp(-cfg.beta * mm_d)
    return _Drops(mm_d, mm_mask, mm_los, mu_d, mu_mask)


def _winners(dr, cfg):
    """Per trial: tier code (0 mm, 1 uWave, -1 empty), index, distance."""
    mm_alpha = np.where(dr.mm_los, cfg.alpha_los, cfg.alpha_nlos)
    mm_s = np.where(dr.mm_mask, _scores(dr.mm_d, mm_alpha, cfg.b_m), -np.inf)
    mu_s = np.where(dr.mu_mask, _scores(dr.mu_d, cfg.alpha_mu, cfg.b_mu), -np.inf)
    i_mm = np.argmax(mm_s, axis=1)
    i_mu = np.argmax(mu_s, axis=1)
    rows = np.arange(mm_s.shape[0])
    s_mm = mm_s[rows, i_mm]
    s_mu = mu_s[rows, i_mu]
    tier = np.where(s_mm >= s_mu, 0, 1)
    tier = np.where(np.isneginf(s_mm) & np.isneginf(s_mu), -1, tier)
    idx = np.where(tier == 0, i_mm, i_mu)
    dist = np.where(tier == 0, dr.mm_d[rows, i_mm], dr.mu_d[rows, i_mu])
    los = dr.mm_los[rows, i_mm] & (tier == 0)
    return tier, idx, dist, los


def association_drops(cfg, p_m_i, p_mu_i, trials, seed, key=0, window=None):
    """Event labels and serving distances of ``trials`` independent drops.

    Returns ``(events, distances, resampled)`` where ``events`` holds the
    index of each drop's event in :data:`geometry.EVENTS`.
    """
    h = default_window(cfg) if window is None else window
    events = np.empty(trials, dtype=np.int8)
    dists = np.empty(trials)
    resampled = 0
    done = 0
    block = 0
    while done < trials:
        rng = block_rng(seed, key, block)
        n = min(BLOCK_SIZE, trials - done)
        dr = _drop(rng, cfg, h, n)
        tier, _, dist, los = _winners(dr, cfg)
        hit = rng.random(n) < np.where(tier == 0, p_m_i, p_mu_i)
        ok = tier >= 0
        resampled += int(np.sum(~ok))
        ev = np.where(tier == 1, np.where(hit, 4, 5), np.where(los, np.where(hit, 0, 2), np.where(hit, 1, 3)))
        take = min(int(ok.sum()), trials - done)
        events[done:done + take] = ev[ok][:take]
        dists[done:done + take] = dist[ok][:take]
        done += take
        block += 1
    return events, dists, resampled


def conditional_mm_success(cfg, state, R, nu_i, trials, seed, key=0, loads=None, window=None):
    """Single-attempt success indicators of a mmWave link pinned at distance ``R``.

    The serving BS sits at ``R`` in ``state``; every sampled BS that would
    have won the association against it is removed, which is exactly the
    Palm conditioning of the Poisson processes.  ``R`` may also be an array
    of ``trials`` distances, one per trial.
    """
    loads = loads_for(cfg) if loads is None else loads
    R = np.broadcast_to(np.asarray(R, dtype=float), (trials,))
    h = max(default_window(cfg), 2.0 * float(R.max())) if window is None else window
    alpha_j = cfg.alpha_los if state == LOS else cfg.alpha_nlos
    q = mm_threshold(nu_i, cfg, loads)
    out = np.empty(trials, dtype=bool)
    done, block = 0, 0
    while done < trials:
        rng = block_rng(seed, key, block)
        n = min(BLOCK_SIZE, trials - done)
        r_blk = R[done:done + n]
        serve_score = math.log(cfg.b_m) - alpha_j * np.log(r_blk)
        dr = _drop(rng, cfg, h, n)
        mm_alpha = np.where(dr.mm_los, cfg.alpha_los, cfg.alpha_nlos)
        keep = dr.mm_mask & (_scores(dr.mm_d, mm_alpha, cfg.b_m) <= serve_score[:, None])
        los_serv = np.full(n, state == LOS)
        signal = _mm_signal(rng, r_blk, los_serv, cfg, loads)
        interference = _interference(rng, dr.mm_d, dr.mm_los, keep, cfg, loads)
        out[done:done + n] = signal >= q * (interference + cfg.sigma2_m)
        done += n
        block += 1
    return out


# -- full trials ------------------------------------------------------------


def _mean_ci(x):
    x = np.asarray(x, dtype=float)
    n = x.size
    m = float(np.mean(x))
    if n < 2:
        return m, m, m
    half = Z95 * float(np.std(x, ddof=1)) / math.sqrt(n)
    return m, m - half, m + half


@dataclass
class SimReport:
    """Empirical metrics with 95% normal confidence intervals."""

    trials: int
    seed: int
    asp: float
    asp_ci: tuple
    latency: float
    latency_ci: tuple
    backhaul_load: float
    backhaul_load_ci: tuple
    event_counts: dict
    resampled: int
    raw: dict = field(default=None, repr=False)


def _admission(rng, u, p_hit, n_b, n):
    """Backhaul admission draws; ``u`` is rounded at random to an integer with mean ``u``."""
    lo = math.floor(u)
    u_int = lo + (rng.random(n) < (u - lo))
    competitors = rng.binomial(np.maximum(u_int - 1, 0), 1.0 - p_hit)
    return rng.random(n) < np.minimum(1.0, n_b / (competitors + 1.0))


def _run_block(rng, cfg, popularity, profile, n, h, loads, ctx):
    nu = np.asarray(cfg.nu)
    files = rng.choice(popularity.size, size=n, p=popularity)
    dr = _drop(rng, cfg, h, n)
    tier, idx, dist, los = _winners(dr, cfg)
    empty = tier < 0
    # a drop with no BS at all is redrawn until it has one
    redraws = 0
    while np.any(empty):
        m = int(empty.sum())
        redraws += m
        dr2 = _drop(rng, cfg, h, m)
        t2, i2, d2, l2 = _winners(dr2, cfg)
        pos = np.flatnonzero(empty)
        tier[pos], idx[pos], dist[pos], los[pos] = t2, i2, d2, l2
        # interferer geometry of redrawn rows comes from the new drop
        k = max(dr.mm_d.shape[1], dr2.mm_d.shape[1])
        dr = _replace_rows(dr, dr2, pos, k)
        empty = tier < 0

    is_mm = tier == 0
    p_cache = np.where(is_mm, profile.p_m[files], profile.p_mu[files])
    hit = rng.random(n) < p_cache
    nu_f = nu[files]

    # per-trial access time and single-attempt link success draws
    t0 = np.empty(n)
    mu_ok = np.zeros(n, dtype=bool)
    for state, sel in ((LOS, is_mm & los), (NLOS, is_mm & ~los)):
        if np.any(sel):
            ev = AssociationEvent.from_parts(state, True)
            rate = np.atleast_1d(mm_mean_rate(ev, dist[sel], cfg, loads, 0.0, None))
            t0[sel] = cfg.s_file / rate
    sel_mu = ~is_mm
    if np.any(sel_mu):
        for h_flag in (True, False):
            s2 = sel_mu & (hit == h_flag)
            if not np.any(s2):
                continue
            p_mu_f = profile.p_mu[files]
            for p in np.unique(p_mu_f[s2]):
                s3 = s2 & (p_mu_f == p)
                rate = np.atleast_1d(mu_mean_rate(h_flag, dist[s3], cfg, loads, float(p)))
                t0[s3] = cfg.s_file / rate
                mu_ok[s3] = rate >= nu_f[s3]
    t0 = t0 + np.where(hit, 0.0, np.where(is_mm, ctx["delay_m"][files], ctx["delay_mu"][files]))

    q = ctx["q"][files]
    delivered = np.zeros(n, dtype=bool)
    attempts = np.zeros(n, dtype=np.int64)
    rows_mm = np.flatnonzero(is_mm)
    for _ in range(cfg.n_retx):
        pending = ~delivered
        attempts += pending
        ok = np.zeros(n, dtype=bool)
        sub = rows_mm[pending[rows_mm]]
        if sub.size:
            signal = _mm_signal(rng, dist[sub], los[sub], cfg, loads)
            mask = dr.mm_mask[sub].copy()
            mask[np.arange(sub.size), idx[sub]] = False
            interference = _interference(rng, dr.mm_d[sub], dr.mm_los[sub], mask, cfg, loads)
            ok[sub] = signal >= q[sub] * (interference + cfg.sigma2_m)
        ok |= mu_ok & pending
        miss = pending & ~hit
        if np.any(miss):
            rows = np.flatnonzero(miss)
            adm = np.empty(rows.size, dtype=bool)
            for tier_code, key in ((0, "m"), (1, "mu")):
                t_sel = tier[rows] == tier_code
                if np.any(t_sel):
                    r_rows = rows[t_sel]
                    adm[t_sel] = _admission(
                        rng, ctx["u_" + key], ctx["p_hit_" + key], ctx["n_b"][files[r_rows]], r_rows.size
                    )
            ok[rows] &= adm
        delivered |= ok & pending
    delay = attempts * t0
    events = np.where(
        is_mm,
        np.where(los, np.where(hit, 0, 2), np.where(hit, 1, 3)),
        np.where(hit, 4, 5),
    )
    bits = np.where(hit, 0.0, nu_f)
    return dict(
        file=files,
        event=events.astype(np.int8),
        distance=dist,
        attempts=attempts,
        delivered=delivered,
        delay=delay,
        backhaul_bits=bits,
        redraws=redraws,
    )


def _replace_rows(dr, dr2, pos, k):
    def pad(a, fill):
        if a.shape[1] == k:
            return a
        out = np.full((a.shape[0], k), fill, dtype=a.dtype)
        out[:, : a.shape[1]] = a
        return out

    mm_d, mm_mask, mm_los = pad(dr.mm_d, 1.0), pad(dr.mm_mask, False), pad(dr.mm_los, False)
    mm_d[pos], mm_mask[pos], mm_los[pos] = pad(dr2.mm_d, 1.0), pad(dr2.mm_mask, False), pad(dr2.mm_los, False)
    return _Drops(mm_d, mm_mask, mm_los, dr.mu_d, dr.mu_mask)


def _context(cfg, popularity, profile, loads):
    nu = np.asarray(cfg.nu)
    return dict(
        q=np.array([mm_threshold(v, cfg, loads) for v in nu]),
        n_b=np.array([backhaul_budget(cfg, v) for v in nu], dtype=float),
        delay_m=np.array([backhaul_delay("m", cfg, v) for v in nu]),
        delay_mu=np.array([backhaul_delay("mu", cfg, v) for v in nu]),
        u_m=loads.u_m,
        u_mu=loads.u_mu,
        p_hit_m=hit_probability(popularity, profile, "m"),
        p_hit_mu=hit_probability(popularity, profile, "mu"),
    )


def run_block(cfg, popularity, profile, n, seed, key, block, window=None):
    """Simulate block ``block`` of stream ``key`` (``n`` trials); pure function of its arguments."""
    popularity = np.asarray(popularity, dtype=float)
    loads = loads_for(cfg)
    h = default_window(cfg) if window is None else window
    rng = block_rng(seed, key, block)
    return _run_block(rng, cfg, popularity, profile, n, h, loads, _context(cfg, popularity, profile, loads))


def block_sizes(trials):
    full, rest = divmod(int(trials), BLOCK_SIZE)
    return [BLOCK_SIZE] * full + ([rest] if rest else [])


def merge_blocks(cfg, blocks, trials, seed, keep_raw=False):
    """Combine per-block outputs (in block order) into a :class:`SimReport`."""
    cat = {k: np.concatenate([b[k] for b in blocks]) for k in blocks[0] if k != "redraws"}
    asp = _mean_ci(cat["delivered"])
    lat = _mean_ci(cat["delay"])
    load = _mean_ci(cfg.lambda_u * cat["backhaul_bits"])
    counts = np.bincount(cat["event"], minlength=6)
    return SimReport(
        trials=int(trials),
        seed=int(seed),
        asp=asp[0],
        asp_ci=asp[1:],
        latency=lat[0],
        latency_ci=lat[1:],
        backhaul_load=load[0],
        backhaul_load_ci=load[1:],
        event_counts={e: int(c) for e, c in zip(AssociationEvent, counts)},
        resampled=int(sum(b["redraws"] for b in blocks)),
        raw=cat if keep_raw else None,
    )


def run_trials(cfg, popularity, profile, trials, seed, key=0, window=None, keep_raw=False):
    """Simulate ``trials`` requests; deterministic in ``(cfg, profile, trials, seed, key)``."""
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    popularity = np.asarray(popularity, dtype=float)
    loads = loads_for(cfg)
    h = default_window(cfg) if window is None else window
    ctx = _context(cfg, popularity, profile, loads)
    blocks = [
        _run_block(block_rng(seed, key, b), cfg, popularity, profile, n, h, loads, ctx)
        for b, n in enumerate(block_sizes(trials))
    ]
    return merge_blocks(cfg, blocks, trials, seed, keep_raw)
