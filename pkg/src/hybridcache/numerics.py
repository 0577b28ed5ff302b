"""Quadrature and root finding used by the analytic engine.

``integrate`` wraps QUADPACK (``scipy.integrate.quad``).  Semi-infinite
ranges are truncated at ``QuadratureSpec.truncation_radius`` and the
integrand is required to have decayed there.  Long ranges are cut into
geometrically growing segments starting at a caller-supplied length
``scale`` so that a narrow peak near the origin is never stepped over.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from scipy import integrate as _spi

from .errors import BracketFailure, InvalidArgument, NumericFailure


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    truncation_radius: float = 1e5
    max_subdivisions: int = 200

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise InvalidArgument("quadrature tolerances must be > 0")
        if self.truncation_radius <= 0:
            raise InvalidArgument("truncation_radius must be > 0")
        if self.max_subdivisions < 1:
            raise InvalidArgument("max_subdivisions must be >= 1")


DEFAULT_SPEC = QuadratureSpec()


@dataclass(frozen=True)
class Quadrature:
    value: float
    error: float

    def __float__(self):
        return self.value


def _segments(lo, hi, scale):
    if scale is None or scale <= 0 or hi - lo <= scale:
        return [(lo, hi)]
    edges = [lo]
    step = scale
    while edges[-1] + step < hi:
        edges.append(edges[-1] + step)
        step *= 2.0
    edges.append(hi)
    return list(zip(edges[:-1], edges[1:]))


def integrate(f, lo, hi, spec=DEFAULT_SPEC, scale=None):
    """Integrate ``f`` over ``[lo, hi]``; ``hi`` may be ``math.inf``.

    Returns a :class:`Quadrature` whose ``error`` does not exceed
    ``max(abs_tol, rel_tol * |value|)``; otherwise raises
    :class:`NumericFailure` carrying the partial estimate.
    """
    lo = float(lo)
    hi = float(hi)
    if not lo < hi:
        if lo == hi:
            return Quadrature(0.0, 0.0)
        raise InvalidArgument(f"integration range [{lo}, {hi}] is reversed")

    if math.isinf(hi):
        hi = spec.truncation_radius
        if hi <= lo:
            raise InvalidArgument("lower limit beyond the truncation radius")
        tail = abs(f(hi))
        if not tail < spec.abs_tol / hi:
            raise NumericFailure(
                f"integrand has not decayed at the truncation radius {hi:g} "
                f"(|f| = {tail:.3g})",
                context={"truncation_radius": hi},
            )

    pieces = _segments(lo, hi, scale)
    # the absolute budget is shared between segments
    seg_abs = spec.abs_tol / (4.0 * len(pieces))
    total = 0.0
    err = 0.0
    for a, b in pieces:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", _spi.IntegrationWarning)
            val, e = _spi.quad(
                f, a, b, epsabs=seg_abs, epsrel=spec.rel_tol / 4.0, limit=spec.max_subdivisions
            )
        total += val
        err += e
    if not math.isfinite(total):
        raise NumericFailure("integral is not finite", estimate=total, error=err)
    if err > max(spec.abs_tol, spec.rel_tol * abs(total)):
        raise NumericFailure(
            f"quadrature did not converge (estimate {total:.6g} +/- {err:.3g})",
            estimate=total,
            error=err,
        )
    return Quadrature(total, err)


def find_root_bisect(g, lo, hi, tol=1e-9, max_iter=400):
    """Bisection root of ``g`` on ``[lo, hi]``; requires ``g(lo) * g(hi) <= 0``."""
    lo = float(lo)
    hi = float(hi)
    if not lo < hi:
        raise InvalidArgument("bisection needs lo < hi")
    g_lo = g(lo)
    g_hi = g(hi)
    if g_lo == 0:
        return lo
    if g_hi == 0:
        return hi
    if (g_lo > 0) == (g_hi > 0):
        raise BracketFailure(
            f"no sign change on [{lo:g}, {hi:g}] (g = {g_lo:.3g}, {g_hi:.3g})"
        )
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        if g_mid == 0:
            return mid
        if (g_mid > 0) == (g_lo > 0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    else:
        raise NumericFailure("bisection exceeded max_iter", estimate=0.5 * (lo + hi))
    return 0.5 * (lo + hi)
