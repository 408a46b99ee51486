"""Adaptive quadrature on the positive half-line in logarithmic coordinates.

Integrands in this package are typically singular at the origin (power-law
exceedance densities) and heavy- or Gaussian-tailed at infinity.  Both ends
become smooth after the substitution ``x = exp(+-s)``.
"""

import math
import warnings

import numpy as np
from scipy import integrate


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


_LIMIT = 400


def _quad(f, a, b, epsrel, epsabs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=_LIMIT)
    return val, err


def _safe(x, f):
    # f evaluated where x underflows to 0 or overflows to inf contributes nothing
    if x == 0.0 or not math.isfinite(x):
        return 0.0
    try:
        with np.errstate(all="ignore"):
            v = f(x)
    except (OverflowError, ZeroDivisionError):
        return 0.0
    return v if math.isfinite(v) else 0.0


def half_line(f, breaks=(), epsrel=1e-10, epsabs=0.0, check=1e-6):
    """Integrate ``f`` over ``(0, inf)``.

    The range is split at 1 and at every positive value in ``breaks``.
    Pieces below 1 use ``x = exp(-s)``; pieces above 1 use ``x = exp(s)``.

    Args:
        f: scalar integrand, finite on ``(0, inf)``.
        breaks: extra split points, e.g. the location of a peak.
        epsrel: relative tolerance passed to each adaptive piece.
        epsabs: absolute tolerance passed to each adaptive piece.
        check: the summed error estimate must not exceed
            ``check * |value| + 1e-300``; otherwise ``QuadratureError``.

    Returns:
        The integral value.
    """
    pts = sorted({float(b) for b in breaks if b > 0.0} | {1.0})
    lo = [p for p in pts if p < 1.0]
    hi = [p for p in pts if p > 1.0]

    def g_lo(s):
        if s > 745.0:
            return 0.0
        x = math.exp(-s)
        return _safe(x, f) * x

    def g_hi(s):
        if s > 709.0:
            return 0.0
        x = math.exp(s)
        return _safe(x, f) * x

    total, err = 0.0, 0.0
    # (0, 1]: s from inf down to 0; breaks below 1 become finite s-breaks
    s_edges = [0.0] + [-math.log(p) for p in reversed(lo)]
    for a, b in zip(s_edges[:-1], s_edges[1:]):
        v, e = _quad(g_lo, a, b, epsrel, epsabs)
        total += v
        err += e
    v, e = _quad(g_lo, s_edges[-1], np.inf, epsrel, epsabs)
    total += v
    err += e
    # [1, inf)
    s_edges = [0.0] + [math.log(p) for p in hi]
    for a, b in zip(s_edges[:-1], s_edges[1:]):
        v, e = _quad(g_hi, a, b, epsrel, epsabs)
        total += v
        err += e
    v, e = _quad(g_hi, s_edges[-1], np.inf, epsrel, epsabs)
    total += v
    err += e

    if not math.isfinite(total) or err > check * abs(total) + 1e-300 + epsabs:
        raise QuadratureError(f"quadrature did not converge: value={total!r}, error={err!r}")
    return total


def interval(f, a, b, breaks=(), epsrel=1e-10, epsabs=0.0, check=1e-6):
    """Integrate ``f`` over ``(a, b)`` with ``0 <= a < b <= inf``.

    Uses :func:`half_line` on the truncated integrand so the log-coordinate
    treatment of both ends is kept.
    """
    if not 0.0 <= a < b:
        raise ValueError(f"invalid interval ({a}, {b})")

    def g(x):
        return f(x) if a < x < b else 0.0

    pts = set(breaks)
    if a > 0:
        pts.add(a)
    if math.isfinite(b):
        pts.add(b)
    return half_line(g, breaks=pts, epsrel=epsrel, epsabs=epsabs, check=check)


def log_gauss_legendre(s_lo, s_hi, width=0.25, order=16):
    """Fixed nodes and weights for ``int_{e^s_lo}^{e^s_hi} f(u) du``.

    Composite Gauss-Legendre in ``s = log u``; the returned weights include
    the Jacobian ``u``.  Used for batched evaluation where adaptive
    quadrature per point would be too slow.
    """
    n_panels = max(1, int(math.ceil((s_hi - s_lo) / width)))
    edges = np.linspace(s_lo, s_hi, n_panels + 1)
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    s = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    ws = (half[:, None] * w[None, :]).ravel()
    u = np.exp(s)
    return u, ws * u
