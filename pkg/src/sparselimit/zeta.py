"""Zeta transform of an exceedance measure.

``zeta(t) = int (cosh(t u) - 1) exp(-u^2/2) H(du)``, its derivatives, the
zeta measure, and the modified transform for hyperactive measures.  The
inverse-power families use the positive power series summed in the log
domain; every other family uses adaptive quadrature.
"""

import math

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import gammaln, logsumexp

from . import _quad
from .measures import ExceedanceMeasure, InversePower, InverseQuartic

__all__ = ["ZetaEvaluator", "power_log_series", "tabulated_log_zeta", "LOG_FLOAT_MAX", "ASYMPTOTIC_X", "log_zeta_asymptotic", "log_psi_asymptotic"]

LOG_FLOAT_MAX = math.log(np.finfo(float).max)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# beyond this |t| the inverse-power transform comes from the psi tail expansion
ASYMPTOTIC_X = 40.0

_BIN_EDGES = np.array([0.0, 1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128, np.inf])
_CHUNK = 16384


def _n_terms(xmax):
    # terms peak near r = x^2/2 with spread ~ x/sqrt(2); keep ~10 spreads past the peak
    return int(math.ceil(0.5 * xmax * xmax + 7.0 * xmax + 40.0))


def power_log_series(x, d, c, k=0, r0=1):
    """Log-magnitude of the k-th derivative of the inverse-power zeta series.

    Evaluates ``log |sum_{r>=r0} c 2^{r-d/2} Gamma(r-d/2) x^{2r-k} / (2r-k)!|``
    with a per-bin number of terms chosen from the largest ``|x|`` in the
    bin.  ``r0 = 1`` is the ordinary series (``0 < d < 2``); ``r0 = 2`` is
    the hyperactive series with the quadratic term removed (``2 < d < 4``).
    Beyond ``|x| = ASYMPTOTIC_X`` the psi tail expansion replaces the sum.

    Returns:
        ``(log_abs, sign)`` arrays shaped like ``x``.
    """
    x = np.asarray(x, dtype=float)
    ax = np.abs(x).ravel()
    out = np.full(ax.shape, -np.inf)
    rmin = max(r0, (k + 1) // 2)
    if ax.size == 0:
        return out.reshape(x.shape), np.ones(x.shape)
    if not np.all(np.isfinite(ax)):
        raise ValueError("non-finite argument")
    sign = np.where(x.ravel() < 0, (-1.0) ** k, 1.0)

    far = ax > ASYMPTOTIC_X
    if np.any(far):
        if k > 4:
            raise ValueError("far-field derivatives are available up to order 4")
        out[far] = _log_deriv_asymptotic(ax[far], d, c, k)
        if np.all(far):
            return out.reshape(x.shape), sign.reshape(x.shape)
    rmax = rmin + _n_terms(float(ax[~far].max()))
    r = np.arange(rmin, rmax + 1, dtype=float)
    powers = 2.0 * r - k
    a = math.log(c) + (r - d / 2) * math.log(2.0) + gammaln(r - d / 2) - gammaln(powers + 1.0)

    zero = ax == 0.0
    if np.any(zero) and powers[0] == 0.0:
        out[zero] = a[0]

    pos = ~zero & ~far
    bins = np.digitize(ax, _BIN_EDGES[1:-1])
    for b in np.unique(bins[pos]):
        idx = np.flatnonzero(pos & (bins == b))
        nt = min(len(r), rmin + _n_terms(float(ax[idx].max())) - rmin + 1)
        for start in range(0, idx.size, _CHUNK):
            sl = idx[start:start + _CHUNK]
            lx = np.log(ax[sl])
            lt = a[None, :nt] + powers[None, :nt] * lx[:, None]
            out[sl] = logsumexp(lt, axis=1)

    return out.reshape(x.shape), sign.reshape(x.shape)


def _tail_series(ax, d, kmax):
    """``S(t) = sum_k (d+1)_{2k} / (2^k k!) t^{-2k}`` and its first ``kmax`` derivatives over ``S``."""
    inv = 1.0 / ax
    inv2 = inv * inv
    coef = 1.0
    power = np.ones_like(ax)
    acc = [np.ones_like(ax)] + [np.zeros_like(ax) for _ in range(kmax)]
    for k in range(1, 30):
        coef *= (d + 2 * k - 1) * (d + 2 * k) / (2.0 * k)
        power = power * inv2
        term = coef * power
        fall = 1.0
        for j in range(kmax + 1):
            acc[j] = acc[j] + fall * term
            # falling factorial of the exponent -2k, times t^{-1} per order
            fall *= -2.0 * k - j
            term = term * inv
        if np.all(coef * power < 1e-17 * acc[0]):
            break
    return acc[0], [a / acc[0] for a in acc[1:]]


def log_psi_asymptotic(ax, d, c):
    """``log psi`` for large ``|t|`` from ``psi(t) ~ c |t|^{-d-1} sum_k (d+1)_{2k} / (2^k k!) t^{-2k}``.

    The neglected terms are of relative order ``phi(t)``, far below double
    precision once ``|t| > 40``.
    """
    ax = np.asarray(ax, dtype=float)
    S, _ = _tail_series(ax, d, 0)
    return math.log(c) - (d + 1.0) * np.log(ax) + np.log(S)


def _log_deriv_asymptotic(ax, d, c, k):
    """``log |zeta^{(k)}(t)|`` at large ``t > 0`` for ``k <= 4``.

    With ``L = log zeta`` the derivative is ``zeta`` times the complete Bell
    polynomial in ``L', ..., L^{(k)}``; subtracted low-order polynomials
    (the hyperactive remainder) are negligible at this range.
    """
    ax = np.asarray(ax, dtype=float)
    lz = log_zeta_asymptotic(ax, d, c)
    if k == 0:
        return lz
    _, s = _tail_series(ax, d, k)
    s += [np.zeros_like(ax)] * (4 - len(s))
    s1, s2, s3, s4 = s
    # derivatives of log S
    g = [s1, s2 - s1**2, s3 - 3 * s1 * s2 + 2 * s1**3,
         s4 - 4 * s1 * s3 - 3 * s2**2 + 12 * s1**2 * s2 - 6 * s1**4]
    # derivatives of t^2/2 - (d+1) log t
    inv = 1.0 / ax
    h = [ax - (d + 1) * inv, 1.0 + (d + 1) * inv**2, -2.0 * (d + 1) * inv**3, 6.0 * (d + 1) * inv**4]
    L1, L2, L3, L4 = (g[j] + h[j] for j in range(4))
    bell = [L1, L1**2 + L2, L1**3 + 3 * L1 * L2 + L3,
            L1**4 + 6 * L1**2 * L2 + 4 * L1 * L3 + 3 * L2**2 + L4]
    return lz + np.log(bell[k - 1])


def log_zeta_asymptotic(ax, d, c):
    ax = np.asarray(ax, dtype=float)
    return log_psi_asymptotic(ax, d, c) + 0.5 * ax * ax + LOG_SQRT_2PI


def _coshm1_scaled(t, u):
    """``(cosh(t u) - 1) exp(-(u^2 + t^2)/2)`` for ``t, u >= 0``."""
    a = t * u
    if a < 20.0:
        return 2.0 * math.sinh(0.5 * a) ** 2 * math.exp(-0.5 * (u * u + t * t))
    return (0.5 * math.exp(-0.5 * (u - t) ** 2) + 0.5 * math.exp(-0.5 * (u + t) ** 2)
            - math.exp(-0.5 * (u * u + t * t)))


def _coshm2_scaled(t, u):
    """``(cosh(t u) - 1 - (t u)^2/2) exp(-(u^2 + t^2)/2)`` for ``t, u >= 0``."""
    a = t * u
    g = math.exp(-0.5 * (u * u + t * t))
    if a < 0.5:
        a2 = a * a
        term, acc = a2 / 2.0, 0.0
        for j in range(2, 12):
            term *= a2 / ((2 * j - 1) * (2 * j))
            acc += term
        return acc * g
    if a < 20.0:
        return (math.cosh(a) - 1.0 - 0.5 * a * a) * g
    return (0.5 * math.exp(-0.5 * (u - t) ** 2) + 0.5 * math.exp(-0.5 * (u + t) ** 2)
            - (1.0 + 0.5 * a * a) * g)


class ZetaEvaluator:
    """Evaluate the zeta transform of a fixed exceedance measure.

    Args:
        measure: unit-normalized exceedance measure.
        mode: ``'series'`` (inverse-power families only) or ``'quadrature'``.
            Defaults to the series whenever it is available.
        series_tolerance: relative size of the first neglected series term.
    """

    def __init__(self, measure: ExceedanceMeasure, mode: str = None, series_tolerance: float = 1e-12):
        series_ok = isinstance(measure, (InversePower, InverseQuartic))
        if mode is None:
            mode = "series" if series_ok else "quadrature"
        if mode not in ("series", "quadrature"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "series" and not series_ok:
            raise ValueError("series mode requires an inverse-power measure")
        self.measure = measure
        self.mode = mode
        self.series_tolerance = series_tolerance
        self.hyperactive = measure.hyperactive
        if mode == "series":
            self._d = measure.d
            self._c = measure.unit_constant
            self._r0 = 2 if self.hyperactive else 1
        self.zeta2 = None if self.hyperactive else self._compute_zeta2()

    # -- internals -----------------------------------------------------
    def _compute_zeta2(self):
        if self.mode == "series":
            la, _ = power_log_series(0.0, self._d, self._c, k=2, r0=self._r0)
            return float(np.exp(la))
        return 2.0 * self.measure.integrate(lambda u: u * u * math.exp(-0.5 * u * u))

    def _log_quad_scalar(self, t, hyper):
        t = abs(float(t))
        if t == 0.0:
            return -np.inf
        kern = _coshm2_scaled if hyper else _coshm1_scaled
        breaks = [t, t + 4.0] + ([t - 4.0] if t > 5.0 else [])
        val = 2.0 * self.measure.integrate(lambda u: kern(t, u), breaks=breaks, check=1e-8)
        return math.log(val) + 0.5 * t * t

    def _log(self, t, hyper=False):
        """Log transform; ``-inf`` at zero, never raises for finite input."""
        t = np.asarray(t, dtype=float)
        if not np.all(np.isfinite(t)):
            raise ValueError("non-finite argument")
        if self.mode == "series":
            return power_log_series(t, self._d, self._c, k=0, r0=self._r0)[0]
        flat = [self._log_quad_scalar(v, hyper) for v in t.ravel()]
        return np.array(flat).reshape(t.shape)

    def _check_regular(self):
        if self.hyperactive:
            raise ValueError("measure is hyperactive; use hyper_zeta")

    # -- public surface ------------------------------------------------
    def log_zeta_or_neg_inf(self, t):
        """``log zeta(t)`` with ``zeta(0) = 0`` mapped to ``-inf``."""
        self._check_regular()
        return self._log(t)

    def log_zeta(self, t):
        """``log zeta(t)`` without overflow; raises at ``t = 0``."""
        t = np.asarray(t, dtype=float)
        if np.any(t == 0.0):
            raise ValueError("log zeta is undefined at t = 0")
        out = self.log_zeta_or_neg_inf(t)
        return float(out) if out.ndim == 0 else out

    def zeta(self, t):
        self._check_regular()
        la = self._log(t)
        if np.any(la > LOG_FLOAT_MAX):
            raise OverflowError("zeta overflows double precision; use log_zeta")
        out = np.exp(la)
        return float(out) if out.ndim == 0 else out

    def zeta_deriv(self, t, r: int):
        """``r``-th derivative of zeta, ``1 <= r <= 4``."""
        if r not in (1, 2, 3, 4):
            raise ValueError("only derivatives of order 1..4 are supported")
        t = np.asarray(t, dtype=float)
        if self.mode == "series":
            la, sign = power_log_series(t, self._d, self._c, k=r, r0=self._r0)
            if np.any(la > LOG_FLOAT_MAX):
                raise OverflowError("derivative overflows double precision")
            out = sign * np.exp(la)
        else:
            out = np.array([self._deriv_quad(v, r) for v in t.ravel()]).reshape(t.shape)
        return float(out) if out.ndim == 0 else out

    def _deriv_quad(self, t, r):
        s = math.copysign(1.0, t) if r % 2 else 1.0
        t = abs(t)
        hyper = self.hyperactive

        def f(u):
            g = math.exp(-0.5 * u * u)
            if r % 2:
                v = u**r * math.sinh(t * u) * g
            else:
                v = u**r * math.cosh(t * u) * g
            if hyper and r == 1:
                v -= t * u * u * g
            elif hyper and r == 2:
                v -= u * u * g
            return v

        breaks = [t, t + 4.0] if t > 0 else []
        return s * 2.0 * self.measure.integrate(f, breaks=breaks, check=1e-8)

    def zeta_measure_mass(self, theta: float, a: float = 0.0, b: float = np.inf, symmetric: bool = True):
        """Mass of ``zeta(du; theta)`` on ``a < |u| < b`` (one side if not symmetric)."""
        if not 0.0 <= a < b:
            raise ValueError("need 0 <= a < b")
        theta = abs(float(theta))
        if theta == 0.0:
            return 0.0
        fac = 2.0 if symmetric else 1.0
        kern = _coshm2_scaled if self.hyperactive else _coshm1_scaled
        lo, hi = a, b
        breaks = [p for p in (theta, theta + 4.0) if lo < p < hi]
        val = self.measure.integrate(lambda u: kern(theta, u), lower=lo, upper=hi, breaks=breaks, check=1e-8)
        return fac * val * math.exp(0.5 * theta * theta)

    def hyper_zeta(self, t):
        """Modified transform ``int (cosh(tx) - 1 - t^2 x^2/2) e^{-x^2/2} H(dx)``."""
        if not self.hyperactive:
            raise ValueError("hyper_zeta requires a hyperactive measure")
        la = self._log(t, hyper=True)
        out = np.exp(la)
        return float(out) if out.ndim == 0 else out

    def log_hyper_zeta_or_neg_inf(self, t):
        if not self.hyperactive:
            raise ValueError("hyper_zeta requires a hyperactive measure")
        return self._log(t, hyper=True)

    def log_kernel(self, t):
        """The transform appropriate to the measure (modified if hyperactive)."""
        return self._log(t, hyper=self.hyperactive)


def tabulated_log_zeta(measure: ExceedanceMeasure, tmax: float, step: float = 0.05, density=None):
    """Fast approximation of ``log zeta`` on ``[0, tmax]`` for batch likelihoods.

    ``log zeta(t) - 2 log t`` is smooth and even; it is tabulated on a grid
    using fixed log-coordinate Gauss-Legendre nodes and interpolated with a
    cubic spline.  Returns a vectorized callable mapping ``t`` to
    ``log zeta(t)`` (``-inf`` at 0).

    Args:
        measure: a Levy exceedance measure, or None when ``density`` is given.
        tmax: largest argument needed.
        step: grid spacing of the spline knots.
        density: optional vectorized unit density used instead of
            ``measure.density``.
    """
    if density is None:
        if measure.hyperactive:
            raise ValueError("tabulation supports Levy measures only")
        density = measure.density
    tmax = max(float(tmax), 1.0)
    u, w = _quad.log_gauss_legendre(-20.0, math.log(tmax + 14.0), width=0.25, order=16)
    with np.errstate(divide="ignore"):
        lw = np.log(w) + np.log(density(u)) + math.log(2.0)
    n = int(math.ceil(tmax / step)) + 4
    grid = np.linspace(0.0, n * step, n + 1)
    tg = grid[1:]
    a = tg[:, None] * u[None, :]
    # log((cosh(a) - 1) e^{-u^2/2}) = log(2 sinh^2(a/2)) - u^2/2
    half = 0.5 * a
    log_sinh = np.where(half < 20.0,
                        np.log(np.sinh(np.minimum(half, 20.0))),
                        half + np.log1p(-np.exp(-2.0 * half)) - math.log(2.0))
    lt = math.log(2.0) + 2.0 * log_sinh - 0.5 * u[None, :] ** 2 + lw[None, :]
    lz = logsumexp(lt, axis=1)
    zeta2 = float(np.exp(logsumexp(np.log(u) * 2 - 0.5 * u**2 + lw)))
    f = np.concatenate([[math.log(0.5 * zeta2)], lz - 2.0 * np.log(tg)])
    spline = CubicSpline(grid, f, bc_type=((1, 0.0), "not-a-knot"))

    def log_zeta(t):
        at = np.abs(np.asarray(t, dtype=float))
        if np.any(at > grid[-1]):
            raise ValueError("argument outside the tabulated range")
        with np.errstate(divide="ignore"):
            return spline(at) + 2.0 * np.log(at)

    log_zeta.zeta2 = zeta2
    return log_zeta
