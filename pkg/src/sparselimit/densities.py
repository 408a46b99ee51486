"""The tail-inflation density psi = phi * zeta and the Gaussian-psi mixtures.

Includes the CM_d convolution-mixture family, standard and hyperactive
marginal densities, CDFs and quantiles, and rejection samplers for psi.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats
from scipy.special import gamma, gammaln, log_ndtr, ndtr

from . import _quad
from .measures import ExceedanceMeasure, InversePower, InverseQuartic, student_t_tail_constant
from .zeta import ASYMPTOTIC_X, LOG_SQRT_2PI, ZetaEvaluator, log_psi_asymptotic

__all__ = [
    "CMModel",
    "HyperModel",
    "EnvelopeError",
    "PsiSampler",
    "psi_density",
    "log_psi_density",
    "psi_cf",
    "psi_cf_numeric",
    "psi_sf",
    "psi_cdf",
    "psi_inverse_power_k",
    "hyper_psi_cf",
    "marginal_density",
    "marginal_cdf",
    "marginal_sf",
    "convolution_mixture_params",
    "cm_cf",
    "cm_add_noise",
    "convolution_cf",
    "sample_psi",
    "sample_cm",
    "quantile",
    "hyper_marginal_density",
    "hyper_marginal_cdf",
]



class EnvelopeError(RuntimeError):
    """The rejection envelope failed to dominate psi."""


@dataclass(frozen=True)
class CMModel:
    """Gaussian-psi mixture ``(1 - rho) N(0, sigma2) + rho sigma psi(./sigma)``.

    ``sigma2 = 1 + sigma0^2`` when read as signal plus unit-variance noise;
    the identifiability constraint is then ``rho <= (sigma0 / sigma)^d``.
    """

    rho: float
    d: float
    sigma2: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if not 0.0 < self.d < 2.0:
            raise ValueError("d must lie in (0, 2)")
        if not self.sigma2 >= 1.0:
            raise ValueError("sigma2 must be at least 1")

    @classmethod
    def from_sigma0(cls, rho, d, sigma0):
        return cls(rho, d, 1.0 + sigma0 * sigma0)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def sigma0(self) -> float:
        return math.sqrt(self.sigma2 - 1.0)

    @property
    def rho_bound(self) -> float:
        """Largest rho compatible with a signal-plus-unit-noise reading."""
        return (self.sigma0 / self.sigma) ** self.d

    @property
    def evaluator(self) -> ZetaEvaluator:
        return _ip_evaluator(self.d)


@dataclass(frozen=True)
class HyperModel:
    """Three-component marginal ``(1-g-r) phi + g y^2 phi + r psi_H``."""

    gamma: float
    rho: float
    measure: ExceedanceMeasure = field(default_factory=InverseQuartic)

    def __post_init__(self):
        if not self.measure.hyperactive:
            raise ValueError("HyperModel needs a hyperactive measure")
        if self.gamma < 0 or self.rho < 0 or not self.gamma + self.rho < 1.0:
            raise ValueError("need gamma, rho >= 0 and gamma + rho < 1")

    @property
    def evaluator(self) -> ZetaEvaluator:
        return ZetaEvaluator(self.measure)


_EVALUATORS = {}


def _ip_evaluator(d) -> ZetaEvaluator:
    ev = _EVALUATORS.get(d)
    if ev is None:
        ev = _EVALUATORS[d] = ZetaEvaluator(InversePower(d))
    return ev


def _as_evaluator(obj) -> ZetaEvaluator:
    if isinstance(obj, ZetaEvaluator):
        return obj
    if isinstance(obj, ExceedanceMeasure):
        return ZetaEvaluator(obj)
    return _ip_evaluator(float(obj))


# -- psi ---------------------------------------------------------------

def log_psi_density(x, measure=1.0):
    """Log of psi(x); ``-inf`` at the origin.

    ``measure`` may be an exceedance measure, a ``ZetaEvaluator``, or an
    inverse-power index ``d``.  For hyperactive measures psi uses the
    modified zeta transform.
    """
    ev = _as_evaluator(measure)
    x = np.asarray(x, dtype=float)
    far = np.abs(x) > ASYMPTOTIC_X
    if ev.mode != "series" or not np.any(far):
        out = -0.5 * x * x - LOG_SQRT_2PI + ev.log_kernel(x)
        return out if out.ndim else float(out)
    # log phi + log zeta would cancel catastrophically here
    out = np.empty(x.shape)
    out[far] = log_psi_asymptotic(np.abs(x[far]), ev._d, ev._c)
    near = ~far
    out[near] = -0.5 * x[near] ** 2 - LOG_SQRT_2PI + ev.log_kernel(x[near])
    return out


def psi_density(x, measure=1.0):
    """psi(x) = phi(x) zeta(x)."""
    out = np.exp(log_psi_density(x, measure))
    return out if np.ndim(out) else float(out)


def psi_inverse_power_k(d):
    """``K_d = 2^{d/2} Gamma(1/2 + d/2) / sqrt(pi)``."""
    return 2.0 ** (d / 2) * gamma(0.5 + d / 2) / math.sqrt(math.pi)


def psi_cf(t, d):
    """Characteristic function ``e^{-t^2/2} (1 - |t|^d / K_d)`` of the inverse-power psi."""
    if isinstance(d, ExceedanceMeasure):
        if not isinstance(d, InversePower):
            raise TypeError("closed-form CF only for inverse-power measures; use psi_cf_numeric")
        d = d.d
    t = np.asarray(t, dtype=float)
    out = np.exp(-0.5 * t * t) * (1.0 - np.abs(t) ** d / psi_inverse_power_k(d))
    return out if out.ndim else float(out)


def hyper_psi_cf(t):
    """CF of psi_H for the unit inverse-quartic measure.

    In general the CF is ``e^{-t^2/2} [1 + int (cos tx - 1 + t^2 x^2/2) H(dx)
    - (t^2/2) int x^2 (1 - e^{-x^2/2}) H(dx)]``.  For the inverse quartic the
    two integrals are ``|t|^3 sqrt(pi/2)`` and 6, giving
    ``e^{-t^2/2} (1 - 3 t^2 + |t|^3 sqrt(pi/2))``.
    """
    t = np.asarray(t, dtype=float)
    out = np.exp(-0.5 * t * t) * (1.0 - 3.0 * t * t + np.abs(t) ** 3 * math.sqrt(math.pi / 2))
    return out if out.ndim else float(out)


def _psi_tail_asymptotic_mass(X, d, c):
    """``int_X^inf`` of the tail expansion, termwise."""
    acc, coef = 0.0, 1.0
    for k in range(0, 30):
        if k:
            coef *= (d + 2 * k - 1) * (d + 2 * k) / (2.0 * k)
        piece = coef * X ** (-d - 2 * k) / (d + 2 * k)
        acc += piece
        if piece < 1e-17 * acc:
            break
    return c * acc


def psi_cf_numeric(t, measure=1.0, cutoff=ASYMPTOTIC_X):
    """CF of psi by direct Fourier quadrature of the density.

    ``[0, cutoff]`` uses adaptive quadrature; the tail uses QAWF (Fourier
    weight) on the same density.  Independent of the closed-form CF.
    """
    ev = _as_evaluator(measure)

    def f(x):
        return float(psi_density(x, ev))

    def one(tv):
        tv = abs(float(tv))
        n_osc = int(tv * cutoff / math.pi) + 1
        pts = np.linspace(0.0, cutoff, min(max(n_osc, 8), 200) + 1)[1:-1]
        body = integrate.quad(lambda x: math.cos(tv * x) * f(x), 0.0, cutoff,
                              points=pts, limit=2000, epsabs=1e-14, epsrel=1e-12)[0]
        if tv == 0.0:
            if ev.mode == "series":
                tail = _psi_tail_asymptotic_mass(cutoff, ev._d, ev._c)
            else:
                tail = integrate.quad(f, cutoff, np.inf, limit=1000, epsabs=1e-14)[0]
        else:
            tail = integrate.quad(f, cutoff, np.inf, weight="cos", wvar=tv, limlst=200)[0]
        return 2.0 * (body + tail)

    t = np.asarray(t, dtype=float)
    out = np.array([one(v) for v in t.ravel()]).reshape(t.shape)
    return out if out.ndim else float(out)


def _gauss_bracket(A, u):
    """``Phibar(A-u) + Phibar(A+u) - 2 e^{-u^2/2} Phibar(A)`` for ``A >= 0``."""
    sfA = ndtr(-A)
    if u < 1e-3:
        phiA = math.exp(-0.5 * A * A) / math.sqrt(2 * math.pi)
        u2 = u * u
        return A * phiA * u2 + (A**3 - 3 * A) * phiA * u2 * u2 / 12.0 - 2.0 * math.expm1(-0.5 * u2) * sfA
    return ndtr(u - A) + ndtr(-A - u) - 2.0 * math.exp(-0.5 * u * u) * sfA


def psi_sf(x, measure=1.0):
    """``P(eta > x)`` for ``eta ~ psi`` (Levy measures only).

    Uses the exact representation
    ``P(eta > A) = int_0^inf h(u) [Phibar(A-u) + Phibar(A+u) - 2 e^{-u^2/2} Phibar(A)] du``,
    which avoids truncating the heavy tail of psi.
    """
    ev = _as_evaluator(measure)
    if ev.hyperactive:
        raise ValueError("psi_sf supports Levy measures; integrate the hyperactive density directly")
    m = ev.measure

    def one(A):
        A = float(A)
        if A < 0:
            return 1.0 - one(-A)
        breaks = [A, A + 6.0] + ([A - 6.0] if A > 7.0 else [])
        return m.integrate(lambda u: _gauss_bracket(A, u), breaks=breaks, check=1e-8)

    x = np.asarray(x, dtype=float)
    out = np.array([one(v) for v in x.ravel()]).reshape(x.shape)
    return out if out.ndim else float(out)


def psi_cdf(x, measure=1.0):
    out = 1.0 - np.asarray(psi_sf(x, measure))
    return out if np.ndim(out) else float(out)


# -- CM marginal --------------------------------------------------------

def marginal_density(model: CMModel, y):
    """``(1-rho) phi(y/s)/s + rho psi(y/s)/s`` with ``s = sqrt(sigma2)``."""
    s = model.sigma
    z = np.asarray(y, dtype=float) / s
    lphi = -0.5 * z * z - LOG_SQRT_2PI
    if model.rho == 0.0:
        out = np.exp(lphi) / s
    elif model.rho == 1.0:
        out = np.exp(log_psi_density(z, model.evaluator)) / s
    else:
        lpsi = log_psi_density(z, model.evaluator)
        out = np.exp(np.logaddexp(math.log1p(-model.rho) + lphi, math.log(model.rho) + lpsi)) / s
    return out if out.ndim else float(out)


def marginal_sf(model: CMModel, y):
    s = model.sigma
    z = np.asarray(y, dtype=float) / s
    out = (1.0 - model.rho) * ndtr(-z)
    if model.rho > 0:
        out = out + model.rho * np.asarray(psi_sf(z, model.d))
    return out if out.ndim else float(out)


def marginal_cdf(model: CMModel, y):
    out = 1.0 - np.asarray(marginal_sf(model, y))
    return out if out.ndim else float(out)


def convolution_mixture_params(a: float, b: float, d: float):
    """``(alpha, scale2)`` with ``a eps + b eta ~ CM_d(alpha, a^2 + b^2)``."""
    if a == 0 and b == 0:
        raise ValueError("a and b cannot both be zero")
    scale2 = a * a + b * b
    alpha = abs(b) ** d / scale2 ** (d / 2)
    return min(alpha, 1.0), scale2


def cm_add_noise(model: CMModel, var: float) -> CMModel:
    """Law of ``Y + N(0, var)`` for ``Y ~ model``, again a CM_d member.

    The Gaussian part widens to ``sigma2 + var``; the psi part ``s eta``
    plus noise is ``CM_d(alpha, sigma2 + var)`` with
    ``alpha = (sigma2 / (sigma2 + var))^{d/2}``.
    """
    if not var >= 0:
        raise ValueError("noise variance must be nonnegative")
    s2 = model.sigma2 + var
    return CMModel(model.rho * (model.sigma2 / s2) ** (model.d / 2), model.d, s2)


def cm_cf(t, alpha, scale2, d):
    """CF of the mixture ``(1-alpha) N(0, scale2) + alpha sqrt(scale2) psi``."""
    st = np.asarray(t, dtype=float) * math.sqrt(scale2)
    return (1 - alpha) * np.exp(-0.5 * st * st) + alpha * psi_cf(st, d)


def convolution_cf(t, a, b, d):
    """CF of ``a eps + b eta`` as the product of the two factors."""
    t = np.asarray(t, dtype=float)
    return np.exp(-0.5 * (a * t) ** 2) * psi_cf(b * t, d)


# -- sampling -----------------------------------------------------------

class PsiSampler:
    """Rejection sampler for the inverse-power psi.

    Envelope: equal mixture of ``N(0, 2)`` and ``1.5 * t_d``.  The bound
    ``M`` is 1.1 times the largest ratio psi/envelope found on a log grid,
    and every proposal is rechecked against it.
    """

    T_SCALE = 1.5
    SAFETY = 1.1

    def __init__(self, d: float):
        if not 0.0 < d < 2.0:
            raise ValueError("d must lie in (0, 2)")
        self.d = float(d)
        self.evaluator = _ip_evaluator(self.d)
        self._t = stats.t(self.d, scale=self.T_SCALE)
        grid = np.concatenate([np.logspace(-4, 9, 6000)])
        ratio = np.exp(log_psi_density(grid, self.evaluator) - self.log_envelope(grid))
        self.log_m = math.log(self.SAFETY * float(ratio.max()))
        self.acceptance_rate = math.exp(-self.log_m)
        self.last_acceptance_rate = None

    def log_envelope(self, x):
        x = np.asarray(x, dtype=float)
        lg = stats.norm.logpdf(x, scale=math.sqrt(2.0))
        lt = self._t.logpdf(x)
        return np.logaddexp(lg, lt) + math.log(0.5)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        out = np.empty(n)
        have, proposed, accepted = 0, 0, 0
        while have < n:
            k = int(math.ceil((n - have) * math.exp(self.log_m) * 1.2)) + 64
            pick_t = rng.random(k) < 0.5
            z = np.where(pick_t, self.T_SCALE * rng.standard_t(self.d, size=k),
                         math.sqrt(2.0) * rng.standard_normal(k))
            u = rng.random(k)
            lr = log_psi_density(z, self.evaluator) - self.log_envelope(z) - self.log_m
            if np.any(lr > 0.0):
                bad = z[lr > 0.0][0]
                raise EnvelopeError(f"psi/envelope exceeds the bound at x={bad!r} (log excess {lr.max():.3g})")
            acc = z[np.log(u) < lr]
            accepted += acc.size
            take = min(acc.size, n - have)
            out[have:have + take] = acc[:take]
            have += take
            proposed += k
        self.last_acceptance_rate = accepted / proposed
        return out


_SAMPLERS = {}


def _sampler(d) -> PsiSampler:
    s = _SAMPLERS.get(d)
    if s is None:
        s = _SAMPLERS[d] = PsiSampler(d)
    return s


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_psi(seed, d: float, n: int) -> np.ndarray:
    """``n`` i.i.d. draws from psi_d; deterministic given ``seed``."""
    return _sampler(float(d)).sample(_rng(seed), int(n))


def sample_cm(seed, model: CMModel, n: int) -> np.ndarray:
    """Draws from ``CM_d(rho, sigma2)``.

    Gaussian, component-label and psi draws use three independent child
    streams of ``seed``, so ``rho = 0`` reproduces the plain Gaussian stream
    and ``rho = 1`` the plain psi stream.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    gauss_ss, label_ss, psi_ss = ss.spawn(3)
    n = int(n)
    out = np.random.default_rng(gauss_ss).standard_normal(n)
    if model.rho > 0:
        flags = np.random.default_rng(label_ss).random(n) < model.rho
        k = int(flags.sum())
        out[flags] = sample_psi(np.random.default_rng(psi_ss), model.d, k)
    return model.sigma * out


# -- hyperactive marginal -----------------------------------------------

def _log_hyper_psi(x, model: HyperModel):
    return log_psi_density(x, model.measure)


def hyper_marginal_density(model: HyperModel, y):
    """``(1-g-r) phi(y) + g y^2 phi(y) + r psi_H(y)``."""
    y = np.asarray(y, dtype=float)
    phi = np.exp(-0.5 * y * y - LOG_SQRT_2PI)
    out = (1.0 - model.gamma - model.rho) * phi + model.gamma * y * y * phi
    if model.rho > 0:
        out = out + model.rho * np.exp(_log_hyper_psi(y, model))
    return out if out.ndim else float(out)


def _hyper_psi_sf(A, model):
    # psi_H is bounded with a |x|^{-4} tail; integrate it directly
    ev = ZetaEvaluator(model.measure)
    f = lambda x: float(psi_density(x, ev))
    A = abs(A)
    if A <= ASYMPTOTIC_X:
        body = integrate.quad(f, A, ASYMPTOTIC_X, limit=500, epsabs=1e-14, epsrel=1e-12)[0]
        return body + _psi_tail_asymptotic_mass(ASYMPTOTIC_X, 3.0, model.measure.unit_constant)
    return _psi_tail_asymptotic_mass(A, 3.0, model.measure.unit_constant)


def hyper_marginal_cdf(model: HyperModel, y):
    def one(v):
        a = abs(v)
        sf_phi = ndtr(-a)
        sf_y2phi = sf_phi + a * math.exp(-0.5 * a * a) / math.sqrt(2 * math.pi)
        sf = (1 - model.gamma - model.rho) * sf_phi + model.gamma * sf_y2phi
        if model.rho > 0:
            sf += model.rho * _hyper_psi_sf(a, model)
        return 1.0 - sf if v >= 0 else sf

    y = np.asarray(y, dtype=float)
    out = np.array([one(float(v)) for v in y.ravel()]).reshape(y.shape)
    return out if out.ndim else float(out)


# -- quantiles ----------------------------------------------------------

def _cdf_for(dist):
    if isinstance(dist, CMModel):
        return lambda x: float(marginal_cdf(dist, x))
    if isinstance(dist, HyperModel):
        return lambda x: float(hyper_marginal_cdf(dist, x))
    if isinstance(dist, (ExceedanceMeasure, ZetaEvaluator)):
        return lambda x: float(psi_cdf(x, dist))
    raise TypeError(f"unsupported distribution {dist!r}")


def quantile(dist, p: float, absolute: bool = False, tol: float = 1e-10):
    """Quantile by bisection on the CDF.

    With ``absolute=True`` the quantile is of ``|Y|``; all distributions here
    are symmetric so ``P(|Y| <= q) = 2 F(q) - 1``.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    cdf = _cdf_for(dist)
    if absolute:
        target = lambda q: 2.0 * cdf(q) - 1.0
        lo, hi = 0.0, 1.0
    else:
        target = cdf
        lo, hi = -1.0, 1.0
    for _ in range(200):
        if target(hi) >= p:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise RuntimeError("quantile bracket failure")
    if not absolute:
        for _ in range(200):
            if target(lo) <= p:
                break
            lo, hi = 2.0 * lo, lo
        else:
            raise RuntimeError("quantile bracket failure")
    while hi - lo > tol * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        if target(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
