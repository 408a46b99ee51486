"""First-order conditional inference for the signal given ``Y = y``.

All quantities follow from the marginal ``phi(y) (1 - rho + rho zeta(y))``.
Evaluation is in the log domain so that large ``|y|`` never overflows.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr

from . import _quad
from .densities import CMModel, HyperModel, _as_evaluator, marginal_sf, psi_density
from .zeta import ZetaEvaluator, power_log_series

__all__ = [
    "ConditionalDecomposition",
    "cond_mgf",
    "tweedie_moment",
    "activity_prob",
    "local_fpr_bound",
    "bh_ratio",
    "bh_threshold",
    "conditional_decomposition",
    "hyper_tweedie_mean",
    "g_mean",
]


def _check_rho(rho):
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")


def _log_norm(rho, ev: ZetaEvaluator, y):
    """``log(1 - rho + rho zeta(y))``."""
    _check_rho(rho)
    y = np.asarray(y, dtype=float)
    if rho == 0.0:
        return np.zeros(y.shape)
    return np.logaddexp(math.log1p(-rho), math.log(rho) + ev.log_zeta_or_neg_inf(y))


def _scalar(out):
    out = np.asarray(out)
    return float(out) if out.ndim == 0 else out


def cond_mgf(rho, measure, y, t):
    """``(1 - rho + rho zeta(y + t)) / (1 - rho + rho zeta(y))``."""
    ev = _as_evaluator(measure)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    return _scalar(np.exp(_log_norm(rho, ev, y + t) - _log_norm(rho, ev, y)))


def _log_abs_deriv(ev: ZetaEvaluator, y, r):
    if ev.mode == "series":
        return power_log_series(y, ev._d, ev._c, k=r, r0=ev._r0)
    v = np.asarray(ev.zeta_deriv(y, r))
    with np.errstate(divide="ignore"):
        return np.log(np.abs(v)), np.sign(v)


def tweedie_moment(rho, measure, y, r: int = 1):
    """``rho zeta^{(r)}(y) / (1 - rho + rho zeta(y))`` for ``r`` in ``{1, 2}``.

    ``r = 1`` is the conditional mean of the signal, ``r = 2`` the
    conditional second moment.
    """
    if r not in (1, 2):
        raise ValueError("r must be 1 or 2")
    ev = _as_evaluator(measure)
    y = np.asarray(y, dtype=float)
    if rho == 0.0:
        _check_rho(rho)
        return _scalar(np.zeros(y.shape))
    la, sign = _log_abs_deriv(ev, y, r)
    return _scalar(sign * np.exp(math.log(rho) + la - _log_norm(rho, ev, y)))


def activity_prob(rho, measure, y):
    """First-order ``P(|mu| > eps | y) = rho zeta(y) / (1 - rho + rho zeta(y))``."""
    ev = _as_evaluator(measure)
    y = np.asarray(y, dtype=float)
    if rho == 0.0:
        _check_rho(rho)
        return _scalar(np.zeros(y.shape))
    return _scalar(np.exp(math.log(rho) + ev.log_zeta_or_neg_inf(y) - _log_norm(rho, ev, y)))


def local_fpr_bound(rho, measure, y):
    """First-order bound ``(1 - rho) / (1 - rho + rho zeta(y))`` on ``P(mu = 0 | y)``."""
    ev = _as_evaluator(measure)
    y = np.asarray(y, dtype=float)
    return _scalar(np.exp(math.log1p(-rho) - _log_norm(rho, ev, y)))


def bh_ratio(model: CMModel, t):
    """Tail-average inactivity ratio ``(1 - Phi(t)) / m(Y > t)``."""
    t = np.asarray(t, dtype=float)
    return _scalar(ndtr(-t) / np.asarray(marginal_sf(model, t)))


def bh_threshold(model: CMModel, q: float, lo: float = -10.0, hi: float = 10.0, tol: float = 1e-8):
    """Threshold ``t`` with ``(1 - Phi(t)) / m(Y > t) = q``, by bisection.

    The ratio exceeds 1 for ``t < 0`` and decreases on ``t >= 0``, so the
    root is unique.  Evaluated points on ``t >= 0`` are checked for
    monotonicity as a numerical safeguard.

    Raises:
        ValueError: ``q`` outside ``(0, 1)`` or not attained on ``[lo, hi]``.
        RuntimeError: the ratio is found to increase on ``t >= 0``.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    seen = {}

    def ratio(t):
        v = float(bh_ratio(model, t))
        seen[t] = v
        return v

    r_lo, r_hi = ratio(lo), ratio(hi)
    if not r_hi < q:
        raise ValueError(f"q not achievable: ratio at t={hi} is {r_hi:.6g}")
    if not r_lo > q:
        raise ValueError(f"q not achievable: ratio at t={lo} is {r_lo:.6g}")
    a, b = lo, hi
    while b - a > tol:
        m = 0.5 * (a + b)
        if ratio(m) > q:
            a = m
        else:
            b = m
    pos = sorted((t, v) for t, v in seen.items() if t >= 0.0)
    for (t0, v0), (t1, v1) in zip(pos[:-1], pos[1:]):
        if v1 > v0 * (1.0 + 1e-9) + 1e-300:
            raise RuntimeError(f"BH ratio increases between t={t0} and t={t1}")
    return 0.5 * (a + b)


# -- decomposition -----------------------------------------------------

def _log_coshm2(a):
    """``log(cosh(a) - 1 - a^2/2)`` for ``a >= 0``."""
    a = np.abs(np.asarray(a, dtype=float))
    out = np.empty(a.shape)
    small = a < 0.1
    big = a > 30.0
    mid = ~(small | big)
    if np.any(small):
        s = a[small] ** 2
        with np.errstate(divide="ignore"):
            out[small] = 2.0 * np.log(s) + np.log(1.0 / 24 + s / 720 + s * s / 40320)
    if np.any(mid):
        v = a[mid]
        out[mid] = np.log(np.cosh(v) - 1.0 - 0.5 * v * v)
    if np.any(big):
        v = a[big]
        out[big] = v - math.log(2.0) + np.log1p(-(2.0 + v * v) * np.exp(-v))
    return out


@dataclass
class ConditionalDecomposition:
    """Symmetrized first-order conditional distribution of the signal.

    Densities are in the signal coordinate ``u`` under unit-variance noise;
    ``rho`` is the signal exceedance rate on that scale.  The total is
    ``w_central * central + w_intermediate * intermediate + w_zeta_remainder * remainder``;
    multiplying by :meth:`bias_factor` gives the conditional density.
    If ``split`` is false the zeta component is kept whole and
    ``w_intermediate = 0``.
    """

    y: float
    rho: float
    d: float
    w_central: float
    w_intermediate: float
    w_zeta_remainder: float
    split: bool
    _central: Optional[Callable]
    _log_rem_norm: float
    _log_zeta: float
    _c: float

    @property
    def w_zeta(self) -> float:
        return self.w_intermediate + self.w_zeta_remainder

    def _h(self, u):
        return self._c * np.abs(u) ** (-self.d - 1.0)

    def central(self, u):
        if self._central is None:
            raise ValueError("the central spike is a point mass at 0")
        return self._central(np.asarray(u, dtype=float))

    def intermediate(self, u):
        """``u^2 e^{-u^2/2} h(u) / zeta_2`` with its ``|u|^{1-d}`` singularity."""
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            out = self._c * np.abs(u) ** (1.0 - self.d) * np.exp(-0.5 * u * u) / self.d
        return _scalar(out)

    def remainder(self, u):
        """``(cosh(yu) - 1 - y^2 u^2/2) e^{-u^2/2} h(u) / (zeta(y) - zeta_2 y^2/2)``."""
        u = np.asarray(u, dtype=float)
        au = np.abs(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = (_log_coshm2(self.y * au) - 0.5 * au * au + math.log(self._c)
                  - (self.d + 1.0) * np.log(au) - self._log_rem_norm)
            out = np.where(au > 0, np.exp(lg), 0.0)
        return _scalar(out)

    def zeta_component(self, u):
        """Normalized zeta distribution ``zeta(du; y) / zeta(y)``."""
        u = np.asarray(u, dtype=float)
        au = np.abs(u)
        a = self.y * au
        with np.errstate(divide="ignore", invalid="ignore"):
            # log(cosh(a) - 1) = log 2 + 2 log sinh(a/2)
            half = 0.5 * a
            ls = np.where(half < 20.0, np.log(np.sinh(np.minimum(half, 20.0))), half - math.log(2.0))
            lg = (math.log(2.0) + 2.0 * ls - 0.5 * au * au + math.log(self._c)
                  - (self.d + 1.0) * np.log(au) - self._log_zeta)
            out = np.where(au > 0, np.exp(lg), 0.0)
        return _scalar(out)

    def total(self, u):
        """Symmetrized density; a point-mass central spike is an atom at 0 left out here."""
        u = np.asarray(u, dtype=float)
        out = np.zeros(u.shape)
        if self.w_central > 0 and self._central is not None:
            out = out + self.w_central * self.central(u)
        if self.split:
            out = out + self.w_intermediate * self.intermediate(u) + self.w_zeta_remainder * self.remainder(u)
        elif self.w_zeta > 0:
            out = out + self.w_zeta * self.zeta_component(u)
        return _scalar(out)

    def bias_factor(self, u):
        """``e^{yu} / cosh(yu) = 1 + tanh(yu)``."""
        return _scalar(1.0 + np.tanh(self.y * np.asarray(u, dtype=float)))

    def posterior(self, u):
        return _scalar(np.asarray(self.total(u)) * np.asarray(self.bias_factor(u)))


def _cm_central(model: CMModel):
    """Normalized ``e^{-u^2/2} P(du)`` for the CM signal law.

    The signal law consistent with ``CM_d(rho, 1 + sigma0^2)`` under unit
    noise is ``(1 - beta) N(0, sigma0^2) + beta sigma0 psi(. / sigma0)`` with
    ``beta = min(1, rho (sigma/sigma0)^d)``.
    """
    if model.sigma0 == 0.0:
        return None
    s0 = model.sigma0
    beta = min(1.0, model.rho * (model.sigma / model.sigma0) ** model.d) if model.rho > 0 else 0.0
    ev = model.evaluator
    g_mass = 1.0 / math.sqrt(1.0 + s0 * s0)
    p_mass = 0.0
    if beta > 0:
        p_mass = 2.0 * _quad.half_line(
            lambda v: float(psi_density(v, ev)) * math.exp(-0.5 * s0 * s0 * v * v),
            breaks=(1.0 / s0, 3.0 / s0), check=1e-9)
    norm = (1.0 - beta) * g_mass + beta * p_mass

    def dens(u):
        g = np.exp(-0.5 * u * u * (1.0 + 1.0 / (s0 * s0))) / (s0 * math.sqrt(2 * math.pi))
        out = (1.0 - beta) * g
        if beta > 0:
            out = out + beta * np.exp(-0.5 * u * u) * np.asarray(psi_density(u / s0, ev)) / s0
        return out / norm

    return dens


def conditional_decomposition(model: CMModel, y: float, spike_density: Optional[Callable] = None):
    """Three-part decomposition of the symmetrized conditional distribution.

    The signal ``mu`` in ``Y = mu + eps`` has exceedance measure
    ``rho sigma^d H_d`` relative to the unit noise, so the weights use the
    raw ``y`` with rate ``rho sigma^d``.

    Args:
        model: fitted ``CM_d`` model.
        y: the observation.
        spike_density: optional normalized central-spike density in ``u``;
            defaults to the CM signal family's own weighted spike.

    Returns:
        A :class:`ConditionalDecomposition`.
    """
    d = model.d
    rho = model.rho * model.sigma ** d
    if not rho < 1.0:
        raise ValueError("signal rate rho sigma^d must be below 1")
    ev = model.evaluator
    z = float(y)
    c = ev._c
    central = spike_density if spike_density is not None else _cm_central(model)
    log_n = float(_log_norm(rho, ev, z))
    w_central = math.exp(math.log1p(-rho) - log_n)
    if z == 0.0 or rho == 0.0:
        return ConditionalDecomposition(z, rho, d, w_central, 0.0, 1.0 - w_central, False,
                                        central, -np.inf, -np.inf, c)
    lr = math.log(rho)
    log_zeta = float(ev.log_zeta(z))
    # zeta(z) - zeta_2 z^2/2 is the series from r = 2
    log_rem, _ = power_log_series(np.array(z), d, c, k=0, r0=2)
    log_rem = float(log_rem)
    log_int = math.log(ev.zeta2 * z * z / 2.0)
    split = math.isfinite(log_rem)
    if split:
        w_int = math.exp(lr + log_int - log_n)
        w_rem = math.exp(lr + log_rem - log_n)
    else:
        w_int, w_rem = 0.0, math.exp(lr + log_zeta - log_n)
    return ConditionalDecomposition(z, rho, d, w_central, w_int, w_rem, split,
                                    central, log_rem, log_zeta, c)


# -- hyperactive and diagnostics ---------------------------------------

def hyper_tweedie_mean(model: HyperModel, y):
    """``(2 g y + r zeta_H'(y)) / (1 - g - r + g y^2 + r zeta_H(y))``, overflow-safe."""
    ev = model.evaluator
    y = np.asarray(y, dtype=float)
    g, r = model.gamma, model.rho
    if ev.mode == "series":
        l0, _ = power_log_series(y, ev._d, ev._c, k=0, r0=ev._r0)
        l1, s1 = power_log_series(y, ev._d, ev._c, k=1, r0=ev._r0)
    else:
        v0 = np.asarray(ev.hyper_zeta(y))
        v1 = np.asarray(ev.zeta_deriv(y, 1))
        with np.errstate(divide="ignore"):
            l0, l1, s1 = np.log(v0), np.log(np.abs(v1)), np.sign(v1)
    scale = np.maximum(l0, 0.0)
    es = np.exp(-scale)
    num = 2.0 * g * y * es + r * s1 * np.exp(l1 - scale)
    den = (1.0 - g - r + g * y * y) * es + r * np.exp(l0 - scale)
    return _scalar(num / den)


def g_mean(y: float, d: float, iterations: int = 2) -> float:
    """Fixed-point iterate of ``m = y - (d + 1)/m`` from ``m = y`` (plot diagnostic)."""
    m = float(y)
    for _ in range(iterations):
        if m == 0.0:
            raise ZeroDivisionError("fixed point iteration hit m = 0")
        m = y - (d + 1.0) / m
    return m
