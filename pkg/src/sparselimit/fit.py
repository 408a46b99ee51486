"""Asymptotic maximum-likelihood fits and the origin-based estimate of rho.

Every log likelihood is reported relative to the pure-noise model and
summed with ``math.fsum`` over ``|y|`` sorted, so the value is invariant
(bit for bit) under permutation and sign changes of the data.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np
from scipy import optimize
from scipy.interpolate import CubicSpline

from .measures import InversePower, LaplaceLasso
from .zeta import power_log_series, tabulated_log_zeta

__all__ = [
    "FitResult",
    "loglik_rho_d",
    "loglik_cm",
    "loglik_laplace_zeta",
    "fit_rho_d",
    "fit_cm",
    "fit_laplace_zeta",
    "rho_from_origin",
    "triweight_gauss_factor",
]

RHO_BOUNDS = (1e-6, 0.5)
D_BOUNDS = (0.05, 1.95)
TAU_BOUNDS = (0.1, 10.0)
SIGMA0_BOUNDS = (0.0, 2.0)
XATOL = 1e-7


@dataclass
class FitResult:
    """Outcome of a likelihood maximization.

    Attributes:
        model: ``'powerzeta'``, ``'cm'`` or ``'laplace'``.
        params: fitted parameters by name.
        loglik_rel_null: maximized log likelihood minus its pure-noise value.
        on_boundary: whether the optimum sits on a constraint.
        iterations: simplex iterations of the winning start.
        converged: whether the winning start met the tolerance.
        profile: objective at each multistart point, as ``{params..., loglik}``.
        n: sample size.
        trace: best objective per iteration of the winning start, if recorded.
    """

    model: str
    params: dict
    loglik_rel_null: float
    on_boundary: bool
    iterations: int
    converged: bool
    profile: list
    n: int
    trace: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "params": dict(self.params),
            "loglik_rel_null": self.loglik_rel_null,
            "on_boundary": self.on_boundary,
            "iterations": self.iterations,
            "converged": self.converged,
            "profile": self.profile,
            "n": self.n,
        }


def _prepare(y, min_n=1):
    y = np.asarray(y, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise ValueError("observations must be finite")
    if y.size < min_n:
        raise ValueError(f"need at least {min_n} observations")
    return np.sort(np.abs(y))


def _sum_log_norm(rho, log_zeta):
    """``fsum log(1 - rho + rho zeta)`` given ``log zeta`` values."""
    if rho == 0.0:
        return 0.0
    terms = np.logaddexp(math.log1p(-rho), math.log(rho) + log_zeta)
    if not np.all(np.isfinite(terms)):
        raise FloatingPointError("non-finite log likelihood term")
    return math.fsum(terms.tolist())


def _log_zeta_ip(ay, d):
    la, _ = power_log_series(ay, d, InversePower(d).unit_constant)
    return la


def loglik_rho_d(y, rho: float, d: float) -> float:
    """``sum_i log(1 - rho + rho zeta_d(y_i))`` for the unit inverse-power measure."""
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    if not 0.0 < d < 2.0:
        raise ValueError("d must lie in (0, 2)")
    ay = _prepare(y)
    if rho == 0.0:
        return 0.0
    return _sum_log_norm(rho, _log_zeta_ip(ay, d))


def loglik_cm(y, rho: float, d: float, sigma0: float) -> float:
    """CM_d log likelihood with ``sigma^2 = 1 + sigma0^2``, relative to ``N(0, 1)``."""
    ay = _prepare(y)
    return _loglik_cm_sorted(ay, math.fsum((ay * ay).tolist()), rho, d, sigma0)


def _loglik_cm_sorted(ay, ss, rho, d, sigma0):
    s2 = 1.0 + sigma0 * sigma0
    n = ay.size
    base = 0.5 * ss * (1.0 - 1.0 / s2) - 0.5 * n * math.log(s2)
    if rho == 0.0:
        return base
    return base + _sum_log_norm(rho, _log_zeta_ip(ay / math.sqrt(s2), d))


# -- optimization core ---------------------------------------------------

def _expit(a):
    return 0.5 * (1.0 + math.tanh(0.5 * a))


def _logit(p):
    return math.log(p) - math.log1p(-p)


def _to_box(a, lo, hi):
    return lo + (hi - lo) * _expit(a)


def _from_box(x, lo, hi):
    return _logit((x - lo) / (hi - lo))


def _multistart(neg_obj, starts, bounds=None, record_trace=False):
    """Nelder-Mead from every start; returns (best result, per-start values)."""
    best, values, fails = None, [], 0
    for x0 in starts:
        trace = []
        cb = (lambda xk: trace.append(-neg_obj(xk))) if record_trace else None
        try:
            res = optimize.minimize(
                neg_obj, np.asarray(x0, dtype=float), method="Nelder-Mead", bounds=bounds, callback=cb,
                options={"xatol": XATOL, "fatol": 1e-10, "maxiter": 4000, "maxfev": 8000},
            )
        except (FloatingPointError, ValueError):
            fails += 1
            values.append(float("nan"))
            continue
        res.trace = trace
        values.append(float(-neg_obj(np.asarray(x0, dtype=float))))
        if not res.success:
            fails += 1
        if best is None or res.fun < best.fun:
            best = res
    if best is None or fails == len(starts):
        raise RuntimeError("all multistart runs failed to converge")
    return best, values


def _near(x, lo, hi, rel=1e-5):
    w = hi - lo
    return x - lo < rel * w or hi - x < rel * w


def fit_rho_d(y, rho_bounds=RHO_BOUNDS, d_bounds=D_BOUNDS, record_trace=False) -> FitResult:
    """Maximize ``loglik_rho_d`` over a box by multistart simplex search.

    The search runs in box-scaled logit coordinates, so every iterate is
    feasible, from the 3 x 3 grid ``rho in {0.01, 0.05, 0.1}``,
    ``d in {0.5, 1.0, 1.5}``.
    """
    ay = _prepare(y, min_n=10)
    (rlo, rhi), (dlo, dhi) = rho_bounds, d_bounds

    def neg(a):
        rho = _to_box(a[0], rlo, rhi)
        d = _to_box(a[1], dlo, dhi)
        return -_sum_log_norm(rho, _log_zeta_ip(ay, d))

    grid = list(product((0.01, 0.05, 0.1), (0.5, 1.0, 1.5)))
    starts = [(_from_box(r, rlo, rhi), _from_box(d, dlo, dhi)) for r, d in grid]
    best, values = _multistart(neg, starts, record_trace=record_trace)
    rho, d = _to_box(best.x[0], rlo, rhi), _to_box(best.x[1], dlo, dhi)
    return FitResult(
        model="powerzeta",
        params={"rho": rho, "d": d},
        loglik_rel_null=float(-best.fun),
        on_boundary=bool(_near(rho, rlo, rhi) or _near(d, dlo, dhi)),
        iterations=int(best.nit),
        converged=bool(best.success),
        profile=[{"rho": r, "d": dd, "loglik": v} for (r, dd), v in zip(grid, values)],
        n=int(ay.size),
        trace=best.trace,
    )


def fit_cm(y, d_bounds=D_BOUNDS, sigma0_bounds=SIGMA0_BOUNDS, record_trace=False) -> FitResult:
    """Fit ``CM_d(rho, 1 + sigma0^2)`` subject to ``rho <= (sigma0/sigma)^d``.

    Uses ``rho = beta (sigma0/sigma)^d`` with ``beta in [0, 1]`` and bounded
    simplex search in ``(beta, d, sigma0)``.  ``on_boundary`` is set when
    ``beta > 1 - 1e-4``.
    """
    ay = _prepare(y, min_n=10)
    ss = math.fsum((ay * ay).tolist())
    bounds = [(0.0, 1.0), d_bounds, sigma0_bounds]

    def unpack(x):
        beta = min(max(x[0], 0.0), 1.0)
        d = min(max(x[1], d_bounds[0]), d_bounds[1])
        s0 = min(max(x[2], sigma0_bounds[0]), sigma0_bounds[1])
        rho = beta * (s0 / math.sqrt(1.0 + s0 * s0)) ** d
        return beta, d, s0, rho

    def neg(x):
        _, d, s0, rho = unpack(x)
        return -_loglik_cm_sorted(ay, ss, rho, d, s0)

    grid = list(product((0.5, 1.0, 1.5), (0.1, 0.3, 0.6)))
    starts = [(0.5, d, s0) for d, s0 in grid]
    best, values = _multistart(neg, starts, bounds=bounds, record_trace=record_trace)
    beta, d, s0, rho = unpack(best.x)
    return FitResult(
        model="cm",
        params={"rho": rho, "d": d, "sigma0": s0, "sigma": math.sqrt(1.0 + s0 * s0), "beta": beta},
        loglik_rel_null=float(-best.fun),
        on_boundary=bool(beta > 1.0 - 1e-4),
        iterations=int(best.nit),
        converged=bool(best.success),
        profile=[{"beta": 0.5, "d": dd, "sigma0": s, "loglik": v} for (dd, s), v in zip(grid, values)],
        n=int(ay.size),
        trace=best.trace,
    )


# -- Laplace-lasso family -------------------------------------------------

@lru_cache(maxsize=32)
def _laplace_constant_spline(lam: float, step: float = 0.01):
    """Cubic interpolant of ``log unit_constant`` over the tau grid."""
    lo, hi = TAU_BOUNDS
    taus = np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
    logc = [math.log(LaplaceLasso(lam, t).unit_constant) for t in taus]
    return CubicSpline(taus, logc)


def _laplace_log_zeta(ay, lam, tau):
    logc = float(_laplace_constant_spline(float(lam))(tau))
    shape = LaplaceLasso.__new__(LaplaceLasso)
    shape.lam, shape.tau = float(lam), float(tau)
    dens = lambda u: np.exp(logc) * shape.raw_density(u)
    lz = tabulated_log_zeta(None, float(ay[-1]) + 0.1, density=dens)
    return lz(ay)


def loglik_laplace_zeta(y, rho: float, lam: float, tau: float) -> float:
    """``sum_i log(1 - rho + rho zeta_{lam,tau}(y_i))``."""
    ay = _prepare(y)
    if rho == 0.0:
        return 0.0
    return _sum_log_norm(rho, _laplace_log_zeta(ay, lam, tau))


def fit_laplace_zeta(y, lam: float, rho_bounds=RHO_BOUNDS, tau_bounds=TAU_BOUNDS, record_trace=False) -> FitResult:
    """Fit ``(rho, tau)`` for the Laplace-lasso exceedance measure at fixed ``lam``."""
    if not lam >= 0:
        raise ValueError("lambda must be nonnegative")
    ay = _prepare(y, min_n=10)
    (rlo, rhi), (tlo, thi) = rho_bounds, tau_bounds

    def neg(a):
        rho = _to_box(a[0], rlo, rhi)
        tau = _to_box(a[1], tlo, thi)
        return -_sum_log_norm(rho, _laplace_log_zeta(ay, lam, tau))

    grid = list(product((0.01, 0.05, 0.1), (0.5, 1.0, 2.0)))
    starts = [(_from_box(r, rlo, rhi), _from_box(t, tlo, thi)) for r, t in grid]
    best, values = _multistart(neg, starts, record_trace=record_trace)
    rho, tau = _to_box(best.x[0], rlo, rhi), _to_box(best.x[1], tlo, thi)
    return FitResult(
        model="laplace",
        params={"rho": rho, "tau": tau, "lambda": float(lam)},
        loglik_rel_null=float(-best.fun),
        on_boundary=bool(_near(rho, rlo, rhi) or _near(tau, tlo, thi)),
        iterations=int(best.nit),
        converged=bool(best.success),
        profile=[{"rho": r, "tau": t, "loglik": v} for (r, t), v in zip(grid, values)],
        n=int(ay.size),
        trace=best.trace,
    )


# -- origin estimator -----------------------------------------------------

def _triweight(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) < 1.0, 35.0 / 32.0 * (1.0 - u * u) ** 3, 0.0)


def triweight_gauss_factor(b: float) -> float:
    """``int K(u) phi(b u) du`` for the triweight kernel: the null mean of ``K_b`` at 0."""
    x, w = np.polynomial.legendre.leggauss(40)
    return float(np.sum(w * _triweight(x) * np.exp(-0.5 * (b * x) ** 2)) / math.sqrt(2 * math.pi))


def rho_from_origin(y=None, bandwidth: float = None, m0: float = None) -> float:
    """Estimate rho from the marginal density at the origin, ``1 - m(0)/phi(0)``.

    ``m(0)`` is a triweight kernel estimate whose null bias is removed by
    dividing by ``int K(u) phi(b u) du`` instead of ``phi(0)``.  Passing
    ``m0`` uses an exact density value instead of data.

    Args:
        y: observations (ignored when ``m0`` is given).
        bandwidth: kernel bandwidth; default ``min(1, 5 n^{-1/5})``.
        m0: exact marginal density at 0.

    Returns:
        The estimate clamped to ``[0, 1)``.
    """
    if m0 is not None:
        if not m0 > 0:
            raise ValueError("density at the origin must be positive")
        est = 1.0 - m0 * math.sqrt(2 * math.pi)
    else:
        yy = np.asarray(y, dtype=float).ravel()
        if not np.all(np.isfinite(yy)):
            raise ValueError("observations must be finite")
        n = yy.size
        b = bandwidth if bandwidth is not None else min(1.0, 5.0 * n ** -0.2)
        if not b > 0:
            raise ValueError("bandwidth must be positive")
        inside = np.sort(np.abs(yy[np.abs(yy) < b])) / b
        mhat = math.fsum(_triweight(inside).tolist()) / (n * b)
        if not mhat > 0:
            raise ValueError("kernel density estimate at the origin is not positive")
        est = 1.0 - mhat * b / (b * triweight_gauss_factor(b))
    return min(max(est, 0.0), math.nextafter(1.0, 0.0))
