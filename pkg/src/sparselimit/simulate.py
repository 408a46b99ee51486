"""Signal generators and Monte Carlo checks of sparse-limit behaviour."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .densities import sample_psi
from .measures import (
    ExceedanceMeasure,
    ExponentialTail,
    InversePower,
    InverseQuartic,
    SlabDerived,
    SlabDistribution,
    slab_activity_factor,
)

__all__ = [
    "SignalSpec",
    "KINDS",
    "efron_signals",
    "observe",
    "sample_signal",
    "stratified_signal",
    "sparsity_rate",
    "limit_measure",
    "t3_rate_integrals",
    "t3_rates",
    "exceedance_check",
]

# kind -> required parameter names
KINDS = {
    "efron": ("k",),
    "atom_slab": ("nu", "slab"),
    "cauchy_scale": ("sigma",),
    "double_gamma": ("nu", "sigma"),
    "student_t3_scale": ("nu",),
    "psi_scale": ("sigma", "d"),
    "laplace_scale": ("sigma",),
    "horseshoe_scale": ("tau",),
}

# parameter that indexes sparsity for each kind
_SPARSITY_PARAM = {
    "atom_slab": "nu",
    "cauchy_scale": "sigma",
    "double_gamma": "nu",
    "student_t3_scale": "nu",
    "psi_scale": "sigma",
    "laplace_scale": "sigma",
    "horseshoe_scale": "tau",
}


def _slab(obj) -> SlabDistribution:
    if isinstance(obj, SlabDistribution):
        return obj
    if isinstance(obj, str):
        return SlabDistribution(obj)
    return SlabDistribution(obj["kind"], obj.get("scale", 1.0))


@dataclass(frozen=True)
class SignalSpec:
    """A signal law with sample size and seed.

    Args:
        kind: one of :data:`KINDS`.
        params: parameters of the law; ``slab`` may be a
            :class:`SlabDistribution`, a kind name or ``{kind, scale}``.
        n: number of signals.
        seed: seed for ``numpy.random.default_rng``.
    """

    kind: str
    params: dict = field(default_factory=dict)
    n: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}")
        missing = [p for p in KINDS[self.kind] if p not in self.params]
        if missing:
            raise ValueError(f"{self.kind} needs parameters {missing}")
        if self.n < 1:
            raise ValueError("n must be positive")
        p = self.params
        if self.kind == "efron" and not 1 <= p["k"] <= self.n:
            raise ValueError("need 1 <= k <= n")
        if self.kind in ("atom_slab",) and not 0 < p["nu"] <= 1:
            raise ValueError("nu must lie in (0, 1]")
        if "sigma" in p and not p["sigma"] > 0:
            raise ValueError("sigma must be positive")
        if self.kind in ("double_gamma", "student_t3_scale") and not p["nu"] > 0:
            raise ValueError("nu must be positive")
        if self.kind == "horseshoe_scale" and not p["tau"] > 0:
            raise ValueError("tau must be positive")
        if self.kind == "psi_scale" and not 0 < p["d"] < 2:
            raise ValueError("d must lie in (0, 2)")

    def with_params(self, **kw) -> "SignalSpec":
        return SignalSpec(self.kind, {**self.params, **kw}, self.n, self.seed)

    def to_json(self) -> dict:
        params = dict(self.params)
        if isinstance(params.get("slab"), SlabDistribution):
            params["slab"] = {"kind": params["slab"].kind, "scale": params["slab"].scale}
        return {"kind": self.kind, "params": params, "n": self.n, "seed": self.seed}


def efron_signals(n: int = 5000, k: int = 500) -> np.ndarray:
    """``mu_i = s_i |log((i - 1/2)/k)|`` for ``i <= k``, zero otherwise; signs alternate ``+, -, ...``."""
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    i = np.arange(1, k + 1)
    mu = np.zeros(n)
    mu[:k] = -np.log((i - 0.5) / k) * np.where(i % 2 == 1, 1.0, -1.0)
    return mu


def observe(signals, seed) -> np.ndarray:
    """``y = mu + eps`` with standard normal noise from ``default_rng(seed)``."""
    mu = np.asarray(signals, dtype=float)
    return mu + np.random.default_rng(seed).standard_normal(mu.shape)


def sample_signal(spec: SignalSpec) -> np.ndarray:
    """Draw ``spec.n`` signals from the law described by ``spec``."""
    rng = np.random.default_rng(spec.seed)
    p, n = spec.params, spec.n
    kind = spec.kind
    if kind == "efron":
        return efron_signals(n, p["k"])
    if kind == "atom_slab":
        slab = _slab(p["slab"])
        active = rng.random(n) < p["nu"]
        out = np.zeros(n)
        out[active] = slab.dist.rvs(size=int(active.sum()), random_state=rng)
        return out
    if kind == "cauchy_scale":
        return p["sigma"] * rng.standard_cauchy(n)
    if kind == "double_gamma":
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return sign * p["sigma"] * rng.gamma(p["nu"], size=n)
    if kind == "student_t3_scale":
        # density 2 nu^3 / (pi (nu^2 + x^2)^2) is nu/sqrt(3) times a standard t_3
        return p["nu"] / math.sqrt(3.0) * rng.standard_t(3, size=n)
    if kind == "psi_scale":
        return p["sigma"] * sample_psi(rng, p["d"], n)
    if kind == "laplace_scale":
        return rng.laplace(0.0, p["sigma"], size=n)
    if kind == "horseshoe_scale":
        lam = np.abs(rng.standard_cauchy(n))
        return p["tau"] * lam * rng.standard_normal(n)
    raise AssertionError(kind)


def _quantile_fn(spec: SignalSpec):
    p = spec.params
    kind = spec.kind
    if kind == "cauchy_scale":
        return lambda u: p["sigma"] * stats.cauchy.ppf(u)
    if kind == "student_t3_scale":
        return lambda u: p["nu"] / math.sqrt(3.0) * stats.t.ppf(u, 3)
    if kind == "laplace_scale":
        return lambda u: stats.laplace.ppf(u, scale=p["sigma"])
    if kind == "double_gamma":
        def q(u):
            ar = np.abs(2.0 * u - 1.0)
            return np.sign(u - 0.5) * p["sigma"] * stats.gamma.ppf(ar, p["nu"])
        return q
    if kind == "atom_slab":
        slab, nu = _slab(p["slab"]), p["nu"]

        def q(u):
            lo = nu * 0.5
            out = np.zeros_like(u)
            left = u < lo
            right = u > 1.0 - lo
            out[left] = slab.dist.ppf(u[left] / nu)
            out[right] = slab.dist.ppf(1.0 - (1.0 - u[right]) / nu)
            return out
        return q
    return None


def stratified_signal(spec: SignalSpec) -> np.ndarray:
    """Signals by inverse CDF at one uniform per stratum ``[(i-1)/n, i/n)``.

    Tail frequencies are then exact to within ``1/n`` per side; the output
    is in quantile order, not i.i.d.
    """
    q = _quantile_fn(spec)
    if q is None:
        raise ValueError(f"no quantile function for {spec.kind}")
    rng = np.random.default_rng(spec.seed)
    u = (np.arange(spec.n) + rng.random(spec.n)) / spec.n
    return q(u)


def limit_measure(kind: str, params: dict) -> ExceedanceMeasure:
    """Unit exceedance measure of a sparse kind (None for the zero-activity class)."""
    if kind in ("cauchy_scale", "horseshoe_scale"):
        return InversePower(1.0)
    if kind == "psi_scale":
        return InversePower(params["d"])
    if kind == "atom_slab":
        return SlabDerived(_slab(params["slab"]))
    if kind == "double_gamma":
        return ExponentialTail(1.0 / params["sigma"])
    if kind == "student_t3_scale":
        return InverseQuartic()
    if kind == "laplace_scale":
        return None
    raise ValueError(f"{kind} is not a sparse family")


def sparsity_rate(kind: str, params: dict) -> float:
    """First-order sparsity rate ``rho`` of a known family."""
    if kind == "cauchy_scale":
        return params["sigma"] * math.sqrt(2.0 / math.pi)
    if kind == "horseshoe_scale":
        # P(|tau lambda Z| > x) ~ (2/pi) tau E|Z| / x, matched to 2 c / x
        return 2.0 * params["tau"] / math.pi
    if kind == "psi_scale":
        return params["sigma"] ** params["d"]
    if kind == "atom_slab":
        return params["nu"] * slab_activity_factor(_slab(params["slab"]))
    if kind == "double_gamma":
        # p_nu ~ (nu / 2) e^{-|x|/sigma} / |x|
        return params["nu"] / (2.0 * limit_measure(kind, params).unit_constant)
    if kind == "student_t3_scale":
        return t3_rates(params["nu"])[1]
    raise ValueError(f"no sparsity rate for {kind}")


def t3_rates(nu: float):
    """First-order ``(gamma, rho) = (nu^2/2, sqrt(2/pi) nu^3/3)`` of the t_3 scale family."""
    return 0.5 * nu * nu, math.sqrt(2.0 / math.pi) * nu**3 / 3.0


def _t3_density(x, nu):
    return 2.0 * nu**3 / (math.pi * (nu * nu + x * x) ** 2)


def t3_rate_integrals(nu: float):
    """Rates of the t_3 scale family from their defining integrals at finite ``nu``.

    ``gamma = (1/2) int x^2 e^{-x^2/2} P(dx)`` and ``rho`` from the
    standardization integral ``int (1 - e^{-x^2/2}(1 + x^2/2)) P(dx)``.
    """
    def one_side(f):
        pts = [nu, 10 * nu, 1.0, 5.0]
        a = integrate.quad(f, 0.0, 5.0, points=pts, limit=400, epsabs=0, epsrel=1e-12)[0]
        b = integrate.quad(f, 5.0, np.inf, limit=400, epsabs=0, epsrel=1e-12)[0]
        return 2.0 * (a + b)

    gam = 0.5 * one_side(lambda x: x * x * math.exp(-0.5 * x * x) * _t3_density(x, nu))

    def stdz(x):
        v = 0.5 * x * x
        # 1 - e^{-v}(1 + v) without cancellation at small v
        w = -math.expm1(-v) - v * math.exp(-v) if v > 1e-3 else v * v / 2 - v**3 / 3 + v**4 / 8
        return w * _t3_density(x, nu)

    return gam, one_side(stdz)


def exceedance_check(spec: SignalSpec, epsilon: float, grid, rate=None, target=None, method: str = "mc") -> dict:
    """Monte Carlo ``P(|mu| > eps) / rho`` along a decreasing sparsity grid.

    Args:
        spec: base signal spec; its sparsity parameter is replaced by each grid value.
        epsilon: exceedance threshold.
        grid: values of the sparsity parameter, e.g. decreasing scales.
        rate: ``rate(value) -> rho``; defaults to the family's first-order rate.
        target: limit value; defaults to ``H(A_eps)`` of the limit measure.
        method: ``'mc'`` for i.i.d. draws or ``'stratified'`` for
            :func:`stratified_signal`.

    Returns:
        Report with per-point ratios and standard errors, the target and the
        least-squares slope of ``|ratio - target|`` against ``log(value)``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if method not in ("mc", "stratified"):
        raise ValueError(f"unknown method {method!r}")
    draw = sample_signal if method == "mc" else stratified_signal
    key = _SPARSITY_PARAM.get(spec.kind)
    if key is None:
        raise ValueError(f"{spec.kind} has no sparsity parameter")
    if rate is None:
        rate = lambda v: sparsity_rate(spec.kind, {**spec.params, key: v})
    if target is None:
        m = limit_measure(spec.kind, spec.params)
        target = m.exceedance_mass(epsilon) if m is not None else 0.0
    values, ratios, ses = [], [], []
    for j, v in enumerate(grid):
        s = SignalSpec(spec.kind, {**spec.params, key: v}, spec.n, spec.seed + j)
        mu = draw(s)
        p = float(np.mean(np.abs(mu) > epsilon))
        r = rate(v)
        values.append(float(v))
        ratios.append(p / r)
        ses.append(math.sqrt(p * (1 - p) / spec.n) / r)
    logs = np.log(values)
    err = np.abs(np.array(ratios) - target)
    slope = float(np.polyfit(logs, err, 1)[0]) if len(values) > 1 else float("nan")
    return {
        "kind": spec.kind,
        "epsilon": float(epsilon),
        "parameter": key,
        "values": values,
        "ratios": ratios,
        "standard_errors": ses,
        "target": float(target),
        "trend_slope": slope,
        "n": spec.n,
        "seed": spec.seed,
        "method": method,
    }
