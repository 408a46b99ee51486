"""Symmetric exceedance measures and their normalizations.

Every measure is stored in unit form: the raw family density is multiplied
by a constant so that ``int (1 - exp(-x^2/2)) H(dx) = 1``.  Hyperactive
measures, for which only ``x^2 H(dx)`` is a Levy measure, are standardized
by ``int (1 - exp(-x^2/2)(1 + x^2/2)) H(dx) = 1`` instead.
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats
from scipy.special import gamma, gammaln

from . import _quad

__all__ = [
    "ExceedanceMeasure",
    "InversePower",
    "LaplaceLasso",
    "ExponentialTail",
    "SlabDerived",
    "InverseQuartic",
    "Custom",
    "SlabDistribution",
    "BracketError",
    "unit_constant",
    "activity_index",
    "exceedance_mass",
    "slab_activity_factor",
    "scale_family_rate",
    "measure_from_json",
]


class BracketError(RuntimeError):
    """The activity-index bracket could not be located."""


def one_minus_gauss(x):
    """``1 - exp(-x^2/2)`` without cancellation near zero."""
    with np.errstate(over="ignore"):
        return -np.expm1(-0.5 * np.square(x))


def one_minus_gauss2(x):
    """``1 - exp(-x^2/2) (1 + x^2/2)``, accurate for small ``x``."""
    with np.errstate(over="ignore"):
        v = 0.5 * np.square(np.asarray(x, dtype=float))
    out = np.empty_like(v)
    small = v < 0.5
    vs = v[small]
    # sum_{k>=2} (-1)^k (k-1) v^k / k!
    acc = np.zeros_like(vs)
    term = vs.copy()  # v^k / k! at k=1
    for k in range(2, 24):
        term = term * vs / k
        acc += (-1) ** k * (k - 1) * term
    out[small] = acc
    vb = v[~small]
    out[~small] = 1.0 - np.exp(-vb) * (1.0 + vb)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SlabDistribution:
    """Symmetric slab distribution for the atom-and-slab family."""

    kind: str  # 'laplace' | 'cauchy' | 'gaussian'
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("laplace", "cauchy", "gaussian"):
            raise ValueError(f"unknown slab kind {self.kind!r}")
        if not self.scale > 0:
            raise ValueError("slab scale must be positive")

    @property
    def dist(self):
        base = {"laplace": stats.laplace, "cauchy": stats.cauchy, "gaussian": stats.norm}[self.kind]
        return base(scale=self.scale)

    def pdf(self, x):
        return self.dist.pdf(x)

    def cdf(self, x):
        return self.dist.cdf(x)

    def sf(self, x):
        return self.dist.sf(x)


class ExceedanceMeasure:
    """Base class for a symmetric exceedance measure in unit form.

    Subclasses provide ``raw_density`` (unnormalized, vectorized, even) and
    may override the closed-form hooks.  The unit constant is computed once
    at construction; instances are not mutated afterwards.
    """

    family = "abstract"
    hyperactive = False

    def __init__(self):
        self._unit_constant = float(self._compute_unit_constant())
        if not (self._unit_constant > 0 and math.isfinite(self._unit_constant)):
            raise ValueError(f"invalid unit constant {self._unit_constant!r}")

    # -- family hooks -------------------------------------------------
    def raw_density(self, x):
        raise NotImplementedError

    @property
    def params(self) -> dict:
        return {}

    def _compute_unit_constant(self):
        weight = one_minus_gauss2 if self.hyperactive else one_minus_gauss
        total = 2.0 * _quad.half_line(lambda x: float(weight(x) * self.raw_density(x)))
        return 1.0 / total

    def _activity_index(self):
        raise NotImplementedError

    def _exceedance_mass(self, epsilon):
        return 2.0 * self.integrate(lambda x: 1.0, lower=epsilon)

    # -- public surface ------------------------------------------------
    @property
    def unit_constant(self) -> float:
        return self._unit_constant

    def density(self, x):
        """Unit-normalized density ``h(x)`` for ``x != 0``."""
        return self._unit_constant * self.raw_density(x)

    def integrate(self, f: Callable[[float], float], lower=0.0, upper=np.inf, breaks=(), check=1e-6):
        """``int_lower^upper f(x) h(x) dx`` on the positive half-line."""
        def g(x):
            return f(x) * float(self.density(x))

        if lower == 0.0 and upper == np.inf:
            return _quad.half_line(g, breaks=breaks, check=check)
        return _quad.interval(g, lower, upper, breaks=breaks, check=check)

    def normalization_integral(self) -> float:
        """The defining unit integral; equals 1 up to quadrature error."""
        weight = one_minus_gauss2 if self.hyperactive else one_minus_gauss
        return 2.0 * self.integrate(lambda x: float(weight(x)))

    def activity_index(self) -> float:
        if self.hyperactive:
            raise ValueError("activity index is defined for Levy (non-hyperactive) measures only")
        return self._activity_index()

    def exceedance_mass(self, epsilon) -> float:
        """``H({|x| > epsilon})``."""
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        if epsilon == np.inf:
            return 0.0
        return float(self._exceedance_mass(epsilon))

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "params": self.params,
            "unit_constant": self.unit_constant,
            "hyperactive": self.hyperactive,
        }

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({args})"

    def __eq__(self, other):
        return type(self) is type(other) and self.params == other.params and type(self) is not Custom

    def __hash__(self):
        return hash((type(self).__name__, tuple(sorted(self.params.items(), key=str))))


class InversePower(ExceedanceMeasure):
    """``h(x) = c |x|^{-d-1}`` with ``c = d 2^{d/2-1} / Gamma(1 - d/2)``."""

    family = "inverse_power"

    def __init__(self, d: float):
        if not 0.0 < d < 2.0:
            raise ValueError(f"inverse-power index must lie in (0, 2), got {d}")
        self.d = float(d)
        super().__init__()

    @property
    def params(self):
        return {"d": self.d}

    def raw_density(self, x):
        return np.abs(x) ** (-self.d - 1.0)

    def _compute_unit_constant(self):
        d = self.d
        return d * 2.0 ** (d / 2 - 1) / gamma(1 - d / 2)

    def _activity_index(self):
        return self.d

    def _exceedance_mass(self, epsilon):
        return 2.0 * self._unit_constant * epsilon ** (-self.d) / self.d


class InverseQuartic(ExceedanceMeasure):
    """Hyperactive ``t_3`` limit, ``h(x) = 3 sqrt(2/pi) / x^4``."""

    family = "inverse_quartic"
    hyperactive = True
    d = 3.0

    def raw_density(self, x):
        return np.abs(x) ** -4.0

    def _compute_unit_constant(self):
        return 3.0 * math.sqrt(2.0 / math.pi)

    def _exceedance_mass(self, epsilon):
        return 2.0 * self._unit_constant * epsilon ** -3.0 / 3.0


class LaplaceLasso(ExceedanceMeasure):
    """Levy measure of the atom-and-slab lasso, ``e^{-lam} delta_0 + (1 - e^{-lam}) Laplace(tau)``.

    ``h(x) ∝ (exp(-tau|x|) - exp(-tau e^{lam/2} |x|)) / |x|``; ``lam = 0``
    gives the limit ``tau exp(-tau|x|) / 2``.
    """

    family = "laplace_lasso"

    def __init__(self, lam: float, tau: float):
        if not lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if not tau > 0:
            raise ValueError("tau must be positive")
        self.lam = float(lam)
        self.tau = float(tau)
        super().__init__()

    @property
    def params(self):
        return {"lambda": self.lam, "tau": self.tau}

    def raw_density(self, x):
        ax = np.abs(x)
        if self.lam == 0.0:
            return 0.5 * self.tau * np.exp(-self.tau * ax)
        k = math.expm1(self.lam / 2)
        return np.exp(-self.tau * ax) * -np.expm1(-self.tau * k * ax) / ax

    def _activity_index(self):
        return 0.0


class ExponentialTail(ExceedanceMeasure):
    """``h(x) ∝ exp(-alpha |x|) / |x|`` (double-gamma limit)."""

    family = "exponential_tail"

    def __init__(self, alpha: float):
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        self.alpha = float(alpha)
        super().__init__()

    @property
    def params(self):
        return {"alpha": self.alpha}

    def raw_density(self, x):
        ax = np.abs(x)
        return np.exp(-self.alpha * ax) / ax

    def _activity_index(self):
        return 0.0


class SlabDerived(ExceedanceMeasure):
    """Unit exceedance ``F / K`` of the atom-and-slab family ``(1-nu) delta_0 + nu F``."""

    family = "slab"

    def __init__(self, slab: SlabDistribution):
        self.slab = slab
        super().__init__()

    @property
    def params(self):
        return {"kind": self.slab.kind, "scale": self.slab.scale}

    def raw_density(self, x):
        return self.slab.pdf(x)

    def _compute_unit_constant(self):
        return 1.0 / slab_activity_factor(self.slab)

    def _activity_index(self):
        return 0.0

    def _exceedance_mass(self, epsilon):
        return 2.0 * self.slab.sf(epsilon) * self._unit_constant


class Custom(ExceedanceMeasure):
    """User-supplied symmetric density (no atoms).

    Only ``density(|x|)`` is ever evaluated, so symmetry holds by
    construction.
    """

    family = "custom"

    def __init__(self, density: Callable, hyperactive: bool = False, name: str = "custom"):
        self._density = density
        self.hyperactive = bool(hyperactive)
        self.name = name
        super().__init__()

    @property
    def params(self):
        return {"name": self.name}

    def raw_density(self, x):
        ax = np.abs(np.asarray(x, dtype=float))
        if ax.ndim == 0:
            return float(self._density(float(ax)))
        return np.array([self._density(float(v)) for v in ax.ravel()]).reshape(ax.shape)

    def _activity_index(self):
        return _bracket_activity_index(lambda x: float(self._density(x)))

    def to_json(self):
        raise TypeError("custom measures carry a callable and cannot be serialized")


def _bracket_activity_index(h, step=0.01, s1=100.0, s2=200.0):
    """Bracket ``inf{alpha : int_0^1 x^alpha h(x) dx < inf}``.

    In ``s = -log x`` the integrand is ``g(s) = exp(-(alpha+1) s) h(e^{-s})``;
    the integral converges iff ``g`` decays.  For each ``alpha`` on the grid
    the decay is tested between ``s1`` and ``s2``.
    """
    h1, h2 = h(math.exp(-s1)), h(math.exp(-s2))
    if not (h1 > 0 and h2 > 0 and math.isfinite(h1) and math.isfinite(h2)):
        raise BracketError("density is not positive and finite near the origin")
    lh1, lh2 = math.log(h1), math.log(h2)
    alphas = np.round(np.arange(0.0, 2.0 + step / 2, step), 10)
    grow = [(lh2 - (a + 1) * s2) - (lh1 - (a + 1) * s1) >= 0.0 for a in alphas]
    if grow[-1]:
        raise BracketError("x^2 h(x) is not integrable at the origin")
    if not grow[0]:
        return 0.0
    k = max(i for i, g in enumerate(grow) if g)
    if any(not g for g in grow[:k]):
        raise BracketError("non-monotone convergence pattern")
    return 0.5 * (alphas[k] + alphas[k + 1])


# -- functional surface ---------------------------------------------------

def unit_constant(measure: ExceedanceMeasure) -> float:
    return measure.unit_constant


def activity_index(measure: ExceedanceMeasure) -> float:
    return measure.activity_index()


def exceedance_mass(measure: ExceedanceMeasure, epsilon: float) -> float:
    return measure.exceedance_mass(epsilon)


def slab_activity_factor(slab: SlabDistribution) -> float:
    """Activity reduction ``rho / nu = int (1 - e^{-x^2/2}) F(dx)``."""
    return 2.0 * _quad.half_line(lambda x: float(one_minus_gauss(x) * slab.pdf(x)), epsrel=1e-12)


def student_t_tail_constant(d: float) -> float:
    """``A`` with ``t_d`` density ``~ A |x|^{-d-1}`` as ``|x| -> inf``."""
    return math.exp(gammaln((d + 1) / 2) + (d / 2) * math.log(d) - 0.5 * math.log(math.pi) - gammaln(d / 2))


def scale_family_rate(family: str, sigma: float, d: float = None) -> float:
    """Sparsity rate of the Cauchy or Student-t scale family at scale ``sigma``.

    The rate matches ``sigma^{-1} p(x/sigma) ~ rho(sigma) h(x)`` against the
    unit inverse-power density ``h``.
    """
    if not sigma >= 0:
        raise ValueError("sigma must be nonnegative")
    if family == "cauchy":
        return sigma * math.sqrt(2.0 / math.pi)
    if family in ("student_t", "t"):
        if d is None or not 0.0 < d < 2.0:
            raise ValueError("Student-t degrees of freedom must lie in (0, 2)")
        c = InversePower(d).unit_constant
        return student_t_tail_constant(d) * sigma**d / c
    raise ValueError(f"unknown scale family {family!r}")


_REGISTRY = {
    "inverse_power": lambda p: InversePower(p["d"]),
    "inverse_quartic": lambda p: InverseQuartic(),
    "laplace_lasso": lambda p: LaplaceLasso(p["lambda"], p["tau"]),
    "exponential_tail": lambda p: ExponentialTail(p["alpha"]),
    "slab": lambda p: SlabDerived(SlabDistribution(p["kind"], p.get("scale", 1.0))),
}


def measure_from_json(obj: dict) -> ExceedanceMeasure:
    """Rebuild a measure from ``{family, params, unit_constant, hyperactive}``."""
    try:
        make = _REGISTRY[obj["family"]]
    except KeyError:
        raise ValueError(f"cannot deserialize measure family {obj.get('family')!r}") from None
    m = make(obj.get("params", {}))
    stored = obj.get("unit_constant")
    if stored is not None and not math.isclose(stored, m.unit_constant, rel_tol=1e-8):
        raise ValueError(f"stored unit constant {stored} disagrees with recomputed {m.unit_constant}")
    return m
