"""Weight laws with a configurable left tail and a glued Pareto right tail.

Every function here is vectorised over its positional weight or probability
argument: scalars in, numpy scalars out; arrays in, arrays out.

The glued families satisfy, for ``w <= b``,

    PolynomialLeft:             F(w) = p * w**rho
    StretchedExponentialLeft:   F(w) = p * exp(-w**(-rho))

and ``F(w) = 1 - (1 - F(b)) * (w / b)**(-beta)`` above ``b``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special

__all__ = [
    "Family",
    "WeightLaw",
    "MomentCache",
    "WeightDomainError",
    "InfiniteMomentError",
    "cdf",
    "quantile",
    "left_quantile_ws",
    "sample",
    "moment",
    "mu_plus",
    "mu_minus",
    "h_of_w",
    "expectation_nodes",
]


class WeightDomainError(ValueError):
    """Raised for arguments outside the domain of a weight-law function."""


class InfiniteMomentError(ArithmeticError):
    """Raised when a requested moment of the weight law diverges."""


class Family(str, enum.Enum):
    POLYNOMIAL_LEFT = "polynomial_left"
    STRETCHED_EXPONENTIAL_LEFT = "stretched_exponential_left"
    POINT_MASS = "point_mass"


@dataclass(frozen=True)
class WeightLaw:
    """Parametric weight distribution.

    ``p, rho`` set the left tail on ``(0, b]``, ``beta`` the Pareto index of
    the right tail above ``b``. ``w0`` is only used by the ``POINT_MASS``
    family, which places all mass at ``w0``.
    """

    family: Family
    p: float = 1.0
    rho: float = 1.0
    b: float = 1.0
    beta: float = 2.0
    w0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.family is Family.POINT_MASS:
            if not (self.w0 > 0 and math.isfinite(self.w0)):
                raise WeightDomainError(f"w0 must be positive and finite, got {self.w0}")
            return
        for name in ("p", "rho", "b", "beta"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise WeightDomainError(f"{name} must be positive and finite, got {value}")
        if not self.mass_below_b < 1.0:
            raise WeightDomainError(
                f"left tail puts mass {self.mass_below_b} >= 1 below b={self.b}"
            )

    @classmethod
    def polynomial(cls, p=1.0, rho=2.0, b=0.5, beta=5.0) -> "WeightLaw":
        return cls(Family.POLYNOMIAL_LEFT, p=p, rho=rho, b=b, beta=beta)

    @classmethod
    def stretched(cls, p=1.0, rho=1.0, b=0.5, beta=5.0) -> "WeightLaw":
        return cls(Family.STRETCHED_EXPONENTIAL_LEFT, p=p, rho=rho, b=b, beta=beta)

    @classmethod
    def point_mass(cls, w0=1.0) -> "WeightLaw":
        return cls(Family.POINT_MASS, w0=w0)

    @property
    def is_point_mass(self) -> bool:
        return self.family is Family.POINT_MASS

    @property
    def mass_below_b(self) -> float:
        """F(b), the probability of the left-tail branch."""
        if self.family is Family.POLYNOMIAL_LEFT:
            return self.p * self.b**self.rho
        if self.family is Family.STRETCHED_EXPONENTIAL_LEFT:
            return self.p * math.exp(-self.b ** (-self.rho))
        return 0.0

    def to_dict(self) -> dict:
        if self.is_point_mass:
            return {"family": self.family.value, "w0": self.w0}
        return {
            "family": self.family.value,
            "p": self.p,
            "rho": self.rho,
            "b": self.b,
            "beta": self.beta,
        }


@dataclass(frozen=True)
class MomentCache:
    """Moments ``E[W^a]`` and ``E[W^(a*alpha)]`` for a fixed kernel exponent."""

    a: float
    mu_a: float
    mu_a_alpha: float
    quadrature_tol: float

    @classmethod
    def build(cls, law: WeightLaw, a: float, alpha: float, quadrature_tol=1e-10):
        mu_a = float(moment(law, a))
        try:
            mu_a_alpha = float(moment(law, a * alpha))
        except InfiniteMomentError:
            mu_a_alpha = math.inf
        if not (mu_a > 0 and math.isfinite(mu_a)):
            raise InfiniteMomentError(f"E[W^{a}] is not finite and positive")
        return cls(a=a, mu_a=mu_a, mu_a_alpha=mu_a_alpha, quadrature_tol=quadrature_tol)


def _check_weights(w):
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise WeightDomainError("weights must be finite")
    if np.any(w <= 0):
        raise WeightDomainError("weights must be positive")
    return w


def cdf(law: WeightLaw, w):
    """P(W <= w)."""
    w = _check_weights(w)
    if law.is_point_mass:
        return np.where(w >= law.w0, 1.0, 0.0)[()]
    left = np.minimum(w, law.b)
    if law.family is Family.POLYNOMIAL_LEFT:
        f_left = law.p * left**law.rho
    else:
        f_left = law.p * np.exp(-(left ** (-law.rho)))
    tail = (1.0 - law.mass_below_b) * (np.maximum(w, law.b) / law.b) ** (-law.beta)
    return np.where(w <= law.b, f_left, 1.0 - tail)[()]


def _survival(law: WeightLaw, w):
    """P(W > w) without the cancellation of ``1 - cdf`` in the right tail."""
    w = np.asarray(w, dtype=float)
    tail = (1.0 - law.mass_below_b) * (np.maximum(w, law.b) / law.b) ** (-law.beta)
    return np.where(w <= law.b, 1.0 - cdf(law, np.minimum(w, law.b)), tail)


def _left_quantile(law: WeightLaw, q):
    # inverse of the left-tail branch, valid for 0 < q <= F(b)
    if law.family is Family.POLYNOMIAL_LEFT:
        return (q / law.p) ** (1.0 / law.rho)
    return np.log(law.p / q) ** (-1.0 / law.rho)


def _tail_quantile(law: WeightLaw, qc):
    # inverse of the Pareto branch given the upper-tail probability qc = 1 - q
    return law.b * (qc / (1.0 - law.mass_below_b)) ** (-1.0 / law.beta)


def quantile(law: WeightLaw, q):
    """Smallest ``w`` with ``F(w) >= q`` for ``0 < q < 1``."""
    q = np.asarray(q, dtype=float)
    if np.any(~(q > 0) | ~(q < 1)):
        raise WeightDomainError("quantile level must lie strictly inside (0, 1)")
    if law.is_point_mass:
        return np.full_like(q, law.w0)[()]
    fb = law.mass_below_b
    below = q <= fb
    left = _left_quantile(law, np.where(below, q, fb))
    right = _tail_quantile(law, np.where(below, 1.0 - fb, 1.0 - q))
    return np.where(below, left, right)[()]


def left_quantile_ws(law: WeightLaw, s: float) -> float:
    """The 1/(2s)-quantile ``w_s``; decreasing in ``s``."""
    if not s > 0.5:
        raise WeightDomainError(f"need s > 1/2 so that 1/(2s) < 1, got s={s}")
    return float(quantile(law, 1.0 / (2.0 * s)))


def sample(law: WeightLaw, stream: np.random.Generator, n: int) -> np.ndarray:
    """``n`` iid draws by inversion of the closed-form quantile."""
    if n < 0:
        raise WeightDomainError("sample size must be non-negative")
    # uniforms on the open interval (0, 1): midpoints of the 2^-53 lattice
    u = stream.random(n) + 2.0**-54
    if law.is_point_mass:
        return np.full(n, law.w0)
    fb = law.mass_below_b
    below = u <= fb
    out = np.empty(n)
    out[below] = _left_quantile(law, u[below])
    out[~below] = _tail_quantile(law, 1.0 - u[~below])
    return out


# ---------------------------------------------------------------------------
# partial moments


def _upper_gamma(a: float, x):
    """Non-regularised upper incomplete gamma Gamma(a, x) for real ``a``."""
    x = np.asarray(x, dtype=float)
    if a > 0:
        return special.gammaincc(a, x) * special.gamma(a)
    n = math.ceil(-a)
    base = a + n
    if base == 0:
        g = special.exp1(x)
    else:
        g = special.gammaincc(base, x) * special.gamma(base)
    # downward recurrence Gamma(c, x) = (Gamma(c+1, x) - x^c e^-x) / c
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(n - 1, -1, -1):
            c = a + j
            g = (g - x**c * np.exp(-x)) / c
    return np.where(np.exp(-x) == 0.0, 0.0, g)


def _left_lower_moment(law: WeightLaw, r: float, x):
    """E[W^r ; W < x] for ``0 < x <= b`` (left-tail branch only)."""
    x = np.asarray(x, dtype=float)
    if law.family is Family.POLYNOMIAL_LEFT:
        if r + law.rho <= 0:
            raise InfiniteMomentError(f"E[W^{r}] diverges at 0 for rho={law.rho}")
        return law.p * law.rho * x ** (r + law.rho) / (r + law.rho)
    # substitute t = w^-rho: integral of p t^(-r/rho) e^-t over t > x^-rho
    return law.p * _upper_gamma(1.0 - r / law.rho, x ** (-law.rho))


def _pareto_band(law: WeightLaw, r: float, lo, hi):
    """E[W^r ; lo <= W < hi] for ``b <= lo <= hi <= inf``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    scale = (1.0 - law.mass_below_b) * law.beta * law.b**law.beta
    e = r - law.beta
    if e == 0:
        with np.errstate(invalid="ignore"):
            return scale * np.log(hi / lo)
    with np.errstate(over="ignore", invalid="ignore"):
        return scale * (hi**e - lo**e) / e


def _lower_moment(law: WeightLaw, r: float, x):
    """E[W^r ; W < x]."""
    x = np.asarray(x, dtype=float)
    if law.is_point_mass:
        return np.where(law.w0 < x, law.w0**r, 0.0)
    b = law.b
    left = _left_lower_moment(law, r, np.minimum(x, b))
    band = _pareto_band(law, r, b, np.maximum(x, b))
    return np.where(x <= b, left, left + band)


def _upper_moment(law: WeightLaw, r: float, x):
    """E[W^r ; W >= x]."""
    x = np.asarray(x, dtype=float)
    if law.is_point_mass:
        return np.where(law.w0 >= x, law.w0**r, 0.0)
    if r >= law.beta:
        raise InfiniteMomentError(f"E[W^{r}] diverges for tail index beta={law.beta}")
    b = law.b
    xl = np.minimum(x, b)
    left_band = _left_lower_moment(law, r, b) - _left_lower_moment(law, r, xl)
    tail = _pareto_band(law, r, np.maximum(x, b), np.inf)
    return np.where(x <= b, left_band + tail, tail)


def moment(law: WeightLaw, r: float) -> float:
    """E[W^r]."""
    if law.is_point_mass:
        return law.w0**r
    return float(_upper_moment(law, r, law.b) + _left_lower_moment(law, r, law.b))


def mu_plus(law: WeightLaw, a: float, w):
    """E[W^a ; W >= w]; nonincreasing in ``w`` with limit E[W^a] at 0."""
    w = _check_weights(w)
    return _upper_moment(law, a, w)[()]


def mu_minus(law: WeightLaw, w):
    """E[W ; W < w]; nondecreasing in ``w``."""
    w = _check_weights(w)
    return _lower_moment(law, 1.0, w)[()]


def h_of_w(law: WeightLaw, a: float, w):
    """Expected kernel value E[kappa(w, W)] = w mu_plus(w) + w^a mu_minus(w)."""
    w = _check_weights(w)
    return (w * _upper_moment(law, a, w) + w**a * _lower_moment(law, 1.0, w))[()]


# ---------------------------------------------------------------------------
# fixed-node quadrature against the weight law


def _composite_gauss(lo: float, hi: float, panels: int, order: int):
    x, wt = leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * wt[None, :]).ravel()
    return nodes, weights


def expectation_nodes(
    law: WeightLaw,
    *,
    u_min: float = 1e-30,
    tail_decay: float = 1.0,
    panels: int = 48,
    order: int = 16,
):
    """Nodes ``w_i`` and probabilities ``pi_i`` with ``sum pi_i f(w_i) ~ E[f(W)]``.

    The left branch is integrated in ``log F(w)`` and the Pareto branch in
    ``tau = beta * log(w / b)``, where each has an exponentially decaying
    integrand for the functionals used in this package. ``u_min`` truncates
    the left branch at ``F(w) = u_min``; ``tail_decay`` is the exponential
    decay rate in ``tau`` of ``f(W) dF`` (``1 - r / beta`` for ``f ~ w^r``).
    """
    if law.is_point_mass:
        return np.array([law.w0]), np.array([1.0])
    fb = law.mass_below_b
    t_lo = math.log(min(u_min, fb))
    t, wt = _composite_gauss(t_lo, math.log(fb), panels, order)
    u = np.exp(t)
    w_left = _left_quantile(law, u)
    p_left = wt * u

    tau_max = min(60.0 / max(tail_decay, 1e-3), 700.0)
    tau, wt2 = _composite_gauss(0.0, tau_max, panels, order)
    w_right = law.b * np.exp(tau / law.beta)
    p_right = (1.0 - fb) * np.exp(-tau) * wt2
    return np.concatenate([w_left, w_right]), np.concatenate([p_left, p_right])
