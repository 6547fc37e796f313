"""The degree-k scaling equation and its large-intensity asymptotics.

For intensity ``s`` and degree ``k`` the scale ``sigma_s = s * v_s`` is the
largest root of

    L(s, sigma) = s * E[(sigma h(W))^k exp(-sigma h(W))] = k!

so that the expected number of degree-k points in the unit cube is one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .connection import ConnectionSpec
from .quadrature import gauss_kronrod
from .weights import (
    Family,
    WeightDomainError,
    WeightLaw,
    _left_quantile,
    cdf,
    h_of_w,
    left_quantile_ws,
    moment,
)

__all__ = [
    "ScalingSolution",
    "NoSolutionError",
    "AssumptionReport",
    "MAX_DEGREE",
    "evaluate_L",
    "solve_scg",
    "verify_largest_root",
    "asymptotic_sigma_polynomial",
    "asymptotic_sigma_stretched",
    "stretched_ratio",
    "recommended_parameters",
    "check_assumptions",
    "weight_for_mean_degree",
]

MAX_DEGREE = 20
DESCENT_RATIO = 1.05
# contributions below NEGLIGIBLE * k! are dropped when truncating the domain
NEGLIGIBLE = 1e-17


class NoSolutionError(ArithmeticError):
    """No sigma with L(s, sigma) >= k! was found."""


@dataclass(frozen=True)
class ScalingSolution:
    """Largest root of the scaling equation.

    ``residual`` is the relative defect ``L(s, sigma_s) / k! - 1``.
    ``bracket`` is the final sign-change interval and ``search_upper`` the
    grown upper bound from which the descent started.
    """

    s: float
    k: int
    sigma_s: float
    v_s: float
    bracket: tuple[float, float]
    residual: float
    n_evals: int
    search_upper: float = field(default=math.nan)

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "k": self.k,
            "sigma_s": self.sigma_s,
            "v_s": self.v_s,
            "residual": self.residual,
            "n_evals": self.n_evals,
        }


def _check_degree(k) -> int:
    if int(k) != k or k < 0:
        raise ValueError(f"degree must be a non-negative integer, got {k}")
    if k > MAX_DEGREE:
        raise ValueError(f"degree {k} exceeds the supported maximum {MAX_DEGREE}")
    return int(k)


def _log_g(x, k):
    # log of x^k e^-x, finite for x > 0
    if k == 0:
        return -x
    return k * np.log(x) - x


def _log_left_cdf(law, w):
    if law.family is Family.POLYNOMIAL_LEFT:
        return math.log(law.p) + law.rho * math.log(w)
    return math.log(law.p) - w ** (-law.rho)


def _peak_hints(law, spec, sigma, k):
    # weights where sigma h(w) sits on the scale of the Poisson peak,
    # using h(w) ~ w E[W^a] for small w
    mu_a = moment(law, spec.a)
    scale = max(k, 1)
    return np.array([c * scale / (sigma * mu_a) for c in (1e-2, 1e-1, 0.5, 1.0, 2.0, 10.0, 1e2)])


def _evaluate(law: WeightLaw, spec: ConnectionSpec, s: float, sigma: float, k: int, rtol: float):
    """(L, number of integrand evaluations)."""
    if law.is_point_mass:
        x = sigma * law.w0 ** (1.0 + spec.a)
        return float(s * math.exp(_log_g(x, k) if x > 0 else (0.0 if k == 0 else -math.inf))), 1
    kf = math.factorial(k)
    log_gmax = k * math.log(k) - k if k > 0 else 0.0
    log_s = math.log(s)
    atol = NEGLIGIBLE * kf
    fb = law.mass_below_b
    hints = _peak_hints(law, spec, sigma, k)

    # left branch in t = log F(w)
    t_b = math.log(fb)
    t_lo = max(math.log(NEGLIGIBLE * kf) - log_s - log_gmax, -700.0)

    def left(t):
        w = _left_quantile(law, np.exp(t))
        x = sigma * h_of_w(law, spec.a, w)
        return np.exp(log_s + t + _log_g(x, k))

    left_pts = [_log_left_cdf(law, w) for w in hints if w < law.b]
    left_pts = [t for t in left_pts if t_lo < t < t_b]
    total = 0.0
    n_evals = 0
    if t_lo < t_b:
        r = gauss_kronrod(left, t_lo, t_b, rtol=rtol, atol=atol, points=left_pts)
        total += r.value
        n_evals += r.n_evals

    # Pareto branch in tau = beta log(w / b)
    log_mass = math.log1p(-fb)
    tau_max = log_s + log_mass + log_gmax - math.log(NEGLIGIBLE * kf)
    if tau_max > 0:
        def right(tau):
            w = law.b * np.exp(tau / law.beta)
            x = sigma * h_of_w(law, spec.a, w)
            return np.exp(log_s + log_mass - tau + _log_g(x, k))

        right_pts = [law.beta * math.log(w / law.b) for w in hints if w > law.b]
        right_pts = [t for t in right_pts if t < tau_max]
        r = gauss_kronrod(right, 0.0, tau_max, rtol=rtol, atol=atol, points=right_pts)
        total += r.value
        n_evals += r.n_evals
    return total, n_evals


def evaluate_L(law: WeightLaw, spec: ConnectionSpec, s: float, sigma: float, k: int,
               *, rtol: float = 1e-10) -> float:
    """``s * E[(sigma h(W))^k exp(-sigma h(W))]`` by adaptive quadrature.

    Raises :class:`~wrcm.quadrature.QuadratureError` on non-convergence.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    k = _check_degree(k)
    return _evaluate(law, spec, s, sigma, k, rtol)[0]


def solve_scg(law: WeightLaw, spec: ConnectionSpec, s: float, k: int, *,
              rtol: float = 1e-10, xtol: float = 1e-12) -> ScalingSolution:
    """Largest root of ``L(s, sigma) = k!``.

    The upper bracket starts at ``log(s) / w_s`` and is doubled until
    ``L < k!``; the descent then walks a geometric grid (ratio 1.05) until
    ``L >= k!`` and the last sign change is refined by Brent's method.
    """
    k = _check_degree(k)
    kf = math.factorial(k)
    n_evals = 0

    def L(sigma):
        nonlocal n_evals
        n_evals += 1
        return _evaluate(law, spec, s, sigma, k, rtol)[0]

    w_s = law.w0 if law.is_point_mass else left_quantile_ws(law, s)
    hi = max(math.log(s), 1.0) / w_s
    for _ in range(200):
        if L(hi) < kf:
            break
        hi *= 2.0
    else:
        raise NoSolutionError(f"L(s, sigma) >= k! up to sigma = {hi:.3g}")
    search_upper = hi
    floor = search_upper * 1e-12
    upper = hi
    while True:
        lower = upper / DESCENT_RATIO
        if lower < floor:
            raise NoSolutionError(
                f"no sigma in [{floor:.3g}, {search_upper:.3g}] with L(s={s:g}, sigma) >= {kf} for k={k}"
            )
        if L(lower) >= kf:
            break
        upper = lower

    sigma = optimize.brentq(lambda x: L(x) / kf - 1.0, lower, upper, xtol=1e-300, rtol=xtol)
    value = L(sigma)
    return ScalingSolution(
        s=float(s), k=k, sigma_s=float(sigma), v_s=float(sigma / s),
        bracket=(float(lower), float(upper)),
        residual=float(value / kf - 1.0), n_evals=n_evals,
        search_upper=float(search_upper),
    )


def verify_largest_root(law, spec, solution: ScalingSolution, probes: int = 50) -> float:
    """Largest ``L / k!`` on geometric probes in ``(sigma_s (1 + 1e-6), search_upper]``.

    A value below 1 certifies the root as the largest on the probed grid.
    """
    lo = solution.sigma_s * (1.0 + 1e-6)
    hi = max(solution.search_upper, lo * 1.0001)
    grid = np.geomspace(lo, hi, probes)
    kf = math.factorial(solution.k)
    return max(evaluate_L(law, spec, solution.s, x, solution.k) / kf for x in grid)


# ---------------------------------------------------------------------------
# asymptotics


def asymptotic_sigma_polynomial(law: WeightLaw, k: int, a: float) -> float:
    """Limit of ``sigma_s^rho / s`` for a polynomial left tail.

    Equals ``p rho Gamma(k + rho) / (k! E[W^a]^rho)``.
    """
    if law.family is not Family.POLYNOMIAL_LEFT:
        raise WeightDomainError("asymptotic constant needs a polynomial left tail")
    k = _check_degree(k)
    mu_a = moment(law, a)
    return law.p * law.rho * math.gamma(k + law.rho) / (math.factorial(k) * mu_a**law.rho)


def stretched_ratio(solution: ScalingSolution, law: WeightLaw) -> float:
    """``sigma_s / log(s)^(1 + 1/rho)``."""
    return solution.sigma_s / math.log(solution.s) ** (1.0 + 1.0 / law.rho)


DEFAULT_STRETCHED_GRID = (1e3, 1e4, 1e5, 1e6, 1e7)


def asymptotic_sigma_stretched(law: WeightLaw, spec: ConnectionSpec, k: int,
                               s_grid=DEFAULT_STRETCHED_GRID) -> tuple[float, float]:
    """Empirical (min, max) of ``sigma_s / log(s)^(1+1/rho)`` over ``s_grid``.

    Only boundedness of this ratio is known, so the bracket is computed from
    solver runs rather than from a closed form.
    """
    if law.family is not Family.STRETCHED_EXPONENTIAL_LEFT:
        raise WeightDomainError("bracket needs a stretched-exponential left tail")
    ratios = [stretched_ratio(solve_scg(law, spec, s, k), law) for s in s_grid]
    return min(ratios), max(ratios)


# ---------------------------------------------------------------------------
# assumption diagnostics


def recommended_parameters(law: WeightLaw, spec: ConnectionSpec) -> tuple[float, float]:
    """An admissible ``(eta, K)`` for the built-in families.

    Polynomial: ``K = 2 / delta`` and ``eta`` a tenth of the way from the
    lower bound ``q / (1 + q)``, ``q = (1 + K) / rho``, towards 1.
    Stretched: ``eta = 1/2`` and ``K = (2 rho + 1) / delta + 1``.
    """
    delta = spec.delta
    if law.family is Family.POLYNOMIAL_LEFT:
        K = 2.0 / delta
        q = (1.0 + K) / law.rho
        lower = q / (1.0 + q)
        return lower + 0.1 * (1.0 - lower), K
    if law.family is Family.STRETCHED_EXPONENTIAL_LEFT:
        return 0.5, (2.0 * law.rho + 1.0) / delta + 1.0
    raise WeightDomainError("no recommended parameters for a point mass")


@dataclass
class AssumptionReport:
    """Finite-s values of the three assumption expressions along ``s_grid``.

    ``a1 = sigma_s w_s^eta / log s`` should grow without bound; ``a2 =
    log(s) w_s^(-(K+1)(1-eta)) F(w_s^eta)`` and ``a3 = log(s)
    w_s^((K delta - 1)(1-eta))`` should vanish. Verdicts use the finite-s
    proxies: ``a1`` strictly increasing with last value > 10, ``a2``/``a3``
    strictly decreasing with last value < 0.1.
    """

    eta: float
    K: float
    s_grid: np.ndarray
    sigma: np.ndarray
    w_s: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    slopes: dict
    verdicts: dict
    recommended: tuple[float, float] | None

    @property
    def all_pass(self) -> bool:
        return all(self.verdicts.values())

    def rows(self):
        for i, s in enumerate(self.s_grid):
            yield {
                "s": float(s), "sigma_s": float(self.sigma[i]), "w_s": float(self.w_s[i]),
                "A1": float(self.a1[i]), "A2": float(self.a2[i]), "A3": float(self.a3[i]),
            }


def _trend(s_grid, values) -> float:
    ok = values > 0
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(s_grid[ok]), np.log(values[ok]), 1)[0])


def check_assumptions(law: WeightLaw, spec: ConnectionSpec, k: int, eta: float, K: float,
                      s_grid) -> AssumptionReport:
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if not K > 0:
        raise ValueError("K must be positive")
    if law.is_point_mass:
        raise WeightDomainError("assumptions concern laws with a left tail")
    s_grid = np.asarray(s_grid, dtype=float)
    if len(s_grid) < 4 or np.any(np.diff(s_grid) <= 0):
        raise ValueError("s_grid must be increasing with at least 4 points")
    sigma = np.array([solve_scg(law, spec, s, k).sigma_s for s in s_grid])
    w_s = np.array([left_quantile_ws(law, s) for s in s_grid])
    log_s = np.log(s_grid)
    a1 = sigma * w_s**eta / log_s
    a2 = log_s * w_s ** (-(K + 1.0) * (1.0 - eta)) * cdf(law, w_s**eta)
    a3 = log_s * w_s ** ((K * spec.delta - 1.0) * (1.0 - eta))
    verdicts = {
        "A1": bool(np.all(np.diff(a1) > 0) and a1[-1] > 10.0),
        "A2": bool(np.all(np.diff(a2) < 0) and a2[-1] < 0.1),
        "A3": bool(np.all(np.diff(a3) < 0) and a3[-1] < 0.1),
    }
    slopes = {name: _trend(s_grid, v) for name, v in (("A1", a1), ("A2", a2), ("A3", a3))}
    try:
        rec = recommended_parameters(law, spec)
    except WeightDomainError:
        rec = None
    return AssumptionReport(eta, K, s_grid, sigma, w_s, a1, a2, a3, slopes, verdicts, rec)


def weight_for_mean_degree(law: WeightLaw, spec: ConnectionSpec, sigma: float, target: float) -> float:
    """Weight ``w`` with ``sigma h(w) = target``; ``h`` is increasing."""
    if not target > 0 or not sigma > 0:
        raise ValueError("sigma and target must be positive")
    if law.is_point_mass:
        raise WeightDomainError("a point mass has a single weight")

    def gap(log_w):
        return math.log(sigma * float(h_of_w(law, spec.a, math.exp(log_w)))) - math.log(target)

    guess = math.log(target / (sigma * moment(law, spec.a)))
    lo, hi = guess - 1.0, guess + 1.0
    while gap(lo) > 0:
        lo -= 2.0
    while gap(hi) < 0:
        hi += 2.0
    return math.exp(optimize.brentq(gap, lo, hi, xtol=1e-14, rtol=1e-14))
