"""Kernel, profile function and finite-range truncation budgets.

A pair of marked points ``(x, w_x)``, ``(y, w_y)`` is joined with probability

    phi(|B_{|x-y|}| / (v_s * kappa(w_x, w_y)))

where ``kappa(w1, w2) = min(w1, w2) * max(w1, w2)**a`` and ``phi`` is a
nonincreasing profile with unit integral.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .weights import WeightLaw, expectation_nodes

__all__ = [
    "Profile",
    "ConnectionSpec",
    "ConnectionSpecError",
    "kappa",
    "phi",
    "phi_tail",
    "unit_ball_volume",
    "pair_probability",
    "missed_degree",
    "expected_missed_edges",
    "truncation_radius",
    "planted_truncation_radius",
    "degree_flip_bound",
    "degree_k_truncation_radius",
]

MIN_RADIUS = 1e-9


class ConnectionSpecError(ValueError):
    """Invalid connection-function parameters or arguments."""


class Profile(str, enum.Enum):
    TRUNCATED_PARETO = "truncated_pareto"
    SMOOTH_PARETO = "smooth_pareto"


@dataclass(frozen=True)
class ConnectionSpec:
    """Kernel exponent ``a >= 0``, profile tail index ``alpha > 1`` and family.

    ``TRUNCATED_PARETO``: ``phi(r) = min(1, c r^-alpha)``, ``c = ((alpha-1)/alpha)^alpha``.
    ``SMOOTH_PARETO``: ``phi(r) = (alpha-1) (1+r)^-alpha``, only for ``alpha <= 2``.
    """

    a: float
    alpha: float
    profile: Profile = Profile.TRUNCATED_PARETO
    normalization_error: float = field(default=0.0, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "profile", Profile(self.profile))
        if not (self.a >= 0 and math.isfinite(self.a)):
            raise ConnectionSpecError(f"kernel exponent a must be >= 0, got {self.a}")
        if not (self.alpha > 1 and math.isfinite(self.alpha)):
            raise ConnectionSpecError(f"profile tail index alpha must exceed 1, got {self.alpha}")
        if self.profile is Profile.SMOOTH_PARETO and self.alpha > 2:
            raise ConnectionSpecError(
                "smooth_pareto needs alpha <= 2: phi(0) = alpha - 1 would exceed 1"
            )
        err = abs(_profile_integral(self) - 1.0)
        if err > 1e-10:
            raise ConnectionSpecError(f"profile integral deviates from 1 by {err:.3g}")
        object.__setattr__(self, "normalization_error", err)

    @property
    def delta(self) -> float:
        return (self.alpha - 1.0) / 2.0

    @property
    def plateau_constant(self) -> float:
        return ((self.alpha - 1.0) / self.alpha) ** self.alpha

    @property
    def plateau_edge(self) -> float:
        """Largest argument with ``phi = 1`` (0 for the smooth family)."""
        if self.profile is Profile.TRUNCATED_PARETO:
            return (self.alpha - 1.0) / self.alpha
        return 0.0

    def to_dict(self) -> dict:
        return {"a": self.a, "alpha": self.alpha, "profile": self.profile.value}


def _profile_integral(spec: ConnectionSpec) -> float:
    # log-radius substitution turns the algebraic tail into an exponential one
    def integrand(y):
        r = math.exp(y)
        return float(phi(spec, r)) * r

    edge = math.log(spec.plateau_edge) if spec.plateau_edge > 0 else 0.0
    head = integrate.quad(integrand, -700.0, edge, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    body = integrate.quad(integrand, edge, edge + 40.0, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    # remainder beyond r_max in closed form: the tail there is an exact power law
    r_max = math.exp(edge + 40.0)
    rest = float(phi_tail(spec, r_max))
    return head + body + rest


def kappa(spec: ConnectionSpec, w1, w2):
    """Preferential-attachment kernel ``min * max**a``."""
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    return (np.minimum(w1, w2) * np.maximum(w1, w2) ** spec.a)[()]


def phi(spec: ConnectionSpec, r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ConnectionSpecError("profile argument must be non-negative")
    with np.errstate(divide="ignore", over="ignore"):
        if spec.profile is Profile.TRUNCATED_PARETO:
            out = np.minimum(1.0, spec.plateau_constant * r ** (-spec.alpha))
        else:
            out = (spec.alpha - 1.0) * (1.0 + r) ** (-spec.alpha)
    return out[()]


def phi_tail(spec: ConnectionSpec, t):
    """``int_t^inf phi(u) du`` in closed form."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ConnectionSpecError("tail integral needs t >= 0")
    if spec.profile is Profile.SMOOTH_PARETO:
        return ((1.0 + t) ** (1.0 - spec.alpha))[()]
    r0 = spec.plateau_edge
    with np.errstate(divide="ignore", over="ignore"):
        power = spec.plateau_constant * np.maximum(t, r0) ** (1.0 - spec.alpha) / (spec.alpha - 1.0)
    return np.where(t <= r0, 1.0 - t, power)[()]


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def pair_probability(spec: ConnectionSpec, v_s: float, x, wx, y, wy, d: int | None = None):
    """Edge probability of two marked points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if d is None:
        d = x.shape[-1]
    dist = np.sqrt(np.sum((x - y) ** 2, axis=-1))
    if np.any(dist == 0):
        raise ConnectionSpecError("pair probability undefined for coincident points")
    volume = unit_ball_volume(d) * dist**d
    return phi(spec, volume / (v_s * kappa(spec, wx, wy)))


# ---------------------------------------------------------------------------
# truncation budgets


def _missed_kernel(spec: ConnectionSpec, v_s, t_vol, kap):
    # kappa * tail(t_vol / (v_s * kappa)); t_vol is the excluded ball volume
    return kap * phi_tail(spec, t_vol / (v_s * kap))


def _tail_decay(spec: ConnectionSpec, law: WeightLaw) -> float:
    if law.is_point_mass:
        return 1.0
    return max(1.0 - spec.a * spec.alpha / law.beta, 1e-3)


def missed_degree(spec, law, s, v_s, R, d, w=None, *, out_only=False, nodes=None):
    """Expected number of neighbours at distance > R.

    With ``w`` given this is for a point of weight ``w`` (vectorised over
    ``w``); otherwise it is averaged over a typical weight. ``out_only``
    keeps only neighbours of weight ``>= w``.
    """
    t_vol = unit_ball_volume(d) * R**d
    if nodes is None:
        nodes = expectation_nodes(law, tail_decay=_tail_decay(spec, law))
    wn, pn = nodes
    if w is None:
        kap = kappa(spec, wn[:, None], wn[None, :])
        vals = _missed_kernel(spec, v_s, t_vol, kap)
        return float(s * v_s * (pn[:, None] * pn[None, :] * vals).sum())
    w = np.asarray(w, dtype=float)
    kap = kappa(spec, w[..., None], wn)
    vals = _missed_kernel(spec, v_s, t_vol, kap)
    if out_only:
        vals = np.where(wn >= w[..., None], vals, 0.0)
    return (s * v_s * (vals * pn).sum(axis=-1))[()]


def expected_missed_edges(spec, law, s, v_s, R, d, nodes=None) -> float:
    """Upper bound on the expected number of edges of length > R touching the unit cube."""
    return s * missed_degree(spec, law, s, v_s, R, d, nodes=nodes)


def _bisect_radius(budget, eps, r_floor=MIN_RADIUS, rel_tol=1e-6):
    """Smallest radius on a log-bisection with ``budget(R) <= eps``."""
    if budget(r_floor) <= eps:
        return r_floor
    hi = max(r_floor * 2.0, 1e-3)
    while budget(hi) > eps:
        hi *= 2.0
        if hi > 1e12:
            raise ConnectionSpecError("truncation budget unreachable with finite radius")
    lo = hi / 2.0 if hi > max(r_floor * 2.0, 1e-3) else r_floor
    while hi / lo - 1.0 > rel_tol:
        mid = math.sqrt(lo * hi)
        if budget(mid) <= eps:
            hi = mid
        else:
            lo = mid
    return hi


def truncation_radius(spec, law, s, v_s, eps, d) -> float:
    """Radius R whose dropped edges touching the unit cube have expected count <= eps."""
    if not eps > 0:
        raise ConnectionSpecError("eps must be positive")
    nodes = expectation_nodes(law, tail_decay=_tail_decay(spec, law))
    return _bisect_radius(lambda R: expected_missed_edges(spec, law, s, v_s, R, d, nodes), eps)


def planted_truncation_radius(spec, law, s, v_s, w, eps, d) -> float:
    """Radius R with expected number of neighbours beyond R of a weight-``w`` point <= eps."""
    nodes = expectation_nodes(law, tail_decay=_tail_decay(spec, law))
    return _bisect_radius(lambda R: missed_degree(spec, law, s, v_s, R, d, w, nodes=nodes), eps)


def degree_flip_bound(spec, law, s, v_s, R, k, d, nodes=None) -> float:
    """Bound on the expected number of unit-cube points whose degree-k status
    differs between the graph truncated at R and the full graph.

    Given its weight, a point has independent Poisson near and far degrees
    with means ``lam - m`` and ``m``. It is miscounted only if it has a far
    neighbour and its near degree or its full degree equals ``k``.
    """
    from .weights import h_of_w

    if nodes is None:
        nodes = expectation_nodes(law, tail_decay=_tail_decay(spec, law))
    wn, pn = nodes
    sigma = s * v_s
    lam = sigma * h_of_w(law, spec.a, wn)
    m = np.minimum(missed_degree(spec, law, s, v_s, R, d, wn, nodes=nodes), lam)
    near = lam - m
    pk_near = np.exp(k * np.log(np.maximum(near, 1e-300)) - near - special.gammaln(k + 1))
    if k == 0:
        pk_near = np.exp(-near)
    pk_full = np.exp(k * np.log(lam) - lam - special.gammaln(k + 1))
    # P(far >= 1, near = k) + P(far >= 1, near + far = k)
    flips = -np.expm1(-m) * pk_near + (pk_full - np.exp(-m) * pk_near)
    return float(s * (pn * np.maximum(flips, 0.0)).sum())


def degree_k_truncation_radius(spec, law, s, v_s, k, eps, d) -> float:
    """Radius R whose expected number of misclassified degree-k points is <= eps."""
    nodes = expectation_nodes(law, tail_decay=_tail_decay(spec, law))
    return _bisect_radius(lambda R: degree_flip_bound(spec, law, s, v_s, R, k, d, nodes), eps)
