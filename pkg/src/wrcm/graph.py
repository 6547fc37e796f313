"""Degree tables of the weighted random connection model via cell lists.

Pairs farther apart than the truncation radius ``R`` are never joined; pairs
within ``R`` get an exact Bernoulli decision from the pair-keyed Philox hash.
Two sweeps share the same coins:

* :func:`build_degrees` enumerates every pair once (half stencil) and returns
  full degrees of all window points;
* :func:`count_degrees_capped` scans candidates of selected query points in
  order of increasing cell distance and stops once a degree exceeds ``cap``.
  It returns ``min(deg, cap + 1)`` and is what the replication loops use.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numba
import numpy as np

from .connection import ConnectionSpec, Profile, phi, planted_truncation_radius, unit_ball_volume
from .sampler import Purpose, SeedSpec, derive_stream, edge_key, pair_uniform, pair_uniforms
from .weights import WeightLaw, sample as sample_weights

__all__ = [
    "GraphConfigError",
    "CellGrid",
    "DegreeTable",
    "DegreeKProcess",
    "PlantedResult",
    "build_degrees",
    "count_degrees_capped",
    "extract_degree_k",
    "degree_k_count",
    "planted_degree_experiment",
]

MAX_CELLS_PER_POINT = 4


class GraphConfigError(ValueError):
    """Truncation radius and window padding are inconsistent."""


@dataclass
class CellGrid:
    """Points bucketed into cubic cells of side ``cell_size >= R / subdivisions``.

    ``order[starts[c]:starts[c+1]]`` lists the points of linear cell ``c``.
    ``reach`` is the stencil half-width in cells needed to cover radius ``R``.
    """

    origin: float
    cell_size: float
    shape: np.ndarray
    order: np.ndarray
    starts: np.ndarray
    reach: int
    radius: float

    @classmethod
    def build(cls, positions: np.ndarray, origin: float, side: float, R: float, subdivisions: int = 1):
        n, d = positions.shape
        target = R / subdivisions if R > 0 else side
        per_dim = max(1, int(side / target))
        cap = max(1, int((MAX_CELLS_PER_POINT * max(n, 1)) ** (1.0 / d)))
        per_dim = min(per_dim, cap)
        cell_size = side / per_dim
        shape = np.full(d, per_dim, dtype=np.int64)
        coords = np.clip(((positions - origin) / cell_size).astype(np.int64), 0, per_dim - 1)
        linear = np.ravel_multi_index(coords.T, tuple(shape)) if n else np.zeros(0, np.int64)
        order = np.argsort(linear, kind="stable")
        counts = np.bincount(linear, minlength=per_dim**d)
        starts = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        reach = max(1, math.ceil(R / cell_size - 1e-12)) if R > 0 else 0
        return cls(origin, cell_size, shape, order.astype(np.int64), starts, reach, R)

    def offsets(self, half: bool) -> np.ndarray:
        """Stencil offsets; ``half`` keeps the lexicographically positive ones."""
        d = len(self.shape)
        r = range(-self.reach, self.reach + 1)
        offs = np.array(list(itertools.product(r, repeat=d)), dtype=np.int64).reshape(-1, d)
        if half:
            keep = [tuple(o) > (0,) * d for o in offs]
            return offs[np.array(keep, dtype=bool)]
        # nearest cells first; drop cells entirely beyond R
        gap = np.maximum(np.abs(offs) - 1, 0) * self.cell_size
        min_dist2 = (gap**2).sum(axis=1)
        offs = offs[np.argsort(min_dist2, kind="stable")]
        min_dist2 = np.sort(min_dist2, kind="stable")
        return offs[min_dist2 <= self.radius**2]


@dataclass
class DegreeTable:
    degrees: np.ndarray
    edge_count: int
    truncation: tuple[float, float | None]

    def __post_init__(self):
        if int(self.degrees.sum()) != 2 * self.edge_count:
            raise AssertionError("handshake identity violated")


@dataclass
class DegreeKProcess:
    k: int
    locations: np.ndarray
    weights: np.ndarray

    @property
    def D(self) -> int:
        return len(self.weights)

    def to_csv(self, path_or_buf) -> None:
        d = self.locations.shape[1] if self.locations.ndim == 2 else 1
        header = ",".join([f"x{i + 1}" for i in range(d)] + ["weight"])
        data = np.column_stack([self.locations.reshape(len(self.weights), d), self.weights])
        np.savetxt(path_or_buf, data, delimiter=",", header=header, comments="", fmt="%.17g")


# ---------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True, nogil=True, inline="always")
def _edge_prob(dist2, wi, wj, a, alpha, profile, c_plateau, nu_v, d):
    lo = min(wi, wj)
    hi = max(wi, wj)
    kap = lo * hi**a
    arg = dist2 ** (0.5 * d) / (nu_v * kap)
    if profile == 0:
        if arg <= 0.0:
            return 1.0
        return min(1.0, c_plateau * arg ** (-alpha))
    return (alpha - 1.0) * (1.0 + arg) ** (-alpha)


@numba.njit(cache=True, nogil=True)
def _cell_of(coord, shape):
    lin = 0
    for t in range(len(shape)):
        lin = lin * shape[t] + coord[t]
    return lin


@numba.njit(cache=True, nogil=True)
def _sweep_all(pos, w, ids, order, starts, shape, offsets, R2,
               a, alpha, profile, c_plateau, nu_v, key):
    n, d = pos.shape
    deg = np.zeros(n, dtype=np.int32)
    coord = np.empty(d, dtype=np.int64)
    ncoord = np.empty(d, dtype=np.int64)
    edges = 0
    ncells = len(starts) - 1
    for c in range(ncells):
        if starts[c] == starts[c + 1]:
            continue
        rem = c
        for t in range(d - 1, -1, -1):
            coord[t] = rem % shape[t]
            rem //= shape[t]
        # own cell: pairs i < j
        for pi in range(starts[c], starts[c + 1]):
            i = order[pi]
            for pj in range(pi + 1, starts[c + 1]):
                j = order[pj]
                dist2 = 0.0
                for t in range(d):
                    diff = pos[i, t] - pos[j, t]
                    dist2 += diff * diff
                if dist2 > R2:
                    continue
                p = _edge_prob(dist2, w[i], w[j], a, alpha, profile, c_plateau, nu_v, d)
                if p >= 1.0 or pair_uniform(key, ids[i], ids[j]) < p:
                    deg[i] += 1
                    deg[j] += 1
                    edges += 1
        for o in range(offsets.shape[0]):
            inside = True
            for t in range(d):
                ncoord[t] = coord[t] + offsets[o, t]
                if ncoord[t] < 0 or ncoord[t] >= shape[t]:
                    inside = False
            if not inside:
                continue
            nc = _cell_of(ncoord, shape)
            for pi in range(starts[c], starts[c + 1]):
                i = order[pi]
                for pj in range(starts[nc], starts[nc + 1]):
                    j = order[pj]
                    dist2 = 0.0
                    for t in range(d):
                        diff = pos[i, t] - pos[j, t]
                        dist2 += diff * diff
                    if dist2 > R2:
                        continue
                    p = _edge_prob(dist2, w[i], w[j], a, alpha, profile, c_plateau, nu_v, d)
                    if p >= 1.0 or pair_uniform(key, ids[i], ids[j]) < p:
                        deg[i] += 1
                        deg[j] += 1
                        edges += 1
    return deg, edges


@numba.njit(cache=True, nogil=True)
def _sweep_capped(queries, pos, w, ids, order, starts, shape, origin, cell_size,
                  offsets, R2, a, alpha, profile, c_plateau, nu_v, key, cap):
    n, d = pos.shape
    out = np.zeros(len(queries), dtype=np.int32)
    coord = np.empty(d, dtype=np.int64)
    ncoord = np.empty(d, dtype=np.int64)
    for q in range(len(queries)):
        i = queries[q]
        for t in range(d):
            ct = np.int64((pos[i, t] - origin) / cell_size)
            coord[t] = min(max(ct, 0), shape[t] - 1)
        deg = 0
        for o in range(offsets.shape[0]):
            inside = True
            for t in range(d):
                ncoord[t] = coord[t] + offsets[o, t]
                if ncoord[t] < 0 or ncoord[t] >= shape[t]:
                    inside = False
            if not inside:
                continue
            nc = _cell_of(ncoord, shape)
            for pj in range(starts[nc], starts[nc + 1]):
                j = order[pj]
                if j == i:
                    continue
                dist2 = 0.0
                for t in range(d):
                    diff = pos[i, t] - pos[j, t]
                    dist2 += diff * diff
                if dist2 > R2:
                    continue
                p = _edge_prob(dist2, w[i], w[j], a, alpha, profile, c_plateau, nu_v, d)
                if p >= 1.0 or pair_uniform(key, ids[i], ids[j]) < p:
                    deg += 1
                    if deg > cap:
                        break
            if deg > cap:
                break
        out[q] = deg
    return out


def _kernel_params(spec: ConnectionSpec, v_s: float, d: int):
    profile = 0 if spec.profile is Profile.TRUNCATED_PARETO else 1
    return (float(spec.a), float(spec.alpha), profile, float(spec.plateau_constant),
            float(v_s) / unit_ball_volume(d))


def _check_radius(cloud, R: float):
    if R > cloud.pad * (1 + 1e-12):
        raise GraphConfigError(
            f"truncation radius {R:.6g} exceeds window padding {cloud.pad:.6g}; "
            "edges into the unsampled exterior would be silently lost"
        )


def build_degrees(cloud, spec: ConnectionSpec, v_s: float, R: float, eps: float | None = None,
                  key: int | None = None, subdivisions: int = 1) -> DegreeTable:
    """Degrees of all window points in the graph truncated at radius ``R``."""
    _check_radius(cloud, R)
    key = cloud.edge_key if key is None else key
    side = 1.0 + 2.0 * cloud.pad
    grid = CellGrid.build(cloud.positions, -cloud.pad, side, R, subdivisions)
    deg, edges = _sweep_all(
        cloud.positions, cloud.weights, cloud.ids, grid.order, grid.starts, grid.shape,
        grid.offsets(half=True), R * R, *_kernel_params(spec, v_s, cloud.d), np.uint64(key),
    )
    return DegreeTable(deg, int(edges), (R, eps))


MAX_STENCIL = 10**6


def _auto_subdivisions(n: int, side: float, R: float, d: int) -> int:
    # cells holding about two points: the early exit then rarely scans far
    # beyond the true connection scale, which is often much shorter than R
    if n == 0 or R <= 0:
        return 1
    target = (2.0 * side**d / n) ** (1.0 / d)
    sub = max(1, math.ceil(R / target))
    max_sub = int((MAX_STENCIL ** (1.0 / d) - 1) / 2)
    return max(1, min(sub, max_sub))


def count_degrees_capped(cloud, spec: ConnectionSpec, v_s: float, R: float, cap: int,
                         queries=None, key: int | None = None, subdivisions: int | None = None) -> np.ndarray:
    """``min(deg, cap + 1)`` for the query points (default: those in the unit cube).

    Neighbour cells are visited nearest first and the scan of a point stops
    once its degree exceeds ``cap``.
    """
    _check_radius(cloud, R)
    key = cloud.edge_key if key is None else key
    if queries is None:
        queries = np.flatnonzero(cloud.in_cube())
    queries = np.asarray(queries, dtype=np.int64)
    side = 1.0 + 2.0 * cloud.pad
    if subdivisions is None:
        subdivisions = _auto_subdivisions(len(cloud), side, R, cloud.d)
    grid = CellGrid.build(cloud.positions, -cloud.pad, side, R, subdivisions)
    return _sweep_capped(
        queries, cloud.positions, cloud.weights, cloud.ids, grid.order, grid.starts, grid.shape,
        float(grid.origin), float(grid.cell_size), grid.offsets(half=False), R * R,
        *_kernel_params(spec, v_s, cloud.d), np.uint64(key), int(cap),
    )


def extract_degree_k(cloud, table: DegreeTable, k: int) -> DegreeKProcess:
    """Points of the closed unit cube with degree exactly ``k``."""
    sel = cloud.in_cube() & (table.degrees == k)
    return DegreeKProcess(k, cloud.positions[sel], cloud.weights[sel])


def degree_k_count(cloud, spec, v_s, R, k) -> DegreeKProcess:
    """Same result as ``extract_degree_k(cloud, build_degrees(...), k)`` via the capped sweep."""
    queries = np.flatnonzero(cloud.in_cube())
    deg = count_degrees_capped(cloud, spec, v_s, R, cap=k, queries=queries)
    sel = queries[deg == k]
    return DegreeKProcess(k, cloud.positions[sel], cloud.weights[sel])


# ---------------------------------------------------------------------------


@dataclass
class PlantedResult:
    w_planted: float
    R: float
    degrees: np.ndarray
    out_degrees: np.ndarray


def planted_degree_experiment(law: WeightLaw, spec: ConnectionSpec, s: float, v_s: float,
                              w_planted: float, reps: int, d: int, seed: SeedSpec,
                              R: float | None = None, eps: float = 1e-3) -> PlantedResult:
    """Degrees of a point of weight ``w_planted`` planted at the origin.

    The ambient process is sampled in the ball of radius ``R`` (default: the
    planted truncation radius for budget ``eps``). Out-degree counts only
    neighbours of weight ``>= w_planted``.
    """
    if not w_planted > 0:
        raise ValueError("planted weight must be positive")
    if reps < 1:
        raise ValueError("need at least one replication")
    if R is None:
        R = planted_truncation_radius(spec, law, s, v_s, w_planted, eps, d)
    nu = unit_ball_volume(d)
    mean = s * nu * R**d
    degrees = np.empty(reps, dtype=np.int64)
    out_degrees = np.empty(reps, dtype=np.int64)
    for r in range(reps):
        rep_seed = SeedSpec(seed.master_seed, seed.replication_index * reps + r)
        pos_stream = derive_stream(rep_seed.with_purpose(Purpose.POSITIONS))
        n = int(pos_stream.poisson(mean))
        # only |x| enters the connection probability; |x| = R U^(1/d) in the ball
        dist = R * pos_stream.random(n) ** (1.0 / d)
        wts = sample_weights(law, derive_stream(rep_seed.with_purpose(Purpose.WEIGHTS)), n)
        kap = np.minimum(wts, w_planted) * np.maximum(wts, w_planted) ** spec.a
        arg = nu * dist**d / (v_s * kap)
        p = phi(spec, arg)
        u = pair_uniforms(edge_key(rep_seed), np.zeros(n, np.uint64), np.arange(1, n + 1, dtype=np.uint64))
        hit = u < p
        degrees[r] = hit.sum()
        out_degrees[r] = (hit & (wts >= w_planted)).sum()
    return PlantedResult(float(w_planted), float(R), degrees, out_degrees)
