"""Reproducible sampling of the marked Poisson process on a padded window.

Streams are derived from ``(master_seed, replication_index, purpose_tag)``
through :class:`numpy.random.SeedSequence` and drive a Philox generator.
Edge coins are not drawn from a sequential stream: each unordered pair of
point ids is hashed with Philox-4x32-10 under the edge key, so the decision
for a pair does not depend on enumeration order or thread schedule.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .weights import WeightLaw, sample as sample_weights

__all__ = [
    "Purpose",
    "SeedSpec",
    "PointCloud",
    "CapacityError",
    "derive_stream",
    "edge_key",
    "philox4x32",
    "pair_uniforms",
    "sample_ppp",
    "DEFAULT_POINT_CAP",
]

DEFAULT_POINT_CAP = 10**8


class CapacityError(MemoryError):
    """Expected number of points exceeds the configured cap."""


class Purpose(enum.IntEnum):
    POSITIONS = 0
    WEIGHTS = 1
    EDGES = 2


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    replication_index: int = 0
    purpose_tag: Purpose = Purpose.POSITIONS

    def with_purpose(self, purpose: Purpose) -> "SeedSpec":
        return SeedSpec(self.master_seed, self.replication_index, Purpose(purpose))

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=self.master_seed % 2**64,
            spawn_key=(self.replication_index, int(self.purpose_tag)),
        )


def derive_stream(seed: SeedSpec) -> np.random.Generator:
    """Counter-based Philox stream keyed by the hashed seed triple."""
    return np.random.Generator(np.random.Philox(seed.seed_sequence()))


def edge_key(seed: SeedSpec) -> int:
    """64-bit Philox key for pair-keyed edge decisions."""
    return int(seed.with_purpose(Purpose.EDGES).seed_sequence().generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# Philox-4x32-10 (Salmon et al. 2011), scalar kernel shared with graph sweeps

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)


@numba.njit(cache=True, nogil=True)
def _philox_block(c0, c1, c2, c3, k0, k1):
    mask = np.uint64(0xFFFFFFFF)
    for _ in range(10):
        p0 = np.uint64(0xD2511F53) * c0
        p1 = np.uint64(0xCD9E8D57) * c2
        hi0 = p0 >> np.uint64(32)
        lo0 = p0 & mask
        hi1 = p1 >> np.uint64(32)
        lo1 = p1 & mask
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = (k0 + np.uint64(0x9E3779B9)) & mask
        k1 = (k1 + np.uint64(0xBB67AE85)) & mask
    return c0, c1, c2, c3


@numba.njit(cache=True, nogil=True)
def pair_uniform(key, id_a, id_b):
    """Uniform on (0, 1) for the unordered pair ``{id_a, id_b}``."""
    mask = np.uint64(0xFFFFFFFF)
    lo = min(id_a, id_b)
    hi = max(id_a, id_b)
    r0, r1, _, _ = _philox_block(
        lo & mask, lo >> np.uint64(32), hi & mask, hi >> np.uint64(32),
        key & mask, key >> np.uint64(32),
    )
    bits = ((r0 << np.uint64(32)) | r1) >> np.uint64(11)
    return (np.float64(bits) + 0.5) * 2.0**-53


def philox4x32(counter, key) -> tuple[int, int, int, int]:
    """Reference Philox-4x32-10 block in pure numpy uint64 arithmetic.

    ``counter`` is four 32-bit words, ``key`` two 32-bit words.
    """
    c = [np.uint64(x) for x in counter]
    k0, k1 = np.uint64(key[0]), np.uint64(key[1])
    for _ in range(10):
        p0 = _M0 * c[0]
        p1 = _M1 * c[2]
        c = [(p1 >> np.uint64(32)) ^ c[1] ^ k0, p1 & _MASK, (p0 >> np.uint64(32)) ^ c[3] ^ k1, p0 & _MASK]
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    return tuple(int(x) for x in c)


def pair_uniforms(key: int, ids_a, ids_b) -> np.ndarray:
    """Vectorised numpy twin of the pair hash used inside the graph sweeps."""
    ids_a = np.asarray(ids_a, dtype=np.uint64)
    ids_b = np.asarray(ids_b, dtype=np.uint64)
    lo = np.minimum(ids_a, ids_b)
    hi = np.maximum(ids_a, ids_b)
    k0 = np.uint64(key) & _MASK
    k1 = np.uint64(key) >> np.uint64(32)
    c0, c1, c2, c3 = lo & _MASK, lo >> np.uint64(32), hi & _MASK, hi >> np.uint64(32)
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (p1 >> np.uint64(32)) ^ c1 ^ k0, p1 & _MASK, (p0 >> np.uint64(32)) ^ c3 ^ k1, p0 & _MASK
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    bits = ((c0 << np.uint64(32)) | c1) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


# ---------------------------------------------------------------------------


@dataclass
class PointCloud:
    """Marked Poisson sample on the window ``[-pad, 1 + pad]^d``.

    ``ids`` label points for pair-keyed edge coins; they travel with the
    points, so reordering the arrays leaves every edge decision unchanged.
    """

    d: int
    pad: float
    s: float
    positions: np.ndarray
    weights: np.ndarray
    ids: np.ndarray
    seed: SeedSpec | None = None
    edge_key: int = field(default=0)

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def window_volume(self) -> float:
        return (1.0 + 2.0 * self.pad) ** self.d

    def in_cube(self) -> np.ndarray:
        return np.all((self.positions >= 0.0) & (self.positions <= 1.0), axis=1)

    def permuted(self, order) -> "PointCloud":
        order = np.asarray(order)
        return PointCloud(
            self.d, self.pad, self.s, self.positions[order], self.weights[order],
            self.ids[order], self.seed, self.edge_key,
        )

    def to_csv(self, path_or_buf, mask=None) -> None:
        cols = [f"x{i + 1}" for i in range(self.d)] + ["weight"]
        sel = slice(None) if mask is None else mask
        data = np.column_stack([self.positions[sel], self.weights[sel]])
        header = ",".join(cols)
        np.savetxt(path_or_buf, data, delimiter=",", header=header, comments="", fmt="%.17g")


def sample_ppp(
    law: WeightLaw,
    s: float,
    d: int,
    pad: float,
    seed: SeedSpec,
    point_cap: int = DEFAULT_POINT_CAP,
) -> PointCloud:
    """Sample a homogeneous PPP of intensity ``s`` on the padded window with iid weights.

    Positions and the point count come from the ``POSITIONS`` stream of
    ``seed``, weights from its ``WEIGHTS`` stream.
    """
    if not s > 0:
        raise ValueError("intensity must be positive")
    if pad < 0:
        raise ValueError("pad must be non-negative")
    side = 1.0 + 2.0 * pad
    mean = s * side**d
    if mean > point_cap:
        raise CapacityError(f"expected {mean:.3g} points exceeds the cap of {point_cap:.3g}")
    pos_stream = derive_stream(seed.with_purpose(Purpose.POSITIONS))
    n = int(pos_stream.poisson(mean))
    positions = pos_stream.random((n, d)) * side - pad
    weights = sample_weights(law, derive_stream(seed.with_purpose(Purpose.WEIGHTS)), n)
    return PointCloud(
        d=d, pad=pad, s=s, positions=positions, weights=weights,
        ids=np.arange(n, dtype=np.uint64), seed=seed, edge_key=edge_key(seed),
    )


def expected_points(s: float, d: int, pad: float) -> float:
    return s * (1.0 + 2.0 * pad) ** d


def ball_volume_radius(volume: float, d: int) -> float:
    """Radius of the centred ball of the given volume."""
    return (volume * math.gamma(d / 2.0 + 1.0) / math.pi ** (d / 2.0)) ** (1.0 / d)
