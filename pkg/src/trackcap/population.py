"""User population sampling: Poisson counts, uniform-in-disk placement.

The cell is one disk centered at the ground origin; hotspots are smaller
disks laid on top of it.  Each region is an independent homogeneous Poisson
point process, so regular users superpose with hotspot users (a regular
user may well land inside a hotspot disk).

A sampled ensemble (one ``RealizationBatch``) is frozen after creation and
reused for every candidate rotation choice, making every capacity estimate
a deterministic function of the rotation decision (common random numbers).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import UserAngles, user_angle_arrays
from .seeding import BATCH_STREAM, substream


@dataclass(frozen=True)
class DiskRegion:
    """A disk of users: center at azimuth ``psi`` / distance ``d`` from the
    origin, radius ``r``, Poisson density ``density`` per square meter."""

    psi: float
    d: float
    r: float
    density: float = 0.0

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("region radius must be positive")
        if self.density < 0:
            raise ValueError("density must be >= 0")

    @property
    def center(self) -> tuple[float, float]:
        return (self.d * math.cos(self.psi), self.d * math.sin(self.psi))

    @property
    def expected_count(self) -> float:
        return self.density * math.pi * self.r**2


@dataclass(eq=False)
class UserRealization:
    """One sampled set of user ground positions with derived arrival angles.

    ``positions`` is a read-only (K, 2) array; ``thetas``/``phis``/``dists``
    are the matching arrival angles at the track center.
    """

    positions: np.ndarray
    thetas: np.ndarray = field(repr=False)
    phis: np.ndarray = field(repr=False)
    dists: np.ndarray = field(repr=False)

    @classmethod
    def from_positions(cls, positions: np.ndarray, ref_height: float):
        positions = np.array(positions, dtype=float).reshape(-1, 2)
        positions.setflags(write=False)
        if positions.shape[0]:
            thetas, phis, dists = user_angle_arrays(positions, ref_height)
        else:
            thetas = phis = dists = np.zeros(0)
        for arr in (thetas, phis, dists):
            arr.setflags(write=False)
        return cls(positions=positions, thetas=thetas, phis=phis, dists=dists)

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    def iter_angles(self):
        """Yield one UserAngles per user."""
        for theta, phi, d in zip(self.thetas, self.phis, self.dists):
            yield UserAngles(theta=theta, phi=phi, d=d)


@dataclass(eq=False)
class RealizationBatch:
    """A fixed Monte-Carlo ensemble of user realizations.

    Regenerating with the same seed reproduces positions bit-identically.
    Identity (not content) keys capacity memoization, so treat instances as
    immutable.
    """

    realizations: tuple
    seed: int
    ref_height: float

    def __len__(self) -> int:
        return len(self.realizations)


def densities_from_targets(k_bar, hotspot_ratio, hotspot_fraction, regions):
    """Fill region densities from an expected-total-user budget.

    The hotspots share ``hotspot_fraction * k_bar`` expected users in the
    proportions of ``hotspot_ratio``; the remaining expected users spread
    uniformly over the whole cell (the first region).  Returns a new tuple
    of regions with densities set.
    """
    cell, hotspots = regions[0], regions[1:]
    if len(hotspot_ratio) != len(hotspots):
        raise ConfigError(
            f"hotspot_ratio: got {len(hotspot_ratio)} entries for {len(hotspots)} hotspots"
        )
    if any(w <= 0 for w in hotspot_ratio):
        raise ConfigError("hotspot_ratio: entries must be positive")
    if not 0 <= hotspot_fraction <= 1:
        raise ConfigError("hotspot_fraction: must lie in [0, 1]")
    if k_bar < 0:
        raise ConfigError("k_bar: must be >= 0")

    total_ratio = float(sum(hotspot_ratio))
    out = [
        DiskRegion(
            psi=cell.psi, d=cell.d, r=cell.r,
            density=(1.0 - hotspot_fraction) * k_bar / (math.pi * cell.r**2),
        )
    ]
    for w, region in zip(hotspot_ratio, hotspots):
        expected = hotspot_fraction * k_bar * w / total_ratio
        out.append(
            DiskRegion(
                psi=region.psi, d=region.d, r=region.r,
                density=expected / (math.pi * region.r**2),
            )
        )
    return tuple(out)


def _uniform_in_disk(region: DiskRegion, n: int, rng: np.random.Generator) -> np.ndarray:
    cx, cy = region.center
    radii = region.r * np.sqrt(rng.random(n))
    angles = 2.0 * np.pi * rng.random(n)
    pts = np.column_stack((cx + radii * np.cos(angles), cy + radii * np.sin(angles)))
    # exact origin has undefined azimuth; redraw (probability-zero event)
    while True:
        bad = np.flatnonzero((pts[:, 0] == 0.0) & (pts[:, 1] == 0.0))
        if bad.size == 0:
            return pts
        radii = region.r * np.sqrt(rng.random(bad.size))
        angles = 2.0 * np.pi * rng.random(bad.size)
        pts[bad, 0] = cx + radii * np.cos(angles)
        pts[bad, 1] = cy + radii * np.sin(angles)


def sample_realization(regions, rng: np.random.Generator, ref_height: float) -> UserRealization:
    """Draw one realization: Poisson count then uniform placement per region."""
    chunks = []
    for region in regions:
        n = rng.poisson(region.expected_count)
        if n:
            chunks.append(_uniform_in_disk(region, n, rng))
    positions = np.vstack(chunks) if chunks else np.zeros((0, 2))
    return UserRealization.from_positions(positions, ref_height)


def generate_batch(regions, upsilon: int, seed: int, ref_height: float) -> RealizationBatch:
    """Sample ``upsilon`` independent realizations from the batch sub-stream
    of ``seed``; deterministic for a fixed seed."""
    if upsilon < 1:
        raise ValueError("batch size must be >= 1")
    rng = substream(seed, BATCH_STREAM)
    realizations = tuple(
        sample_realization(regions, rng, ref_height) for _ in range(upsilon)
    )
    return RealizationBatch(realizations=realizations, seed=seed, ref_height=ref_height)


def save_batch(batch: RealizationBatch, path, scenario_hash: str = "") -> None:
    """Persist a batch to ``path`` (.npz); positions round-trip bit-exactly."""
    counts = np.array([r.count for r in batch.realizations], dtype=np.int64)
    stacked = (
        np.vstack([r.positions for r in batch.realizations])
        if counts.sum() else np.zeros((0, 2))
    )
    np.savez(
        path,
        counts=counts,
        positions=stacked,
        seed=np.int64(batch.seed),
        ref_height=float(batch.ref_height),
        scenario_hash=np.str_(scenario_hash),
    )


def load_batch(path, expected_hash: str | None = None) -> RealizationBatch:
    """Reload a persisted batch; optionally verify its scenario hash."""
    with np.load(path) as data:
        stored_hash = str(data["scenario_hash"])
        if expected_hash is not None and stored_hash != expected_hash:
            raise ConfigError(
                f"batch file {path}: scenario hash {stored_hash!r} != expected {expected_hash!r}"
            )
        counts = data["counts"]
        positions = data["positions"]
        ref_height = float(data["ref_height"])
        seed = int(data["seed"])
    realizations = []
    offset = 0
    for n in counts:
        realizations.append(
            UserRealization.from_positions(positions[offset:offset + n], ref_height)
        )
        offset += n
    return RealizationBatch(
        realizations=tuple(realizations), seed=seed, ref_height=ref_height
    )
