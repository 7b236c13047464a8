"""Base-station geometry: arrival angles, track slots, and angle arithmetic.

Conventions used throughout the package:

* All angles are radians.  Degrees are converted away at the config boundary.
* Azimuth is measured from the +x axis, mapped into [0, 2*pi).
* Elevation theta is measured at the reference point (the track center, at
  height ``h2`` above the user plane) and lies in [pi/2, pi] for ground users.
* Track slots are 0-indexed in storage; slot ``l`` (0-based) carries the
  rotation angle ``(2*(l+1) - 1) * pi / L``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePositionError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class BsGeometry:
    """Physical layout of the antenna mast.

    ``r1``/``h1`` place the three fixed sector arrays; ``r2``/``h2`` place the
    circular track carrying the rotatable surfaces.  ``d_min`` is the minimum
    spacing between surface centers allowed on the track.
    """

    r1: float
    h1: float
    r2: float
    h2: float
    fpa_rotations: tuple[float, float, float]
    d_min: float

    def __post_init__(self):
        if self.r1 <= 0 or self.r2 <= 0:
            raise ValueError("ring radii r1, r2 must be positive")
        if not 0 < self.h1 < self.h2:
            raise ValueError("heights must satisfy 0 < h1 < h2")
        if self.d_min <= 0:
            raise ValueError("d_min must be positive")
        if len(self.fpa_rotations) != 3:
            raise ValueError("exactly three fixed sector rotations expected")
        for a in self.fpa_rotations:
            if not 0 <= a < TWO_PI:
                raise ValueError("sector rotations must lie in [0, 2*pi)")


@dataclass(frozen=True)
class UserAngles:
    """Arrival geometry of one user seen from the track center."""

    theta: float
    phi: float
    d: float

    def __post_init__(self):
        if not math.pi / 2 <= self.theta <= math.pi:
            raise ValueError(f"theta={self.theta} outside [pi/2, pi]")
        if not 0 <= self.phi < TWO_PI:
            raise ValueError(f"phi={self.phi} outside [0, 2*pi)")
        if self.d <= 0:
            raise ValueError("distance must be positive")


@dataclass(frozen=True)
class RotationGrid:
    """The L equally spaced candidate rotation angles on the track."""

    L: int
    angles: tuple[float, ...]

    def angle(self, slot: int) -> float:
        """Rotation angle of a 0-based slot index."""
        return self.angles[slot]


def candidate_rotations(L: int) -> RotationGrid:
    """Candidate rotation grid with angles (2l-1)*pi/L, l = 1..L.

    Angles are ascending, equally spaced by 2*pi/L, and all lie in (0, 2*pi).
    """
    if L < 1:
        raise ValueError("slot count L must be >= 1")
    angles = tuple((2 * l - 1) * math.pi / L for l in range(1, L + 1))
    return RotationGrid(L=L, angles=angles)


def check_track_capacity(L: int, r2: float, d_min: float) -> bool:
    """True iff L surface slots fit on the track without center overlap.

    The track circumference 2*pi*r2 must host L centers at spacing >= d_min,
    i.e. L <= floor(2*pi*r2 / d_min).
    """
    if r2 <= 0 or d_min <= 0:
        raise ValueError("r2 and d_min must be positive")
    return L <= math.floor(TWO_PI * r2 / d_min)


def azimuth_from_xy(x: float, y: float) -> float:
    """Azimuth of ground point (x, y) in [0, 2*pi).

    Quadrant handling follows the arctan branch map; points on the y-axis
    take the limit values pi/2 (y > 0) and 3*pi/2 (y < 0).
    """
    if x == 0.0 and y == 0.0:
        raise DegeneratePositionError("azimuth undefined at the origin")
    if x == 0.0:
        return math.pi / 2 if y > 0 else 3 * math.pi / 2
    if x > 0:
        phi = math.atan(y / x)
        return phi if y >= 0 else phi + TWO_PI
    return math.atan(y / x) + math.pi


def user_angles(x: float, y: float, geometry: BsGeometry) -> UserAngles:
    """Elevation, azimuth and distance of a ground user at (x, y, 0).

    The reference point is the track center at height ``geometry.h2``:
    theta = arctan(h2 / hypot(x, y)) + pi/2, d = sqrt(x^2 + y^2 + h2^2).
    """
    rho = math.hypot(x, y)
    if rho == 0.0:
        raise DegeneratePositionError("user at the origin has no azimuth")
    theta = math.atan(geometry.h2 / rho) + math.pi / 2
    phi = azimuth_from_xy(x, y)
    d = math.sqrt(x * x + y * y + geometry.h2 * geometry.h2)
    return UserAngles(theta=theta, phi=phi, d=d)


def user_angle_arrays(xy: np.ndarray, h2: float):
    """Vectorized (theta, phi, d) for an (K, 2) array of ground positions.

    Matches :func:`user_angles` elementwise; used when deriving angles for a
    whole sampled realization at once.
    """
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    x, y = xy[:, 0], xy[:, 1]
    rho = np.hypot(x, y)
    if np.any(rho == 0.0):
        raise DegeneratePositionError("user at the origin has no azimuth")
    theta = np.arctan(h2 / rho) + np.pi / 2
    phi = np.mod(np.arctan2(y, x), TWO_PI)
    d = np.sqrt(rho * rho + h2 * h2)
    return theta, phi, d


def wrap_angle_delta(a, b):
    """Signed shortest arc a - b, wrapped into (-pi, pi].

    Accepts scalars or arrays.  Satisfies wrap_angle_delta(a, b) + b == a
    (mod 2*pi); the antipodal case maps to +pi.
    """
    delta = np.mod(np.asarray(a, dtype=float) - b, TWO_PI)
    wrapped = np.where(delta > np.pi, delta - TWO_PI, delta)
    if wrapped.ndim == 0:
        return float(wrapped)
    return wrapped
