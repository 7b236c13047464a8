"""Per-user array responses and channel assembly.

A channel vector stacks, in order, the responses of every rotatable surface
(one block per rotation angle, in the order the rotation list is given) and
then the three fixed sector arrays.  Within a block the element order is
vertical-fastest, i.e. the Kronecker product a_h (x) a_v.

Element phase model: half-wavelength spacing, symmetric around the array
center, directivity in azimuth only (elements are omnidirectional in
elevation).  Each block carries a phase reference term tying the array
center back to the track center, so that a single common reference serves
all blocks.
"""

import math
from dataclasses import dataclass

import numpy as np

from .geometry import UserAngles, wrap_angle_delta

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ArrayShape:
    """Rectangular element grid: m_h columns by m_v rows."""

    m_h: int
    m_v: int

    def __post_init__(self):
        if self.m_h < 1 or self.m_v < 1:
            raise ValueError("element counts must be >= 1")

    @property
    def total(self) -> int:
        return self.m_h * self.m_v


@dataclass(frozen=True)
class GainPattern:
    """Sector element gain: parabolic in azimuth offset with a side-lobe floor.

    ``g_m`` is the boresight gain in dBi, ``g_s`` the floor depth in dB below
    boresight, ``phi_3db`` the half-power beamwidth in radians.
    """

    g_m: float
    g_s: float
    phi_3db: float

    def __post_init__(self):
        if self.g_s < 0:
            raise ValueError("side-lobe depth g_s must be >= 0")
        if self.phi_3db <= 0:
            raise ValueError("half-power beamwidth must be positive")


def antenna_gain_linear(pattern: GainPattern, phi_user, phi_face):
    """Linear per-element gain for a face at azimuth ``phi_face``.

    dBi gain is g_m - min(12 * (delta/phi_3db)^2, g_s) with delta the wrapped
    azimuth offset; the returned value is 10^(dBi/10).  Accepts scalars or
    arrays in ``phi_user``.
    """
    delta = wrap_angle_delta(phi_user, phi_face)
    rolloff = 12.0 * (np.asarray(delta) / pattern.phi_3db) ** 2
    gain_dbi = pattern.g_m - np.minimum(rolloff, pattern.g_s)
    out = 10.0 ** (gain_dbi / 10.0)
    return float(out) if np.ndim(out) == 0 else out


def _centered_coeffs(m: int) -> np.ndarray:
    # pi * ((m+1)/2 - i) for i = 1..m: symmetric half-wavelength offsets
    return np.pi * ((m + 1) / 2.0 - np.arange(1, m + 1))


def steering_horizontal(shape_h: int, phi_face: float, angles: UserAngles) -> np.ndarray:
    """Horizontal steering factor, unit-modulus, length ``shape_h``.

    Entry i carries exp(j*pi*((m+1)/2 - i) * sin(phi_face - phi) * sin(theta)).
    """
    if shape_h < 1:
        raise ValueError("shape_h must be >= 1")
    s = math.sin(phi_face - angles.phi) * math.sin(angles.theta)
    return np.exp(1j * _centered_coeffs(shape_h) * s)


def steering_vertical(shape_v: int, angles: UserAngles) -> np.ndarray:
    """Vertical steering factor, unit-modulus, length ``shape_v``.

    Entry i carries exp(j*pi*((m+1)/2 - i) * cos(theta)).
    """
    if shape_v < 1:
        raise ValueError("shape_v must be >= 1")
    return np.exp(1j * _centered_coeffs(shape_v) * math.cos(angles.theta))


def surface_response_6dma(
    shape: ArrayShape,
    pattern: GainPattern,
    phi_n: float,
    angles: UserAngles,
    r2: float,
    lambda_c: float,
) -> np.ndarray:
    """Response of one rotatable surface at rotation angle ``phi_n``.

    sqrt(gain) * exp(j*rho1) * (a_h (x) a_v), where rho1 is the phase lead of
    the surface center (radius r2 on the track) over the track center:
    rho1 = (2*pi/lambda_c) * r2 * cos(phi_n - phi) * sin(theta).
    """
    rho1 = TWO_PI / lambda_c * r2 * math.cos(phi_n - angles.phi) * math.sin(angles.theta)
    g = antenna_gain_linear(pattern, angles.phi, phi_n)
    a_h = steering_horizontal(shape.m_h, phi_n, angles)
    a_v = steering_vertical(shape.m_v, angles)
    return math.sqrt(g) * np.exp(1j * rho1) * np.kron(a_h, a_v)


def array_response_fpa(
    shape: ArrayShape,
    pattern: GainPattern,
    phi_f: float,
    angles: UserAngles,
    r1: float,
    h1: float,
    h2: float,
    lambda_c: float,
) -> np.ndarray:
    """Response of one fixed sector array at azimuth ``phi_f``.

    Same structure as the surface response but the phase reference accounts
    for both the ring radius r1 and the height gap h2 - h1 below the track:
    rho2 = (2*pi/lambda_c) * (r1*cos(phi - phi_f)*sin(theta)
                              - (h2 - h1)*cos(theta)).
    """
    rho2 = TWO_PI / lambda_c * (
        r1 * math.cos(angles.phi - phi_f) * math.sin(angles.theta)
        - (h2 - h1) * math.cos(angles.theta)
    )
    g = antenna_gain_linear(pattern, angles.phi, phi_f)
    a_h = steering_horizontal(shape.m_h, phi_f, angles)
    a_v = steering_vertical(shape.m_v, angles)
    return math.sqrt(g) * np.exp(1j * rho2) * np.kron(a_h, a_v)


def channel_vector(user: UserAngles, rotations, scenario) -> np.ndarray:
    """Full M-entry channel of one user under the given surface rotations.

    sqrt(beta) * exp(-j*2*pi*d/lambda_c) * [surface blocks..., sector blocks...]
    with beta = beta0 / d^2.
    """
    geo = scenario.geometry
    rf = scenario.rf
    blocks = [
        surface_response_6dma(
            scenario.surface_shape, scenario.pattern, phi_n, user, geo.r2, rf.lambda_c
        )
        for phi_n in rotations
    ]
    blocks += [
        array_response_fpa(
            scenario.fpa_shape, scenario.pattern, phi_f, user,
            geo.r1, geo.h1, geo.h2, rf.lambda_c,
        )
        for phi_f in geo.fpa_rotations
    ]
    beta = rf.beta0 / user.d**2
    scale = math.sqrt(beta) * np.exp(-1j * TWO_PI * user.d / rf.lambda_c)
    return scale * np.concatenate(blocks)


def channel_matrix(realization, rotations, scenario) -> np.ndarray:
    """M x K channel for one user realization; column k is user k's vector."""
    n_surface = len(rotations) * scenario.surface_shape.total
    m_total = n_surface + 3 * scenario.fpa_shape.total
    cols = [
        channel_vector(ua, rotations, scenario) for ua in realization.iter_angles()
    ]
    if not cols:
        return np.zeros((m_total, 0), dtype=complex)
    return np.column_stack(cols)


# Vectorized block builders: same math as the per-user functions above but
# evaluated for all K users of a realization at once.  The per-user functions
# remain the tested reference; these feed the batch capacity evaluator.

def surface_block(shape, pattern, phi_n, thetas, phis, r2, lambda_c) -> np.ndarray:
    """(m_h*m_v, K) surface responses for user angle arrays."""
    st = np.sin(thetas)
    s = np.sin(phi_n - phis) * st
    a_h = np.exp(1j * np.outer(_centered_coeffs(shape.m_h), s))
    a_v = np.exp(1j * np.outer(_centered_coeffs(shape.m_v), np.cos(thetas)))
    rho1 = TWO_PI / lambda_c * r2 * np.cos(phi_n - phis) * st
    g = antenna_gain_linear(pattern, phis, phi_n)
    kron = (a_h[:, None, :] * a_v[None, :, :]).reshape(shape.total, -1)
    return np.sqrt(g) * np.exp(1j * rho1) * kron


def fpa_block(shape, pattern, phi_f, thetas, phis, r1, h1, h2, lambda_c) -> np.ndarray:
    """(m_h*m_v, K) fixed sector array responses for user angle arrays."""
    st = np.sin(thetas)
    s = np.sin(phi_f - phis) * st
    a_h = np.exp(1j * np.outer(_centered_coeffs(shape.m_h), s))
    a_v = np.exp(1j * np.outer(_centered_coeffs(shape.m_v), np.cos(thetas)))
    rho2 = TWO_PI / lambda_c * (
        r1 * np.cos(phis - phi_f) * st - (h2 - h1) * np.cos(thetas)
    )
    g = antenna_gain_linear(pattern, phis, phi_f)
    kron = (a_h[:, None, :] * a_v[None, :, :]).reshape(shape.total, -1)
    return np.sqrt(g) * np.exp(1j * rho2) * kron


def column_scales(dists, beta0, lambda_c) -> np.ndarray:
    """Per-user scalar sqrt(beta0)/d * exp(-j*2*pi*d/lambda_c)."""
    return np.sqrt(beta0) / dists * np.exp(-1j * TWO_PI * dists / lambda_c)
