"""3D geometry for distributed bistatic sensing.

Azimuth/elevation conventions: elevation theta is measured from the +z axis
(theta = 0 points straight up), azimuth phi in [-pi, pi) from the +x axis.
The unit vector for an angle pair is (sin(theta)cos(phi), sin(theta)sin(phi),
cos(theta)).

Doppler sign convention: positive for a closing target, i.e.
f_d = (fc/c) * v . (u_tx + u_rx) with u_* the unit vectors from the target
toward the transmit and receive APs.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BisectorUndefined, DegenerateGeometry

SPEED_OF_LIGHT = 2.998e8  # m/s


@dataclass(frozen=True)
class PhysicalConstants:
    """Carrier frequency and propagation constants."""

    fc: float
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if self.fc <= 0:
            raise ValueError("carrier frequency must be positive")

    @property
    def wavelength(self):
        return self.c / self.fc


@dataclass(frozen=True)
class AnglePair:
    azimuth: float    # rad, in [-pi, pi)
    elevation: float  # rad from +z axis, in [0, pi]


@dataclass(frozen=True)
class ArraySpec:
    """Uniform linear array: orientation axis and element spacing in wavelengths."""

    axis: tuple = (1.0, 0.0, 0.0)
    spacing_wavelengths: float = 0.5


@dataclass(frozen=True)
class BistaticAngles:
    psi: float             # full bistatic angle between the two target->AP unit vectors
    chi: float             # angle between velocity and the bisector
    bisector: np.ndarray   # unit 3-vector


def _unit_from(p_from, p_to):
    """Unit vector from p_from toward p_to; raises on coincident points."""
    d = np.asarray(p_to, dtype=float) - np.asarray(p_from, dtype=float)
    r = float(np.linalg.norm(d))
    if r == 0.0:
        raise DegenerateGeometry("coincident points")
    return d / r, r


def angles_to(p_from, p_to):
    """Azimuth/elevation of the direction from p_from to p_to.

    At zenith (direction along +z or -z) the azimuth is reported as 0.
    """
    u, _ = _unit_from(p_from, p_to)
    elevation = float(np.arccos(np.clip(u[2], -1.0, 1.0)))
    azimuth = float(np.arctan2(u[1], u[0]))
    if azimuth >= np.pi:  # atan2 returns +pi for (-1, 0); fold into [-pi, pi)
        azimuth = -np.pi
    return AnglePair(azimuth=azimuth, elevation=elevation)


def direction_vector(angles):
    """Unit vector for an AnglePair."""
    st = np.sin(angles.elevation)
    return np.array([st * np.cos(angles.azimuth),
                     st * np.sin(angles.azimuth),
                     np.cos(angles.elevation)])


def bistatic_angles(p_target, v, p_tap, p_rap):
    """Bistatic angle, bisector, and velocity-bisector angle for one TX/RX pair.

    chi is reported as 0 for a stationary target.
    """
    u1, _ = _unit_from(p_target, p_tap)
    u2, _ = _unit_from(p_target, p_rap)
    s = u1 + u2
    ns = float(np.linalg.norm(s))
    if ns < 1e-12:
        raise BisectorUndefined("target lies on the TX-RX segment; bisector undefined")
    bisector = s / ns
    psi = float(np.arccos(np.clip(float(np.dot(u1, u2)), -1.0, 1.0)))
    speed = float(np.linalg.norm(v))
    if speed == 0.0:
        chi = 0.0
    else:
        chi = float(np.arccos(np.clip(float(np.dot(v, bisector)) / speed, -1.0, 1.0)))
    return BistaticAngles(psi=psi, chi=chi, bisector=bisector)


def bistatic_doppler(p_target, v, p_tap, p_rap, consts):
    """Bistatic Doppler shift in Hz, positive for a closing target.

    Vector form: f_d = (fc/c) * v . (u_tx + u_rx).
    """
    u1, _ = _unit_from(p_target, p_tap)
    u2, _ = _unit_from(p_target, p_rap)
    return consts.fc / consts.c * float(np.dot(np.asarray(v, dtype=float), u1 + u2))


def doppler_closed_form(speed, angles, consts):
    """Closed-form Doppler from speed and the bistatic angle pair.

    Equals 2*speed*fc/c * cos(psi/2) * cos(chi); signed through cos(chi).
    """
    return 2.0 * speed * consts.fc / consts.c * np.cos(angles.psi / 2.0) * np.cos(angles.chi)


def bistatic_delay(p_target, p_tap, p_rap, consts):
    """Two-leg propagation delay (TX -> target -> RX) in seconds."""
    p = np.asarray(p_target, dtype=float)
    d = np.linalg.norm(np.asarray(p_tap, dtype=float) - p) \
        + np.linalg.norm(p - np.asarray(p_rap, dtype=float))
    return float(d) / consts.c


def steering_vector(angles, n_antennas, array=None):
    """ULA array response for a direction; entry 0 is 1, all entries unit modulus.

    For the default x-axis array at half-wavelength spacing the k-th entry is
    exp(j*pi*k*sin(theta)*cos(phi)).
    """
    if n_antennas < 1:
        raise ValueError("need at least one antenna")
    if array is None:
        array = ArraySpec()
    axis = np.asarray(array.axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    cosine = float(np.dot(direction_vector(angles), axis))
    k = np.arange(n_antennas)
    return np.exp(2j * np.pi * array.spacing_wavelengths * k * cosine)
