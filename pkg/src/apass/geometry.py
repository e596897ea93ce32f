"""Satellite-UE geometry for a circular LEO pass.

The orbit is a circular Keplerian orbit over a spherical, non-rotating
Earth. A pass is described by the great-circle ground track through a
reference point, with the satellite culminating over that point at
``epoch_offset_s = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

MU_EARTH_KM3_S2 = 398600.4418


class ScenarioError(ValueError):
    """Raised when a scenario cannot produce a valid pass."""


@dataclass(frozen=True)
class OrbitConfig:
    altitude_km: float = 540.0
    earth_radius_km: float = 6371.0
    inclination_deg: float = 53.0
    carrier_hz: float = 27.5e9

    def __post_init__(self):
        if self.altitude_km <= 0 or self.earth_radius_km <= 0 or self.carrier_hz <= 0:
            raise ValueError("altitude, earth radius and carrier must be positive")

    @property
    def orbit_radius_km(self) -> float:
        return self.earth_radius_km + self.altitude_km

    @property
    def speed_km_s(self) -> float:
        """Circular orbital speed sqrt(mu / r)."""
        return float(np.sqrt(MU_EARTH_KM3_S2 / self.orbit_radius_km))

    @property
    def angular_rate(self) -> float:
        """Angular rate of the satellite about the Earth centre (rad/s)."""
        return self.speed_km_s / self.orbit_radius_km


@dataclass(frozen=True)
class GroundUser:
    id: int
    lat_deg: float
    lon_deg: float

    def __post_init__(self):
        if abs(self.lat_deg) > 90:
            raise ValueError(f"user {self.id}: latitude {self.lat_deg} out of range")


@dataclass(frozen=True)
class PassGeometry:
    """Where and how the satellite crosses the service area.

    center_lat_deg, center_lon_deg
        Reference point under (or near) the ground track.
    cross_track_km
        Perpendicular offset of the ground track from the reference point.
    epoch_offset_s
        Time of the middle slot relative to culmination.
    ascending
        Direction of travel along the track (northbound if True).
    mask_deg
        Minimum elevation for a user to count as visible.
    """

    center_lat_deg: float = -35.28
    center_lon_deg: float = 149.13
    cross_track_km: float = 0.0
    epoch_offset_s: float = 0.0
    ascending: bool = True
    mask_deg: float = 10.0


@dataclass(frozen=True)
class SlotGrid:
    n_slots: int
    coherence_s: float
    elevation_deg: np.ndarray = field(repr=False)  # (K, N)
    slot_epoch_s: np.ndarray = field(repr=False)  # (N,)

    def __post_init__(self):
        if self.n_slots < 1:
            raise ValueError("n_slots must be >= 1")
        if self.elevation_deg.shape[1] != self.n_slots or self.slot_epoch_s.shape != (self.n_slots,):
            raise ValueError("elevation/epoch arrays do not match n_slots")

    @property
    def n_users(self) -> int:
        return self.elevation_deg.shape[0]


def _check_angle(alpha):
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha < 0) or np.any(alpha > 90) or np.any(~np.isfinite(alpha)):
        raise ValueError(f"elevation angle must lie in [0, 90] degrees, got {alpha}")
    return alpha


def slant_range(alpha, orbit: OrbitConfig):
    """Satellite-UE distance in km for elevation ``alpha`` (degrees)."""
    alpha = _check_angle(alpha)
    re, d0 = orbit.earth_radius_km, orbit.altitude_km
    s = np.sin(np.radians(alpha))
    # Exact at zenith: sin(90 deg) rounds to 1.0, so the root is (re + d0).
    d = np.sqrt(re**2 * s**2 + d0**2 + 2 * d0 * re) - re * s
    return d if d.ndim else float(d)


def max_doppler(alpha, orbit: OrbitConfig):
    """Maximum Doppler shift (Hz) from the satellite velocity projected on the LoS."""
    alpha = _check_angle(alpha)
    v = orbit.speed_km_s * 1e3
    nu = v * np.cos(np.radians(alpha)) / SPEED_OF_LIGHT * orbit.carrier_hz
    nu = np.where(alpha == 90.0, 0.0, np.maximum(nu, 0.0))
    return nu if nu.ndim else float(nu)


def _unit(lat_deg, lon_deg):
    lat, lon = np.radians(lat_deg), np.radians(lon_deg)
    return np.stack(
        [np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1
    )


def _local_frame(lat_deg, lon_deg):
    lat, lon = np.radians(lat_deg), np.radians(lon_deg)
    east = np.array([-np.sin(lon), np.cos(lon), 0.0])
    north = np.array([-np.sin(lat) * np.cos(lon), -np.sin(lat) * np.sin(lon), np.cos(lat)])
    return east, north


def ground_track_heading(orbit: OrbitConfig, lat_deg: float, ascending: bool = True) -> float:
    """Azimuth (deg from north) of the ground track where it crosses ``lat_deg``."""
    ratio = np.cos(np.radians(orbit.inclination_deg)) / np.cos(np.radians(lat_deg))
    if abs(ratio) > 1:
        raise ScenarioError(
            f"an orbit inclined at {orbit.inclination_deg} deg never reaches latitude {lat_deg}"
        )
    psi = np.degrees(np.arcsin(ratio))
    return float(psi if ascending else 180.0 - psi)


def satellite_positions(orbit: OrbitConfig, pass_params: PassGeometry, times_s) -> np.ndarray:
    """ECI-like positions (km) of the satellite at the given times, shape (T, 3)."""
    c = _unit(pass_params.center_lat_deg, pass_params.center_lon_deg)
    east, north = _local_frame(pass_params.center_lat_deg, pass_params.center_lon_deg)
    psi = np.radians(ground_track_heading(orbit, pass_params.center_lat_deg, pass_params.ascending))
    along = np.cos(psi) * north + np.sin(psi) * east
    normal = np.cross(c, along)
    delta = pass_params.cross_track_km / orbit.earth_radius_km
    c0 = np.cos(delta) * c + np.sin(delta) * normal

    theta = orbit.angular_rate * np.asarray(times_s, dtype=float)
    return orbit.orbit_radius_km * (
        np.cos(theta)[:, None] * c0[None, :] + np.sin(theta)[:, None] * along[None, :]
    )


def elevation_angles(orbit: OrbitConfig, users, sat_pos_km) -> np.ndarray:
    """Elevation (deg) of each satellite position seen from each user, shape (K, T)."""
    u = _unit(np.array([x.lat_deg for x in users]), np.array([x.lon_deg for x in users]))
    rel = sat_pos_km[None, :, :] - orbit.earth_radius_km * u[:, None, :]
    up = np.einsum("ktc,kc->kt", rel, u)
    horiz = np.linalg.norm(rel - up[..., None] * u[:, None, :], axis=-1)
    return np.degrees(np.arctan2(up, horiz))


def elevation_profile(
    orbit: OrbitConfig,
    users,
    pass_params: PassGeometry,
    n_slots: int,
    coherence_s: float,
) -> SlotGrid:
    """Per-user elevation at the start epoch of each coherence slot.

    Slot ``N // 2`` is centred on ``pass_params.epoch_offset_s`` so that an
    unshifted pass culminates exactly at that slot.
    """
    if n_slots < 1:
        raise ValueError("n_slots must be >= 1")
    if coherence_s <= 0:
        raise ValueError("coherence_s must be positive")
    ids = [u.id for u in users]
    if len(set(ids)) != len(ids):
        raise ScenarioError("user ids must be unique")

    epochs = pass_params.epoch_offset_s + (np.arange(n_slots) - n_slots // 2) * coherence_s
    elev = elevation_angles(orbit, users, satellite_positions(orbit, pass_params, epochs))
    for user, row in zip(users, elev):
        hidden = int(np.sum(row <= pass_params.mask_deg))
        if hidden:
            raise ScenarioError(
                f"user {user.id} is below the {pass_params.mask_deg} deg mask "
                f"in {hidden} of {n_slots} slots"
            )
    return SlotGrid(n_slots, float(coherence_s), elev, epochs)


def place_users(n_users: int, center_lat_deg: float, center_lon_deg: float,
                radius_km: float, earth_radius_km: float, rng) -> list[GroundUser]:
    """Scatter users normally about a point, rejecting draws beyond ``radius_km``.

    The per-axis standard deviation is ``radius_km / 2``.
    """
    offsets = np.empty((0, 2))
    while len(offsets) < n_users:
        draw = rng.normal(scale=radius_km / 2, size=(n_users, 2))
        offsets = np.vstack([offsets, draw[np.hypot(draw[:, 0], draw[:, 1]) <= radius_km]])
    offsets = offsets[:n_users]

    c = _unit(center_lat_deg, center_lon_deg)
    east, north = _local_frame(center_lat_deg, center_lon_deg)
    users = []
    for k, (de, dn) in enumerate(offsets):
        dist = np.hypot(de, dn) / earth_radius_km
        if dist == 0:
            p = c
        else:
            direction = (de * east + dn * north) / np.hypot(de, dn)
            p = np.cos(dist) * c + np.sin(dist) * direction
        users.append(GroundUser(k, float(np.degrees(np.arcsin(np.clip(p[2], -1, 1)))),
                                float(np.degrees(np.arctan2(p[1], p[0])))))
    return users
