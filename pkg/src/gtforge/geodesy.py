"""WGS-84 to UTM conversion and back.

Transverse Mercator computed with Krueger-style series to 6th order in the
third flattening, so truncation error inside a zone is far below a
millimetre. Standard UTM conventions: scale 0.9996 at the central meridian,
500 km false easting, 10 000 km false northing in the south.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidCoordinate, OutOfZone

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563

SCALE_FACTOR = 0.9996
FALSE_EASTING = 500_000.0
FALSE_NORTHING_SOUTH = 10_000_000.0

# Forced projections stay valid this far from the central meridian.
MAX_CM_DISTANCE_DEG = 7.0

_E2 = WGS84_F * (2.0 - WGS84_F)
_E = math.sqrt(_E2)
_N = WGS84_F / (2.0 - WGS84_F)  # third flattening

# Rectifying radius: scales the TM plane so xi spans pi/2 pole to equator.
_RADIUS = WGS84_A / (1.0 + _N) * (1.0 + _N**2 / 4 + _N**4 / 64 + _N**6 / 256)

# Series coefficients in the third flattening n, to n^6.
_n = _N
_ALPHA = (
    _n / 2 - 2 * _n**2 / 3 + 5 * _n**3 / 16 + 41 * _n**4 / 180
    - 127 * _n**5 / 288 + 7891 * _n**6 / 37800,
    13 * _n**2 / 48 - 3 * _n**3 / 5 + 557 * _n**4 / 1440 + 281 * _n**5 / 630
    - 1983433 * _n**6 / 1935360,
    61 * _n**3 / 240 - 103 * _n**4 / 140 + 15061 * _n**5 / 26880
    + 167603 * _n**6 / 181440,
    49561 * _n**4 / 161280 - 179 * _n**5 / 168 + 6601661 * _n**6 / 7257600,
    34729 * _n**5 / 80640 - 3418889 * _n**6 / 1995840,
    212378941 * _n**6 / 319334400,
)
_BETA = (
    _n / 2 - 2 * _n**2 / 3 + 37 * _n**3 / 96 - _n**4 / 360
    - 81 * _n**5 / 512 + 96199 * _n**6 / 604800,
    _n**2 / 48 + _n**3 / 15 - 437 * _n**4 / 1440 + 46 * _n**5 / 105
    - 1118711 * _n**6 / 3870720,
    17 * _n**3 / 480 - 37 * _n**4 / 840 - 209 * _n**5 / 4480
    + 5569 * _n**6 / 90720,
    4397 * _n**4 / 161280 - 11 * _n**5 / 504 - 830251 * _n**6 / 7257600,
    4583 * _n**5 / 161280 - 108847 * _n**6 / 3991680,
    20648693 * _n**6 / 638668800,
)
del _n


def _require_finite(name: str, value: float) -> float:
    if not math.isfinite(value):
        raise InvalidCoordinate(f"{name} must be finite, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class GeodeticPoint:
    """WGS-84 geodetic coordinates, degrees. alt is carried but never used."""

    lat: float
    lon: float
    alt: float | None = None

    def __post_init__(self) -> None:
        _require_finite("lat", self.lat)
        _require_finite("lon", self.lon)
        if not -90.0 <= self.lat <= 90.0:
            raise InvalidCoordinate(f"lat must be in [-90, 90], got {self.lat}")
        if not -180.0 <= self.lon < 180.0:
            raise InvalidCoordinate(f"lon must be in [-180, 180), got {self.lon}")
        if self.alt is not None:
            _require_finite("alt", self.alt)


@dataclass(frozen=True)
class UtmPoint:
    """Projected coordinates in one UTM zone, metres."""

    easting: float
    northing: float
    zone: int
    hemisphere: str = "north"
    alt: float | None = None

    def __post_init__(self) -> None:
        _require_finite("easting", self.easting)
        _require_finite("northing", self.northing)
        if not 0.0 < self.easting < 1_000_000.0:
            raise InvalidCoordinate(
                f"easting must be in (0, 1e6), got {self.easting}"
            )
        if not 1 <= self.zone <= 60:
            raise InvalidCoordinate(f"zone must be in 1..60, got {self.zone}")
        if self.hemisphere not in ("north", "south"):
            raise InvalidCoordinate(
                f"hemisphere must be 'north' or 'south', got {self.hemisphere!r}"
            )
        if self.alt is not None:
            _require_finite("alt", self.alt)


def zone_from_longitude(lon: float) -> int:
    """Standard 6-degree UTM zone containing the given longitude."""
    _require_finite("lon", lon)
    if not -180.0 <= lon < 180.0:
        raise InvalidCoordinate(f"lon must be in [-180, 180), got {lon}")
    return int((lon + 180.0) // 6.0) + 1


def central_meridian_deg(zone: int) -> float:
    if not 1 <= zone <= 60:
        raise InvalidCoordinate(f"zone must be in 1..60, got {zone}")
    return (zone - 1) * 6.0 - 180.0 + 3.0


def wgs84_to_utm(point: GeodeticPoint, forced_zone: int | None = None) -> UtmPoint:
    """Project a geodetic point to UTM.

    The zone is derived from the longitude unless forced_zone is given.
    Forcing allows a session that straddles a zone boundary to live in one
    consistent plane, limited to 7 degrees from the central meridian.
    """
    zone = forced_zone if forced_zone is not None else zone_from_longitude(point.lon)
    lon0 = central_meridian_deg(zone)
    dlon = point.lon - lon0
    if abs(dlon) >= MAX_CM_DISTANCE_DEG:
        raise OutOfZone(
            f"lon {point.lon} is {abs(dlon):.3f} deg from zone {zone}'s "
            f"central meridian (limit {MAX_CM_DISTANCE_DEG})"
        )

    phi = math.radians(point.lat)
    lam = math.radians(dlon)

    # Conformal latitude, expressed through its tangent.
    tau = math.tan(phi)
    sigma = math.sinh(_E * math.atanh(_E * tau / math.hypot(1.0, tau)))
    taup = tau * math.hypot(1.0, sigma) - sigma * math.hypot(1.0, tau)

    xi_p = math.atan2(taup, math.cos(lam))
    eta_p = math.asinh(math.sin(lam) / math.hypot(taup, math.cos(lam)))

    xi = xi_p
    eta = eta_p
    for j, coeff in enumerate(_ALPHA, start=1):
        xi += coeff * math.sin(2 * j * xi_p) * math.cosh(2 * j * eta_p)
        eta += coeff * math.cos(2 * j * xi_p) * math.sinh(2 * j * eta_p)

    easting = FALSE_EASTING + SCALE_FACTOR * _RADIUS * eta
    northing = SCALE_FACTOR * _RADIUS * xi
    hemisphere = "north" if point.lat >= 0.0 else "south"
    if hemisphere == "south":
        northing += FALSE_NORTHING_SOUTH
    return UtmPoint(easting, northing, zone, hemisphere, alt=point.alt)


def utm_to_wgs84(point: UtmPoint) -> GeodeticPoint:
    """Invert the projection. Round-trips with wgs84_to_utm to ~1e-9 degrees."""
    y = point.northing
    if point.hemisphere == "south":
        y -= FALSE_NORTHING_SOUTH
    xi = y / (SCALE_FACTOR * _RADIUS)
    eta = (point.easting - FALSE_EASTING) / (SCALE_FACTOR * _RADIUS)

    xi_p = xi
    eta_p = eta
    for j, coeff in enumerate(_BETA, start=1):
        xi_p -= coeff * math.sin(2 * j * xi) * math.cosh(2 * j * eta)
        eta_p -= coeff * math.cos(2 * j * xi) * math.sinh(2 * j * eta)

    taup = math.sin(xi_p) / math.hypot(math.sinh(eta_p), math.cos(xi_p))
    lam = math.atan2(math.sinh(eta_p), math.cos(xi_p))

    # Newton iteration for tau from its conformal counterpart.
    e2m = 1.0 - _E2
    tau = taup / e2m
    for _ in range(8):
        sigma = math.sinh(_E * math.atanh(_E * tau / math.hypot(1.0, tau)))
        taupa = tau * math.hypot(1.0, sigma) - sigma * math.hypot(1.0, tau)
        dtau = (
            (taup - taupa)
            * (1.0 + e2m * tau * tau)
            / (e2m * math.hypot(1.0, tau) * math.hypot(1.0, taupa))
        )
        tau += dtau
        if abs(dtau) < 1e-15 * max(1.0, abs(taup)):
            break

    lat = math.degrees(math.atan(tau))
    lon = central_meridian_deg(point.zone) + math.degrees(lam)
    lon = (lon + 180.0) % 360.0 - 180.0
    return GeodeticPoint(lat, lon, alt=point.alt)
