"""Trajectory log model and CSV I/O.

Two on-disk schemas, both CSV with a header row:

  geodetic: t,lat,lon,alt,ve,vn,heading_deg,yaw_rate
  utm:      t,x,y,alt,vx,vy,psi_rad,psi_dot

Units are SI throughout (seconds, metres, m/s, rad/s). heading_deg is the
surveying convention, degrees clockwise from North; internally every
orientation is psi, radians counter-clockwise from East, wrapped to
(-pi, pi]. yaw_rate/psi_dot is the CCW yaw rate in rad/s in both schemas.
alt and psi_dot cells may be empty. Writing a UTM log and parsing it back
reproduces the trajectory bit-exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .egokin import wrap_angle
from .errors import (
    MissingColumn,
    NonMonotonicTimestamps,
    ParseError,
)
from .geodesy import (
    GeodeticPoint,
    UtmPoint,
    utm_to_wgs84,
    wgs84_to_utm,
    zone_from_longitude,
)

GEODETIC_COLUMNS = ("t", "lat", "lon", "alt", "ve", "vn", "heading_deg", "yaw_rate")
UTM_COLUMNS = ("t", "x", "y", "alt", "vx", "vy", "psi_rad", "psi_dot")
FRAMES = ("utm", "geodetic")

# Columns whose cells may be left empty.
_OPTIONAL = {"alt", "yaw_rate", "psi_dot"}


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class TrajectorySample:
    """One fused positioning fix in the projected plane.

    x, y are easting/northing metres, vx, vy their time derivatives, psi the
    yaw in (-pi, pi] and psi_dot its derivative (None when the log did not
    record one). alt is carried through untouched.
    """

    t: float
    x: float
    y: float
    vx: float
    vy: float
    psi: float
    psi_dot: float | None = None
    alt: float | None = None

    def __post_init__(self) -> None:
        for name in ("t", "x", "y", "vx", "vy"):
            _finite(name, getattr(self, name))
        _finite("psi", self.psi)
        if not -math.pi < self.psi <= math.pi:
            raise ValueError(f"psi must lie in (-pi, pi], got {self.psi}")
        if self.psi_dot is not None:
            _finite("psi_dot", self.psi_dot)
        if self.alt is not None:
            _finite("alt", self.alt)


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered samples for one vehicle.

    zone/hemisphere record which UTM zone the samples live in when known
    (set by the geodetic parser); purely synthetic trajectories leave them
    None.
    """

    vehicle_id: str
    samples: tuple[TrajectorySample, ...]
    zone: int | None = None
    hemisphere: str | None = None

    def __post_init__(self) -> None:
        if not self.samples:
            raise ValueError("trajectory needs at least one sample")
        object.__setattr__(self, "samples", tuple(self.samples))
        times = [s.t for s in self.samples]
        for i in range(1, len(times)):
            if times[i] <= times[i - 1]:
                raise NonMonotonicTimestamps(
                    f"vehicle {self.vehicle_id!r}: t[{i}]={times[i]} does not "
                    f"increase past t[{i - 1}]={times[i - 1]}"
                )

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def support(self) -> tuple[float, float]:
        return self.samples[0].t, self.samples[-1].t

    @property
    def has_yaw_rate(self) -> bool:
        return all(s.psi_dot is not None for s in self.samples)

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def channel(self, name: str) -> np.ndarray:
        """Channel as an array; missing psi_dot/alt entries become NaN."""
        values = [getattr(s, name) for s in self.samples]
        return np.array([math.nan if v is None else v for v in values])


@dataclass(frozen=True)
class ClockModel:
    """Affine clock correction: t -> t - offset - drift * (t - t0).

    t0 is the first timestamp of the trajectory being adjusted. offset in
    seconds, drift dimensionless; |drift| must stay below 1 so ordering is
    preserved.
    """

    offset: float
    drift: float = 0.0

    def __post_init__(self) -> None:
        _finite("offset", self.offset)
        _finite("drift", self.drift)
        if abs(self.drift) >= 1.0:
            raise ValueError(f"|drift| must be < 1, got {self.drift}")

    def inverse(self) -> "ClockModel":
        """Model that undoes this one (composition is identity to ~1e-12 s)."""
        return ClockModel(-self.offset, -self.drift / (1.0 - self.drift))


def apply_clock_model(traj: Trajectory, clock: ClockModel) -> Trajectory:
    """Retime a trajectory under an affine clock correction."""
    t0 = traj.samples[0].t
    samples = tuple(
        replace(s, t=s.t - clock.offset - clock.drift * (s.t - t0))
        for s in traj.samples
    )
    return replace(traj, samples=samples)


def _open_source(source: str | Path | IO[str]) -> tuple[IO[str], bool, str]:
    if isinstance(source, (str, Path)):
        path = Path(source)
        return path.open("r", newline=""), True, path.stem
    return source, False, "vehicle"


def _header_map(header: list[str], columns: tuple[str, ...]) -> dict[str, int]:
    positions = {name.strip(): i for i, name in enumerate(header)}
    mapping = {}
    for name in columns:
        if name not in positions:
            raise MissingColumn(f"missing column {name!r} in header {header}", line=1)
        mapping[name] = positions[name]
    return mapping

def _cell(row: list[str], idx: dict[str, int], name: str, line: int) -> float | None:
    try:
        raw = row[idx[name]].strip()
    except IndexError:
        raise ParseError(f"row has {len(row)} cells, column {name!r} absent", line)
    if raw == "":
        if name in _OPTIONAL:
            return None
        raise ParseError(f"column {name!r} is empty", line)
    try:
        value = float(raw)
    except ValueError:
        raise ParseError(f"column {name!r} is not a number: {raw!r}", line)
    if not math.isfinite(value):
        raise ParseError(f"column {name!r} is not finite: {raw!r}", line)
    return value


def parse_trajectory_log(
    source: str | Path | IO[str],
    frame: str = "utm",
    forced_zone: int | None = None,
    vehicle_id: str | None = None,
) -> Trajectory:
    """Read a trajectory CSV in either schema into the internal UTM model.

    Geodetic logs are projected into a single zone: forced_zone if given,
    otherwise the zone of the first row, so a session that brushes a zone
    boundary stays in one consistent plane. Heading is converted via
    psi = pi/2 - heading * pi/180 and wrapped.
    """
    if frame not in FRAMES:
        raise ValueError(f"frame must be one of {FRAMES}, got {frame!r}")
    stream, owned, default_id = _open_source(source)
    if vehicle_id is None:
        vehicle_id = default_id
    try:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1)
        columns = UTM_COLUMNS if frame == "utm" else GEODETIC_COLUMNS
        idx = _header_map(header, columns)

        samples: list[TrajectorySample] = []
        zone = forced_zone
        hemisphere: str | None = None
        for line, row in enumerate(reader, start=2):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if frame == "utm":
                t = _cell(row, idx, "t", line)
                x = _cell(row, idx, "x", line)
                y = _cell(row, idx, "y", line)
                alt = _cell(row, idx, "alt", line)
                vx = _cell(row, idx, "vx", line)
                vy = _cell(row, idx, "vy", line)
                psi = _cell(row, idx, "psi_rad", line)
                psi_dot = _cell(row, idx, "psi_dot", line)
            else:
                t = _cell(row, idx, "t", line)
                lat = _cell(row, idx, "lat", line)
                lon = _cell(row, idx, "lon", line)
                alt = _cell(row, idx, "alt", line)
                vx = _cell(row, idx, "ve", line)
                vy = _cell(row, idx, "vn", line)
                heading = _cell(row, idx, "heading_deg", line)
                psi_dot = _cell(row, idx, "yaw_rate", line)
                if zone is None:
                    zone = zone_from_longitude(lon)
                utm = wgs84_to_utm(GeodeticPoint(lat, lon, alt), forced_zone=zone)
                if hemisphere is None:
                    hemisphere = utm.hemisphere
                x, y = utm.easting, utm.northing
                psi = math.pi / 2.0 - math.radians(heading)
            try:
                samples.append(
                    TrajectorySample(
                        t=t, x=x, y=y, vx=vx, vy=vy,
                        psi=wrap_angle(psi), psi_dot=psi_dot, alt=alt,
                    )
                )
            except ValueError as err:
                raise ParseError(str(err), line)
        if not samples:
            raise ParseError("no data rows", line=2)
        return Trajectory(
            vehicle_id=vehicle_id,
            samples=tuple(samples),
            zone=zone if frame == "geodetic" else None,
            hemisphere=hemisphere if frame == "geodetic" else None,
        )
    finally:
        if owned:
            stream.close()


def _fmt(value: float | None) -> str:
    # repr round-trips exactly, which write/parse bit-exactness relies on.
    return "" if value is None else repr(float(value))


def write_trajectory_log(
    traj: Trajectory, dest: str | Path | IO[str], frame: str = "utm"
) -> None:
    """Write a trajectory CSV.

    The UTM schema round-trips bit-exactly through parse_trajectory_log.
    Writing the geodetic schema needs the trajectory's zone/hemisphere and
    round-trips only to projection accuracy.
    """
    if frame not in FRAMES:
        raise ValueError(f"frame must be one of {FRAMES}, got {frame!r}")
    if isinstance(dest, (str, Path)):
        with Path(dest).open("w", newline="") as stream:
            _write_rows(traj, stream, frame)
    else:
        _write_rows(traj, dest, frame)


def _write_rows(traj: Trajectory, stream: IO[str], frame: str) -> None:
    if frame == "utm":
        stream.write(",".join(UTM_COLUMNS) + "\n")
        for s in traj.samples:
            cells = (s.t, s.x, s.y, s.alt, s.vx, s.vy, s.psi, s.psi_dot)
            stream.write(",".join(_fmt(c) for c in cells) + "\n")
        return
    if traj.zone is None or traj.hemisphere is None:
        raise ValueError(
            "geodetic export needs a trajectory with zone/hemisphere metadata"
        )
    stream.write(",".join(GEODETIC_COLUMNS) + "\n")
    for s in traj.samples:
        geo = utm_to_wgs84(
            UtmPoint(s.x, s.y, traj.zone, traj.hemisphere, alt=s.alt)
        )
        heading = (90.0 - math.degrees(s.psi)) % 360.0
        cells = (s.t, geo.lat, geo.lon, geo.alt, s.vx, s.vy, heading, s.psi_dot)
        stream.write(",".join(_fmt(c) for c in cells) + "\n")


def trajectory_from_arrays(
    vehicle_id: str,
    t: Iterable[float],
    x: Iterable[float],
    y: Iterable[float],
    vx: Iterable[float],
    vy: Iterable[float],
    psi: Iterable[float],
    psi_dot: Iterable[float] | None = None,
    zone: int | None = None,
    hemisphere: str | None = None,
) -> Trajectory:
    """Convenience constructor from parallel channel arrays."""
    t = list(map(float, t))
    cols = [list(map(float, c)) for c in (x, y, vx, vy, psi)]
    rates: list[float | None]
    rates = [None] * len(t) if psi_dot is None else list(map(float, psi_dot))
    if any(len(c) != len(t) for c in cols) or len(rates) != len(t):
        raise ValueError("channel arrays must have equal length")
    samples = tuple(
        TrajectorySample(
            t=t[i], x=cols[0][i], y=cols[1][i], vx=cols[2][i], vy=cols[3][i],
            psi=wrap_angle(cols[4][i]), psi_dot=rates[i],
        )
        for i in range(len(t))
    )
    return Trajectory(vehicle_id, samples, zone=zone, hemisphere=hemisphere)
