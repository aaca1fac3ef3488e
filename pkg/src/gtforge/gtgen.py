"""Ground-truth record generation: the end-to-end pipeline step.

Takes one ego log and any number of target logs (same projected plane),
optional per-vehicle clock corrections, and a stamp list; interpolates all
logs, forms each target's relative state in the ego frame, attaches the
vehicle-footprint corners and, when a noise model plus scenario envelope
are supplied, the dataset-level covariance bounds.

Records serialize to JSON Lines, one record per line, keys in fixed order
(t, target_id, x, y, vx, vy, psi, bbox, pos_bound, vel_bound, yaw_var),
floats with 9 significant digits. Identical inputs produce bit-identical
files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Mapping, Sequence

import numpy as np

from ._util import fmt_float
from .egokin import RelativeState, relative_state
from .errors import ParseError, ZoneMismatch
from .resample import build_interpolant
from .trajlog import ClockModel, Trajectory, apply_clock_model
from .uncert import (
    DEFAULT_CONVENTION,
    CovBound2,
    NoiseModel,
    ScenarioEnvelope,
    position_bound,
    velocity_bound,
    yaw_variance,
)

Corner = tuple[float, float]


@dataclass(frozen=True)
class VehicleGeometry:
    """Footprint of a target vehicle.

    ref_to_center is the offset from the positioning reference point to the
    footprint center, in the vehicle frame (x forward, y left).
    """

    length: float
    width: float
    ref_to_center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        for name in ("length", "width"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        ox, oy = self.ref_to_center
        if not (math.isfinite(ox) and math.isfinite(oy)):
            raise ValueError("ref_to_center must be finite")
        object.__setattr__(self, "ref_to_center", (float(ox), float(oy)))


@dataclass(frozen=True)
class GroundTruthRecord:
    """One target observation in the ego frame at one stamp.

    bbox holds the four footprint corners in canonical order front-left,
    front-right, rear-right, rear-left. The three bound fields are either
    all present (noise model supplied) or all None.
    """

    t: float
    target_id: str
    rel: RelativeState
    bbox: tuple[Corner, Corner, Corner, Corner]
    pos_bound: CovBound2 | None = None
    vel_bound: CovBound2 | None = None
    yaw_var: float | None = None

    def __post_init__(self) -> None:
        if len(self.bbox) != 4:
            raise ValueError(f"bbox needs exactly 4 corners, got {len(self.bbox)}")
        object.__setattr__(
            self, "bbox", tuple((float(x), float(y)) for x, y in self.bbox)
        )
        bounds = (self.pos_bound, self.vel_bound, self.yaw_var)
        if any(b is None for b in bounds) != all(b is None for b in bounds):
            raise ValueError("bounds must be attached together or not at all")


# Corner offsets from the footprint center in the target frame, canonical
# order FL, FR, RR, RL.
_CORNER_SIGNS = ((1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0))


def bbox_footprint(
    rel: RelativeState, geom: VehicleGeometry
) -> tuple[Corner, Corner, Corner, Corner]:
    """Footprint corners in the ego frame for a target at rel."""
    c = math.cos(rel.psi)
    s = math.sin(rel.psi)
    ox, oy = geom.ref_to_center
    half_l = 0.5 * geom.length
    half_w = 0.5 * geom.width
    corners = []
    for sx, sy in _CORNER_SIGNS:
        bx = ox + sx * half_l
        by = oy + sy * half_w
        corners.append((rel.x + bx * c - by * s, rel.y + bx * s + by * c))
    return tuple(corners)


def make_stamps(rate: float, t0: float, t1: float) -> np.ndarray:
    """Evenly spaced stamps at the given rate starting at t0, within [t0, t1]."""
    if not (math.isfinite(rate) and rate > 0.0):
        raise ValueError(f"rate must be positive, got {rate}")
    if t1 < t0:
        raise ValueError(f"empty window: [{t0}, {t1}]")
    count = int(math.floor((t1 - t0) * rate + 1e-9))
    return t0 + np.arange(count + 1) / rate


def read_stamps(source: str | Path | IO[str]) -> np.ndarray:
    """Stamp file: one float per line, blank lines ignored."""
    if isinstance(source, (str, Path)):
        with Path(source).open("r") as stream:
            return read_stamps(stream)
    values = []
    for line_no, line in enumerate(source, start=1):
        text = line.strip()
        if not text:
            continue
        try:
            value = float(text)
        except ValueError:
            raise ParseError(f"bad stamp {text!r}", line_no)
        if not math.isfinite(value):
            raise ParseError(f"stamp must be finite, got {text!r}", line_no)
        values.append(value)
    if not values:
        raise ParseError("stamp file has no values", line=1)
    return np.array(values)


def _geometry_for(
    geometry: VehicleGeometry | Mapping[str, VehicleGeometry], target_id: str
) -> VehicleGeometry:
    if isinstance(geometry, VehicleGeometry):
        return geometry
    try:
        return geometry[target_id]
    except KeyError:
        raise ValueError(f"no geometry given for target {target_id!r}")


def _check_zones(trajectories: Sequence[Trajectory]) -> None:
    zones = {t.zone for t in trajectories if t.zone is not None}
    if len(zones) > 1:
        raise ZoneMismatch(
            f"trajectories live in different UTM zones: {sorted(zones)}"
        )
    hemis = {t.hemisphere for t in trajectories if t.hemisphere is not None}
    if len(hemis) > 1:
        raise ZoneMismatch(
            f"trajectories live in different hemispheres: {sorted(hemis)}"
        )


def generate_records(
    ego: Trajectory,
    targets: Sequence[Trajectory],
    stamps,
    geometry: VehicleGeometry | Mapping[str, VehicleGeometry],
    clocks: Mapping[str, ClockModel] | None = None,
    noise: NoiseModel | None = None,
    envelope: ScenarioEnvelope | None = None,
    convention: str = DEFAULT_CONVENTION,
) -> list[GroundTruthRecord]:
    """Produce ground-truth records for every (stamp, target) pair.

    Clock corrections are applied per vehicle id before interpolation.
    Every stamp must lie in every trajectory's support (OutOfSupport names
    the offenders otherwise). Bounds are dataset-level constants computed
    once from noise + envelope; passing a noise model without an envelope
    is an error. Records come back sorted by (t, target_id).
    """
    if not targets:
        raise ValueError("need at least one target trajectory")
    ids = [t.vehicle_id for t in targets]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate target ids: {ids}")
    if ego.vehicle_id in ids:
        raise ValueError(f"ego id {ego.vehicle_id!r} also appears as a target")
    if noise is not None and envelope is None:
        raise ValueError("a noise model needs a scenario envelope to form bounds")
    _check_zones([ego, *targets])

    def corrected(traj: Trajectory) -> Trajectory:
        if clocks and traj.vehicle_id in clocks:
            return apply_clock_model(traj, clocks[traj.vehicle_id])
        return traj

    stamp_arr = np.sort(np.asarray(stamps, dtype=float).ravel())
    if stamp_arr.size == 0:
        raise ValueError("no stamps given")

    ego_states = build_interpolant(corrected(ego)).states_at(stamp_arr)

    pos_b = vel_b = None
    yaw_v = None
    if noise is not None:
        assert envelope is not None
        pos_b = position_bound(noise, envelope, convention)
        vel_b = velocity_bound(noise, envelope, convention)
        yaw_v = yaw_variance(noise)

    records: list[GroundTruthRecord] = []
    for target in targets:
        target_states = build_interpolant(corrected(target)).states_at(stamp_arr)
        geom = _geometry_for(geometry, target.vehicle_id)
        for ego_state, target_state in zip(ego_states, target_states):
            rel = relative_state(ego_state, target_state)
            records.append(
                GroundTruthRecord(
                    t=ego_state.t,
                    target_id=target.vehicle_id,
                    rel=rel,
                    bbox=bbox_footprint(rel, geom),
                    pos_bound=pos_b,
                    vel_bound=vel_b,
                    yaw_var=yaw_v,
                )
            )
    records.sort(key=lambda r: (r.t, r.target_id))
    return records


def _cov_json(cov: CovBound2) -> str:
    return (
        f'{{"a": {fmt_float(cov.a)}, "b": {fmt_float(cov.b)}, '
        f'"c": {fmt_float(cov.c)}}}'
    )


def record_to_json(record: GroundTruthRecord) -> str:
    """One record as a JSON object string, fixed key order, floats at 9
    significant digits."""
    f = fmt_float
    corners = ", ".join(f"[{f(x)}, {f(y)}]" for x, y in record.bbox)
    parts = [
        f'"t": {f(record.t)}',
        f'"target_id": {json.dumps(record.target_id)}',
        f'"x": {f(record.rel.x)}',
        f'"y": {f(record.rel.y)}',
        f'"vx": {f(record.rel.vx)}',
        f'"vy": {f(record.rel.vy)}',
        f'"psi": {f(record.rel.psi)}',
        f'"bbox": [{corners}]',
    ]
    if record.pos_bound is not None:
        parts.append(f'"pos_bound": {_cov_json(record.pos_bound)}')
        parts.append(f'"vel_bound": {_cov_json(record.vel_bound)}')
        parts.append(f'"yaw_var": {f(record.yaw_var)}')
    return "{" + ", ".join(parts) + "}"


def write_records_jsonl(
    records: Sequence[GroundTruthRecord], dest: str | Path | IO[str]
) -> None:
    if isinstance(dest, (str, Path)):
        with Path(dest).open("w", newline="") as stream:
            write_records_jsonl(records, stream)
        return
    for record in records:
        dest.write(record_to_json(record) + "\n")


def read_records_jsonl(source: str | Path | IO[str]) -> list[GroundTruthRecord]:
    if isinstance(source, (str, Path)):
        with Path(source).open("r") as stream:
            return read_records_jsonl(stream)
    records = []
    for line_no, line in enumerate(source, start=1):
        text = line.strip()
        if not text:
            continue
        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise ParseError(f"invalid JSON: {err}", line_no)
        try:
            rel = RelativeState(
                x=data["x"], y=data["y"], vx=data["vx"], vy=data["vy"],
                psi=data["psi"],
            )
            bounds = {}
            if "pos_bound" in data:
                bounds = {
                    "pos_bound": CovBound2(**data["pos_bound"]),
                    "vel_bound": CovBound2(**data["vel_bound"]),
                    "yaw_var": float(data["yaw_var"]),
                }
            records.append(
                GroundTruthRecord(
                    t=float(data["t"]),
                    target_id=str(data["target_id"]),
                    rel=rel,
                    bbox=tuple((float(x), float(y)) for x, y in data["bbox"]),
                    **bounds,
                )
            )
        except (KeyError, TypeError, ValueError) as err:
            raise ParseError(f"bad record: {err}", line_no)
    return records
