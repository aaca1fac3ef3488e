"""Synthetic multi-vehicle scenarios with analytically known kinematics.

Vehicles drive a stadium track (two straights joined by two half-circles)
following piecewise-linear speed profiles, so position, velocity, yaw and
yaw rate are available in closed form at any time. Logs sampled from these
runs can be corrupted with the standard per-channel Gaussian noise and an
affine clock error, giving test data whose ground truth is exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from ._util import derived_rng
from .egokin import wrap_angle
from .errors import ParseError
from .trajlog import ClockModel, Trajectory, TrajectorySample, apply_clock_model
from .uncert import NoiseModel, noise_model_from_mapping

# Defaults give a 3.2 km lap: 2 x 1100 m straights + 1 km of curve.
DEFAULT_STRAIGHT_LEN = 1100.0
DEFAULT_CURVE_RADIUS = 1000.0 / math.tau


def _positive(name: str, value: float) -> None:
    if not (math.isfinite(value) and value > 0.0):
        raise ValueError(f"{name} must be positive and finite, got {value}")


@dataclass(frozen=True)
class TrackSpec:
    straight_len: float = DEFAULT_STRAIGHT_LEN
    curve_radius: float = DEFAULT_CURVE_RADIUS

    def __post_init__(self) -> None:
        _positive("straight_len", self.straight_len)
        _positive("curve_radius", self.curve_radius)

    @property
    def total_length(self) -> float:
        return 2.0 * self.straight_len + math.tau * self.curve_radius


class StadiumTrack:
    """Closed counter-clockwise stadium, parameterized by arc length.

    Starts at the origin heading +x along the first straight; the first
    half-circle turns left. Headings are continuous in arc length (one lap
    adds 2 pi), curvature is 0 on straights and 1/radius on curves.
    """

    def __init__(self, spec: TrackSpec):
        self.spec = spec
        self.length = spec.total_length

    def frame_at(self, s) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(x, y, heading, curvature) at arc positions s (array-valued)."""
        s = np.asarray(s, dtype=float)
        ls = self.spec.straight_len
        r = self.spec.curve_radius
        lap, u = np.divmod(s, self.length)

        x = np.empty_like(u)
        y = np.empty_like(u)
        heading = np.empty_like(u)
        curvature = np.zeros_like(u)

        b0 = ls                       # end of first straight
        b1 = ls + math.pi * r         # end of first curve
        b2 = 2.0 * ls + math.pi * r   # end of second straight

        m = u < b0
        x[m] = u[m]
        y[m] = 0.0
        heading[m] = 0.0

        m = (u >= b0) & (u < b1)
        phi = (u[m] - b0) / r
        x[m] = ls + r * np.sin(phi)
        y[m] = r - r * np.cos(phi)
        heading[m] = phi
        curvature[m] = 1.0 / r

        m = (u >= b1) & (u < b2)
        d = u[m] - b1
        x[m] = ls - d
        y[m] = 2.0 * r
        heading[m] = math.pi

        m = u >= b2
        phi = (u[m] - b2) / r
        x[m] = -r * np.sin(phi)
        y[m] = r + r * np.cos(phi)
        heading[m] = math.pi + phi
        curvature[m] = 1.0 / r

        return x, y, heading + math.tau * lap, curvature

    def point_at(self, s: float) -> tuple[float, float]:
        x, y, _, _ = self.frame_at(s)
        return float(x), float(y)

    def heading_at(self, s: float) -> float:
        return float(self.frame_at(s)[2])

    def curvature_at(self, s: float) -> float:
        return float(self.frame_at(s)[3])


def make_track(spec: TrackSpec | None = None) -> StadiumTrack:
    return StadiumTrack(spec if spec is not None else TrackSpec())


@dataclass(frozen=True)
class RunSpec:
    """One vehicle's schedule on the track.

    speed_profile is a tuple of (time, speed) knots; speed is interpolated
    linearly between knots and held constant outside them, so plateaus with
    linear ramps are expressed directly and travelled distance integrates
    exactly. start_offset is the arc position at t = 0.
    """

    duration: float
    rate: float
    speed_profile: tuple[tuple[float, float], ...]
    start_offset: float = 0.0

    def __post_init__(self) -> None:
        _positive("duration", self.duration)
        _positive("rate", self.rate)
        if not math.isfinite(self.start_offset):
            raise ValueError("start_offset must be finite")
        profile = tuple((float(t), float(v)) for t, v in self.speed_profile)
        if not profile:
            raise ValueError("speed_profile must have at least one knot")
        for i, (t, v) in enumerate(profile):
            if not (math.isfinite(t) and math.isfinite(v)):
                raise ValueError("speed_profile knots must be finite")
            if v < 0.0:
                raise ValueError(f"speeds must be >= 0, got {v}")
            if i and t <= profile[i - 1][0]:
                raise ValueError("speed_profile times must increase strictly")
        object.__setattr__(self, "speed_profile", profile)

    def speed_at(self, t) -> np.ndarray:
        times = np.array([k[0] for k in self.speed_profile])
        speeds = np.array([k[1] for k in self.speed_profile])
        return np.interp(np.asarray(t, dtype=float), times, speeds)

    def distance_at(self, t) -> np.ndarray | float:
        """Exact arc length travelled between time 0 and t (quadrature-free:
        the profile is piecewise linear, so the integral is piecewise
        quadratic)."""
        times = np.array([k[0] for k in self.speed_profile])
        speeds = np.array([k[1] for k in self.speed_profile])
        knot_area = np.concatenate(
            ([0.0], np.cumsum(0.5 * (speeds[1:] + speeds[:-1]) * np.diff(times)))
        )

        def anti(tt: np.ndarray) -> np.ndarray:
            out = np.empty_like(tt)
            before = tt <= times[0]
            out[before] = speeds[0] * (tt[before] - times[0])
            after = tt >= times[-1]
            out[after] = knot_area[-1] + speeds[-1] * (tt[after] - times[-1])
            mid = ~(before | after)
            if np.any(mid):
                idx = np.searchsorted(times, tt[mid], side="right") - 1
                tm = tt[mid]
                v0 = speeds[idx]
                v1 = np.interp(tm, times, speeds)
                out[mid] = knot_area[idx] + 0.5 * (v0 + v1) * (tm - times[idx])
            return out

        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = anti(t) - anti(np.zeros(1))
        return float(out[0]) if scalar else out


def run_states(track: StadiumTrack, run: RunSpec, times) -> list[TrajectorySample]:
    """Closed-form vehicle states at the given times."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    s = run.start_offset + run.distance_at(t)
    v = run.speed_at(t)
    x, y, heading, curvature = track.frame_at(s)
    vx = v * np.cos(heading)
    vy = v * np.sin(heading)
    psi = wrap_angle(heading)
    psi_dot = curvature * v
    return [
        TrajectorySample(
            t=float(t[i]), x=float(x[i]), y=float(y[i]),
            vx=float(vx[i]), vy=float(vy[i]),
            psi=float(psi[i]), psi_dot=float(psi_dot[i]),
        )
        for i in range(t.size)
    ]


def state_of(track: StadiumTrack, run: RunSpec, t: float) -> TrajectorySample:
    return run_states(track, run, [t])[0]


def sample_times(run: RunSpec) -> np.ndarray:
    count = int(math.floor(run.duration * run.rate + 1e-9))
    return np.arange(count + 1) / run.rate


def simulate_run(
    track: StadiumTrack, run: RunSpec, vehicle_id: str = "vehicle"
) -> Trajectory:
    """Noise-free log of one run, sampled at the run's rate from t = 0."""
    samples = run_states(track, run, sample_times(run))
    return Trajectory(vehicle_id=vehicle_id, samples=tuple(samples))


def straight_trajectory(
    vehicle_id: str,
    start: tuple[float, float],
    heading: float,
    speed: float,
    duration: float,
    rate: float,
) -> Trajectory:
    """Constant-velocity straight-line log (speed 0 gives a parked vehicle).

    Covers alignment and clock studies that need motion geometry the
    closed track cannot produce, e.g. two vehicles approaching head-on.
    """
    _positive("duration", duration)
    _positive("rate", rate)
    if speed < 0.0 or not math.isfinite(speed):
        raise ValueError(f"speed must be >= 0 and finite, got {speed}")
    count = int(math.floor(duration * rate + 1e-9))
    t = np.arange(count + 1) / rate
    psi = wrap_angle(float(heading))
    vx = speed * math.cos(psi)
    vy = speed * math.sin(psi)
    samples = tuple(
        TrajectorySample(
            t=float(tk), x=start[0] + vx * float(tk), y=start[1] + vy * float(tk),
            vx=vx, vy=vy, psi=psi, psi_dot=0.0,
        )
        for tk in t
    )
    return Trajectory(vehicle_id=vehicle_id, samples=samples)


def corrupt(
    traj: Trajectory,
    nm: NoiseModel | None,
    clock: ClockModel | None = None,
    seed: int = 0,
    stream: int = 0,
) -> Trajectory:
    """Simulate an imperfect log: white Gaussian noise per channel, then the
    clock model. Deterministic for fixed (seed, stream); zero noise and no
    clock reproduce the input exactly.
    """
    out = traj
    if nm is not None:
        rng = derived_rng(seed, stream)
        n = len(traj)
        ex = rng.normal(0.0, nm.sigma_pos, n)
        ey = rng.normal(0.0, nm.sigma_pos, n)
        evx = rng.normal(0.0, nm.sigma_vel, n)
        evy = rng.normal(0.0, nm.sigma_vel, n)
        epsi = rng.normal(0.0, nm.sigma_psi, n)
        erate = rng.normal(0.0, nm.sigma_psi_dot, n)
        samples = tuple(
            replace(
                s,
                x=s.x + ex[i], y=s.y + ey[i],
                vx=s.vx + evx[i], vy=s.vy + evy[i],
                psi=wrap_angle(s.psi + epsi[i]),
                psi_dot=None if s.psi_dot is None else s.psi_dot + erate[i],
            )
            for i, s in enumerate(traj.samples)
        )
        out = replace(traj, samples=samples)
    if clock is not None:
        out = apply_clock_model(out, clock)
    return out


@dataclass(frozen=True)
class VehicleRun:
    vehicle_id: str
    run: RunSpec
    clock: ClockModel | None = None


@dataclass(frozen=True)
class Scenario:
    """A full synthetic session: track, one run per vehicle, optional noise
    model (shared) and per-vehicle clock errors, one master seed."""

    track: TrackSpec
    vehicles: tuple[VehicleRun, ...]
    noise: NoiseModel | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.vehicles:
            raise ValueError("scenario needs at least one vehicle")
        ids = [v.vehicle_id for v in self.vehicles]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate vehicle ids in scenario: {ids}")


def run_scenario(scenario: Scenario) -> dict[str, tuple[Trajectory, Trajectory]]:
    """Simulate every vehicle; returns id -> (clean log, recorded log).

    The recorded log carries the scenario noise and the vehicle's clock
    error. Noise streams are derived per vehicle index from the scenario
    seed, so output is deterministic regardless of evaluation order.
    """
    track = make_track(scenario.track)
    out: dict[str, tuple[Trajectory, Trajectory]] = {}
    for index, vehicle in enumerate(scenario.vehicles):
        clean = simulate_run(track, vehicle.run, vehicle_id=vehicle.vehicle_id)
        recorded = corrupt(
            clean, scenario.noise, vehicle.clock, seed=scenario.seed, stream=index
        )
        out[vehicle.vehicle_id] = (clean, recorded)
    return out


def make_lead_follow(
    gap: float,
    speed: float,
    duration: float,
    rate: float,
    track: TrackSpec | None = None,
    noise: NoiseModel | None = None,
    seed: int = 0,
) -> Scenario:
    """Two vehicles on the same track at the same speed, the lead ahead by
    a fixed arc gap. The stock validation scenario."""
    _positive("gap", gap)
    run = RunSpec(duration=duration, rate=rate, speed_profile=((0.0, speed),))
    lead = RunSpec(
        duration=duration, rate=rate, speed_profile=((0.0, speed),),
        start_offset=gap,
    )
    return Scenario(
        track=track if track is not None else TrackSpec(),
        vehicles=(
            VehicleRun("ego", run),
            VehicleRun("lead", lead),
        ),
        noise=noise,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Scenario JSON configs.

def _require(data: Mapping, key: str, source: str):
    if key not in data:
        raise ParseError(f"{source}: missing required field {key!r}")
    return data[key]


def scenario_from_mapping(data: Mapping, source: str = "scenario") -> Scenario:
    try:
        track_data = data.get("track", {})
        track = TrackSpec(
            straight_len=float(track_data.get("straight_len", DEFAULT_STRAIGHT_LEN)),
            curve_radius=float(track_data.get("curve_radius", DEFAULT_CURVE_RADIUS)),
        )
        noise = None
        if data.get("noise") is not None:
            noise = noise_model_from_mapping(data["noise"], source=f"{source}.noise")
        vehicles = []
        for i, v in enumerate(_require(data, "vehicles", source)):
            where = f"{source}.vehicles[{i}]"
            profile = tuple(
                (float(t), float(s)) for t, s in _require(v, "speed_profile", where)
            )
            run = RunSpec(
                duration=float(_require(v, "duration", where)),
                rate=float(_require(v, "rate", where)),
                speed_profile=profile,
                start_offset=float(v.get("start_offset", 0.0)),
            )
            clock = None
            if v.get("clock") is not None:
                clock = ClockModel(
                    offset=float(v["clock"].get("offset", 0.0)),
                    drift=float(v["clock"].get("drift", 0.0)),
                )
            vehicles.append(VehicleRun(str(_require(v, "id", where)), run, clock))
        return Scenario(
            track=track,
            vehicles=tuple(vehicles),
            noise=noise,
            seed=int(data.get("seed", 0)),
        )
    except ParseError:
        raise
    except (TypeError, ValueError, KeyError) as err:
        raise ParseError(f"{source}: {err}")


def load_scenario(path: str | Path) -> Scenario:
    try:
        with Path(path).open("r") as stream:
            data = json.load(stream)
    except json.JSONDecodeError as err:
        raise ParseError(f"{path}: invalid JSON: {err}")
    if not isinstance(data, dict):
        raise ParseError(f"{path}: expected a JSON object")
    return scenario_from_mapping(data, source=str(path))
