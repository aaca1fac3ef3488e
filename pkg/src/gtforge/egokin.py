"""Relative kinematics of a target vehicle in the rotating ego frame.

Both vehicles live in one projected Cartesian plane (east x, north y, yaw
psi CCW from East). The ego frame has its x axis along the ego yaw; because
that frame rotates at the ego yaw rate, relative velocity picks up the
familiar transport terms +psi_dot*dy / -psi_dot*dx before rotation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, overload

import numpy as np

from .errors import MissingYawRate

if TYPE_CHECKING:
    from .trajlog import TrajectorySample

_TWO_PI = 2.0 * math.pi


@overload
def wrap_angle(angle: float) -> float: ...
@overload
def wrap_angle(angle: np.ndarray) -> np.ndarray: ...


def wrap_angle(angle):
    """Wrap an angle (scalar or array) into (-pi, pi].

    Values already inside the interval are returned unchanged, bit for bit.
    """
    if np.ndim(angle) == 0:
        a = float(angle)
        if -math.pi < a <= math.pi:
            return a
        w = (a + math.pi) % _TWO_PI - math.pi
        return math.pi if w == -math.pi else w
    arr = np.asarray(angle, dtype=float)
    wrapped = np.mod(arr + math.pi, _TWO_PI) - math.pi
    wrapped = np.where(wrapped == -math.pi, math.pi, wrapped)
    inside = (arr > -math.pi) & (arr <= math.pi)
    return np.where(inside, arr, wrapped)


@dataclass(frozen=True)
class RelativeState:
    """Target kinematics expressed in the ego frame at one instant.

    x points along the ego yaw, y to its left; vx, vy are the apparent
    velocity in that rotating frame and psi the relative yaw in (-pi, pi].
    """

    x: float
    y: float
    vx: float
    vy: float
    psi: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "vx", "vy", "psi"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not -math.pi < self.psi <= math.pi:
            raise ValueError(f"psi must lie in (-pi, pi], got {self.psi}")


def relative_position(
    ego: "TrajectorySample", target: "TrajectorySample"
) -> tuple[float, float]:
    """Target position in the ego frame: R(-psi_ego) applied to the offset."""
    dx = target.x - ego.x
    dy = target.y - ego.y
    c = math.cos(ego.psi)
    s = math.sin(ego.psi)
    return dx * c + dy * s, dy * c - dx * s


def relative_velocity(
    ego: "TrajectorySample", target: "TrajectorySample"
) -> tuple[float, float]:
    """Apparent target velocity in the rotating ego frame.

    Needs the ego yaw rate for the transport terms; raises MissingYawRate
    when absent.
    """
    if ego.psi_dot is None:
        raise MissingYawRate(
            f"ego sample at t={ego.t} has no yaw rate; relative velocity "
            "in a rotating frame is undefined without it"
        )
    dx = target.x - ego.x
    dy = target.y - ego.y
    dvx = target.vx - ego.vx + ego.psi_dot * dy
    dvy = target.vy - ego.vy - ego.psi_dot * dx
    c = math.cos(ego.psi)
    s = math.sin(ego.psi)
    return dvx * c + dvy * s, dvy * c - dvx * s


def relative_yaw(ego: "TrajectorySample", target: "TrajectorySample") -> float:
    return wrap_angle(target.psi - ego.psi)


def relative_state(
    ego: "TrajectorySample", target: "TrajectorySample"
) -> RelativeState:
    x, y = relative_position(ego, target)
    vx, vy = relative_velocity(ego, target)
    return RelativeState(x=x, y=y, vx=vx, vy=vy, psi=relative_yaw(ego, target))


def utm_from_relative(ego: "TrajectorySample", rel: RelativeState):
    """Rebuild the target's world-frame state from an ego-frame observation.

    Inverse of relative_state given the same ego sample. The returned
    sample has no yaw rate (a single relative observation does not carry
    the target's own psi_dot).
    """
    from .trajlog import TrajectorySample

    if ego.psi_dot is None:
        raise MissingYawRate("ego sample has no yaw rate")
    c = math.cos(ego.psi)
    s = math.sin(ego.psi)
    dx = rel.x * c - rel.y * s
    dy = rel.x * s + rel.y * c
    u = rel.vx * c - rel.vy * s
    v = rel.vx * s + rel.vy * c
    return TrajectorySample(
        t=ego.t,
        x=ego.x + dx,
        y=ego.y + dy,
        vx=ego.vx + u - ego.psi_dot * dy,
        vy=ego.vy + v + ego.psi_dot * dx,
        psi=wrap_angle(rel.psi + ego.psi),
    )
