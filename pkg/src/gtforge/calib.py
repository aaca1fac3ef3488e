"""Planar hand-eye calibration between two rigidly linked pose streams.

Given synchronized SE(2) pose streams of a sensor and the vehicle's
reference unit, the fixed transform X between them satisfies A_i X = X B_i
for every pair of relative motions A_i, B_i. In the plane rotations
commute, so the rotation parts only require the two motion streams to turn
by the same angle (reported as a consistency residual); the translation
and the rotation of X come from one linear least-squares problem over
(t_x, t_y, cos theta, sin theta), followed by renormalization onto the
unit circle and a translation-only re-solve.

Pose stream CSVs carry columns t,x,y,theta (seconds, metres, radians).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .egokin import wrap_angle
from .errors import (
    DegenerateMotion,
    LengthMismatch,
    MissingColumn,
    NonMonotonicTimestamps,
    ParseError,
    TooFewPoses,
)

POSE_COLUMNS = ("t", "x", "y", "theta")

# Minimum summed |rotation| for the translation part to be observable.
MIN_TOTAL_ROTATION = 0.1


@dataclass(frozen=True)
class RigidTransform2D:
    """SE(2) element: rotation by theta then translation by (tx, ty)."""

    theta: float
    tx: float
    ty: float

    def __post_init__(self) -> None:
        for name in ("theta", "tx", "ty"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def apply(self, point: tuple[float, float]) -> tuple[float, float]:
        c = math.cos(self.theta)
        s = math.sin(self.theta)
        x, y = point
        return (c * x - s * y + self.tx, s * x + c * y + self.ty)

    def compose(self, other: "RigidTransform2D") -> "RigidTransform2D":
        """self applied after other: (self * other)(p) = self(other(p))."""
        x, y = self.apply((other.tx, other.ty))
        return RigidTransform2D(self.theta + other.theta, x, y)

    def inverse(self) -> "RigidTransform2D":
        c = math.cos(self.theta)
        s = math.sin(self.theta)
        return RigidTransform2D(
            -self.theta, -(c * self.tx + s * self.ty), -(-s * self.tx + c * self.ty)
        )


@dataclass(frozen=True)
class MotionIncrement:
    """Pose i -> i+1 expressed in frame i: rotate by dtheta, move by (dx, dy)."""

    dtheta: float
    dx: float
    dy: float


def relative_motions(poses: Sequence | np.ndarray) -> list[MotionIncrement]:
    """Successive relative motions of a pose stream.

    poses: array-like of rows (x, y, theta) or (t, x, y, theta); a leading
    time column is ignored. Needs at least two poses.
    """
    arr = np.asarray(poses, dtype=float)
    if arr.ndim != 2 or arr.shape[1] not in (3, 4):
        raise ValueError(
            f"poses must be rows of (x, y, theta) or (t, x, y, theta), "
            f"got shape {arr.shape}"
        )
    if arr.shape[1] == 4:
        arr = arr[:, 1:]
    if arr.shape[0] < 2:
        raise TooFewPoses(f"need at least 2 poses, got {arr.shape[0]}")
    out = []
    for i in range(arr.shape[0] - 1):
        x0, y0, th0 = arr[i]
        x1, y1, th1 = arr[i + 1]
        c = math.cos(th0)
        s = math.sin(th0)
        ux = x1 - x0
        uy = y1 - y0
        out.append(
            MotionIncrement(
                dtheta=wrap_angle(th1 - th0),
                dx=c * ux + s * uy,
                dy=-s * ux + c * uy,
            )
        )
    return out


@dataclass(frozen=True)
class HandEyeResult:
    transform: RigidTransform2D
    rotation_residual_rms: float
    translation_residual_rms: float
    n_increments: int
    total_rotation: float


def solve_hand_eye(
    a: Sequence[MotionIncrement], b: Sequence[MotionIncrement]
) -> HandEyeResult:
    """Estimate X with A_i X = X B_i from paired motion streams.

    Stacks, per increment, (R(dtheta_a_i) - I) t - M(u_b_i) [cos, sin]^T
    = -u_a_i with M(u) = [[u_x, -u_y], [u_y, u_x]], solves by least
    squares, renormalizes (cos, sin) and re-solves the translation with the
    rotation fixed. Raises DegenerateMotion when the summed |rotation| of
    stream a is below 0.1 rad (the translation is then unobservable).
    """
    if len(a) != len(b):
        raise LengthMismatch(
            f"paired motion streams differ in length: {len(a)} vs {len(b)}"
        )
    if len(a) < 2:
        raise TooFewPoses(f"need at least 2 motion increments, got {len(a)}")
    total_rotation = float(sum(abs(m.dtheta) for m in a))
    if total_rotation < MIN_TOTAL_ROTATION:
        raise DegenerateMotion(
            f"total |rotation| {total_rotation:.4f} rad is below "
            f"{MIN_TOTAL_ROTATION}; translation unobservable"
        )

    k = len(a)
    rot_res = np.array([wrap_angle(a[i].dtheta - b[i].dtheta) for i in range(k)])

    lhs = np.zeros((2 * k, 4))
    rhs = np.zeros(2 * k)
    for i, (ma, mb) in enumerate(zip(a, b)):
        c = math.cos(ma.dtheta)
        s = math.sin(ma.dtheta)
        r = 2 * i
        lhs[r, 0] = c - 1.0
        lhs[r, 1] = -s
        lhs[r + 1, 0] = s
        lhs[r + 1, 1] = c - 1.0
        lhs[r, 2] = -mb.dx
        lhs[r, 3] = mb.dy
        lhs[r + 1, 2] = -mb.dy
        lhs[r + 1, 3] = -mb.dx
        rhs[r] = -ma.dx
        rhs[r + 1] = -ma.dy
    solution, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    norm = math.hypot(solution[2], solution[3])
    if norm == 0.0:
        raise DegenerateMotion("rotation estimate collapsed to zero")
    theta = math.atan2(solution[3], solution[2])

    # Fix the rotation on the unit circle, re-solve the translation alone.
    c_x = math.cos(theta)
    s_x = math.sin(theta)
    lhs_t = lhs[:, :2]
    rhs_t = np.zeros(2 * k)
    for i, (ma, mb) in enumerate(zip(a, b)):
        r = 2 * i
        rhs_t[r] = c_x * mb.dx - s_x * mb.dy - ma.dx
        rhs_t[r + 1] = s_x * mb.dx + c_x * mb.dy - ma.dy
    translation, *_ = np.linalg.lstsq(lhs_t, rhs_t, rcond=None)
    residual = lhs_t @ translation - rhs_t
    trans_rms = float(
        np.sqrt(np.mean(np.sum(residual.reshape(-1, 2) ** 2, axis=1)))
    )

    return HandEyeResult(
        transform=RigidTransform2D(theta, float(translation[0]), float(translation[1])),
        rotation_residual_rms=float(np.sqrt(np.mean(rot_res**2))),
        translation_residual_rms=trans_rms,
        n_increments=k,
        total_rotation=total_rotation,
    )


def parse_pose_stream(source: str | Path | IO[str]) -> np.ndarray:
    """Pose CSV (t,x,y,theta) as an (N, 4) array, timestamps ascending."""
    if isinstance(source, (str, Path)):
        with Path(source).open("r", newline="") as stream:
            return parse_pose_stream(stream)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file", line=1)
    positions = {name.strip(): i for i, name in enumerate(header)}
    for name in POSE_COLUMNS:
        if name not in positions:
            raise MissingColumn(f"missing column {name!r} in header {header}", line=1)
    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(cell.strip() == "" for cell in row):
            continue
        try:
            values = [float(row[positions[name]]) for name in POSE_COLUMNS]
        except (ValueError, IndexError):
            raise ParseError(f"bad pose row {row!r}", line_no)
        if not all(math.isfinite(v) for v in values):
            raise ParseError(f"pose row has non-finite values: {row!r}", line_no)
        rows.append(values)
    if len(rows) < 2:
        raise TooFewPoses(f"need at least 2 poses, got {len(rows)}")
    arr = np.array(rows)
    if np.any(np.diff(arr[:, 0]) <= 0.0):
        raise NonMonotonicTimestamps("pose timestamps must increase strictly")
    return arr


def write_pose_stream(poses: np.ndarray, dest: str | Path | IO[str]) -> None:
    """Write an (N, 4) pose array as a t,x,y,theta CSV."""
    if isinstance(dest, (str, Path)):
        with Path(dest).open("w", newline="") as stream:
            write_pose_stream(poses, stream)
        return
    dest.write(",".join(POSE_COLUMNS) + "\n")
    for row in np.asarray(poses, dtype=float):
        dest.write(",".join(repr(float(v)) for v in row) + "\n")
