"""Uncertainty propagation through the ego-frame transformation.

Positioning noise is modelled as independent zero-mean Gaussians per
channel and per vehicle. Because the transformation rotates by the noisy
ego yaw, cosines and sines of Gaussian angles appear everywhere; their
moments are available in closed form, which gives an exact covariance for
the relative position and worst-case bounds (over a scenario envelope) for
position, velocity and yaw.

Two exponent conventions exist for the e^{-sigma_psi^2} decay factors in
the bound formulas. "half_exponent" (the default) halves the exponent in
the diagonal position/velocity entries and reproduces the headline bound
figures this bound family is known by; "printed" keeps the plain exponent
and yields slightly looser diagonals. Both dominate the exact covariance
for small heading noise; the half variant is a reporting convention, not a
tighter theorem, so certification checks against random configurations use
the printed form.

Every Monte Carlo routine is deterministic: work is split into fixed-size
batches, each drawing from its own (seed, batch-index) stream, and batch
statistics are merged in index order. Results are therefore independent of
worker count (GT_FORGE_THREADS) and reproducible bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import MISSING, dataclass, fields
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from ._util import derived_rng, ordered_map
from .egokin import wrap_angle
from .errors import ParseError
from .trajlog import TrajectorySample

HALF_EXPONENT = "half_exponent"
PRINTED = "printed"
CONVENTIONS = (HALF_EXPONENT, PRINTED)
DEFAULT_CONVENTION = HALF_EXPONENT

MC_BATCH_SIZE = 100_000
MIN_BATCHES = 25


def _exponent_scale(convention: str) -> float:
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}, got {convention!r}")
    return 0.5 if convention == HALF_EXPONENT else 1.0


def _positive(name: str, value: float) -> None:
    if not (math.isfinite(value) and value > 0.0):
        raise ValueError(f"{name} must be positive and finite, got {value}")


def _nonnegative(name: str, value: float) -> None:
    if not (math.isfinite(value) and value >= 0.0):
        raise ValueError(f"{name} must be >= 0 and finite, got {value}")


@dataclass(frozen=True)
class NoiseModel:
    """Per-channel 1-sigma accuracies of one vehicle's positioning output.

    sigma_pos applies to each position axis, sigma_vel to each velocity
    axis, sigma_psi to yaw and sigma_psi_dot to yaw rate (all SI).
    clock_offset_std describes residual synchronization error and is kept
    for scenario bookkeeping; it does not enter the covariance formulas.
    """

    sigma_pos: float
    sigma_vel: float
    sigma_psi: float
    sigma_psi_dot: float = 1.75e-3
    clock_offset_std: float = 0.0

    def __post_init__(self) -> None:
        for f in fields(self):
            _nonnegative(f.name, getattr(self, f.name))


@dataclass(frozen=True)
class ScenarioEnvelope:
    """Worst-case magnitudes the bounds are taken over: relative distance
    per axis, relative speed per axis, and ego yaw rate."""

    d_max: float
    v_max: float
    psi_dot_max: float

    def __post_init__(self) -> None:
        for f in fields(self):
            _positive(f.name, getattr(self, f.name))


@dataclass(frozen=True)
class GaussianMoments:
    """Mean and standard deviation of one scalar Gaussian."""

    mean: float
    std: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.mean):
            raise ValueError("mean must be finite")
        _nonnegative("std", self.std)


@dataclass(frozen=True)
class CovBound2:
    """Symmetric 2x2 covariance (or bound) as entries a=Var(x), b=Var(y),
    c=Cov(x, y). Bound variants need not be positive semidefinite."""

    a: float
    b: float
    c: float

    def __post_init__(self) -> None:
        _nonnegative("a", self.a)
        _nonnegative("b", self.b)
        if not math.isfinite(self.c):
            raise ValueError("c must be finite")

    @property
    def is_positive_semidefinite(self) -> bool:
        return self.c * self.c <= self.a * self.b * (1.0 + 1e-12) + 1e-300


@dataclass(frozen=True)
class TrigMoments:
    """First and second moments of (cos W, sin W) for Gaussian W."""

    e_cos: float
    e_sin: float
    var_cos: float
    var_sin: float
    cov_cos_sin: float


def trig_moments(omega: GaussianMoments) -> TrigMoments:
    """Closed-form moments of cos/sin of a Gaussian angle.

    E cos W = cos(m) e^{-s^2/2} and E sin W = sin(m) e^{-s^2/2}; the second
    moments follow from E cos 2W = cos(2m) e^{-2 s^2} via the double-angle
    identities.
    """
    m, s2 = omega.mean, omega.std**2
    damp = math.exp(-s2 / 2.0)
    damp2 = math.exp(-2.0 * s2)
    e_cos = math.cos(m) * damp
    e_sin = math.sin(m) * damp
    cos2 = math.cos(2.0 * m) * damp2
    var_cos = 0.5 * (1.0 + cos2) - e_cos**2
    var_sin = 0.5 * (1.0 - cos2) - e_sin**2
    cov = 0.5 * math.sin(2.0 * m) * damp2 - e_cos * e_sin
    return TrigMoments(e_cos, e_sin, var_cos, var_sin, cov)


def position_covariance_exact(
    dx_mean: float,
    dy_mean: float,
    sigma_dx: float,
    psi: GaussianMoments,
) -> CovBound2:
    """Exact covariance of the ego-frame relative position.

    Inputs: mean world-frame offset (dx, dy) between target and ego, the
    per-axis standard deviation of that offset (sqrt(2) * sigma_pos when
    both vehicles contribute equally), and the ego yaw moments. Exact for
    independent Gaussian channels; the rotation is the only nonlinearity
    and its trig moments are closed-form.
    """
    _nonnegative("sigma_dx", sigma_dx)
    tm = trig_moments(psi)
    s2 = psi.std**2
    decay = math.exp(-s2)
    k = decay * (1.0 - decay)
    sin2m = math.sin(2.0 * psi.mean)
    cos2m = math.cos(2.0 * psi.mean)
    var = sigma_dx**2
    a = var + dx_mean**2 * tm.var_cos + dy_mean**2 * tm.var_sin \
        - dx_mean * dy_mean * sin2m * k
    b = var + dx_mean**2 * tm.var_sin + dy_mean**2 * tm.var_cos \
        + dx_mean * dy_mean * sin2m * k
    c = 0.5 * sin2m * k * (dx_mean**2 - dy_mean**2) \
        - dx_mean * dy_mean * cos2m * k
    return CovBound2(a, b, c)


def position_bound(
    nm: NoiseModel,
    env: ScenarioEnvelope,
    convention: str = DEFAULT_CONVENTION,
) -> CovBound2:
    """Worst-case relative-position covariance bound over the envelope.

    Diagonals: 2 sigma_pos^2 + 2 d_max^2 (1 - e^{-sigma_psi^2}), with the
    exponent halved under the half_exponent convention. Cross term:
    (3/2) d_max^2 (1 - e^{-sigma_psi^2 / 2}) under both conventions.
    """
    scale = _exponent_scale(convention)
    s2 = nm.sigma_psi**2
    diag = 2.0 * nm.sigma_pos**2 + 2.0 * env.d_max**2 * (1.0 - math.exp(-s2 * scale))
    cross = 1.5 * env.d_max**2 * (1.0 - math.exp(-s2 / 2.0))
    return CovBound2(diag, diag, cross)


def bounded_trig_mix_var(
    m_x: float,
    m_y: float,
    s_x: float,
    s_y: float,
    omega: GaussianMoments,
    convention: str = DEFAULT_CONVENTION,
) -> float:
    """Upper bound on Var(cos(W) X + sin(W) Y) for independent X, Y, W.

    s_x^2 + s_y^2 + (1 - e^{-sigma^2}) (|m_x| + |m_y|)^2, the exponent
    scaled by the convention. The printed form is a theorem for Gaussian W
    and any independent X, Y; the half variant is guaranteed only for small
    angle spread.
    """
    _nonnegative("s_x", s_x)
    _nonnegative("s_y", s_y)
    scale = _exponent_scale(convention)
    s2 = omega.std**2
    return s_x**2 + s_y**2 + (1.0 - math.exp(-s2 * scale)) * (abs(m_x) + abs(m_y)) ** 2


def velocity_bound(
    nm: NoiseModel,
    env: ScenarioEnvelope,
    convention: str = DEFAULT_CONVENTION,
) -> CovBound2:
    """Worst-case relative-velocity covariance bound over the envelope.

    The pre-rotation velocity components have variance at most
    2 sigma_vel^2 + sigma_pos^2 sigma_psi_dot^2 + psi_dot_max^2 sigma_pos^2
    + d_max^2 sigma_psi_dot^2 per axis (doubled where both vehicles
    contribute); mixing through the noisy rotation adds
    4 (1 - e^{-sigma_psi^2}) (v_max + d_max psi_dot_max)^2 with the
    exponent scaled by the convention.

    The cross entry is kept in this bound family's conventional loose form
    a * b. It is not a Cauchy-Schwarz covariance bound (its unit is a
    squared variance); for realistic noise it sits orders of magnitude
    below the diagonal and is retained so consumers always receive a full
    2x2 layout with the established headline norm.
    """
    scale = _exponent_scale(convention)
    s2 = nm.sigma_psi**2
    core = 4.0 * (
        nm.sigma_vel**2
        + nm.sigma_pos**2 * nm.sigma_psi_dot**2
        + env.psi_dot_max**2 * nm.sigma_pos**2
    )
    swing = 2.0 * env.d_max**2 * nm.sigma_psi_dot**2
    mix = 4.0 * (1.0 - math.exp(-s2 * scale)) * (
        env.v_max + env.d_max * env.psi_dot_max
    ) ** 2
    diag = core + swing + mix
    return CovBound2(diag, diag, diag * diag)


def yaw_variance(nm: NoiseModel) -> float:
    """Variance of the relative yaw: both yaw channels contribute."""
    return 2.0 * nm.sigma_psi**2


def rms_from_cov(cov: CovBound2) -> float:
    """Scalar summary of a 2x2 covariance: Frobenius norm to the 1/2 power,
    i.e. (a^2 + b^2 + 2 c^2)^{1/4}. Has the unit of the underlying signal."""
    return (cov.a**2 + cov.b**2 + 2.0 * cov.c**2) ** 0.25


# ---------------------------------------------------------------------------
# Serialization of the two config types (flat JSON objects, SI units).

def _from_mapping(cls, data: Mapping, source: str):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ParseError(
            f"{source}: unknown field(s) {sorted(unknown)}; expected {sorted(names)}"
        )
    required = {
        f.name for f in fields(cls)
        if f.default is MISSING and f.default_factory is MISSING
    }
    missing = required - set(data)
    if missing:
        raise ParseError(f"{source}: missing required field(s) {sorted(missing)}")
    try:
        return cls(**{k: float(v) for k, v in data.items()})
    except (TypeError, ValueError) as err:
        raise ParseError(f"{source}: {err}")


def noise_model_from_mapping(data: Mapping, source: str = "noise model") -> NoiseModel:
    return _from_mapping(NoiseModel, data, source)


def envelope_from_mapping(
    data: Mapping, source: str = "scenario envelope"
) -> ScenarioEnvelope:
    return _from_mapping(ScenarioEnvelope, data, source)


def _load_json(path: str | Path) -> Mapping:
    try:
        with Path(path).open("r") as stream:
            data = json.load(stream)
    except json.JSONDecodeError as err:
        raise ParseError(f"{path}: invalid JSON: {err}")
    if not isinstance(data, dict):
        raise ParseError(f"{path}: expected a JSON object")
    return data


def load_noise_model(path: str | Path) -> NoiseModel:
    return noise_model_from_mapping(_load_json(path), source=str(path))


def load_envelope(path: str | Path) -> ScenarioEnvelope:
    return envelope_from_mapping(_load_json(path), source=str(path))


def to_mapping(config: NoiseModel | ScenarioEnvelope) -> dict[str, float]:
    return {f.name: getattr(config, f.name) for f in fields(config)}


# Constants of the reference analysis this bound family is reported with.
ANALYSIS_NOISE = NoiseModel(
    sigma_pos=0.02, sigma_vel=0.02, sigma_psi=1.75e-3, sigma_psi_dot=1.75e-3
)
ANALYSIS_ENVELOPE = ScenarioEnvelope(d_max=50.0, v_max=36.0, psi_dot_max=1.0)

# Documented accuracy presets of the RTK/INS positioning chain, by GNSS
# signal condition. Heading accuracy 0.01 deg throughout; the velocity
# accuracy is not part of the outage table and keeps the nominal value.
POSITIONING_PRESETS: Mapping[str, NoiseModel] = {
    "nominal": NoiseModel(
        sigma_pos=0.02, sigma_vel=0.02, sigma_psi=math.radians(0.01)
    ),
    "outage_60s": NoiseModel(
        sigma_pos=0.10, sigma_vel=0.02, sigma_psi=math.radians(0.01)
    ),
    "outage_300s": NoiseModel(
        sigma_pos=0.60, sigma_vel=0.02, sigma_psi=math.radians(0.01)
    ),
}


# ---------------------------------------------------------------------------
# Monte Carlo machinery.

def _batch_layout(n: int, batch_size: int) -> list[int]:
    """Split n draws into near-equal batches.

    The layout depends only on (n, batch_size), never on worker count, so
    partitioned runs reproduce sequential ones exactly. At least
    MIN_BATCHES batches are used whenever n allows: the standard error is
    estimated from the spread of the batch values, and with only a handful
    of batches that estimate is noisy enough to make z-scores heavy-tailed.
    """
    if n < 4:
        raise ValueError(f"need at least 4 samples, got {n}")
    count = max(MIN_BATCHES, math.ceil(n / batch_size))
    # Unbiased per-batch variances need >= 2 draws per batch.
    count = min(count, n // 2)
    base, extra = divmod(n, count)
    return [base + 1 if i < extra else base for i in range(count)]


def _batched_stats(
    n: int,
    seed: int,
    stat_fn: Callable[[np.random.Generator, int], np.ndarray],
    batch_size: int = MC_BATCH_SIZE,
) -> tuple[np.ndarray, np.ndarray]:
    """Estimate a vector statistic by averaging per-batch unbiased values.

    stat_fn(rng, m) must return the statistic computed from m fresh draws.
    Returns (estimate, standard error) where the standard error is the
    spread of the batch values over sqrt(batch count).
    """
    sizes = _batch_layout(n, batch_size)

    def one(batch: int) -> np.ndarray:
        return np.asarray(stat_fn(derived_rng(seed, batch), sizes[batch]))

    stack = np.vstack(ordered_map(one, list(range(len(sizes)))))
    estimate = stack.mean(axis=0)
    se = stack.std(axis=0, ddof=1) / math.sqrt(stack.shape[0])
    return estimate, se


def _pair_stats(u: np.ndarray, v: np.ndarray) -> tuple[float, float, float]:
    """Unbiased variances and covariance of one sample pair."""
    m = u.size
    du = u - u.mean()
    dv = v - v.mean()
    return (
        float(du @ du / (m - 1)),
        float(dv @ dv / (m - 1)),
        float(du @ dv / (m - 1)),
    )


def trig_moments_mc(
    omega: GaussianMoments,
    n: int,
    seed: int,
    batch_size: int = MC_BATCH_SIZE,
) -> tuple[TrigMoments, TrigMoments]:
    """Monte Carlo counterpart of trig_moments, with standard errors.

    Returns (estimate, se) as TrigMoments pairs. Deterministic per seed and
    independent of worker count.
    """

    def stat(rng: np.random.Generator, m: int) -> np.ndarray:
        w = rng.normal(omega.mean, omega.std, m)
        c = np.cos(w)
        s = np.sin(w)
        var_c, var_s, cov = _pair_stats(c, s)
        return np.array([c.mean(), s.mean(), var_c, var_s, cov])

    est, se = _batched_stats(n, seed, stat, batch_size)
    return TrigMoments(*est), TrigMoments(*se)


def mixed_trig_variance_mc(
    m_x: float,
    m_y: float,
    s_x: float,
    s_y: float,
    omega: GaussianMoments,
    n: int,
    seed: int,
    batch_size: int = MC_BATCH_SIZE,
) -> tuple[float, float]:
    """Monte Carlo Var(cos(W) X + sin(W) Y) with standard error."""

    def stat(rng: np.random.Generator, m: int) -> np.ndarray:
        w = rng.normal(omega.mean, omega.std, m)
        x = rng.normal(m_x, s_x, m)
        y = rng.normal(m_y, s_y, m)
        z = np.cos(w) * x + np.sin(w) * y
        dz = z - z.mean()
        return np.array([dz @ dz / (m - 1)])

    est, se = _batched_stats(n, seed, stat, batch_size)
    return float(est[0]), float(se[0])


@dataclass(frozen=True)
class MonteCarloCovariance:
    """Empirical output covariances with entrywise standard errors."""

    position: CovBound2
    position_se: CovBound2
    velocity: CovBound2 | None
    velocity_se: CovBound2 | None
    yaw_var: float
    yaw_var_se: float
    n: int


def monte_carlo_covariance(
    ego: TrajectorySample,
    target: TrajectorySample,
    nm: NoiseModel,
    n: int,
    seed: int,
    batch_size: int = MC_BATCH_SIZE,
) -> MonteCarloCovariance:
    """Empirical covariance of the ego-frame outputs at one true state pair.

    Draws independent Gaussian perturbations of both vehicles' channels,
    pushes every draw through the relative-state transformation and
    returns empirical covariances with standard errors. Velocity is
    included only when the ego sample carries a yaw rate (the target's yaw
    rate never enters the outputs). Yaw dispersion is measured about the
    true relative yaw, so a mean near +-pi does not split the wrapped
    sample across the seam. Deterministic per seed.
    """
    with_velocity = ego.psi_dot is not None
    true_dpsi = wrap_angle(target.psi - ego.psi)

    def stat(rng: np.random.Generator, m: int) -> np.ndarray:
        ex = ego.x + rng.normal(0.0, nm.sigma_pos, m)
        ey = ego.y + rng.normal(0.0, nm.sigma_pos, m)
        evx = ego.vx + rng.normal(0.0, nm.sigma_vel, m)
        evy = ego.vy + rng.normal(0.0, nm.sigma_vel, m)
        epsi = ego.psi + rng.normal(0.0, nm.sigma_psi, m)
        if with_velocity:
            erate = ego.psi_dot + rng.normal(0.0, nm.sigma_psi_dot, m)
        tx = target.x + rng.normal(0.0, nm.sigma_pos, m)
        ty = target.y + rng.normal(0.0, nm.sigma_pos, m)
        tvx = target.vx + rng.normal(0.0, nm.sigma_vel, m)
        tvy = target.vy + rng.normal(0.0, nm.sigma_vel, m)
        tpsi = target.psi + rng.normal(0.0, nm.sigma_psi, m)

        dx = tx - ex
        dy = ty - ey
        c = np.cos(epsi)
        s = np.sin(epsi)
        rx = dx * c + dy * s
        ry = dy * c - dx * s
        pa, pb, pc = _pair_stats(rx, ry)
        dpsi = wrap_angle(tpsi - epsi - true_dpsi)
        dd = dpsi - dpsi.mean()
        yv = dd @ dd / (m - 1)
        if not with_velocity:
            return np.array([pa, pb, pc, yv])
        ax = tvx - evx + erate * dy
        ay = tvy - evy - erate * dx
        rvx = ax * c + ay * s
        rvy = ay * c - ax * s
        va, vb, vc = _pair_stats(rvx, rvy)
        return np.array([pa, pb, pc, yv, va, vb, vc])

    est, se = _batched_stats(n, seed, stat, batch_size)
    velocity = velocity_se = None
    if with_velocity:
        velocity = CovBound2(*est[4:7])
        velocity_se = CovBound2(*se[4:7])
    return MonteCarloCovariance(
        position=CovBound2(*est[0:3]),
        position_se=CovBound2(*se[0:3]),
        velocity=velocity,
        velocity_se=velocity_se,
        yaw_var=float(est[3]),
        yaw_var_se=float(se[3]),
        n=n,
    )
