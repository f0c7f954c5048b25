"""
Analytic grating and moire geometry.

Covers grating wave vectors, the moire beat descriptor, the general and
approximate period laws, the effective mismatch of a stacked pair seen by a
camera, and the perspective-projected amplification of the design table.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Tuple

from moire_sensor_sim.errors import (
    BoundaryCase,
    DegenerateGratings,
    InvalidGeometry,
    NonParallelGratings,
)

logger = logging.getLogger(__name__)

EPS_K = 1e-9  # rad/mm
BOUNDARY_TOLERANCE = 1e-9
PARALLEL_TOLERANCE = 1e-9  # rad


def normalize_orientation(alpha: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.remainder(alpha, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


def fold_orientation(theta: float) -> float:
    """Fold a fringe direction into the half-plane (-pi/2, pi/2].

    K and -K describe the same intensity fringes.
    """
    t = math.remainder(theta, math.pi)
    if t <= -math.pi / 2.0:
        t += math.pi
    return t


def orientation_difference(theta_a: float, theta_b: float) -> float:
    """Signed difference of two folded orientations, in (-pi/2, pi/2]."""
    return fold_orientation(theta_a - theta_b)


@dataclass(frozen=True)
class Grating:
    """One line grating: pitch in mm, orientation and phase in radians."""

    pitch: float
    orientation: float = 0.0
    phase_offset: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.pitch) and self.pitch > 0):
            raise InvalidGeometry(f"grating pitch must be > 0, got {self.pitch}")
        object.__setattr__(self, "orientation", normalize_orientation(self.orientation))

    def rotated(self, angle: float) -> "Grating":
        return replace(self, orientation=self.orientation + angle)

    def scaled(self, factor: float) -> "Grating":
        return replace(self, pitch=self.pitch * factor)


@dataclass(frozen=True)
class WaveVector2:
    """Spatial frequency vector in rad/mm."""

    kx: float
    ky: float

    @property
    def norm(self) -> float:
        return math.hypot(self.kx, self.ky)

    def __sub__(self, other: "WaveVector2") -> "WaveVector2":
        return WaveVector2(self.kx - other.kx, self.ky - other.ky)

    def __neg__(self) -> "WaveVector2":
        return WaveVector2(-self.kx, -self.ky)

    def dot(self, vec: Tuple[float, float]) -> float:
        return self.kx * vec[0] + self.ky * vec[1]

    def rotated(self, angle: float) -> "WaveVector2":
        c, s = math.cos(angle), math.sin(angle)
        return WaveVector2(c * self.kx - s * self.ky, s * self.kx + c * self.ky)

    def as_tuple(self) -> Tuple[float, float]:
        return (self.kx, self.ky)


@dataclass(frozen=True)
class FringeDescriptor:
    """Moire beat: wave vector, period (mm) and folded orientation (rad)."""

    K: WaveVector2
    period: float
    orientation: float

    @classmethod
    def from_wavevector(cls, K: WaveVector2) -> "FringeDescriptor":
        return cls(
            K=K,
            period=2.0 * math.pi / K.norm,
            orientation=fold_orientation(math.atan2(K.ky, K.kx)),
        )


@dataclass(frozen=True)
class SensorGeometry:
    """Two stacked gratings in front of a camera.

    `far` sits at depth Z + a (pitch p1, the deformable upper grating),
    `near` at depth Z (pitch p2, the reference grid).
    """

    far: Grating = field(default_factory=lambda: Grating(0.35))
    near: Grating = field(default_factory=lambda: Grating(0.30))
    spacing: float = 10.0
    camera_distance: float = 40.0

    def __post_init__(self):
        if not (self.camera_distance > 0):
            raise InvalidGeometry(f"camera distance must be > 0, got {self.camera_distance}")
        if not (self.spacing >= 0):
            raise InvalidGeometry(f"grating spacing must be >= 0, got {self.spacing}")
        if not (self.spacing < self.camera_distance):
            raise InvalidGeometry(
                f"spacing a={self.spacing} must be below camera distance Z={self.camera_distance}"
            )

    @property
    def a_over_z(self) -> float:
        return self.spacing / self.camera_distance

    @property
    def is_parallel(self) -> bool:
        return abs(orientation_difference(self.far.orientation, self.near.orientation)) < PARALLEL_TOLERANCE

    def projected_far(self, spacing: float = None, strain: float = 0.0) -> Grating:
        """Far grating as imaged at the near-grating plane.

        Perspective shrinks its pitch by Z / (Z + a).
        """
        a = self.spacing if spacing is None else spacing
        z = self.camera_distance
        return self.far.scaled((1.0 + strain) * z / (z + a))


class Regime(str, Enum):
    """Approximation regime for the period law."""

    ANGLE_DOMINATED = "angle"
    PITCH_DOMINATED = "pitch"


class Trend(str, Enum):
    """Direction the fringes move under compression."""

    SPARSER = "sparser"
    DENSER = "denser"


def grating_wavevector(g: Grating) -> WaveVector2:
    """k = 2*pi/p * [cos(alpha), sin(alpha)]."""
    k = 2.0 * math.pi / g.pitch
    return WaveVector2(k * math.cos(g.orientation), k * math.sin(g.orientation))


def moire_descriptor(g1: Grating, g2: Grating, eps_k: float = EPS_K) -> FringeDescriptor:
    """Beat of two gratings: K = k1 - k2.

    Raises:
        DegenerateGratings: the wave vectors differ by no more than eps_k.
    """
    K = grating_wavevector(g1) - grating_wavevector(g2)
    if K.norm <= eps_k:
        raise DegenerateGratings(
            f"gratings p1={g1.pitch}, p2={g2.pitch} produce |K|={K.norm:.3g} rad/mm"
        )
    return FringeDescriptor.from_wavevector(K)


def period_general(p1: float, p2: float, delta_alpha: float) -> float:
    """Exact moire period for two pitches at relative angle delta_alpha."""
    denom_sq = p1 * p1 + p2 * p2 - 2.0 * p1 * p2 * math.cos(delta_alpha)
    if denom_sq <= (1e-12 * max(p1, p2)) ** 2:
        raise DegenerateGratings(f"p1={p1}, p2={p2}, delta_alpha={delta_alpha} never beat")
    return p1 * p2 / math.sqrt(denom_sq)


def period_approx(p1: float, p2: float, delta_alpha: float, regime: Regime) -> float:
    """Small-angle or small-mismatch period approximation.

    Args:
        p1, p2: pitches in mm
        delta_alpha: relative orientation in rad (ignored for PITCH_DOMINATED)
        regime: which approximation to use

    Returns:
        p / |delta_alpha| or p / delta with p the mean pitch and
        delta = |p2 - p1| / p.
    """
    p = 0.5 * (p1 + p2)
    regime = Regime(regime)
    if regime is Regime.ANGLE_DOMINATED:
        if delta_alpha == 0:
            raise DegenerateGratings("angle-dominated period needs a nonzero angle")
        return p / abs(delta_alpha)
    delta = abs(p2 - p1) / p
    if delta == 0:
        raise DegenerateGratings("pitch-dominated period needs unequal pitches")
    return p / delta


def delta_obj(geom: SensorGeometry) -> float:
    """Intrinsic pitch mismatch normalised by the mean pitch."""
    p1, p2 = geom.far.pitch, geom.near.pitch
    return abs(p2 - p1) / (0.5 * (p1 + p2))


def _require_parallel(geom: SensorGeometry) -> None:
    if not geom.is_parallel:
        raise NonParallelGratings(
            f"orientations {geom.far.orientation:.6g} and {geom.near.orientation:.6g} differ"
        )


def delta_eff_approx(geom: SensorGeometry) -> float:
    """Effective mismatch |delta_obj - a/Z| (first-order perspective law)."""
    _require_parallel(geom)
    return abs(delta_obj(geom) - geom.a_over_z)


def apparent_pitches(geom: SensorGeometry) -> Tuple[float, float]:
    """(q1, q2): far pitch projected to the near plane, and the near pitch."""
    return geom.projected_far().pitch, geom.near.pitch


def amplification_exact(geom: SensorGeometry) -> float:
    """A = q1 / |q1 - q2| with q1 = p1 * Z / (Z + a).

    Equals Lambda_apparent / q2.
    """
    _require_parallel(geom)
    q1, q2 = apparent_pitches(geom)
    if abs(q1 - q2) <= 1e-15 * max(q1, q2):
        raise DegenerateGratings(f"apparent pitches coincide at the camera (q={q1:.6g} mm)")
    return q1 / abs(q1 - q2)


def amplification_mismatch(geom: SensorGeometry) -> float:
    """A under the first-order law, 1 / delta_eff."""
    d = delta_eff_approx(geom)
    if d == 0:
        raise DegenerateGratings("effective mismatch is zero")
    return 1.0 / d


def apparent_period(geom: SensorGeometry) -> float:
    """Moire period seen by the camera for parallel gratings, q1*q2/|q1-q2|."""
    _require_parallel(geom)
    q1, q2 = apparent_pitches(geom)
    if abs(q1 - q2) <= 1e-15 * max(q1, q2):
        raise DegenerateGratings(f"apparent pitches coincide at the camera (q={q1:.6g} mm)")
    return q1 * q2 / abs(q1 - q2)


def apparent_descriptor(geom: SensorGeometry, eps_k: float = EPS_K) -> FringeDescriptor:
    """Moire descriptor of the projected far grating against the near grating."""
    return moire_descriptor(geom.projected_far(), geom.near, eps_k=eps_k)


def compression_trend(geom: SensorGeometry) -> Trend:
    """Whether compression makes the fringes sparser or denser.

    Raises:
        BoundaryCase: delta_obj equals a/Z within 1e-9.
    """
    _require_parallel(geom)
    diff = delta_obj(geom) - geom.a_over_z
    if abs(diff) < BOUNDARY_TOLERANCE:
        raise BoundaryCase(f"delta_obj equals a/Z = {geom.a_over_z:.6g}")
    return Trend.SPARSER if diff < 0 else Trend.DENSER


# Design configurations of the sensitivity-tuning study (a/Z = 0.25).
DESIGN_PAIRS = {
    "dense": (0.20, 0.20),
    "mid": (0.35, 0.30),
    "sparse": (0.30, 0.25),
}


def design_geometry(p1: float, p2: float, a_over_z: float, camera_distance: float = 40.0) -> SensorGeometry:
    """Parallel pair at the given a/Z."""
    return SensorGeometry(
        far=Grating(p1),
        near=Grating(p2),
        spacing=a_over_z * camera_distance,
        camera_distance=camera_distance,
    )


DESIGN_COLUMNS = [
    "p1", "p2", "a_over_Z", "delta_obj", "delta_eff_eq7", "A_exact", "Lambda_apparent", "trend",
]


def design_row(p1: float, p2: float, a_over_z: float, camera_distance: float = 40.0) -> dict:
    """One design-table row.

    Quantities that cannot be computed stay NaN and the trend cell carries
    `error:<ExceptionName>` for the first failure.
    """
    row = dict.fromkeys(DESIGN_COLUMNS, math.nan)
    row.update(p1=p1, p2=p2, a_over_Z=a_over_z, trend="")
    try:
        geom = design_geometry(p1, p2, a_over_z, camera_distance)
    except InvalidGeometry as e:
        row["trend"] = f"error:{type(e).__name__}"
        return row

    failures = []
    for key, fn in (
        ("delta_obj", delta_obj),
        ("delta_eff_eq7", delta_eff_approx),
        ("A_exact", amplification_exact),
        ("Lambda_apparent", apparent_period),
    ):
        try:
            row[key] = fn(geom)
        except (DegenerateGratings, NonParallelGratings) as e:
            failures.append(type(e).__name__)
    try:
        row["trend"] = compression_trend(geom).value
    except (BoundaryCase, NonParallelGratings) as e:
        failures.append(type(e).__name__)
    if failures:
        row["trend"] = f"error:{failures[0]}"
        logger.debug("Design row p1=%s p2=%s a/Z=%s: %s", p1, p2, a_over_z, failures)
    return row
