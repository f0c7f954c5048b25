"""
Forward load model: 6-axis wrench -> deformation of the upper grating and
Hertzian contact pressure.

Units: forces in N, torques in N*m, lengths in mm. Torques are converted to
N*mm when locating the contact centre.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from moire_sensor_sim.errors import ConfigError, OutOfRange, TiltWithoutPreload
from moire_sensor_sim.optics import SensorGeometry

logger = logging.getLogger(__name__)

AXES = ("Fx", "Fy", "Fz", "Tx", "Ty", "Tz")
NMM_PER_NM = 1000.0
RANGE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Wrench:
    """Contact forces (N) and torques (N*m)."""

    Fx: float = 0.0
    Fy: float = 0.0
    Fz: float = 0.0
    Tx: float = 0.0
    Ty: float = 0.0
    Tz: float = 0.0

    def __post_init__(self):
        for axis in AXES:
            if not math.isfinite(getattr(self, axis)):
                raise OutOfRange(f"wrench component {axis} is not finite")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, a) for a in AXES], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Wrench":
        return cls(*(float(v) for v in values))

    def as_dict(self) -> dict:
        return {a: getattr(self, a) for a in AXES}


@dataclass(frozen=True)
class LoadRanges:
    """Admissible wrench ranges plus contact limits."""

    Fx: Tuple[float, float] = (-0.2, 0.2)
    Fy: Tuple[float, float] = (-0.2, 0.2)
    Fz: Tuple[float, float] = (0.0, 1.2)
    Tx: Tuple[float, float] = (-0.012, 0.012)
    Ty: Tuple[float, float] = (-0.012, 0.012)
    Tz: Tuple[float, float] = (-0.008, 0.008)
    force_floor: float = 0.05  # N, preload needed for tilt
    max_contact_offset: float = 15.0  # mm

    def bounds(self, axis: str) -> Tuple[float, float]:
        return getattr(self, axis)

    def check(self, w: Wrench) -> None:
        for axis in AXES:
            lo, hi = self.bounds(axis)
            value = getattr(w, axis)
            if value < lo - RANGE_TOLERANCE or value > hi + RANGE_TOLERANCE:
                raise OutOfRange(f"{axis}={value:.6g} outside [{lo:.6g}, {hi:.6g}]")


DEFAULT_RANGES = LoadRanges()


@dataclass(frozen=True)
class MaterialModel:
    """Linear constitutive coefficients and contact/brightness constants."""

    c_strain: float = 0.005  # 1/N
    k_shear: float = 2.0  # N/mm
    k_twist: float = 0.1  # N*m/rad
    k_spacing: float = 2.0  # N/mm
    brightness_gain: float = 2.0  # intensity per N/mm^2
    hertz_radius_coeff: float = 3.0  # mm / N^(1/3)
    psf_sigma: float = 0.5  # mm

    def __post_init__(self):
        for name in ("k_shear", "k_twist", "k_spacing", "hertz_radius_coeff"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"material {name} must be > 0")
        if self.brightness_gain < 0:
            raise ConfigError("material brightness_gain must be >= 0")
        if self.psf_sigma < 0:
            raise ConfigError("material psf_sigma must be >= 0")

    def validate_for(self, geom: SensorGeometry, ranges: LoadRanges = DEFAULT_RANGES) -> None:
        """Check the stack stays physical over the whole load range."""
        fz_max = max(abs(v) for v in ranges.Fz)
        if abs(self.c_strain * fz_max) >= 0.2:
            raise ConfigError(f"strain {self.c_strain * fz_max:.3g} at Fz={fz_max} N exceeds 0.2")
        if geom.spacing - fz_max / self.k_spacing <= 0:
            raise ConfigError(
                f"spacing collapses: a={geom.spacing} mm, max compression {fz_max / self.k_spacing:.3g} mm"
            )


@dataclass(frozen=True)
class DeformationState:
    """Geometric effect of a wrench on the sensor."""

    u: Tuple[float, float] = (0.0, 0.0)  # mm
    strain: float = 0.0
    twist: float = 0.0  # rad
    contact_center: Tuple[float, float] = (0.0, 0.0)  # mm
    contact_radius: float = 0.0  # mm
    spacing: float = 10.0  # mm
    peak_pressure: float = 0.0  # N/mm^2
    normal_force: float = 0.0  # N

    @classmethod
    def identity(cls, geom: SensorGeometry) -> "DeformationState":
        return cls(spacing=geom.spacing)


def wrench_to_deformation(
    w: Wrench,
    m: MaterialModel,
    g: SensorGeometry,
    ranges: LoadRanges = DEFAULT_RANGES,
) -> DeformationState:
    """Map a wrench to the deformation it produces.

    Tilt moments are realised as an off-centre contact: Tx = Fz*c_y,
    Ty = -Fz*c_x.

    Raises:
        OutOfRange: a component or the implied contact offset leaves its range.
        TiltWithoutPreload: tilt requested with Fz below the preload floor.
    """
    ranges.check(w)
    tilted = w.Tx != 0.0 or w.Ty != 0.0
    if tilted and w.Fz < ranges.force_floor:
        raise TiltWithoutPreload(
            f"Tx={w.Tx:.4g}, Ty={w.Ty:.4g} N*m need Fz >= {ranges.force_floor} N (got {w.Fz:.4g})"
        )

    fz = max(w.Fz, 0.0)
    lever = max(w.Fz, ranges.force_floor)
    center = (-w.Ty * NMM_PER_NM / lever, w.Tx * NMM_PER_NM / lever)
    if math.hypot(*center) > ranges.max_contact_offset + RANGE_TOLERANCE:
        raise OutOfRange(
            f"contact offset {math.hypot(*center):.3g} mm exceeds {ranges.max_contact_offset} mm"
        )

    if fz > 0:
        radius = m.hertz_radius_coeff * fz ** (1.0 / 3.0)
        p0 = 3.0 * fz / (2.0 * math.pi * radius * radius)
    else:
        radius, p0 = 0.0, 0.0

    return DeformationState(
        u=(w.Fx / m.k_shear, w.Fy / m.k_shear),
        strain=m.c_strain * fz,
        twist=w.Tz / m.k_twist,
        contact_center=center,
        contact_radius=radius,
        spacing=g.spacing - fz / m.k_spacing,
        peak_pressure=p0,
        normal_force=fz,
    )


def pressure_at(d: DeformationState, x: Tuple[float, float]) -> float:
    """Hertzian pressure P0*sqrt(1 - (r/a_c)^2) inside the contact, else 0."""
    if d.contact_radius <= 0:
        return 0.0
    r = math.hypot(x[0] - d.contact_center[0], x[1] - d.contact_center[1])
    if r >= d.contact_radius:
        return 0.0
    return d.peak_pressure * math.sqrt(1.0 - (r / d.contact_radius) ** 2)


def pressure_field(d: DeformationState, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorised pressure_at on the grid spanned by xs (columns) and ys (rows)."""
    if d.contact_radius <= 0:
        return np.zeros((len(ys), len(xs)))
    dx = (np.asarray(xs) - d.contact_center[0])[None, :]
    dy = (np.asarray(ys) - d.contact_center[1])[:, None]
    rho2 = (dx * dx + dy * dy) / (d.contact_radius * d.contact_radius)
    return d.peak_pressure * np.sqrt(np.clip(1.0 - rho2, 0.0, None))
