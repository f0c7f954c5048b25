"""
Raster renderer for dual-grating fringe images.

The grating product is expanded into plane-wave harmonics so that the camera
blur is applied analytically per harmonic. Contact brightness (blurred
Hertzian pressure), the illuminated contact rim and pixel noise are added on
top, then the image is clamped to [0, 1].

Images export as 8-bit binary PGM (P5) through Pillow, one file per frame.
"""

import io
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter
from scipy.special import erf

from moire_sensor_sim.errors import ArtifactError, ConfigError, UndersampledGrating
from moire_sensor_sim.loads import (
    DEFAULT_RANGES,
    DeformationState,
    LoadRanges,
    MaterialModel,
    Wrench,
    pressure_field,
    wrench_to_deformation,
)
from moire_sensor_sim.optics import (
    FringeDescriptor,
    Grating,
    SensorGeometry,
    WaveVector2,
    grating_wavevector,
    moire_descriptor,
)

logger = logging.getLogger(__name__)

RIM_REFERENCE_FORCE = 1.0  # N
HARMONIC_FLOOR = 1e-9
PATTERN_MEAN = 0.25


@dataclass(frozen=True)
class ImageGray:
    """Grayscale frame, row-major, values in [0, 1], `scale` pixels per mm."""

    values: np.ndarray
    scale: float = 20.0

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 2:
            raise ConfigError(f"image must be 2-D, got shape {arr.shape}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def to_uint8(self) -> np.ndarray:
        return np.rint(np.clip(self.values, 0.0, 1.0) * 255.0).astype(np.uint8)


@dataclass(frozen=True)
class RenderConfig:
    """Raster and illumination settings."""

    resolution: int = 800  # pixels, square
    scale: float = 20.0  # pixels per mm
    noise_sigma: float = 0.01
    rim_gain: float = 0.15
    rim_width: float = 1.0  # mm
    baseline_intensity: float = 0.15
    seed: int = 0
    optical_blur: float = 0.15  # mm
    cross_contrast: float = 0.8
    aperture_mm: float = 30.0
    aperture_softness_mm: float = 3.0
    min_pitch_px: float = 3.0

    def __post_init__(self):
        if self.resolution < 8:
            raise ConfigError(f"resolution must be >= 8 px, got {self.resolution}")
        if not self.scale > 0:
            raise ConfigError("scale must be > 0")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not 0.0 <= self.baseline_intensity <= 1.0:
            raise ConfigError("baseline_intensity must lie in [0, 1]")
        if not 0.0 <= self.cross_contrast < 1.0:
            raise ConfigError("cross_contrast must lie in [0, 1)")
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")

    @property
    def field_mm(self) -> float:
        return self.resolution / self.scale


def derive_seed(seed: int, index: int) -> int:
    """Independent sub-seed for item `index` of a seeded run."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, dtype=np.uint64)[0])


@lru_cache(maxsize=8)
def _axes(width: int, height: int, scale: float) -> Tuple[np.ndarray, np.ndarray]:
    xs = (np.arange(width) - (width - 1) / 2.0) / scale
    ys = (np.arange(height) - (height - 1) / 2.0) / scale
    xs.setflags(write=False)
    ys.setflags(write=False)
    return xs, ys


def pixel_axes(width: int, height: int, scale: float) -> Tuple[np.ndarray, np.ndarray]:
    """Pixel-centre coordinates in mm relative to the image centre (x: columns, y: rows)."""
    return _axes(int(width), int(height), float(scale))


def plane_wave(q: Tuple[float, float], phase: float, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """cos(qx*x + qy*y + phase) on the grid, built as a separable outer product."""
    ey = np.exp(1j * (q[1] * ys + phase))
    ex = np.exp(1j * q[0] * xs)
    return np.real(ey[:, None] * ex[None, :])


# Geometry under load -----------------------------------------------------------

def deformed_gratings(geom: SensorGeometry, d: DeformationState) -> Tuple[Grating, Grating]:
    """Apparent far grating (strained, perspective at the deformed spacing) and near grating.

    Twist and shear are applied later as a rigid warp of the fringe field.
    """
    return geom.projected_far(spacing=d.spacing, strain=d.strain), geom.near


def deformed_descriptor(geom: SensorGeometry, d: DeformationState) -> FringeDescriptor:
    """Analytic fringe descriptor of the rendered field under deformation `d`."""
    far, near = deformed_gratings(geom, d)
    base = moire_descriptor(far, near)
    return FringeDescriptor.from_wavevector(base.K.rotated(d.twist))


def _check_sampling(gratings: Sequence[Grating], cfg: RenderConfig) -> None:
    for g in gratings:
        if g.pitch * cfg.scale < cfg.min_pitch_px:
            raise UndersampledGrating(
                f"pitch {g.pitch:.4g} mm is {g.pitch * cfg.scale:.2f} px at {cfg.scale} px/mm "
                f"(minimum {cfg.min_pitch_px})"
            )


def _harmonics(
    far: Grating,
    near: Grating,
    d: DeformationState,
    cfg: RenderConfig,
) -> List[Tuple[float, Tuple[float, float], float]]:
    """Zero-mean plane-wave terms of the blurred, warped product t1*t2.

    t_i = (1 + (cos a_i + c cos b_i) / (1 + c)) / 2 with b_i the perpendicular
    family, so t1*t2 = (1 + s1 + s2 + s1*s2) / 4.
    """
    c = cfg.cross_contrast
    norm = 1.0 / (1.0 + c)
    families = []
    for g in (far, near):
        k = grating_wavevector(g)
        families.append(
            [(norm, k, g.phase_offset), (c * norm, k.rotated(math.pi / 2.0), g.phase_offset)]
        )

    raw: List[Tuple[float, WaveVector2, float]] = []
    for fam in families:
        for coef, k, phase in fam:
            raw.append((0.25 * coef, k, phase))
    for c1, k1, ph1 in families[0]:
        for c2, k2, ph2 in families[1]:
            amp = 0.125 * c1 * c2
            raw.append((amp, k1 - k2, ph1 - ph2))
            raw.append((amp, WaveVector2(k1.kx + k2.kx, k1.ky + k2.ky), ph1 + ph2))

    terms = []
    sigma = cfg.optical_blur
    for amp, q, phase in raw:
        if amp == 0:
            continue
        q = q.rotated(d.twist)
        amp *= math.exp(-0.5 * (q.norm * sigma) ** 2)
        if amp < HARMONIC_FLOOR:
            continue
        terms.append((amp, q.as_tuple(), phase - q.dot(d.u)))
    return terms


def _aperture_profile(coords: np.ndarray, cfg: RenderConfig) -> np.ndarray:
    if cfg.aperture_mm <= 0:
        return np.ones_like(coords)
    half = 0.5 * cfg.aperture_mm
    s = max(cfg.aperture_softness_mm, 1e-9) * math.sqrt(2.0)
    return 0.5 * (erf((coords + half) / s) - erf((coords - half) / s))


def _box(center: Tuple[float, float], radius: float, xs: np.ndarray, ys: np.ndarray):
    cols = slice(
        int(np.searchsorted(xs, center[0] - radius)),
        int(np.searchsorted(xs, center[0] + radius, side="right")),
    )
    rows = slice(
        int(np.searchsorted(ys, center[1] - radius)),
        int(np.searchsorted(ys, center[1] + radius, side="right")),
    )
    return rows, cols


def _contact_brightness(d: DeformationState, m: MaterialModel, cfg: RenderConfig,
                        xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """kappa * (P * h) plus the illuminated contact rim."""
    out = np.zeros((len(ys), len(xs)))
    if d.contact_radius <= 0 or d.normal_force <= 0:
        return out
    if m.brightness_gain > 0:
        pad = 4.0 * m.psf_sigma + 2.0 / cfg.scale
        rows, cols = _box(d.contact_center, d.contact_radius + pad, xs, ys)
        patch = pressure_field(d, xs[cols], ys[rows])
        if m.psf_sigma > 0:
            patch = gaussian_filter(patch, sigma=m.psf_sigma * cfg.scale, mode="constant")
        out[rows, cols] += m.brightness_gain * patch

    if cfg.rim_gain > 0 and cfg.rim_width > 0:
        amp = cfg.rim_gain * (d.normal_force / RIM_REFERENCE_FORCE) ** (2.0 / 3.0)
        sigma = 0.5 * cfg.rim_width
        rows, cols = _box(d.contact_center, d.contact_radius + 4.0 * sigma, xs, ys)
        dx = xs[cols][None, :] - d.contact_center[0]
        dy = ys[rows][:, None] - d.contact_center[1]
        r = np.sqrt(dx * dx + dy * dy)
        out[rows, cols] += amp * np.exp(-0.5 * ((r - d.contact_radius) / sigma) ** 2)
    return out


def render(
    g: SensorGeometry,
    d: DeformationState,
    m: MaterialModel,
    cfg: RenderConfig,
    seed: Optional[int] = None,
) -> ImageGray:
    """Render one fringe frame.

    Args:
        g: sensor geometry at rest
        d: deformation from the load model
        m: material model (brightness gain and pressure PSF)
        cfg: raster settings
        seed: noise seed; defaults to cfg.seed

    Returns:
        ImageGray of cfg.resolution x cfg.resolution pixels.

    Raises:
        UndersampledGrating: an apparent pitch is below cfg.min_pitch_px.
        DegenerateGratings: the deformed gratings do not beat.
    """
    far, near = deformed_gratings(g, d)
    _check_sampling((far, near), cfg)
    moire_descriptor(far, near)

    n = cfg.resolution
    xs, ys = pixel_axes(n, n, cfg.scale)

    fringe = np.zeros((n, n))
    for amp, q, phase in _harmonics(far, near, d, cfg):
        fringe += amp * plane_wave(q, phase, xs, ys)
    if cfg.aperture_mm > 0:
        fringe *= _aperture_profile(ys, cfg)[:, None] * _aperture_profile(xs, cfg)[None, :]

    i0 = cfg.baseline_intensity
    image = i0 + (1.0 - i0) * (PATTERN_MEAN + fringe)
    image += _contact_brightness(d, m, cfg, xs, ys)

    if cfg.noise_sigma > 0:
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        image += rng.normal(0.0, cfg.noise_sigma, size=image.shape)

    return ImageGray(np.clip(image, 0.0, 1.0), scale=cfg.scale)


def render_wrench(
    w: Wrench,
    g: SensorGeometry,
    m: MaterialModel,
    cfg: RenderConfig,
    ranges: LoadRanges = DEFAULT_RANGES,
    seed: Optional[int] = None,
) -> ImageGray:
    """Load model followed by render."""
    return render(g, wrench_to_deformation(w, m, g, ranges), m, cfg, seed=seed)


def render_sequence(
    wrench_trace: Sequence[Wrench],
    g: SensorGeometry,
    m: MaterialModel,
    cfg: RenderConfig,
    ranges: LoadRanges = DEFAULT_RANGES,
) -> List[ImageGray]:
    """Render one frame per wrench; frame i uses sub-seed derive_seed(cfg.seed, i)."""
    if len(wrench_trace) == 0:
        raise ConfigError("wrench trace is empty")
    return [
        render_wrench(w, g, m, cfg, ranges, seed=derive_seed(cfg.seed, i))
        for i, w in enumerate(wrench_trace)
    ]


# PGM codec ---------------------------------------------------------------------

FRAME_PATTERN = "frame_{:06d}.pgm"


def encode_pgm(img: ImageGray) -> bytes:
    """Binary P5, 8-bit, intensity = round(value * 255)."""
    buf = io.BytesIO()
    Image.fromarray(img.to_uint8()).save(buf, format="PPM")
    return buf.getvalue()


def decode_pgm(data: bytes, scale: float = 20.0) -> ImageGray:
    """Parse an 8-bit grayscale image (normally PGM).

    Raises:
        ArtifactError: unreadable, truncated or not 8-bit grayscale.
    """
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            if im.mode != "L":
                raise ArtifactError(f"expected an 8-bit grayscale frame, got {im.format} mode {im.mode}")
            pixels = np.asarray(im, dtype=float)
    except (OSError, ValueError, SyntaxError) as e:
        raise ArtifactError(f"cannot decode frame: {e}") from e
    return ImageGray(pixels / 255.0, scale=scale)


def read_pgm(path: Union[str, Path], scale: float = 20.0) -> ImageGray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ArtifactError(f"cannot read {path}: {e}") from e
    try:
        return decode_pgm(data, scale=scale)
    except ArtifactError as e:
        raise ArtifactError(f"{path}: {e}") from e


def write_pgm(path: Union[str, Path], img: ImageGray) -> Path:
    from moire_sensor_sim.artifacts import atomic_write_bytes

    return atomic_write_bytes(Path(path), encode_pgm(img))
