"""
Physics feature extraction from fringe images.

Observables per frame:
- mean brightness I
- brightness centroid c (mm, relative to the image centre)
- fringe period and orientation from the dominant spectral peak
- phase gradient and phase offset against a reference frame, by
  demodulating the fringe band to baseband
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import fft as sfft
from scipy.ndimage import distance_transform_edt, fourier_gaussian
from scipy.signal.windows import tukey
from tqdm import tqdm

from moire_sensor_sim.errors import DimensionMismatch, NoPeak, ZeroImage
from moire_sensor_sim.optics import FringeDescriptor, WaveVector2
from moire_sensor_sim.synth import ImageGray, pixel_axes

logger = logging.getLogger(__name__)

MIN_SPECTRUM_SIZE = 64
FEATURE_COLUMNS = ["frame", "I", "cx", "cy", "gpx", "gpy", "theta", "lambda", "band_energy", "pox", "poy"]


@dataclass(frozen=True)
class FeatureConfig:
    """Extraction settings."""

    dc_exclusion_radius: float = 2.0  # bins
    peak_floor: float = 0.05
    min_fringe_energy: float = 1e-8  # non-DC share of the windowed image energy
    band_radius: float = 3.0  # bins
    roi_fraction: float = 0.7
    lowpass_ratio: float = 0.5
    taper_flat_fraction: float = 0.8
    zoom_refine: bool = True
    zoom_points: int = 17
    cross_family: bool = True
    refine_with_phase: bool = True
    mask_contact: bool = True
    contact_smoothing: float = 0.75  # reference fringe periods
    contact_threshold: float = 0.003  # intensity
    contact_guard: float = 0.5  # reference fringe periods
    min_valid_fraction: float = 0.2
    reference_scaled_offsets: bool = True


DEFAULT_FEATURES = FeatureConfig()


@dataclass(frozen=True)
class SpectralPeak:
    K: WaveVector2
    period: float
    orientation: float
    band_energy: float


@dataclass(frozen=True)
class PhaseStatistics:
    """Mean phase-difference gradient (rad/mm) and plane-removed offset (rad)."""

    gradient: Tuple[float, float]
    offset: float


@dataclass(frozen=True)
class MoireObservables:
    mean_brightness: float
    centroid: Tuple[float, float]
    mean_phase_gradient: Tuple[float, float]
    orientation: float
    period: float
    band_energy: float
    phase_offset: Tuple[float, float] = (0.0, 0.0)

    def as_row(self, frame: int) -> dict:
        return {
            "frame": frame,
            "I": self.mean_brightness,
            "cx": self.centroid[0],
            "cy": self.centroid[1],
            "gpx": self.mean_phase_gradient[0],
            "gpy": self.mean_phase_gradient[1],
            "theta": self.orientation,
            "lambda": self.period,
            "band_energy": self.band_energy,
            "pox": self.phase_offset[0],
            "poy": self.phase_offset[1],
        }


def wrap_phase(values):
    """Wrap to (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(values, dtype=float), 2.0 * np.pi)
    return np.where(wrapped <= -np.pi, np.pi, wrapped)


def roi_slices(shape: Tuple[int, int], fraction: float) -> Tuple[slice, slice]:
    """Central region covering `fraction` of each axis."""
    out = []
    for n in shape:
        margin = int(round(n * (1.0 - fraction) / 2.0))
        margin = min(max(margin, 0), (n - 1) // 2)
        out.append(slice(margin, n - margin))
    return out[0], out[1]


# Brightness --------------------------------------------------------------------

def mean_brightness(img: ImageGray) -> float:
    return float(np.mean(img.values))


def brightness_centroid(img: ImageGray) -> Tuple[float, float]:
    """Intensity-weighted mean position in mm relative to the image centre.

    Raises:
        ZeroImage: total intensity is zero.
    """
    v = img.values
    total = float(v.sum())
    if total <= 0:
        raise ZeroImage("cannot locate the centroid of an all-dark image")
    xs, ys = pixel_axes(img.width, img.height, img.scale)
    cx = float(v.sum(axis=0) @ xs) / total
    cy = float(v.sum(axis=1) @ ys) / total
    return cx, cy


# Spectrum ----------------------------------------------------------------------

def _parabolic(left: float, mid: float, right: float) -> float:
    """Vertex offset of the parabola through three equally spaced samples."""
    denom = left + right - 2.0 * mid
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))


def _windowed_spectrum(img: ImageGray):
    """Mean-removed Hann-windowed frame, its half-plane power, bin axes and the
    windowed frame energy on the same scale as the power."""
    v = img.values
    h, w = v.shape
    if h < MIN_SPECTRUM_SIZE or w < MIN_SPECTRUM_SIZE:
        raise DimensionMismatch(f"spectral analysis needs >= {MIN_SPECTRUM_SIZE}x{MIN_SPECTRUM_SIZE}, got {h}x{w}")
    win = np.outer(np.hanning(h), np.hanning(w))
    centered = (v - float(np.sum(v * win)) / float(np.sum(win))) * win
    power = np.abs(sfft.rfft2(centered)) ** 2
    fy = sfft.fftfreq(h) * h
    fx = np.arange(power.shape[1], dtype=float)
    energy = float(np.sum((v * win) ** 2)) * h * w
    return centered, power, fy, fx, energy


def _band_fraction(power, fy, fx, by, bx, cfg: FeatureConfig) -> float:
    r_dc = np.hypot(fy[:, None], fx[None, :])
    nondc = r_dc > cfg.dc_exclusion_radius
    total = float(power[nondc].sum())
    if total <= 0:
        return 0.0
    band = (np.hypot(fy[:, None] - by, fx[None, :] - bx) <= cfg.band_radius) & nondc
    return float(power[band].sum()) / total


def _zoom_refine(centered: np.ndarray, by: float, bx: float, points: int) -> Tuple[float, float]:
    """Locate the peak on a fine grid (+-1 bin) with a matrix DFT, then interpolate."""
    h, w = centered.shape
    offsets = np.linspace(-1.0, 1.0, points)
    step = offsets[1] - offsets[0]
    my, mx = by + offsets, bx + offsets
    ey = np.exp(-2j * np.pi * np.outer(my, np.arange(h)) / h)
    ex = np.exp(-2j * np.pi * np.outer(np.arange(w), mx) / w)
    logp = np.log(np.abs(ey @ centered @ ex) ** 2 + 1e-300)
    j, i = np.unravel_index(int(np.argmax(logp)), logp.shape)
    dy = _parabolic(logp[j - 1, i], logp[j, i], logp[j + 1, i]) if 0 < j < points - 1 else 0.0
    dx = _parabolic(logp[j, i - 1], logp[j, i], logp[j, i + 1]) if 0 < i < points - 1 else 0.0
    return my[j] + dy * step, mx[i] + dx * step


def _bins_to_wavevector(by: float, bx: float, img: ImageGray) -> WaveVector2:
    return WaveVector2(2.0 * np.pi * bx * img.scale / img.width, 2.0 * np.pi * by * img.scale / img.height)


def spectral_peak(img: ImageGray, config: Optional[FeatureConfig] = None) -> SpectralPeak:
    """Dominant non-DC fringe peak.

    Hann window, real 2-D DFT (one half-plane), DC-exclusion disk, coarse
    parabolic sub-bin fit and an optional zoomed DFT refinement.

    Raises:
        NoPeak: the energy outside DC is below `min_fringe_energy` of the
            windowed frame energy (a uniform frame leaves only rounding
            residue there), or the peak band holds less than `peak_floor`
            of the non-DC energy.
    """
    cfg = config or DEFAULT_FEATURES
    centered, power, fy, fx, energy = _windowed_spectrum(img)
    h = power.shape[0]
    ncols = power.shape[1]

    nondc = np.hypot(fy[:, None], fx[None, :]) > cfg.dc_exclusion_radius
    fringe = float(power[nondc].sum())
    if fringe <= 0 or fringe <= cfg.min_fringe_energy * energy:
        raise NoPeak(f"image has no structure outside DC (non-DC share {fringe / max(energy, 1e-300):.3g})")
    iy, ix = np.unravel_index(int(np.argmax(np.where(nondc, power, -1.0))), power.shape)

    logp = np.log(power + 1e-300)
    by = fy[iy] + _parabolic(logp[(iy - 1) % h, ix], logp[iy, ix], logp[(iy + 1) % h, ix])
    left = logp[iy, ix - 1] if ix > 0 else logp[(-iy) % h, 1]
    right = logp[iy, ix + 1] if ix + 1 < ncols else logp[(-iy) % h, ix - 1]
    bx = fx[ix] + _parabolic(left, logp[iy, ix], right)

    band = _band_fraction(power, fy, fx, by, bx, cfg)
    if band < cfg.peak_floor:
        raise NoPeak(f"fringe band holds {band:.3f} of the spectrum (floor {cfg.peak_floor})")

    if cfg.zoom_refine:
        by, bx = _zoom_refine(centered, by, bx, cfg.zoom_points)

    desc = FringeDescriptor.from_wavevector(_bins_to_wavevector(by, bx, img))
    return SpectralPeak(K=desc.K, period=desc.period, orientation=desc.orientation, band_energy=band)


def band_energy_at(img: ImageGray, K: WaveVector2, config: Optional[FeatureConfig] = None) -> float:
    """Fraction of non-DC spectral energy within band_radius bins of K."""
    cfg = config or DEFAULT_FEATURES
    _, power, fy, fx, _ = _windowed_spectrum(img)
    bx = K.kx * img.width / (2.0 * np.pi * img.scale)
    by = K.ky * img.height / (2.0 * np.pi * img.scale)
    if bx < 0:
        bx, by = -bx, -by
    return _band_fraction(power, fy, fx, by, bx, cfg)


# Phase -------------------------------------------------------------------------

def phase_map(
    img: ImageGray,
    K: WaveVector2,
    config: Optional[FeatureConfig] = None,
    weight: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Wrapped phase of the fringe band at K, in (-pi, pi].

    The frame is tapered, shifted by exp(-i K.x) and low-passed with a disk of
    radius lowpass_ratio * |K|. With `weight` the frame is centred on its
    weighted mean and multiplied by the weight before demodulation; zero
    weight removes a region.
    """
    cfg = config or DEFAULT_FEATURES
    v = img.values
    h, w = v.shape
    if weight is None:
        centred = v - v.mean()
    else:
        weight = np.asarray(weight, dtype=float)
        if weight.shape != v.shape:
            raise DimensionMismatch(f"weight {weight.shape} does not match frame {v.shape}")
        total = float(weight.sum())
        if total <= 0:
            raise DimensionMismatch("demodulation weight is zero everywhere")
        centred = (v - float(np.sum(v * weight)) / total) * weight

    xs, ys = pixel_axes(w, h, img.scale)
    alpha = 1.0 - cfg.taper_flat_fraction
    taper = np.outer(tukey(h, alpha), tukey(w, alpha))
    carrier = np.exp(-1j * K.ky * ys)[:, None] * np.exp(-1j * K.kx * xs)[None, :]
    spectrum = sfft.fft2(centred * taper * carrier)

    ky = 2.0 * np.pi * sfft.fftfreq(h, d=1.0 / img.scale)
    kx = 2.0 * np.pi * sfft.fftfreq(w, d=1.0 / img.scale)
    cutoff = cfg.lowpass_ratio * K.norm
    mask = (ky[:, None] ** 2 + kx[None, :] ** 2) <= cutoff * cutoff
    return wrap_phase(np.angle(sfft.ifft2(spectrum * mask)))


def contact_region(img: ImageGray, reference: ImageGray, sigma_mm: float, threshold: float) -> np.ndarray:
    """Pixels brightened by contact: the Gaussian-smoothed frame-minus-reference
    difference exceeds `threshold`.

    Smoothing over most of a fringe period suppresses the fringe change itself
    and keeps the broad contact brightness.
    """
    if img.shape != reference.shape:
        raise DimensionMismatch(f"frame {img.shape} does not match reference {reference.shape}")
    diff = img.values - reference.values
    spectrum = fourier_gaussian(sfft.rfft2(diff), sigma=sigma_mm * img.scale, n=diff.shape[1])
    return sfft.irfft2(spectrum, s=diff.shape) > threshold


def mean_phase_gradient(
    phase: np.ndarray,
    reference_phase: np.ndarray,
    scale: float = 20.0,
    roi_fraction: float = 0.7,
    valid: Optional[np.ndarray] = None,
) -> PhaseStatistics:
    """Gradient and offset of d = wrap(reference_phase - phase) over the central ROI.

    The gradient is the mean of wrap-aware finite differences. The offset is a
    robust circular location of d after removing that plane, with positions
    measured from the image centre. `valid` restricts both to the marked
    pixels (a difference counts when both of its ends are valid).
    """
    phase = np.asarray(phase)
    reference_phase = np.asarray(reference_phase)
    if phase.shape != reference_phase.shape:
        raise DimensionMismatch(f"phase fields differ in shape: {phase.shape} vs {reference_phase.shape}")
    if valid is not None and np.shape(valid) != phase.shape:
        raise DimensionMismatch(f"valid mask {np.shape(valid)} does not match phase {phase.shape}")

    rows, cols = roi_slices(phase.shape, roi_fraction)
    diff = wrap_phase(reference_phase - phase)[rows, cols]
    dx = wrap_phase(np.diff(diff, axis=1))
    dy = wrap_phase(np.diff(diff, axis=0))
    if valid is None:
        keep = np.ones(diff.shape, dtype=bool)
    else:
        keep = np.asarray(valid, dtype=bool)[rows, cols]
    pairs_x = keep[:, 1:] & keep[:, :-1]
    pairs_y = keep[1:, :] & keep[:-1, :]
    if not (pairs_x.any() and pairs_y.any()):
        raise DimensionMismatch("no valid pixel pairs inside the phase ROI")
    gx = float(np.mean(dx[pairs_x])) * scale
    gy = float(np.mean(dy[pairs_y])) * scale

    xs, ys = pixel_axes(phase.shape[1], phase.shape[0], scale)
    resid = wrap_phase(diff - gx * xs[cols][None, :] - gy * ys[rows][:, None])[keep]
    center = float(np.angle(np.mean(np.exp(1j * resid))))
    offset = center + float(np.median(wrap_phase(resid - center)))
    return PhaseStatistics(gradient=(gx, gy), offset=float(wrap_phase(offset)))


# Bundled extraction ------------------------------------------------------------

class FeatureExtractor:
    """Extract observables against a fixed zero-load reference frame.

    The reference spectrum and phase maps are computed once. Frames with
    contact brightness are demodulated with the contact region weighted out,
    and the reference is demodulated with the same weight so both phase maps
    see the same support. Masked frames are demodulated a second time at the
    measured fringe vector.
    """

    def __init__(self, reference: ImageGray, config: Optional[FeatureConfig] = None):
        self.config = config or DEFAULT_FEATURES
        self.reference = reference
        self.reference_peak = spectral_peak(reference, self.config)
        self.K_ref = self.reference_peak.K
        self.K_cross = self.K_ref.rotated(math.pi / 2.0)
        self._ref_phase = phase_map(reference, self.K_ref, self.config)
        self._ref_cross = (
            phase_map(reference, self.K_cross, self.config) if self.config.cross_family else None
        )
        logger.debug(
            "Reference fringe: period %.4f mm, orientation %.3f deg",
            self.reference_peak.period,
            math.degrees(self.reference_peak.orientation),
        )

    def contact_support(self, img: ImageGray) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
        """(demodulation weight, valid statistics mask), or (None, None) to use the whole frame.

        The weight is zero on the contact region. Statistics skip pixels within
        contact_guard periods of it. When too little of the ROI is left the
        frame is used whole.
        """
        cfg = self.config
        if not cfg.mask_contact:
            return None, None
        period = self.reference_peak.period
        contact = contact_region(img, self.reference, cfg.contact_smoothing * period, cfg.contact_threshold)
        if not contact.any():
            return None, None

        valid = distance_transform_edt(~contact) > cfg.contact_guard * period * img.scale
        rows, cols = roi_slices(img.shape, cfg.roi_fraction)
        share = float(valid[rows, cols].mean())
        if share < cfg.min_valid_fraction:
            logger.debug("Contact covers all but %.1f%% of the ROI; using the whole frame", 100.0 * share)
            return None, None
        return (~contact).astype(float), valid

    def _reference_phase(self, K: WaveVector2, weight: Optional[np.ndarray]) -> np.ndarray:
        if weight is None:
            return self._ref_phase if K is self.K_ref else self._ref_cross
        return phase_map(self.reference, K, self.config, weight)

    def _statistics(self, img: ImageGray, carrier: WaveVector2, ref_phase: np.ndarray,
                    weight: Optional[np.ndarray], valid: Optional[np.ndarray]) -> PhaseStatistics:
        cfg = self.config
        phase = phase_map(img, carrier, cfg, weight)
        return mean_phase_gradient(phase, ref_phase, img.scale, cfg.roi_fraction, valid)

    def extract(self, img: ImageGray) -> MoireObservables:
        cfg = self.config
        if img.shape != self.reference.shape or img.scale != self.reference.scale:
            raise DimensionMismatch(
                f"frame {img.shape}@{img.scale} does not match reference "
                f"{self.reference.shape}@{self.reference.scale}"
            )

        weight, valid = self.contact_support(img)
        ref_main = self._reference_phase(self.K_ref, weight)
        stats = self._statistics(img, self.K_ref, ref_main, weight, valid)
        shift = WaveVector2(*stats.gradient)
        refined = cfg.refine_with_phase and shift.norm <= 0.9 * cfg.lowpass_ratio * self.K_ref.norm
        carrier = self.K_ref
        if refined and weight is not None:
            # second pass at the measured carrier, flat baseband at the mask edge
            carrier = self.K_ref - shift
            second = self._statistics(img, carrier, ref_main, weight, valid)
            stats = PhaseStatistics(
                gradient=(stats.gradient[0] + second.gradient[0], stats.gradient[1] + second.gradient[1]),
                offset=second.offset,
            )

        if refined:
            desc = FringeDescriptor.from_wavevector(self.K_ref - WaveVector2(*stats.gradient))
            band = band_energy_at(img, desc.K, cfg)
        else:
            logger.debug("Fringe moved %.3f rad/mm from reference; using spectral peak", shift.norm)
            peak = spectral_peak(img, cfg)
            desc = FringeDescriptor(K=peak.K, period=peak.period, orientation=peak.orientation)
            band = peak.band_energy

        cross_offset = 0.0
        if self._ref_cross is not None:
            ref_cross = self._reference_phase(self.K_cross, weight)
            cross_carrier = carrier.rotated(math.pi / 2.0)
            cross_offset = self._statistics(img, cross_carrier, ref_cross, weight, valid).offset

        offsets = (stats.offset, cross_offset)
        if cfg.reference_scaled_offsets:
            # phase per unit displacement follows |K|; report at the reference |K|
            gain = self.K_ref.norm / desc.K.norm
            offsets = (offsets[0] * gain, offsets[1] * gain)

        return MoireObservables(
            mean_brightness=mean_brightness(img),
            centroid=brightness_centroid(img),
            mean_phase_gradient=stats.gradient,
            orientation=desc.orientation,
            period=desc.period,
            band_energy=band,
            phase_offset=offsets,
        )

    def extract_many(self, frames: Iterable[ImageGray], progress: bool = False) -> List[MoireObservables]:
        return [self.extract(f) for f in tqdm(frames, desc="Extracting", disable=not progress)]


def extract_all(img: ImageGray, reference: ImageGray, config: Optional[FeatureConfig] = None) -> MoireObservables:
    """Convenience wrapper: observables of `img` against `reference`."""
    return FeatureExtractor(reference, config).extract(img)


def observables_frame(observables: Sequence[MoireObservables], frames: Optional[Sequence[int]] = None) -> pd.DataFrame:
    """Feature table in CSV column order."""
    frames = list(range(len(observables))) if frames is None else list(frames)
    rows = [obs.as_row(i) for i, obs in zip(frames, observables)]
    return pd.DataFrame(rows, columns=FEATURE_COLUMNS)
