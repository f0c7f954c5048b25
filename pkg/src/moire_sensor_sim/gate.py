"""
Contact gate: energy ratio against a rest frame, switched between vision and
tactile mode with a hysteresis band and a consecutive-frame debounce.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from moire_sensor_sim.errors import ConfigError, DimensionMismatch, NumericError
from moire_sensor_sim.features import roi_slices
from moire_sensor_sim.loads import DeformationState, MaterialModel
from moire_sensor_sim.optics import SensorGeometry
from moire_sensor_sim.synth import ImageGray, RenderConfig, derive_seed, render

logger = logging.getLogger(__name__)

ENERGY_EPS = 1e-12
THRESHOLD_FLOOR = 1e-6
NOISE_STREAM = 0x6A7E  # seed namespace for noise-only calibration frames


class Mode(str, Enum):
    VISION = "vision"
    TACTILE = "tactile"


@dataclass(frozen=True)
class GateConfig:
    """Switch-on threshold, hysteresis ratio (t_off = t_on * ratio) and debounce."""

    t_on: float
    hysteresis_ratio: float = 0.8
    debounce_frames: int = 2
    frame_rate: float = 60.0  # Hz

    def __post_init__(self):
        if not (math.isfinite(self.t_on) and self.t_on > 0):
            raise ConfigError(f"t_on must be > 0, got {self.t_on}")
        if not 0.0 < self.hysteresis_ratio < 1.0:
            raise ConfigError(f"hysteresis_ratio must lie in (0, 1), got {self.hysteresis_ratio}")
        if self.debounce_frames < 1:
            raise ConfigError(f"debounce_frames must be >= 1, got {self.debounce_frames}")
        if not self.frame_rate > 0:
            raise ConfigError(f"frame_rate must be > 0, got {self.frame_rate}")

    @property
    def t_off(self) -> float:
        return self.t_on * self.hysteresis_ratio


@dataclass(frozen=True)
class GateState:
    mode: Mode = Mode.VISION
    consecutive_count: int = 0
    baseline_energy: float = 0.0
    last_er: float = 0.0


def switch_latency_ms(cfg: GateConfig) -> float:
    """Delay from the first frame of a sustained crossing to the switch."""
    return cfg.debounce_frames / cfg.frame_rate * 1000.0


def _values(img: Union[ImageGray, np.ndarray]) -> np.ndarray:
    return img.values if isinstance(img, ImageGray) else np.asarray(img, dtype=float)


def baseline_energy(baseline: Union[ImageGray, np.ndarray], roi_fraction: float = 0.7) -> float:
    b = _values(baseline)
    rows, cols = roi_slices(b.shape, roi_fraction)
    return float(np.sum(b[rows, cols] ** 2))


def energy_ratio(
    frame: Union[ImageGray, np.ndarray],
    baseline: Union[ImageGray, np.ndarray],
    roi_fraction: float = 0.7,
    eps: float = ENERGY_EPS,
) -> float:
    """ER = sum((frame - baseline)^2) / max(sum(baseline^2), eps) over the central ROI.

    Raises:
        DimensionMismatch: frame and baseline differ in shape.
    """
    f, b = _values(frame), _values(baseline)
    if f.shape != b.shape:
        raise DimensionMismatch(f"frame {f.shape} and baseline {b.shape} differ")
    rows, cols = roi_slices(f.shape, roi_fraction)
    diff = f[rows, cols] - b[rows, cols]
    return float(np.sum(diff * diff)) / max(float(np.sum(b[rows, cols] ** 2)), eps)


def update(state: GateState, er: float, cfg: GateConfig) -> Tuple[GateState, Mode]:
    """One debounced hysteresis step.

    Vision counts frames with er > t_on, tactile counts frames with
    er < t_off; any other frame resets the count. The mode flips once the
    count reaches debounce_frames.
    """
    if not (math.isfinite(er) and er >= 0):
        raise NumericError(f"energy ratio must be finite and >= 0, got {er}")
    if state.mode is Mode.VISION:
        crossing = er > cfg.t_on
        other = Mode.TACTILE
    else:
        crossing = er < cfg.t_off
        other = Mode.VISION

    count = state.consecutive_count + 1 if crossing else 0
    mode = state.mode
    if count >= cfg.debounce_frames:
        mode, count = other, 0
    new = replace(state, mode=mode, consecutive_count=count, last_er=float(er))
    return new, mode


class ContactGate:
    """Stateful wrapper around `update` for one frame stream.

    gate = ContactGate(cfg, baseline)
    gate.step(frame)  # Mode.VISION / Mode.TACTILE

    One instance serves one stream; it is not thread-safe.
    """

    def __init__(self, cfg: GateConfig, baseline: Union[ImageGray, np.ndarray], roi_fraction: float = 0.7):
        self.cfg = cfg
        self.baseline = baseline
        self.roi_fraction = roi_fraction
        self.state = GateState(baseline_energy=baseline_energy(baseline, roi_fraction))
        self.switches = 0

    @property
    def mode(self) -> Mode:
        return self.state.mode

    def feed(self, er: float) -> Mode:
        previous = self.state.mode
        self.state, mode = update(self.state, er, self.cfg)
        if mode is not previous:
            self.switches += 1
            logger.debug("Gate switched %s -> %s at ER=%.4g", previous.value, mode.value, er)
        return mode

    def step(self, frame: Union[ImageGray, np.ndarray]) -> Mode:
        return self.feed(energy_ratio(frame, self.baseline, self.roi_fraction))


def run_gate(
    frames: Iterable[Union[ImageGray, np.ndarray]],
    baseline: Union[ImageGray, np.ndarray],
    cfg: GateConfig,
    roi_fraction: float = 0.7,
    progress: bool = False,
) -> pd.DataFrame:
    """Mode log with columns frame, er, mode."""
    gate = ContactGate(cfg, baseline, roi_fraction)
    rows = []
    for i, frame in enumerate(tqdm(frames, desc="Gating", disable=not progress)):
        er = energy_ratio(frame, baseline, roi_fraction)
        rows.append({"frame": i, "er": er, "mode": gate.feed(er).value})
    logger.info("Gate processed %d frames, %d switch(es)", len(rows), gate.switches)
    return pd.DataFrame(rows, columns=["frame", "er", "mode"])


# Threshold calibration ---------------------------------------------------------

def noise_energy_ratios(
    g: SensorGeometry,
    m: MaterialModel,
    cfg: RenderConfig,
    baseline: ImageGray,
    count: int,
    roi_fraction: float = 0.7,
    seed: Optional[int] = None,
    quantize: bool = False,
) -> List[float]:
    """ER of `count` zero-wrench renders with independent noise.

    With `quantize` the renders go through 8-bit rounding, matching frames
    read back from PGM.
    """
    if count < 1:
        raise ConfigError(f"calibration needs at least one frame, got {count}")
    base_seed = derive_seed(cfg.seed if seed is None else seed, NOISE_STREAM)
    rest = DeformationState.identity(g)
    ratios = []
    for i in range(count):
        img = render(g, rest, m, cfg, seed=derive_seed(base_seed, i))
        if quantize:
            img = ImageGray(img.to_uint8() / 255.0, scale=img.scale)
        ratios.append(energy_ratio(img, baseline, roi_fraction))
    return ratios


def calibrate_threshold(
    noise_ratios: Sequence[float],
    factor: float = 5.0,
    percentile: float = 99.0,
    floor: float = THRESHOLD_FLOOR,
) -> float:
    """t_on = factor * the given percentile of noise-only energy ratios."""
    if len(noise_ratios) == 0:
        raise ConfigError("no noise-only energy ratios to calibrate from")
    return max(factor * float(np.percentile(noise_ratios, percentile)), floor)
