"""
Run configuration.

One versioned YAML/JSON document validated by pydantic. Every section has
defaults, so `schema_version: "moire-sim/1"` alone is a complete config.
The sections convert to the frozen domain dataclasses used by the library.
"""

import logging
import math
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from moire_sensor_sim.artifacts import canonical_json, sha256_text
from moire_sensor_sim.errors import ArtifactError, ConfigError
from moire_sensor_sim.features import FeatureConfig
from moire_sensor_sim.gate import GateConfig
from moire_sensor_sim.loads import LoadRanges, MaterialModel
from moire_sensor_sim.optics import DESIGN_PAIRS, Grating, SensorGeometry
from moire_sensor_sim.synth import RenderConfig

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "moire-sim/1"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GeometrySection(_Section):
    p1: float = Field(0.35, gt=0, description="far (upper) grating pitch, mm")
    p2: float = Field(0.30, gt=0, description="near (reference) grating pitch, mm")
    far_orientation_deg: float = 0.0
    near_orientation_deg: float = 0.0
    spacing: float = Field(10.0, ge=0, description="grating separation a, mm")
    camera_distance: float = Field(40.0, gt=0, description="camera to near grating Z, mm")

    def to_geometry(self) -> SensorGeometry:
        return SensorGeometry(
            far=Grating(self.p1, math.radians(self.far_orientation_deg)),
            near=Grating(self.p2, math.radians(self.near_orientation_deg)),
            spacing=self.spacing,
            camera_distance=self.camera_distance,
        )


class MaterialSection(_Section):
    c_strain: float = 0.005
    k_shear: float = 2.0
    k_twist: float = 0.1
    k_spacing: float = 2.0
    brightness_gain: float = 2.0
    hertz_radius_coeff: float = 3.0
    psf_sigma: float = 0.5

    def to_material(self) -> MaterialModel:
        return MaterialModel(**self.model_dump())


class RangesSection(_Section):
    Fx: Tuple[float, float] = (-0.2, 0.2)
    Fy: Tuple[float, float] = (-0.2, 0.2)
    Fz: Tuple[float, float] = (0.0, 1.2)
    Tx: Tuple[float, float] = (-0.012, 0.012)
    Ty: Tuple[float, float] = (-0.012, 0.012)
    Tz: Tuple[float, float] = (-0.008, 0.008)
    force_floor: float = Field(0.05, gt=0)
    max_contact_offset: float = Field(15.0, gt=0)

    @model_validator(mode="after")
    def _ordered(self):
        for axis in ("Fx", "Fy", "Fz", "Tx", "Ty", "Tz"):
            lo, hi = getattr(self, axis)
            if lo > hi:
                raise ValueError(f"range {axis} has lower bound {lo} above upper bound {hi}")
        if self.Fz[0] < 0:
            raise ValueError("Fz range must be non-negative")
        return self

    def to_ranges(self) -> LoadRanges:
        return LoadRanges(**self.model_dump())


class RenderSection(_Section):
    resolution: int = Field(800, ge=64)
    scale: float = Field(20.0, gt=0)
    noise_sigma: float = Field(0.01, ge=0)
    rim_gain: float = Field(0.15, ge=0)
    rim_width: float = Field(1.0, ge=0)
    baseline_intensity: float = Field(0.15, ge=0, le=1)
    seed: int = Field(0, ge=0)
    optical_blur: float = Field(0.15, ge=0)
    cross_contrast: float = Field(0.8, ge=0, lt=1)
    aperture_mm: float = Field(30.0, ge=0)
    aperture_softness_mm: float = Field(3.0, gt=0)
    min_pitch_px: float = Field(3.0, gt=0)

    def to_render(self) -> RenderConfig:
        return RenderConfig(**self.model_dump())


class FeaturesSection(_Section):
    dc_exclusion_radius: float = Field(2.0, ge=0)
    peak_floor: float = Field(0.05, ge=0, le=1)
    min_fringe_energy: float = Field(1e-8, ge=0, lt=1)
    band_radius: float = Field(3.0, gt=0)
    roi_fraction: float = Field(0.7, gt=0, le=1)
    lowpass_ratio: float = Field(0.5, gt=0, lt=1)
    taper_flat_fraction: float = Field(0.8, ge=0, le=1)
    zoom_refine: bool = True
    zoom_points: int = Field(17, ge=3)
    cross_family: bool = True
    refine_with_phase: bool = True
    mask_contact: bool = True
    contact_smoothing: float = Field(0.75, gt=0)
    contact_threshold: float = Field(0.003, ge=0)
    contact_guard: float = Field(0.5, ge=0)
    min_valid_fraction: float = Field(0.2, ge=0, le=1)
    reference_scaled_offsets: bool = True

    def to_features(self) -> FeatureConfig:
        return FeatureConfig(**self.model_dump())


class EstimatorSection(_Section):
    ridge_lambda: float = Field(1e-3, ge=0)
    split_seed: int = Field(0, ge=0)
    test_size: float = Field(0.2, gt=0, lt=1)
    n_samples: int = Field(2000, ge=1)
    sweep_fraction: float = Field(0.5, ge=0, le=1)
    sweep_kinds: List[Literal["fz", "fx", "fy", "tz", "tx", "ty"]] = ["fz", "fx", "fy", "tz", "tx", "ty"]
    preload: float = Field(1.0, gt=0)
    mixed_contact_radius: float = Field(10.0, ge=0)
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)

    def sampling(self) -> dict:
        return {
            "sweep_fraction": self.sweep_fraction,
            "sweep_kinds": tuple(self.sweep_kinds),
            "preload": self.preload,
            "mixed_contact_radius": self.mixed_contact_radius,
        }


class GateSection(_Section):
    t_on: Optional[float] = Field(None, gt=0, description="null: calibrate from noise-only frames")
    hysteresis_ratio: float = Field(0.8, gt=0, lt=1)
    debounce_frames: int = Field(2, ge=1)
    frame_rate: float = Field(60.0, gt=0)
    calibration_frames: int = Field(100, ge=1)
    roi_fraction: float = Field(0.7, gt=0, le=1)

    def to_gate(self, t_on: Optional[float] = None) -> GateConfig:
        threshold = self.t_on if t_on is None else t_on
        if threshold is None:
            raise ConfigError("gate.t_on is not set and no calibrated threshold was given")
        return GateConfig(
            t_on=threshold,
            hysteresis_ratio=self.hysteresis_ratio,
            debounce_frames=self.debounce_frames,
            frame_rate=self.frame_rate,
        )


class DesignPair(_Section):
    name: str = ""
    p1: float = Field(gt=0)
    p2: float = Field(gt=0)
    a_over_z: Optional[float] = Field(None, ge=0, lt=1)


def _default_pairs() -> List[DesignPair]:
    return [DesignPair(name=k, p1=p1, p2=p2) for k, (p1, p2) in DESIGN_PAIRS.items()]


class DesignSection(_Section):
    pairs: List[DesignPair] = Field(default_factory=_default_pairs)
    a_over_z: float = Field(0.25, ge=0, lt=1)
    camera_distance: float = Field(40.0, gt=0)
    fz_levels: List[float] = [0.0, 0.4, 0.8, 1.2]


class SimulateSection(_Section):
    named_sweeps: List[Literal["press", "shear", "scale", "rotation"]] = [
        "press", "shear", "scale", "rotation",
    ]
    sweep_steps: int = Field(6, ge=2)
    episode_frames: int = Field(60, ge=0)


class RunConfig(_Section):
    """Complete description of a run."""

    schema_version: Literal["moire-sim/1"]
    geometry: GeometrySection = GeometrySection()
    material: MaterialSection = MaterialSection()
    ranges: RangesSection = RangesSection()
    render: RenderSection = RenderSection()
    features: FeaturesSection = FeaturesSection()
    estimator: EstimatorSection = EstimatorSection()
    gate: GateSection = GateSection()
    design: DesignSection = DesignSection()
    simulate: SimulateSection = SimulateSection()

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        """Override the sampling and noise seeds."""
        if seed is None:
            return self
        return self.model_copy(
            update={
                "estimator": self.estimator.model_copy(update={"seed": seed}),
                "render": self.render.model_copy(update={"seed": seed}),
            }
        )

    def config_hash(self) -> str:
        return sha256_text(canonical_json(self.model_dump(mode="json")))


def default_config() -> RunConfig:
    return RunConfig(schema_version=SCHEMA_VERSION)


def parse_config(doc) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError(f"config must be a mapping, got {type(doc).__name__}")
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise ConfigError(f"{e.error_count()} config error(s); {where}: {first['msg']}") from e


def load_config(path: Optional[Union[str, Path]] = None, seed: Optional[int] = None) -> RunConfig:
    """Load and validate a YAML or JSON config; None gives the defaults."""
    if path is None:
        cfg = default_config()
    else:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ArtifactError(f"cannot read config {path}: {e}") from e
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"config {path} is not valid YAML/JSON: {e}") from e
        cfg = parse_config(doc)
        logger.debug("Loaded config %s", path)
    return cfg.with_seed(seed)
