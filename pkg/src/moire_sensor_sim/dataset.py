"""
Synthetic calibration data.

- sample_wrenches: isolated per-axis sweeps plus mixed random contacts
- build_dataset: render + extract every sample (optionally in a process pool)
- named_sweep / episode_trace: deformation sweeps and a contact episode used
  by the simulate command
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import partial
from multiprocessing import Pool
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from moire_sensor_sim.errors import ArtifactError, ConfigError
from moire_sensor_sim.features import (
    FEATURE_COLUMNS,
    FeatureConfig,
    FeatureExtractor,
    MoireObservables,
    observables_frame,
)
from moire_sensor_sim.loads import (
    AXES,
    DEFAULT_RANGES,
    NMM_PER_NM,
    DeformationState,
    LoadRanges,
    MaterialModel,
    Wrench,
    wrench_to_deformation,
)
from moire_sensor_sim.optics import SensorGeometry
from moire_sensor_sim.synth import ImageGray, RenderConfig, derive_seed, read_pgm, render, render_wrench

logger = logging.getLogger(__name__)

SWEEP_KINDS = ("fz", "fx", "fy", "tz", "tx", "ty")
MIXED = "mixed"
NAMED_SWEEPS = ("press", "shear", "scale", "rotation")
WRENCH_COLUMNS = ["frame", "sweep", *AXES]


# Sampling ----------------------------------------------------------------------

def _sweep_values(kind: str, count: int, ranges: LoadRanges, preload: float) -> List[Wrench]:
    if kind == "fz":
        lo, hi = ranges.Fz
        return [Wrench(Fz=v) for v in np.linspace(lo, hi, count)]
    if kind in ("fx", "fy", "tz"):
        axis = {"fx": "Fx", "fy": "Fy", "tz": "Tz"}[kind]
        lo, hi = ranges.bounds(axis)
        return [Wrench(**{axis: float(v), "Fz": preload}) for v in np.linspace(lo, hi, count)]
    if kind in ("tx", "ty"):
        axis = "Tx" if kind == "tx" else "Ty"
        lo, hi = ranges.bounds(axis)
        reach = preload * ranges.max_contact_offset / NMM_PER_NM
        lo, hi = max(lo, -reach), min(hi, reach)
        return [Wrench(**{axis: float(v), "Fz": preload}) for v in np.linspace(lo, hi, count)]
    raise ConfigError(f"unknown sweep kind {kind!r}; expected one of {SWEEP_KINDS}")


def sample_wrenches(
    n: int,
    ranges: LoadRanges = DEFAULT_RANGES,
    seed: int = 0,
    sweep_fraction: float = 0.5,
    sweep_kinds: Sequence[str] = SWEEP_KINDS,
    preload: float = 1.0,
    mixed_contact_radius: float = 10.0,
) -> List[Tuple[str, Wrench]]:
    """Draw `n` labelled wrenches.

    The first round(n * sweep_fraction) samples are isolated sweeps, split
    evenly over `sweep_kinds` and ascending within each sweep. Every sweep but
    fz runs at the `preload` normal force. The rest are mixed contacts with the
    contact centre uniform in a disk of `mixed_contact_radius`.
    """
    if n < 1:
        raise ConfigError(f"need at least one sample, got n={n}")
    if not 0.0 <= sweep_fraction <= 1.0:
        raise ConfigError(f"sweep_fraction must lie in [0, 1], got {sweep_fraction}")
    if not ranges.force_floor <= preload <= ranges.Fz[1]:
        raise ConfigError(f"preload {preload} N outside [{ranges.force_floor}, {ranges.Fz[1]}]")
    if mixed_contact_radius > ranges.max_contact_offset:
        raise ConfigError("mixed_contact_radius exceeds max_contact_offset")

    kinds = list(sweep_kinds)
    n_sweep = int(round(n * sweep_fraction)) if kinds else 0
    samples: List[Tuple[str, Wrench]] = []
    for i, kind in enumerate(kinds):
        count = n_sweep // len(kinds) + (1 if i < n_sweep % len(kinds) else 0)
        if count:
            samples.extend((kind, w) for w in _sweep_values(kind, count, ranges, preload))

    rng = np.random.default_rng(seed)
    fz_lo = max(ranges.force_floor, ranges.Fz[0])
    for _ in range(n - len(samples)):
        fz = rng.uniform(fz_lo, ranges.Fz[1])
        fx = rng.uniform(*ranges.Fx)
        fy = rng.uniform(*ranges.Fy)
        tz = rng.uniform(*ranges.Tz)
        r = mixed_contact_radius * math.sqrt(rng.uniform())
        phi = rng.uniform(0.0, 2.0 * math.pi)
        cx, cy = r * math.cos(phi), r * math.sin(phi)
        tx = float(np.clip(fz * cy / NMM_PER_NM, *ranges.Tx))
        ty = float(np.clip(-fz * cx / NMM_PER_NM, *ranges.Ty))
        samples.append((MIXED, Wrench(Fx=fx, Fy=fy, Fz=fz, Tx=tx, Ty=ty, Tz=tz)))
    return samples


def wrench_table(samples: Sequence[Tuple[str, Wrench]]) -> pd.DataFrame:
    rows = [{"frame": i, "sweep": kind, **w.as_dict()} for i, (kind, w) in enumerate(samples)]
    return pd.DataFrame(rows, columns=WRENCH_COLUMNS)


def samples_from_table(df: pd.DataFrame) -> List[Tuple[str, Wrench]]:
    missing = [c for c in WRENCH_COLUMNS if c not in df.columns]
    if missing:
        raise ArtifactError(f"wrench table lacks columns {missing}")
    df = df.sort_values("frame")
    return [(str(r.sweep), Wrench(*(float(getattr(r, a)) for a in AXES))) for r in df.itertuples()]


# Dataset -----------------------------------------------------------------------

@dataclass
class Dataset:
    """Paired wrenches and observables."""

    wrenches: np.ndarray  # (n, 6) in AXES order
    sweeps: List[str]
    observables: List[MoireObservables]
    frames: List[int] = field(default_factory=list)

    def __post_init__(self):
        self.wrenches = np.asarray(self.wrenches, dtype=float).reshape(-1, len(AXES))
        if not self.frames:
            self.frames = list(range(len(self.observables)))
        if not (len(self.wrenches) == len(self.sweeps) == len(self.observables) == len(self.frames)):
            raise ArtifactError("dataset columns differ in length")

    def __len__(self) -> int:
        return len(self.observables)

    def subset(self, kinds: Sequence[str]) -> "Dataset":
        keep = [i for i, s in enumerate(self.sweeps) if s in set(kinds)]
        return Dataset(
            wrenches=self.wrenches[keep],
            sweeps=[self.sweeps[i] for i in keep],
            observables=[self.observables[i] for i in keep],
            frames=[self.frames[i] for i in keep],
        )

    def to_frame(self) -> pd.DataFrame:
        df = observables_frame(self.observables, self.frames)
        df.insert(1, "sweep", self.sweeps)
        for j, axis in enumerate(AXES):
            df[axis] = self.wrenches[:, j]
        return df

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "Dataset":
        missing = [c for c in [*FEATURE_COLUMNS, "sweep", *AXES] if c not in df.columns]
        if missing:
            raise ArtifactError(f"dataset table lacks columns {missing}")
        obs = [
            MoireObservables(
                mean_brightness=float(r["I"]),
                centroid=(float(r["cx"]), float(r["cy"])),
                mean_phase_gradient=(float(r["gpx"]), float(r["gpy"])),
                orientation=float(r["theta"]),
                period=float(r["lambda"]),
                band_energy=float(r["band_energy"]),
                phase_offset=(float(r["pox"]), float(r["poy"])),
            )
            for _, r in df.iterrows()
        ]
        return cls(
            wrenches=df[list(AXES)].to_numpy(dtype=float),
            sweeps=[str(s) for s in df["sweep"]],
            observables=obs,
            frames=[int(f) for f in df["frame"]],
        )

    @classmethod
    def join(cls, features: pd.DataFrame, wrenches: pd.DataFrame) -> "Dataset":
        """Pair a features table with a wrench table on `frame`."""
        merged = features.merge(wrenches[WRENCH_COLUMNS], on="frame", how="inner", validate="one_to_one")
        if len(merged) != len(features):
            raise ArtifactError(
                f"{len(features) - len(merged)} feature rows have no matching wrench"
            )
        return cls.from_frame(merged.sort_values("frame").reset_index(drop=True))


def reference_frame(g: SensorGeometry, m: MaterialModel, cfg: RenderConfig) -> ImageGray:
    """Noise-free zero-load frame."""
    return render(g, DeformationState.identity(g), m, replace(cfg, noise_sigma=0.0))


# Worker pool -------------------------------------------------------------------

@dataclass(frozen=True)
class RenderJob:
    """Read-only state shared by every task of one pool run."""

    geometry: Optional[SensorGeometry]
    material: Optional[MaterialModel]
    config: RenderConfig
    ranges: Optional[LoadRanges]
    extractor: Optional[FeatureExtractor] = None


def _render_task(job: RenderJob, task: Tuple[int, Wrench]) -> ImageGray:
    i, w = task
    cfg = job.config
    return render_wrench(w, job.geometry, job.material, cfg, job.ranges, seed=derive_seed(cfg.seed, i))


def _render_extract_task(job: RenderJob, task: Tuple[int, Wrench]) -> MoireObservables:
    return job.extractor.extract(_render_task(job, task))


def _extract_path_task(job: RenderJob, path: Path) -> MoireObservables:
    return job.extractor.extract(read_pgm(path, scale=job.config.scale))


def _pool_map(fn, tasks: Sequence, job: RenderJob, workers: int, progress: bool, desc: str) -> Iterator:
    """Ordered map of fn(job, task) over `tasks`, in-process when workers <= 1."""
    work = partial(fn, job)
    if workers <= 1:
        yield from (work(t) for t in tqdm(tasks, desc=desc, disable=not progress))
        return
    with Pool(workers) as pool:
        chunk = max(1, len(tasks) // (8 * workers))
        yield from tqdm(pool.imap(work, tasks, chunksize=chunk), total=len(tasks), desc=desc, disable=not progress)


def iter_renders(
    wrenches: Sequence[Wrench],
    g: SensorGeometry,
    m: MaterialModel,
    cfg: RenderConfig,
    ranges: LoadRanges = DEFAULT_RANGES,
    workers: int = 1,
    progress: bool = False,
) -> Iterator[ImageGray]:
    """Frames of render_sequence, produced lazily and in order."""
    tasks = list(enumerate(wrenches))
    return _pool_map(_render_task, tasks, RenderJob(g, m, cfg, ranges), workers, progress, "Rendering")


def extract_paths(
    paths: Sequence[Path],
    reference: ImageGray,
    feature_config: Optional[FeatureConfig] = None,
    workers: int = 1,
    progress: bool = False,
) -> List[MoireObservables]:
    """Read PGM frames (at the reference's scale) and extract their observables."""
    cfg = RenderConfig(scale=reference.scale)
    job = RenderJob(None, None, cfg, None, FeatureExtractor(reference, feature_config or FeatureConfig()))
    return list(_pool_map(_extract_path_task, list(paths), job, workers, progress, "Extracting"))


def build_dataset(
    n: int,
    ranges: LoadRanges = DEFAULT_RANGES,
    seed: int = 0,
    geometry: Optional[SensorGeometry] = None,
    material: Optional[MaterialModel] = None,
    render_config: Optional[RenderConfig] = None,
    feature_config: Optional[FeatureConfig] = None,
    workers: int = 1,
    progress: bool = False,
    **sampling,
) -> Dataset:
    """Sample, render and extract a paired dataset.

    Frame i is rendered with noise seed derive_seed(render_config.seed, i), so
    the result does not depend on `workers`. Extra keyword arguments go to
    sample_wrenches.
    """
    g = geometry or SensorGeometry()
    m = material or MaterialModel()
    cfg = render_config or RenderConfig()
    m.validate_for(g, ranges)

    samples = sample_wrenches(n, ranges, seed, **sampling)
    reference = reference_frame(g, m, cfg)
    tasks = [(i, w) for i, (_, w) in enumerate(samples)]
    logger.info("Rendering %d samples with %d worker(s)", len(tasks), workers)

    job = RenderJob(g, m, cfg, ranges, FeatureExtractor(reference, feature_config or FeatureConfig()))
    observables = list(_pool_map(_render_extract_task, tasks, job, workers, progress, "Rendering"))
    return Dataset(
        wrenches=np.array([w.as_array() for _, w in samples]),
        sweeps=[kind for kind, _ in samples],
        observables=observables,
    )


# Named deformation sweeps and contact episodes -----------------------------------

def named_sweep(
    name: str,
    steps: int,
    g: SensorGeometry,
    m: MaterialModel,
    ranges: LoadRanges = DEFAULT_RANGES,
) -> List[Tuple[float, DeformationState]]:
    """Deformation sweep by name.

    press: indentation 5-100 um (Fz = k_spacing * depth through the load model)
    shear: uniform x displacement 0-90 um
    scale: far-grating strain 0-5 %
    rotation: twist 0-9 degrees
    """
    if steps < 2:
        raise ConfigError(f"a sweep needs at least 2 steps, got {steps}")
    rest = DeformationState.identity(g)
    if name == "press":
        depths = np.linspace(5.0, 100.0, steps)  # um
        return [
            (float(d), wrench_to_deformation(Wrench(Fz=m.k_spacing * d * 1e-3), m, g, ranges))
            for d in depths
        ]
    if name == "shear":
        return [(float(u), replace(rest, u=(u * 1e-3, 0.0))) for u in np.linspace(0.0, 90.0, steps)]
    if name == "scale":
        return [(float(s), replace(rest, strain=s / 100.0)) for s in np.linspace(0.0, 5.0, steps)]
    if name == "rotation":
        return [(float(a), replace(rest, twist=math.radians(a))) for a in np.linspace(0.0, 9.0, steps)]
    raise ConfigError(f"unknown named sweep {name!r}; expected one of {NAMED_SWEEPS}")


SWEEP_UNITS = {"press": "depth_um", "shear": "shear_um", "scale": "strain_pct", "rotation": "twist_deg"}


def episode_trace(n_frames: int, ranges: LoadRanges = DEFAULT_RANGES, preload: float = 1.0) -> List[Wrench]:
    """Approach, press, twist, release and rest, in equal phases."""
    if n_frames < 5:
        raise ConfigError(f"an episode needs at least 5 frames, got {n_frames}")
    sizes = [n_frames // 5 + (1 if i < n_frames % 5 else 0) for i in range(5)]
    twist = 0.5 * ranges.Tz[1]
    trace = [Wrench() for _ in range(sizes[0])]
    trace += [Wrench(Fz=f) for f in np.linspace(0.0, preload, sizes[1] + 1)[1:]]
    trace += [Wrench(Fz=preload, Tz=t) for t in np.linspace(0.0, twist, sizes[2])]
    trace += [Wrench(Fz=f) for f in np.linspace(preload, 0.0, sizes[3] + 1)[1:]]
    trace += [Wrench() for _ in range(sizes[4])]
    return trace
