"""
Command-line interface for the moire sensor simulator.

Commands:
- design: design-space table of grating pairs
- simulate: render a calibration dataset, named sweeps and a contact episode
- extract: physics features from rendered frames
- calibrate: fit the wrench model on features + wrenches
- eval: score a saved model
- gate: run the contact gate over a frame stream
- sensitivity: extracted vs analytic fringe period under normal load
- version: print the package version

Every command prints one JSON line to standard output; logs go to standard
error.
"""

import json
import logging
import math
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from moire_sensor_sim import __version__
from moire_sensor_sim.errors import ArtifactError, MoireSimError

app = typer.Typer(
    name="moire-sim",
    help="Synthetic moire tactile sensor: design, simulate, extract, calibrate, gate",
    add_completion=False,
)
console = Console(stderr=True)
logger = logging.getLogger("moire_sensor_sim.cli")

IO_EXIT_CODE = 3
SWEEP_STREAM = 0x5EE9  # seed namespaces for named sweeps and the episode
EPISODE_STREAM = 0xE915


def setup_logging(verbose: bool = False):
    """Configure logging with rich output on standard error."""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=console, rich_tracebacks=True)],
        force=True,
    )


def _clean(value):
    """JSON-safe copy: NaN/inf become null."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item"):
        return _clean(value.item())
    return value


def _emit(payload: dict) -> None:
    typer.echo(json.dumps(_clean(payload), sort_keys=True, allow_nan=False))


def _run(command: str, body: Callable[[], dict]) -> None:
    """Run a command body, mapping errors to a JSON line and an exit code."""
    try:
        summary = body()
    except MoireSimError as e:
        console.print(f"[red]✗ {type(e).__name__}:[/red] {e}")
        _emit({"status": "error", "command": command, "error": type(e).__name__, "message": str(e)})
        raise typer.Exit(e.exit_code)
    except OSError as e:
        console.print(f"[red]✗ {type(e).__name__}:[/red] {e}")
        _emit({"status": "error", "command": command, "error": type(e).__name__, "message": str(e)})
        raise typer.Exit(IO_EXIT_CODE)
    _emit({"status": "ok", "command": command, **summary})


def _progress() -> bool:
    return sys.stderr.isatty()


def _load(config: Optional[Path], seed: Optional[int] = None, run_dir: Optional[Path] = None):
    """Resolve the run config: --config, else <run_dir>/config.json, else defaults."""
    from moire_sensor_sim.config import load_config

    if config is None and run_dir is not None and (run_dir / "config.json").is_file():
        config = run_dir / "config.json"
        logger.info("Using run config %s", config)
    return load_config(config, seed)


def _frame_paths(run_dir: Path) -> List[Path]:
    frames = sorted((run_dir / "frames").glob("frame_*.pgm"))
    if not frames:
        raise ArtifactError(f"no frames found under {run_dir / 'frames'}")
    return frames


def _frame_index(path: Path) -> int:
    try:
        return int(path.stem.split("_")[-1])
    except ValueError as e:
        raise ArtifactError(f"cannot parse a frame index from {path.name}") from e


def _finish(out: Path, command: str, cfg, files: Dict[str, Path], extra: Optional[dict] = None) -> dict:
    from moire_sensor_sim.artifacts import build_manifest, manifest_digest, write_manifest

    seeds = {"sampling": cfg.estimator.seed, "render": cfg.render.seed, "split": cfg.estimator.split_seed}
    manifest = build_manifest(command, cfg.config_hash(), seeds, files, extra)
    write_manifest(out, manifest)
    return {"out": str(out), "config_hash": manifest["config_hash"], "manifest_digest": manifest_digest(manifest)}


def _metrics_table(title: str, metrics) -> Table:
    table = Table(title=title)
    table.add_column("Axis", style="cyan")
    table.add_column("R²", style="green")
    table.add_column("MAE", style="green")
    for axis, r2 in metrics.r2.items():
        table.add_row(axis, "n/a" if r2 is None else f"{r2:.4f}", f"{metrics.mae[axis]:.4g}")
    return table


# Shared options ----------------------------------------------------------------

def _config_option():
    return typer.Option(None, "--config", "-c", help="Run config (YAML or JSON)")


def _out_option(help: str = "Output directory"):
    return typer.Option(..., "--out", "-o", help=help)


def _seed_option():
    return typer.Option(None, "--seed", help="Override sampling and noise seeds")


def _overwrite_option():
    return typer.Option(False, "--overwrite", help="Delete and replace the contents of a non-empty output directory")


def _verbose_option():
    return typer.Option(False, "--verbose", "-v", help="Enable verbose logging")


# Commands ----------------------------------------------------------------------

@app.command("design")
def design(
    config: Optional[Path] = _config_option(),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Write design.csv here"),
    overwrite: bool = _overwrite_option(),
    verbose: bool = _verbose_option(),
):
    """
    Design-space table: mismatch, amplification, apparent period and
    compression trend for each configured grating pair.
    """
    setup_logging(verbose)

    def body() -> dict:
        import pandas as pd

        from moire_sensor_sim.artifacts import prepare_out_dir, write_csv
        from moire_sensor_sim.optics import DESIGN_COLUMNS, design_row

        cfg = _load(config)
        section = cfg.design
        rows = [
            design_row(
                pair.p1,
                pair.p2,
                section.a_over_z if pair.a_over_z is None else pair.a_over_z,
                section.camera_distance,
            )
            for pair in section.pairs
        ]

        table = Table(title="Design table")
        for col in DESIGN_COLUMNS:
            table.add_column(col, style="cyan" if col == "trend" else "green")
        for row in rows:
            table.add_row(*(f"{row[c]:.6g}" if isinstance(row[c], float) else str(row[c]) for c in DESIGN_COLUMNS))
        console.print(table)

        summary = {"rows": rows}
        if out is not None:
            out_dir = prepare_out_dir(out, overwrite, inputs=[config] if config else [])
            path = write_csv(out_dir / "design.csv", pd.DataFrame(rows, columns=DESIGN_COLUMNS))
            summary.update(_finish(out_dir, "design", cfg, {"design.csv": path}))
        return summary

    _run("design", body)


@app.command("simulate")
def simulate(
    config: Optional[Path] = _config_option(),
    out: Path = _out_option(),
    seed: Optional[int] = _seed_option(),
    overwrite: bool = _overwrite_option(),
    verbose: bool = _verbose_option(),
):
    """
    Render the calibration dataset (frames + wrenches.csv), the named
    deformation sweeps and the contact episode stream.
    """
    setup_logging(verbose)

    def body() -> dict:
        from dataclasses import replace

        import pandas as pd

        from moire_sensor_sim.artifacts import prepare_out_dir, write_csv, write_json
        from moire_sensor_sim.dataset import (
            NAMED_SWEEPS,
            SWEEP_UNITS,
            episode_trace,
            iter_renders,
            named_sweep,
            reference_frame,
            sample_wrenches,
            wrench_table,
        )
        from moire_sensor_sim.synth import FRAME_PATTERN, deformed_descriptor, derive_seed, render, write_pgm

        cfg = _load(config, seed)
        g = cfg.geometry.to_geometry()
        m = cfg.material.to_material()
        ranges = cfg.ranges.to_ranges()
        rcfg = cfg.render.to_render()
        est = cfg.estimator
        m.validate_for(g, ranges)

        out_dir = prepare_out_dir(out, overwrite, inputs=[config] if config else [])
        files: Dict[str, Path] = {}
        files["config.json"] = write_json(out_dir / "config.json", cfg.model_dump(mode="json"))

        reference = reference_frame(g, m, rcfg)
        files["reference.pgm"] = write_pgm(out_dir / "reference.pgm", reference)

        samples = sample_wrenches(est.n_samples, ranges, est.seed, **est.sampling())
        logger.info("Rendering %d frames into %s", len(samples), out_dir)
        renders = iter_renders([w for _, w in samples], g, m, rcfg, ranges, est.workers, _progress())
        for i, img in enumerate(renders):
            name = f"frames/{FRAME_PATTERN.format(i)}"
            files[name] = write_pgm(out_dir / name, img)
        files["wrenches.csv"] = write_csv(out_dir / "wrenches.csv", wrench_table(samples))

        for name in cfg.simulate.named_sweeps:
            sweep_seed = derive_seed(rcfg.seed, SWEEP_STREAM + NAMED_SWEEPS.index(name))
            rows = []
            for k, (value, d) in enumerate(named_sweep(name, cfg.simulate.sweep_steps, g, m, ranges)):
                img = render(g, d, m, rcfg, seed=derive_seed(sweep_seed, k))
                rel = f"sweeps/{name}/{FRAME_PATTERN.format(k)}"
                files[rel] = write_pgm(out_dir / rel, img)
                desc = deformed_descriptor(g, d)
                rows.append({
                    "step": k,
                    SWEEP_UNITS[name]: value,
                    "ux": d.u[0],
                    "uy": d.u[1],
                    "strain": d.strain,
                    "twist": d.twist,
                    "spacing": d.spacing,
                    "normal_force": d.normal_force,
                    "Lambda": desc.period,
                    "theta": desc.orientation,
                })
            rel = f"sweeps/{name}/sweep.csv"
            files[rel] = write_csv(out_dir / rel, pd.DataFrame(rows))

        n_episode = cfg.simulate.episode_frames
        if n_episode > 0:
            trace = episode_trace(n_episode, ranges, est.preload)
            episode_cfg = replace(rcfg, seed=derive_seed(rcfg.seed, EPISODE_STREAM))
            files["episode/reference.pgm"] = write_pgm(out_dir / "episode" / "reference.pgm", reference)
            for i, img in enumerate(iter_renders(trace, g, m, episode_cfg, ranges, est.workers)):
                rel = f"episode/frames/{FRAME_PATTERN.format(i)}"
                files[rel] = write_pgm(out_dir / rel, img)
            table = wrench_table([("episode", w) for w in trace])
            files["episode/wrenches.csv"] = write_csv(out_dir / "episode" / "wrenches.csv", table)

        console.print(f"[green]✓ Rendered {len(samples)} frames[/green] → {out_dir}")
        summary = {"frames": len(samples), "named_sweeps": list(cfg.simulate.named_sweeps), "episode_frames": n_episode}
        summary.update(_finish(out_dir, "simulate", cfg, files))
        return summary

    _run("simulate", body)


@app.command("extract")
def extract(
    in_dir: Path = typer.Option(..., "--in", "-i", help="Run directory with reference.pgm and frames/"),
    config: Optional[Path] = _config_option(),
    out: Path = _out_option(),
    overwrite: bool = _overwrite_option(),
    verbose: bool = _verbose_option(),
):
    """
    Extract physics features (brightness, centroid, fringe period and
    orientation, phase offsets) from every frame of a run.
    """
    setup_logging(verbose)

    def body() -> dict:
        from moire_sensor_sim.artifacts import prepare_out_dir, write_csv
        from moire_sensor_sim.dataset import extract_paths
        from moire_sensor_sim.features import observables_frame
        from moire_sensor_sim.synth import read_pgm

        cfg = _load(config, run_dir=in_dir)
        reference = read_pgm(in_dir / "reference.pgm", scale=cfg.render.scale)
        paths = _frame_paths(in_dir)
        observables = extract_paths(
            paths, reference, cfg.features.to_features(), cfg.estimator.workers, _progress()
        )
        df = observables_frame(observables, [_frame_index(p) for p in paths])

        out_dir = prepare_out_dir(out, overwrite, inputs=[in_dir])
        files = {"features.csv": write_csv(out_dir / "features.csv", df)}
        console.print(f"[green]✓ Extracted {len(df)} frames[/green]")
        summary = {"frames": len(df)}
        summary.update(_finish(out_dir, "extract", cfg, files))
        return summary

    _run("extract", body)


@app.command("calibrate")
def calibrate(
    features: Path = typer.Option(..., "--features", "-f", help="features.csv from extract"),
    wrenches: Path = typer.Option(..., "--wrenches", "-w", help="wrenches.csv from simulate"),
    config: Optional[Path] = _config_option(),
    out: Path = _out_option(),
    overwrite: bool = _overwrite_option(),
    verbose: bool = _verbose_option(),
):
    """
    Fit the affine ridge wrench model (80/20 split stratified by sweep) and
    the tilt matrix; writes model.json, metrics.json and tilt.json.
    """
    setup_logging(verbose)

    def body() -> dict:
        from moire_sensor_sim.artifacts import prepare_out_dir, read_csv, write_json
        from moire_sensor_sim.dataset import Dataset
        from moire_sensor_sim.errors import InsufficientData, SingularSystem
        from moire_sensor_sim.estimator import fit, fit_tilt_matrix

        cfg = _load(config, run_dir=wrenches.parent)
        dataset = Dataset.join(read_csv(features), read_csv(wrenches))
        est = cfg.estimator
        model, metrics = fit(dataset, est.ridge_lambda, est.split_seed, est.test_size)

        out_dir = prepare_out_dir(out, overwrite, inputs=[features, wrenches])
        files = {
            "model.json": model.save(out_dir / "model.json"),
            "metrics.json": write_json(out_dir / "metrics.json", _clean(metrics.to_dict())),
        }
        summary = {"metrics": metrics.to_dict(), "best_axis": metrics.best_axis}
        try:
            tilt = fit_tilt_matrix(dataset)
            files["tilt.json"] = write_json(out_dir / "tilt.json", tilt.to_dict())
            summary["tilt"] = tilt.to_dict()
        except (SingularSystem, InsufficientData) as e:
            logger.warning("Skipping tilt matrix: %s", e)

        console.print(_metrics_table("Held-out metrics", metrics))
        summary.update(_finish(out_dir, "calibrate", cfg, files))
        return summary

    _run("calibrate", body)


@app.command("eval")
def evaluate_cmd(
    model_path: Path = typer.Option(..., "--model", "-m", help="model.json from calibrate"),
    features: Path = typer.Option(..., "--features", "-f", help="features.csv"),
    wrenches: Path = typer.Option(..., "--wrenches", "-w", help="wrenches.csv"),
    config: Optional[Path] = _config_option(),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Write metrics.json and predictions.csv here"),
    overwrite: bool = _overwrite_option(),
    verbose: bool = _verbose_option(),
):
    """
    Score a saved model on a features/wrenches pair.
    """
    setup_logging(verbose)

    def body() -> dict:
        import pandas as pd

        from moire_sensor_sim.artifacts import prepare_out_dir, read_csv, write_csv, write_json
        from moire_sensor_sim.dataset import Dataset
        from moire_sensor_sim.estimator import CalibrationModel, evaluate, feature_matrix
        from moire_sensor_sim.loads import AXES

        model = CalibrationModel.load(model_path)
        dataset = Dataset.join(read_csv(features), read_csv(wrenches))
        metrics = evaluate(model, dataset)
        console.print(_metrics_table("Evaluation", metrics))

        summary = {"metrics": metrics.to_dict()}
        if out is not None:
            cfg = _load(config, run_dir=wrenches.parent)
            pred = model.predict_array(feature_matrix(dataset.observables))
            df = pd.DataFrame(pred, columns=list(AXES))
            df.insert(0, "frame", dataset.frames)
            out_dir = prepare_out_dir(out, overwrite, inputs=[model_path, features, wrenches])
            files = {
                "metrics.json": write_json(out_dir / "metrics.json", _clean(metrics.to_dict())),
                "predictions.csv": write_csv(out_dir / "predictions.csv", df),
            }
            summary.update(_finish(out_dir, "eval", cfg, files))
        return summary

    _run("eval", body)


@app.command("gate")
def gate(
    in_dir: Path = typer.Option(..., "--in", "-i", help="Stream directory with reference.pgm and frames/"),
    config: Optional[Path] = _config_option(),
    out: Path = _out_option(),
    t_on: Optional[float] = typer.Option(None, "--t-on", help="Override the switch-on threshold"),
    overwrite: bool = _overwrite_option(),
    verbose: bool = _verbose_option(),
):
    """
    Run the contact gate over a frame stream and write the mode log
    (gate.csv: frame, er, mode).
    """
    setup_logging(verbose)

    def body() -> dict:
        from moire_sensor_sim.artifacts import prepare_out_dir, write_csv
        from moire_sensor_sim.gate import calibrate_threshold, noise_energy_ratios, run_gate, switch_latency_ms
        from moire_sensor_sim.synth import read_pgm

        run_dir = in_dir if (in_dir / "config.json").is_file() else in_dir.parent
        cfg = _load(config, run_dir=run_dir)
        section = cfg.gate
        baseline = read_pgm(in_dir / "reference.pgm", scale=cfg.render.scale)

        threshold = t_on if t_on is not None else section.t_on
        calibrated = threshold is None
        if calibrated:
            ratios = noise_energy_ratios(
                cfg.geometry.to_geometry(),
                cfg.material.to_material(),
                cfg.render.to_render(),
                baseline,
                section.calibration_frames,
                section.roi_fraction,
                quantize=True,
            )
            threshold = calibrate_threshold(ratios)
            logger.info("Calibrated t_on = %.4g from %d noise-only frames", threshold, len(ratios))
        gcfg = section.to_gate(threshold)

        frames = (read_pgm(p, scale=cfg.render.scale) for p in _frame_paths(in_dir))
        log = run_gate(frames, baseline, gcfg, section.roi_fraction, _progress())

        out_dir = prepare_out_dir(out, overwrite, inputs=[in_dir])
        files = {"gate.csv": write_csv(out_dir / "gate.csv", log)}
        modes = ["vision", *log["mode"]]
        switches = sum(a != b for a, b in zip(modes, modes[1:]))
        summary = {
            "frames": len(log),
            "t_on": gcfg.t_on,
            "t_off": gcfg.t_off,
            "t_on_calibrated": calibrated,
            "switches": switches,
            "tactile_frames": int((log["mode"] == "tactile").sum()),
            "switch_latency_ms": switch_latency_ms(gcfg),
        }
        console.print(
            f"[green]✓ Gated {len(log)} frames[/green], {switches} switch(es), "
            f"latency {summary['switch_latency_ms']:.1f} ms"
        )
        summary.update(_finish(out_dir, "gate", cfg, files))
        return summary

    _run("gate", body)


@app.command("sensitivity")
def sensitivity(
    config: Optional[Path] = _config_option(),
    out: Path = _out_option(),
    seed: Optional[int] = _seed_option(),
    overwrite: bool = _overwrite_option(),
    verbose: bool = _verbose_option(),
):
    """
    For each design pair: extracted vs analytic fringe period over the
    configured normal-force levels, dΛ/dFz and fringe density.
    """
    setup_logging(verbose)

    def body() -> dict:
        import numpy as np
        import pandas as pd

        from moire_sensor_sim.artifacts import prepare_out_dir, write_csv
        from moire_sensor_sim.dataset import reference_frame
        from moire_sensor_sim.features import FeatureExtractor
        from moire_sensor_sim.loads import Wrench, wrench_to_deformation
        from moire_sensor_sim.optics import amplification_exact, design_geometry
        from moire_sensor_sim.synth import deformed_descriptor, derive_seed, render

        cfg = _load(config, seed)
        m = cfg.material.to_material()
        ranges = cfg.ranges.to_ranges()
        rcfg = cfg.render.to_render()
        fcfg = cfg.features.to_features()
        section = cfg.design
        levels = list(section.fz_levels)

        rows, pairs = [], []
        for pair in section.pairs:
            a_over_z = section.a_over_z if pair.a_over_z is None else pair.a_over_z
            g = design_geometry(pair.p1, pair.p2, a_over_z, section.camera_distance)
            m.validate_for(g, ranges)
            extractor = FeatureExtractor(reference_frame(g, m, rcfg), fcfg)
            extracted = []
            for k, fz in enumerate(levels):
                d = wrench_to_deformation(Wrench(Fz=fz), m, g, ranges)
                obs = extractor.extract(render(g, d, m, rcfg, seed=derive_seed(rcfg.seed, k)))
                analytic = deformed_descriptor(g, d).period
                extracted.append(obs.period)
                rows.append({
                    "pair": pair.name,
                    "p1": pair.p1,
                    "p2": pair.p2,
                    "Fz": fz,
                    "Lambda_extracted": obs.period,
                    "Lambda_analytic": analytic,
                    "rel_error": abs(obs.period - analytic) / analytic,
                    "fringe_density": 1.0 / obs.period,
                })
            slope = float(np.polyfit(levels, extracted, 1)[0]) if len(levels) > 1 else math.nan
            pairs.append({
                "pair": pair.name,
                "A_exact": amplification_exact(g),
                "dLambda_dFz": slope,
                "monotone": bool(np.all(np.diff(extracted) > 0)),
            })
            logger.info("%s: dΛ/dFz = %.4g mm/N", pair.name or (pair.p1, pair.p2), slope)

        out_dir = prepare_out_dir(out, overwrite, inputs=[config] if config else [])
        files = {"sensitivity.csv": write_csv(out_dir / "sensitivity.csv", pd.DataFrame(rows))}

        table = Table(title="Sensitivity")
        for col in ("pair", "A_exact", "dLambda_dFz", "monotone"):
            table.add_column(col, style="cyan" if col == "pair" else "green")
        for p in pairs:
            table.add_row(p["pair"], f"{p['A_exact']:.3f}", f"{p['dLambda_dFz']:.4g}", str(p["monotone"]))
        console.print(table)

        summary = {"pairs": pairs}
        summary.update(_finish(out_dir, "sensitivity", cfg, files))
        return summary

    _run("sensitivity", body)


@app.command("version")
def version():
    """Show the package version."""
    _emit({"status": "ok", "command": "version", "version": __version__})


def main():
    """Main entry point."""
    app()


if __name__ == "__main__":
    main()
