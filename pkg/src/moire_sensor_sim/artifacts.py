"""
Output artifacts: atomic writes, content hashes, run manifests and CSV I/O.

Every file is written to a temporary sibling and renamed into place, so a
crashed run never leaves a half-written artifact behind.
"""

import hashlib
import json
import logging
import os
import shutil
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, Optional, Union

import pandas as pd

from moire_sensor_sim import __version__
from moire_sensor_sim.errors import ArtifactError

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA = "moire-manifest/1"
MANIFEST_NAME = "manifest.json"

PathLike = Union[str, Path]


def canonical_json(obj) -> str:
    """Sorted-key, compact JSON used for hashing."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: PathLike) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                h.update(chunk)
    except OSError as e:
        raise ArtifactError(f"cannot hash {path}: {e}") from e
    return h.hexdigest()


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    """Write `data` to `path` via a temp file in the same directory and os.replace."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as e:
        raise ArtifactError(f"cannot write {path}: {e}") from e
    return path


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: PathLike, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path: PathLike) -> dict:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise ArtifactError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ArtifactError(f"{path} is not valid JSON: {e}") from e


def write_csv(path: PathLike, df: pd.DataFrame) -> Path:
    """CSV with full float precision and '\\n' line endings."""
    text = df.to_csv(index=False, lineterminator="\n", float_format="%.17g")
    return atomic_write_text(path, text)


def read_csv(path: PathLike, required: Iterable[str] = ()) -> pd.DataFrame:
    """Read a CSV written by write_csv, checking required columns."""
    path = Path(path)
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ArtifactError(f"cannot read {path}: {e}") from e
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise ArtifactError(f"{path} lacks columns {missing}")
    return df


def _within(path: Path, root: Path) -> bool:
    path, root = path.resolve(), root.resolve()
    return path == root or root in path.parents


def clear_dir(out: Path) -> None:
    """Delete everything inside `out`, keeping the directory itself."""
    for child in out.iterdir():
        if child.is_dir() and not child.is_symlink():
            shutil.rmtree(child)
        else:
            child.unlink()


def prepare_out_dir(out_dir: PathLike, overwrite: bool = False, inputs: Iterable[PathLike] = ()) -> Path:
    """Create `out_dir`, refusing a non-empty one unless overwrite is set.

    With overwrite the old contents are deleted first, so no stale artifact
    survives into the new run. A directory holding one of `inputs` or the
    working directory is never cleared.
    """
    out = Path(out_dir)
    if out.exists() and not out.is_dir():
        raise ArtifactError(f"{out} exists and is not a directory")
    if out.is_dir() and any(out.iterdir()):
        if not overwrite:
            raise ArtifactError(f"{out} is not empty; pass --overwrite to replace its contents")
        for keep in [*inputs, Path.cwd()]:
            if _within(Path(keep), out):
                raise ArtifactError(f"refusing to clear {out}: it contains {keep}")
        logger.info("Clearing %s before writing new artifacts", out)
        try:
            clear_dir(out)
        except OSError as e:
            raise ArtifactError(f"cannot clear {out}: {e}") from e
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ArtifactError(f"cannot create {out}: {e}") from e
    return out


def build_manifest(
    command: str,
    config_hash: str,
    seeds: Dict[str, int],
    files: Dict[str, PathLike],
    extra: Optional[dict] = None,
) -> dict:
    """Manifest of one command run.

    `files` maps artifact names (paths relative to the output directory) to
    the files on disk; each is stored with its SHA-256. `seeds` holds every
    seed the run drew from. Timestamps live only under `annotation` so the
    rest of the document is reproducible.
    """
    hashed = {}
    for name in sorted(files):
        hashed[name] = sha256_file(files[name])
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "command": command,
        "config_hash": config_hash,
        "seeds": {name: int(value) for name, value in sorted(seeds.items())},
        "files": hashed,
        "annotation": {
            "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "version": __version__,
        },
    }
    if extra:
        manifest.update(extra)
    return manifest


def write_manifest(out_dir: PathLike, manifest: dict) -> Path:
    return write_json(Path(out_dir) / MANIFEST_NAME, manifest)


def manifest_digest(manifest: dict) -> str:
    """Hash of a manifest without its annotation."""
    body = {k: v for k, v in manifest.items() if k != "annotation"}
    return sha256_text(canonical_json(body))
