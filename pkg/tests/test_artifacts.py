"""
Tests for output directories and run manifests.
"""

import tempfile
from pathlib import Path

import pytest


class TestPrepareOutDir:
    """Tests for output directory preparation."""

    def test_creates_missing(self, workdir):
        """A missing directory is created with its parents."""
        from moire_sensor_sim.artifacts import prepare_out_dir

        out = prepare_out_dir(workdir / "a" / "b")
        assert out.is_dir()

    def test_refuses_non_empty(self, workdir):
        """Existing contents are kept unless overwrite is set."""
        from moire_sensor_sim.artifacts import prepare_out_dir
        from moire_sensor_sim.errors import ArtifactError

        (workdir / "old.txt").write_text("x")
        with pytest.raises(ArtifactError, match="--overwrite"):
            prepare_out_dir(workdir)
        assert (workdir / "old.txt").exists()

    def test_overwrite_clears_everything(self, workdir):
        """Overwrite removes old files and nested directories."""
        from moire_sensor_sim.artifacts import prepare_out_dir

        out = workdir / "run"
        (out / "frames").mkdir(parents=True)
        for i in range(3):
            (out / "frames" / f"frame_{i:06d}.pgm").write_bytes(b"old")
        (out / "manifest.json").write_text("{}")

        assert prepare_out_dir(out, overwrite=True) == out
        assert out.is_dir()
        assert list(out.iterdir()) == []

    def test_overwrite_protects_inputs(self, workdir):
        """A directory containing an input of the run is not cleared."""
        from moire_sensor_sim.artifacts import prepare_out_dir
        from moire_sensor_sim.errors import ArtifactError

        source = workdir / "features.csv"
        source.write_text("frame\n0\n")
        with pytest.raises(ArtifactError, match="refusing to clear"):
            prepare_out_dir(workdir, overwrite=True, inputs=[source])
        assert source.exists()

    def test_not_a_directory(self, workdir):
        """A file in the way is an artifact error."""
        from moire_sensor_sim.artifacts import prepare_out_dir
        from moire_sensor_sim.errors import ArtifactError

        path = workdir / "file"
        path.write_text("x")
        with pytest.raises(ArtifactError):
            prepare_out_dir(path, overwrite=True)


class TestManifest:
    """Tests for manifest content and digests."""

    def test_seeds_and_hashes(self, workdir):
        """Seeds are stored by name and every file by SHA-256."""
        from moire_sensor_sim.artifacts import build_manifest, sha256_file

        path = workdir / "wrenches.csv"
        path.write_text("frame\n0\n")
        manifest = build_manifest("simulate", "abc", {"render": 3, "sampling": 5}, {"wrenches.csv": path})

        assert manifest["seeds"] == {"render": 3, "sampling": 5}
        assert manifest["files"] == {"wrenches.csv": sha256_file(path)}
        assert set(manifest["annotation"]) == {"created_at", "version"}

    def test_digest_ignores_annotation(self, workdir):
        """Two manifests that differ only in their annotation share a digest."""
        from moire_sensor_sim.artifacts import build_manifest, manifest_digest

        a = build_manifest("design", "abc", {"render": 0}, {})
        b = dict(a, annotation={"created_at": "later", "version": "x"})
        assert manifest_digest(a) == manifest_digest(b)
        assert manifest_digest(a) != manifest_digest(dict(a, seeds={"render": 1}))


@pytest.fixture
def workdir():
    """Scratch directory for one test."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
