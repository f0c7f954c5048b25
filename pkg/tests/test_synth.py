"""
Tests for the fringe renderer and PGM codec.
"""

import tempfile
from pathlib import Path

import numpy as np
import pytest


class TestRender:
    """Tests for single-frame rendering."""

    def test_shape_and_range(self, geometry, material, small_config):
        """Frame has the configured raster and stays in [0, 1]."""
        from moire_sensor_sim.loads import DeformationState
        from moire_sensor_sim.synth import render

        img = render(geometry, DeformationState.identity(geometry), material, small_config)
        assert img.shape == (400, 400)
        assert img.scale == small_config.scale
        assert img.values.min() >= 0.0
        assert img.values.max() <= 1.0

    def test_seed_determinism(self, geometry, material, small_config):
        """Same seed gives identical frames, a different seed does not."""
        from dataclasses import replace

        from moire_sensor_sim.loads import Wrench
        from moire_sensor_sim.synth import render_wrench

        cfg = replace(small_config, noise_sigma=0.01)
        w = Wrench(Fz=0.6, Fx=0.05)
        a = render_wrench(w, geometry, material, cfg, seed=7)
        b = render_wrench(w, geometry, material, cfg, seed=7)
        c = render_wrench(w, geometry, material, cfg, seed=8)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_normal_force_brightens(self, geometry, material, small_config):
        """Pressing raises the mean brightness."""
        from moire_sensor_sim.loads import Wrench
        from moire_sensor_sim.synth import render_wrench

        rest = render_wrench(Wrench(), geometry, material, small_config)
        pressed = render_wrench(Wrench(Fz=1.0), geometry, material, small_config)
        assert pressed.values.mean() > rest.values.mean()

    def test_contact_rim(self, geometry, material, small_config):
        """The rim adds a bright annulus at the contact radius and nothing far away."""
        from dataclasses import replace

        from moire_sensor_sim.loads import Wrench, wrench_to_deformation
        from moire_sensor_sim.synth import pixel_axes, render

        d = wrench_to_deformation(Wrench(Fz=1.0), material, geometry)
        with_rim = render(geometry, d, material, small_config)
        without = render(geometry, d, material, replace(small_config, rim_gain=0.0))
        diff = with_rim.values - without.values

        xs, ys = pixel_axes(400, 400, small_config.scale)
        row = int(np.argmin(np.abs(ys)))
        on_rim = int(np.argmin(np.abs(xs - d.contact_radius)))
        far_away = int(np.argmin(np.abs(xs - (d.contact_radius + 4.0))))
        assert diff[row, on_rim] == pytest.approx(small_config.rim_gain, abs=0.01)
        assert diff[row, far_away] == pytest.approx(0.0, abs=1e-6)

    def test_undersampled(self, geometry, material):
        """Pitches below the sampling bound are rejected."""
        from moire_sensor_sim.errors import UndersampledGrating
        from moire_sensor_sim.loads import DeformationState
        from moire_sensor_sim.synth import RenderConfig, render

        cfg = RenderConfig(resolution=64, scale=5.0, noise_sigma=0.0)
        with pytest.raises(UndersampledGrating):
            render(geometry, DeformationState.identity(geometry), material, cfg)

    def test_invalid_config(self):
        """Render settings are validated."""
        from moire_sensor_sim.errors import ConfigError
        from moire_sensor_sim.synth import RenderConfig

        with pytest.raises(ConfigError):
            RenderConfig(noise_sigma=-0.1)
        with pytest.raises(ConfigError):
            RenderConfig(cross_contrast=1.0)


class TestDeformedDescriptor:
    """Tests for the analytic fringe state under load."""

    def test_rest_matches_apparent(self, geometry):
        """Undeformed descriptor is the apparent moire."""
        from moire_sensor_sim.loads import DeformationState
        from moire_sensor_sim.synth import deformed_descriptor

        d = deformed_descriptor(geometry, DeformationState.identity(geometry))
        assert d.period == pytest.approx(4.2, rel=1e-9)
        assert d.orientation == pytest.approx(0.0, abs=1e-12)

    def test_compression_sparser(self, geometry, material):
        """Mid pair fringes get sparser under full normal load."""
        from moire_sensor_sim.loads import Wrench, wrench_to_deformation
        from moire_sensor_sim.synth import deformed_descriptor

        d = wrench_to_deformation(Wrench(Fz=1.2), material, geometry)
        assert deformed_descriptor(geometry, d).period > 4.2

    def test_twist_rotates(self, geometry, material):
        """Twist rotates the fringe direction by the same angle."""
        from moire_sensor_sim.loads import Wrench, wrench_to_deformation
        from moire_sensor_sim.synth import deformed_descriptor

        d = wrench_to_deformation(Wrench(Tz=0.004), material, geometry)
        desc = deformed_descriptor(geometry, d)
        assert desc.orientation == pytest.approx(0.04, abs=1e-12)
        assert desc.period == pytest.approx(4.2, rel=1e-9)


class TestRenderSequence:
    """Tests for stream rendering."""

    def test_identical_zero_frames(self, geometry, material, small_config):
        """Noise-free zero wrenches render identically."""
        from moire_sensor_sim.loads import Wrench
        from moire_sensor_sim.synth import render_sequence

        frames = render_sequence([Wrench()] * 3, geometry, material, small_config)
        assert len(frames) == 3
        assert np.array_equal(frames[0].values, frames[1].values)
        assert np.array_equal(frames[1].values, frames[2].values)

    def test_press_ramp_monotone(self, geometry, material, full_config):
        """Mean brightness does not decrease along a press ramp."""
        from moire_sensor_sim.loads import Wrench
        from moire_sensor_sim.synth import render_sequence

        trace = [Wrench(Fz=f) for f in np.linspace(0.0, 1.2, 10)]
        means = [f.values.mean() for f in render_sequence(trace, geometry, material, full_config)]
        assert all(b >= a for a, b in zip(means, means[1:]))

    def test_empty_trace(self, geometry, material, small_config):
        """An empty trace is a configuration error."""
        from moire_sensor_sim.errors import ConfigError
        from moire_sensor_sim.synth import render_sequence

        with pytest.raises(ConfigError):
            render_sequence([], geometry, material, small_config)

    def test_sub_seeds_distinct(self):
        """Per-frame sub-seeds are stable and distinct."""
        from moire_sensor_sim.synth import derive_seed

        assert derive_seed(0, 1) == derive_seed(0, 1)
        assert len({derive_seed(0, i) for i in range(100)}) == 100
        assert derive_seed(0, 1) != derive_seed(1, 1)


class TestPgm:
    """Tests for the PGM codec."""

    def test_write_read(self, geometry, material, small_config):
        """A written frame reads back with the same 8-bit values."""
        from moire_sensor_sim.loads import Wrench
        from moire_sensor_sim.synth import read_pgm, render_wrench, write_pgm

        img = render_wrench(Wrench(Fz=0.5), geometry, material, small_config)
        with tempfile.TemporaryDirectory() as tmpdir:
            path = write_pgm(Path(tmpdir) / "frame_000000.pgm", img)
            back = read_pgm(path, scale=small_config.scale)
            header = path.read_bytes()[:32]

        assert header.startswith(b"P5\n400 400\n255\n")
        assert back.shape == img.shape
        assert back.scale == small_config.scale
        assert np.array_equal(back.to_uint8(), img.to_uint8())

    def test_written_by_pillow(self):
        """Encoded bytes open in Pillow as an 8-bit grayscale PPM-family image."""
        import io

        from PIL import Image

        from moire_sensor_sim.synth import ImageGray, encode_pgm

        img = ImageGray(np.array([[0.0, 0.5, 1.0]]))
        with Image.open(io.BytesIO(encode_pgm(img))) as im:
            assert im.format == "PPM"
            assert im.mode == "L"
            assert im.size == (3, 1)
            assert list(im.getdata()) == [0, 128, 255]

    def test_header_comment(self):
        """Comments in the header are skipped."""
        from moire_sensor_sim.synth import decode_pgm

        data = b"P5\n# made by hand\n2 1\n255\n" + bytes([0, 255])
        img = decode_pgm(data)
        assert img.values.tolist() == [[0.0, 1.0]]

    def test_not_an_image(self):
        """Bytes that are no image format are reported."""
        from moire_sensor_sim.errors import ArtifactError
        from moire_sensor_sim.synth import decode_pgm

        with pytest.raises(ArtifactError):
            decode_pgm(b"this is not an image at all")

    def test_colour_rejected(self):
        """Only single-channel 8-bit frames are accepted."""
        from moire_sensor_sim.errors import ArtifactError
        from moire_sensor_sim.synth import decode_pgm

        with pytest.raises(ArtifactError, match="grayscale"):
            decode_pgm(b"P6\n1 1\n255\n" + bytes([10, 20, 30]))

    def test_truncated(self):
        """Short pixel data is reported."""
        from moire_sensor_sim.errors import ArtifactError
        from moire_sensor_sim.synth import decode_pgm

        with pytest.raises(ArtifactError):
            decode_pgm(b"P5\n4 4\n255\n" + bytes(5))

    def test_missing_file(self):
        """Unreadable paths raise an artifact error."""
        from moire_sensor_sim.errors import ArtifactError
        from moire_sensor_sim.synth import read_pgm

        with pytest.raises(ArtifactError):
            read_pgm("/nonexistent/frame_000000.pgm")

    def test_corrupt_file_named(self):
        """A corrupt frame on disk is reported with its path."""
        from moire_sensor_sim.errors import ArtifactError
        from moire_sensor_sim.synth import read_pgm

        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "frame_000003.pgm"
            path.write_bytes(b"P5\n8 8\n255\n" + bytes(10))
            with pytest.raises(ArtifactError, match="frame_000003"):
                read_pgm(path)


@pytest.fixture
def geometry():
    """Mid design pair at a/Z = 0.25."""
    from moire_sensor_sim.optics import design_geometry

    return design_geometry(0.35, 0.30, 0.25)


@pytest.fixture
def material():
    """Default material model."""
    from moire_sensor_sim.loads import MaterialModel

    return MaterialModel()


@pytest.fixture
def small_config():
    """Noise-free 20 mm field."""
    from moire_sensor_sim.synth import RenderConfig

    return RenderConfig(resolution=400, aperture_mm=16.0, aperture_softness_mm=1.5, noise_sigma=0.0)


@pytest.fixture
def full_config():
    """Noise-free default 40 mm field."""
    from moire_sensor_sim.synth import RenderConfig

    return RenderConfig(noise_sigma=0.0)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
