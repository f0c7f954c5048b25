"""
Tests for the wrench -> deformation load model.
"""

import math

import pytest


class TestWrenchToDeformation:
    """Tests for the linear constitutive mapping."""

    def test_zero_wrench_identity(self, geometry, material):
        """Zero wrench leaves the sensor undeformed."""
        from moire_sensor_sim.loads import DeformationState, Wrench, wrench_to_deformation

        d = wrench_to_deformation(Wrench(), material, geometry)
        assert d == DeformationState.identity(geometry)
        assert d.spacing == geometry.spacing
        assert d.contact_radius == 0.0

    def test_shear(self, geometry):
        """Fx / k_shear gives the lateral displacement."""
        from moire_sensor_sim.loads import MaterialModel, Wrench, wrench_to_deformation

        d = wrench_to_deformation(Wrench(Fx=0.1), MaterialModel(k_shear=10.0), geometry)
        assert d.u == pytest.approx((0.01, 0.0))

    def test_twist(self, geometry, material):
        """Tz / k_twist gives the in-plane rotation."""
        from moire_sensor_sim.loads import Wrench, wrench_to_deformation

        d = wrench_to_deformation(Wrench(Tz=0.004), material, geometry)
        assert d.twist == pytest.approx(0.04)

    def test_tilt_offsets_contact(self, geometry, material):
        """Tx with preload moves the contact along +y by Tx/Fz."""
        from moire_sensor_sim.loads import Wrench, wrench_to_deformation

        d = wrench_to_deformation(Wrench(Fz=1.0, Tx=0.005), material, geometry)
        assert d.contact_center == pytest.approx((0.0, 5.0))

        d = wrench_to_deformation(Wrench(Fz=1.0, Ty=0.005), material, geometry)
        assert d.contact_center == pytest.approx((-5.0, 0.0))

    def test_normal_force(self, geometry, material):
        """Fz strains the far grating, compresses the gap and opens a Hertz contact."""
        from moire_sensor_sim.loads import Wrench, wrench_to_deformation

        d = wrench_to_deformation(Wrench(Fz=1.0), material, geometry)
        assert d.strain == pytest.approx(material.c_strain)
        assert d.spacing == pytest.approx(geometry.spacing - 1.0 / material.k_spacing)
        assert d.contact_radius == pytest.approx(material.hertz_radius_coeff)
        assert d.peak_pressure == pytest.approx(3.0 / (2.0 * math.pi * 9.0))

    def test_tilt_without_preload(self, geometry, material):
        """Tilt needs a normal force above the floor."""
        from moire_sensor_sim.errors import TiltWithoutPreload
        from moire_sensor_sim.loads import Wrench, wrench_to_deformation

        with pytest.raises(TiltWithoutPreload):
            wrench_to_deformation(Wrench(Fz=0.01, Tx=0.001), material, geometry)

    def test_out_of_range(self, geometry, material):
        """Components outside the ranges are rejected."""
        from moire_sensor_sim.errors import OutOfRange
        from moire_sensor_sim.loads import Wrench, wrench_to_deformation

        with pytest.raises(OutOfRange):
            wrench_to_deformation(Wrench(Fz=2.0), material, geometry)
        with pytest.raises(OutOfRange):
            wrench_to_deformation(Wrench(Fx=0.5), material, geometry)

    def test_offset_beyond_limit(self, geometry, material):
        """Tilt that would push the contact off the pad is rejected."""
        from moire_sensor_sim.errors import OutOfRange
        from moire_sensor_sim.loads import Wrench, wrench_to_deformation

        with pytest.raises(OutOfRange):
            wrench_to_deformation(Wrench(Fz=0.5, Tx=0.01), material, geometry)

    def test_non_finite_component(self):
        """NaN components are rejected at construction."""
        from moire_sensor_sim.errors import OutOfRange
        from moire_sensor_sim.loads import Wrench

        with pytest.raises(OutOfRange):
            Wrench(Fz=float("nan"))

    def test_array_round_trip(self):
        """Wrench <-> array uses the AXES order."""
        from moire_sensor_sim.loads import AXES, Wrench

        w = Wrench(0.1, -0.1, 0.8, 0.002, -0.003, 0.004)
        assert list(w.as_dict()) == list(AXES)
        assert Wrench.from_array(w.as_array()) == w

    def test_linearity(self, geometry, material):
        """Displacement and twist scale linearly with the load."""
        from moire_sensor_sim.loads import Wrench, wrench_to_deformation

        a = wrench_to_deformation(Wrench(Fx=0.05, Tz=0.002), material, geometry)
        b = wrench_to_deformation(Wrench(Fx=0.10, Tz=0.004), material, geometry)
        assert b.u[0] == pytest.approx(2 * a.u[0])
        assert b.twist == pytest.approx(2 * a.twist)


class TestPressure:
    """Tests for the Hertzian pressure profile."""

    def test_profile_points(self, geometry, material):
        """Peak at the centre, zero at the edge, sqrt(3)/2 at half radius."""
        from moire_sensor_sim.loads import Wrench, pressure_at, wrench_to_deformation

        d = wrench_to_deformation(Wrench(Fz=0.8), material, geometry)
        a = d.contact_radius
        assert pressure_at(d, (0.0, 0.0)) == pytest.approx(d.peak_pressure)
        assert pressure_at(d, (a, 0.0)) == 0.0
        assert pressure_at(d, (0.0, a / 2)) == pytest.approx(d.peak_pressure * math.sqrt(3) / 2)

    def test_no_contact(self, geometry):
        """Identity deformation has no pressure."""
        from moire_sensor_sim.loads import DeformationState, pressure_at

        assert pressure_at(DeformationState.identity(geometry), (0.0, 0.0)) == 0.0

    @pytest.mark.parametrize("fz", [0.2, 0.6, 1.2])
    def test_integral_equals_force(self, geometry, material, fz):
        """Pressure integrates to Fz."""
        import numpy as np

        from moire_sensor_sim.loads import Wrench, pressure_field, wrench_to_deformation

        d = wrench_to_deformation(Wrench(Fz=fz), material, geometry)
        h = 0.01
        xs = np.arange(-d.contact_radius - 0.5, d.contact_radius + 0.5, h)
        field = pressure_field(d, xs, xs)
        assert field.sum() * h * h == pytest.approx(fz, rel=5e-3)

    def test_field_matches_pointwise(self, geometry, material):
        """Vectorised field agrees with pressure_at."""
        import numpy as np

        from moire_sensor_sim.loads import Wrench, pressure_at, pressure_field, wrench_to_deformation

        d = wrench_to_deformation(Wrench(Fz=1.0, Tx=0.003), material, geometry)
        xs = np.linspace(-5, 5, 11)
        ys = np.linspace(-2, 8, 11)
        field = pressure_field(d, xs, ys)
        assert field[7, 4] == pytest.approx(pressure_at(d, (xs[4], ys[7])))


class TestMaterialModel:
    """Tests for material validation."""

    def test_non_positive_stiffness(self):
        """Stiffness constants must be positive."""
        from moire_sensor_sim.errors import ConfigError
        from moire_sensor_sim.loads import MaterialModel

        with pytest.raises(ConfigError):
            MaterialModel(k_shear=0.0)

    def test_spacing_collapse(self, geometry):
        """A soft gap that closes under full load is rejected."""
        from moire_sensor_sim.errors import ConfigError
        from moire_sensor_sim.loads import MaterialModel

        with pytest.raises(ConfigError):
            MaterialModel(k_spacing=0.1).validate_for(geometry)

    def test_default_valid(self, geometry, material):
        """Default material suits the default geometry."""
        material.validate_for(geometry)


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


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
