"""
Tests for the wrench calibration model and tilt matrix.
"""

import tempfile
from pathlib import Path

import numpy as np
import pytest


class TestFit:
    """Tests for the ridge calibration."""

    def test_recovers_linear_map(self, linear_dataset):
        """Noise-free linear data is recovered almost exactly."""
        from moire_sensor_sim.estimator import fit

        model, metrics = fit(linear_dataset, ridge_lambda=1e-6)
        assert metrics.n_samples == 8
        for axis, r2 in metrics.r2.items():
            assert r2 is not None and r2 >= 0.999, axis

    def test_regularization_continuity(self, linear_dataset):
        """lambda = 0 and lambda = 1e-6 give nearly identical predictions."""
        from moire_sensor_sim.estimator import feature_matrix, fit

        X = feature_matrix(linear_dataset.observables)
        a, _ = fit(linear_dataset, ridge_lambda=0.0)
        b, _ = fit(linear_dataset, ridge_lambda=1e-6)
        pa, pb = a.predict_array(X), b.predict_array(X)
        assert np.max(np.abs(pa - pb)) <= 1e-6 * np.max(np.abs(pa))

    def test_duplicate_feature_singular(self, linear_dataset):
        """Two identical feature columns without regularization are singular."""
        from dataclasses import replace

        from moire_sensor_sim.dataset import Dataset
        from moire_sensor_sim.errors import SingularSystem
        from moire_sensor_sim.estimator import fit

        obs = [replace(o, phase_offset=(o.phase_offset[0], o.phase_offset[0])) for o in linear_dataset.observables]
        data = Dataset(wrenches=linear_dataset.wrenches, sweeps=linear_dataset.sweeps, observables=obs)
        with pytest.raises(SingularSystem):
            fit(data, ridge_lambda=0.0)

    def test_too_few_samples(self, linear_dataset):
        """Fewer than 2d samples cannot be fitted."""
        from moire_sensor_sim.errors import InsufficientData
        from moire_sensor_sim.estimator import fit

        small = linear_dataset.subset(["mixed"])
        small = type(small)(small.wrenches[:10], small.sweeps[:10], small.observables[:10])
        with pytest.raises(InsufficientData):
            fit(small)

    def test_feature_unit_invariance(self, linear_dataset):
        """Rescaling one feature column leaves predictions unchanged."""
        from dataclasses import replace

        from moire_sensor_sim.dataset import Dataset
        from moire_sensor_sim.estimator import feature_matrix, fit

        obs = [replace(o, centroid=(1000.0 * o.centroid[0], o.centroid[1])) for o in linear_dataset.observables]
        scaled = Dataset(wrenches=linear_dataset.wrenches, sweeps=linear_dataset.sweeps, observables=obs)
        a, _ = fit(linear_dataset, ridge_lambda=1e-3)
        b, _ = fit(scaled, ridge_lambda=1e-3)
        pa = a.predict_array(feature_matrix(linear_dataset.observables))
        pb = b.predict_array(feature_matrix(obs))
        assert np.allclose(pa, pb, rtol=1e-8, atol=1e-12)

    def test_dataset_lives_in_dataset_module(self):
        """Datasets are built by the dataset module, not re-exported here."""
        import moire_sensor_sim.estimator as estimator

        assert not hasattr(estimator, "build_dataset")

    def test_non_finite_feature(self):
        """NaN observables are rejected."""
        from moire_sensor_sim.errors import NumericError
        from moire_sensor_sim.estimator import feature_vector

        with pytest.raises(NumericError):
            feature_vector(make_obs(np.array([float("nan"), 0, 0, 0, 0, 0.01, 4.0])))


class TestPredict:
    """Tests for single-frame prediction and evaluation."""

    def test_means_give_bias(self, linear_dataset):
        """Observables at the feature means predict the bias."""
        from moire_sensor_sim.estimator import fit

        model, _ = fit(linear_dataset)
        pred = model.predict_array(model.feature_means)
        assert np.allclose(pred[0], model.bias)

    def test_predict_training_sample(self, linear_dataset):
        """A training sample predicts its own wrench."""
        from moire_sensor_sim.estimator import fit, predict

        model, _ = fit(linear_dataset, ridge_lambda=1e-6)
        w = predict(model, linear_dataset.observables[7])
        assert np.allclose(w.as_array(), linear_dataset.wrenches[7], atol=1e-4)

    def test_perfect_evaluation(self, linear_dataset):
        """Exact predictions give R^2 = 1 and MAE = 0."""
        from moire_sensor_sim.estimator import evaluate, fit

        model, _ = fit(linear_dataset, ridge_lambda=0.0)
        metrics = evaluate(model, linear_dataset)
        for axis in metrics.r2:
            assert metrics.r2[axis] == pytest.approx(1.0, abs=1e-9)
            assert metrics.mae[axis] == pytest.approx(0.0, abs=1e-9)

    def test_mean_predictor(self, linear_dataset):
        """Predicting the mean gives R^2 = 0."""
        from moire_sensor_sim.estimator import FEATURE_ORDER, CalibrationModel, evaluate

        d = len(FEATURE_ORDER)
        model = CalibrationModel(
            weights=np.zeros((6, d)),
            bias=linear_dataset.wrenches.mean(axis=0),
            feature_means=np.zeros(d),
            feature_scales=np.ones(d),
            ridge_lambda=0.0,
        )
        metrics = evaluate(model, linear_dataset)
        for r2 in metrics.r2.values():
            assert r2 == pytest.approx(0.0, abs=1e-9)

    def test_constant_axis_undefined(self, linear_dataset):
        """An axis with zero variance has no R^2."""
        from moire_sensor_sim.dataset import Dataset
        from moire_sensor_sim.estimator import evaluate, fit

        model, _ = fit(linear_dataset)
        wrenches = linear_dataset.wrenches.copy()
        wrenches[:, 5] = 0.0
        data = Dataset(wrenches=wrenches, sweeps=linear_dataset.sweeps, observables=linear_dataset.observables)
        metrics = evaluate(model, data)
        assert metrics.r2["Tz"] is None
        assert metrics.mae["Tz"] >= 0.0
        assert metrics.best_axis != "Tz"

    def test_save_load_identical(self, linear_dataset):
        """A reloaded model predicts bit-identically."""
        from moire_sensor_sim.estimator import CalibrationModel, feature_matrix, fit

        model, _ = fit(linear_dataset)
        X = feature_matrix(linear_dataset.observables)
        with tempfile.TemporaryDirectory() as tmpdir:
            path = model.save(Path(tmpdir) / "model.json")
            loaded = CalibrationModel.load(path)
        assert np.array_equal(model.predict_array(X), loaded.predict_array(X))
        assert loaded.feature_order == model.feature_order

    def test_reject_foreign_model(self, linear_dataset):
        """Wrong schema or feature order is an artifact error."""
        from moire_sensor_sim.errors import ArtifactError
        from moire_sensor_sim.estimator import CalibrationModel, fit

        doc = fit(linear_dataset)[0].to_dict()
        with pytest.raises(ArtifactError):
            CalibrationModel.from_dict({**doc, "schema": "other/1"})
        with pytest.raises(ArtifactError):
            CalibrationModel.from_dict({**doc, "feature_order": "I,cx"})


class TestTiltMatrix:
    """Tests for the centroid -> tilt mapping."""

    def test_recovers_tilt(self):
        """Centroid shifts map back to Tx and Ty."""
        from moire_sensor_sim.estimator import fit_tilt_matrix

        data = tilt_dataset(gain=0.9, center=(0.2, -0.1))
        tilt = fit_tilt_matrix(data)
        T = data.wrenches[:, 3:5]
        for obs, target in zip(data.observables, T):
            assert np.allclose(tilt.apply(obs.centroid), target, atol=1e-9)
        assert tilt.center == pytest.approx([0.2, -0.1], abs=1e-9)
        assert tilt.residual_norm == pytest.approx(0.0, abs=1e-9)

    def test_matrix_matches_contact_model(self):
        """With centroid = contact centre, M = Fz/1000 * [[0, 1], [-1, 0]]."""
        from moire_sensor_sim.estimator import fit_tilt_matrix

        tilt = fit_tilt_matrix(tilt_dataset(gain=1.0, preload=1.0))
        assert tilt.matrix == pytest.approx(np.array([[0.0, 1e-3], [-1e-3, 0.0]]), abs=1e-12)

    def test_doubled_preload_scales_matrix(self):
        """Doubling the preload doubles the matrix."""
        from moire_sensor_sim.estimator import fit_tilt_matrix

        single = fit_tilt_matrix(tilt_dataset(gain=0.8, preload=0.5))
        double = fit_tilt_matrix(tilt_dataset(gain=0.8, preload=1.0))
        assert double.matrix == pytest.approx(2.0 * single.matrix, rel=1e-9, abs=1e-15)

    def test_no_excitation(self):
        """Constant tilt cannot be calibrated."""
        from moire_sensor_sim.errors import SingularSystem
        from moire_sensor_sim.estimator import fit_tilt_matrix

        data = tilt_dataset(gain=1.0)
        data.wrenches[:, 3:5] = 0.0
        with pytest.raises(SingularSystem):
            fit_tilt_matrix(data)

    def test_too_few_samples(self):
        """A tilt fit needs three samples."""
        from moire_sensor_sim.errors import InsufficientData
        from moire_sensor_sim.estimator import fit_tilt_matrix

        data = tilt_dataset(gain=1.0)
        with pytest.raises(InsufficientData):
            fit_tilt_matrix(data.subset(["none"]))


@pytest.mark.slow
class TestRenderedCalibration:
    """Calibration on rendered frames."""

    def test_fz_sweep(self):
        """A noise-free Fz sweep is recovered almost exactly."""
        from moire_sensor_sim.dataset import build_dataset
        from moire_sensor_sim.estimator import fit
        from moire_sensor_sim.synth import RenderConfig

        data = build_dataset(
            20, render_config=RenderConfig(noise_sigma=0.0), sweep_fraction=1.0, sweep_kinds=["fz"]
        )
        _, metrics = fit(data)
        assert metrics.r2["Fz"] >= 0.999
        assert metrics.r2["Fx"] is None

    def test_full_dataset(self, full_dataset):
        """2,000 mixed samples at the default noise reach R^2 >= 0.98 on every axis."""
        from moire_sensor_sim.estimator import fit

        _, metrics = fit(full_dataset)
        for axis, r2 in metrics.r2.items():
            assert r2 is not None and r2 >= 0.98, axis
        assert metrics.r2["Tz"] >= max(metrics.r2.values()) - 1e-3

    def test_pure_fz_cross_talk(self, full_dataset):
        """A pure Fz sweep predicts |Fx|, |Fy| below 5 % of the Fz range."""
        from moire_sensor_sim.dataset import build_dataset
        from moire_sensor_sim.estimator import feature_matrix, fit
        from moire_sensor_sim.loads import DEFAULT_RANGES

        model, _ = fit(full_dataset)
        sweep = build_dataset(20, seed=7, sweep_fraction=1.0, sweep_kinds=["fz"], workers=4)
        predicted = model.predict_array(feature_matrix(sweep.observables))
        bound = 0.05 * (DEFAULT_RANGES.Fz[1] - DEFAULT_RANGES.Fz[0])
        assert np.abs(predicted[:, 0]).max() < bound
        assert np.abs(predicted[:, 1]).max() < bound

    def test_noise_degrades_fit(self):
        """Held-out R^2 does not improve as pixel noise grows."""
        from moire_sensor_sim.dataset import build_dataset
        from moire_sensor_sim.estimator import fit
        from moire_sensor_sim.loads import AXES
        from moire_sensor_sim.synth import RenderConfig

        scores = {}
        for sigma in (0.0, 0.01, 0.03):
            runs = [
                fit(build_dataset(160, seed=s, render_config=RenderConfig(noise_sigma=sigma), workers=4))[1]
                for s in range(2)
            ]
            scores[sigma] = {axis: np.mean([m.r2[axis] for m in runs]) for axis in AXES}

        for axis in AXES:
            assert scores[0.0][axis] >= scores[0.01][axis] - 5e-3, axis
            assert scores[0.01][axis] >= scores[0.03][axis] - 5e-3, axis

    def test_tilt_oracle(self):
        """Noiseless rendered tilt sweeps give Tx, Ty within 2 % of the applied moments."""
        from moire_sensor_sim.dataset import build_dataset
        from moire_sensor_sim.estimator import fit_tilt_matrix
        from moire_sensor_sim.synth import RenderConfig

        data = build_dataset(
            24, render_config=RenderConfig(noise_sigma=0.0), sweep_fraction=1.0, sweep_kinds=["tx", "ty"]
        )
        tilt = fit_tilt_matrix(data)
        T = data.wrenches[:, 3:5]
        predicted = np.array([tilt.apply(obs.centroid) for obs in data.observables])
        assert np.abs(predicted - T).max() <= 0.02 * np.abs(T).max()


def make_obs(values):
    """Observables from (I, cx, cy, pox, poy, theta, period)."""
    from moire_sensor_sim.features import MoireObservables

    I, cx, cy, pox, poy, theta, period = (float(v) for v in values)
    return MoireObservables(
        mean_brightness=I,
        centroid=(cx, cy),
        mean_phase_gradient=(0.0, 0.0),
        orientation=theta,
        period=period,
        band_energy=0.9,
        phase_offset=(pox, poy),
    )


def tilt_dataset(gain, center=(0.0, 0.0), preload=1.0, steps=7):
    """tx/ty sweeps whose centroid is gain * contact centre + center."""
    from moire_sensor_sim.dataset import Dataset

    rows, obs, sweeps = [], [], []
    for kind in ("tx", "ty"):
        for t in np.linspace(-0.006, 0.006, steps) * preload:
            tx, ty = (t, 0.0) if kind == "tx" else (0.0, t)
            contact = (-ty * 1000.0 / preload, tx * 1000.0 / preload)
            c = (center[0] + gain * contact[0], center[1] + gain * contact[1])
            rows.append([0.0, 0.0, preload, tx, ty, 0.0])
            obs.append(make_obs([0.4, c[0], c[1], 0.0, 0.0, 0.0, 4.2]))
            sweeps.append(kind)
    return Dataset(wrenches=np.array(rows), sweeps=sweeps, observables=obs)


@pytest.fixture(scope="module")
def full_dataset():
    """2,000 mixed samples at the default noise, rendered once per module."""
    from moire_sensor_sim.dataset import build_dataset

    return build_dataset(2000, seed=0, workers=4)


@pytest.fixture
def linear_dataset():
    """40 random observables with wrenches linear in the feature vector."""
    from moire_sensor_sim.dataset import Dataset
    from moire_sensor_sim.estimator import feature_matrix

    rng = np.random.default_rng(42)
    n = 40
    raw = np.column_stack(
        [
            rng.uniform(0.3, 0.4, n),
            rng.uniform(-2, 2, n),
            rng.uniform(-2, 2, n),
            rng.uniform(-0.5, 0.5, n),
            rng.uniform(-0.5, 0.5, n),
            rng.uniform(-0.2, 0.2, n),
            rng.uniform(3.0, 6.0, n),
        ]
    )
    obs = [make_obs(r) for r in raw]
    X = feature_matrix(obs)
    W = rng.normal(size=(X.shape[1], 6))
    Y = (X - X.mean(axis=0)) / X.std(axis=0) @ W * 0.1
    sweeps = ["mixed"] * n
    return Dataset(wrenches=Y, sweeps=sweeps, observables=obs)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
