"""
Observable -> wrench calibration.

An affine ridge model on standardized physics features, fitted in closed form,
plus the 2x2 tilt matrix mapping brightness-centroid shift to (Tx, Ty).
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.metrics import mean_absolute_error, r2_score
from sklearn.model_selection import train_test_split
from sklearn.preprocessing import StandardScaler

from moire_sensor_sim.artifacts import read_json, write_json
from moire_sensor_sim.dataset import Dataset
from moire_sensor_sim.errors import ArtifactError, InsufficientData, NumericError, SingularSystem
from moire_sensor_sim.features import MoireObservables
from moire_sensor_sim.loads import AXES, Wrench

logger = logging.getLogger(__name__)

FEATURE_ORDER = ("I", "cx", "cy", "pox", "poy", "sin2theta", "cos2theta", "inv_lambda")
FEATURE_VERSION = "moire-physics-v2"
MODEL_SCHEMA = "moire-calibration/1"
CONDITION_LIMIT = 1e12
TILT_AXES = ("Tx", "Ty")
TILT_SWEEPS = ("tx", "ty")


def feature_vector(obs: MoireObservables) -> np.ndarray:
    """Observables in FEATURE_ORDER.

    The folded orientation enters as (sin 2theta, cos 2theta) and the period as
    spatial frequency 1/Lambda.
    """
    vec = np.array(
        [
            obs.mean_brightness,
            obs.centroid[0],
            obs.centroid[1],
            obs.phase_offset[0],
            obs.phase_offset[1],
            math.sin(2.0 * obs.orientation),
            math.cos(2.0 * obs.orientation),
            1.0 / obs.period,
        ]
    )
    if not np.all(np.isfinite(vec)):
        raise NumericError(f"non-finite feature vector {vec.tolist()}")
    return vec


def feature_matrix(observables: Sequence[MoireObservables]) -> np.ndarray:
    if len(observables) == 0:
        return np.empty((0, len(FEATURE_ORDER)))
    return np.vstack([feature_vector(o) for o in observables])


@dataclass(frozen=True)
class CalibrationModel:
    """prediction = weights @ ((f - feature_means) / feature_scales) + bias"""

    weights: np.ndarray  # (6, d)
    bias: np.ndarray  # (6,)
    feature_means: np.ndarray
    feature_scales: np.ndarray
    ridge_lambda: float
    feature_order: Tuple[str, ...] = FEATURE_ORDER

    def predict_array(self, X: np.ndarray) -> np.ndarray:
        Z = (np.atleast_2d(X) - self.feature_means) / self.feature_scales
        return Z @ self.weights.T + self.bias

    def to_dict(self) -> dict:
        return {
            "schema": MODEL_SCHEMA,
            "feature_version": FEATURE_VERSION,
            "feature_order": ",".join(self.feature_order),
            "outputs": list(AXES),
            "ridge_lambda": self.ridge_lambda,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "feature_means": self.feature_means.tolist(),
            "feature_scales": self.feature_scales.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CalibrationModel":
        if doc.get("schema") != MODEL_SCHEMA:
            raise ArtifactError(f"unsupported model schema {doc.get('schema')!r}")
        order = tuple(doc.get("feature_order", "").split(","))
        if order != FEATURE_ORDER:
            raise ArtifactError(f"model feature order {order} does not match {FEATURE_ORDER}")
        try:
            model = cls(
                weights=np.asarray(doc["weights"], dtype=float),
                bias=np.asarray(doc["bias"], dtype=float),
                feature_means=np.asarray(doc["feature_means"], dtype=float),
                feature_scales=np.asarray(doc["feature_scales"], dtype=float),
                ridge_lambda=float(doc["ridge_lambda"]),
                feature_order=order,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ArtifactError(f"malformed model document: {e}") from e
        d = len(FEATURE_ORDER)
        if model.weights.shape != (len(AXES), d) or model.bias.shape != (len(AXES),):
            raise ArtifactError(f"model matrix has shape {model.weights.shape}")
        return model

    def save(self, path: Union[str, Path]) -> Path:
        return write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "CalibrationModel":
        return cls.from_dict(read_json(path))


@dataclass
class Metrics:
    """Per-axis R^2 (None for a zero-variance axis) and MAE."""

    r2: Dict[str, Optional[float]]
    mae: Dict[str, float]
    n_samples: int

    def to_dict(self) -> dict:
        return {"r2": dict(self.r2), "mae": dict(self.mae), "n_samples": self.n_samples}

    @property
    def best_axis(self) -> Optional[str]:
        defined = {a: v for a, v in self.r2.items() if v is not None}
        return max(defined, key=defined.get) if defined else None


def _score(y_true: np.ndarray, y_pred: np.ndarray) -> Metrics:
    r2, mae = {}, {}
    for j, axis in enumerate(AXES):
        t, p = y_true[:, j], y_pred[:, j]
        mae[axis] = float(mean_absolute_error(t, p))
        r2[axis] = None if np.all(t == t[0]) else float(r2_score(t, p))
    return Metrics(r2=r2, mae=mae, n_samples=len(y_true))


def _split(n: int, strata: Sequence[str], split_seed: int, test_size: float):
    idx = np.arange(n)
    _, counts = np.unique(np.asarray(strata), return_counts=True)
    if counts.min() >= 2:
        try:
            return train_test_split(idx, test_size=test_size, random_state=split_seed, stratify=strata)
        except ValueError as e:
            logger.debug("Stratified split unavailable (%s); splitting without strata", e)
    return train_test_split(idx, test_size=test_size, random_state=split_seed)


def solve_ridge(Z: np.ndarray, Y: np.ndarray, ridge_lambda: float) -> np.ndarray:
    """Weights W (d, k) minimising |Z W - Y|^2 + lambda |W|^2 for centred Z, Y.

    Raises:
        SingularSystem: cond(Z'Z + lambda I) exceeds 1e12.
    """
    A = Z.T @ Z + ridge_lambda * np.eye(Z.shape[1])
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularSystem(f"normal matrix condition number {cond:.3g} exceeds {CONDITION_LIMIT:.0e}")
    return np.linalg.solve(A, Z.T @ Y)


def fit(
    dataset: Dataset,
    ridge_lambda: float = 1e-3,
    split_seed: int = 0,
    test_size: float = 0.2,
) -> Tuple[CalibrationModel, Metrics]:
    """Fit on a stratified 80/20 split and score the held-out part.

    Raises:
        InsufficientData: fewer than 2d samples.
        SingularSystem: the regularized normal matrix is numerically singular.
    """
    d = len(FEATURE_ORDER)
    if len(dataset) < 2 * d:
        raise InsufficientData(f"need at least {2 * d} samples, got {len(dataset)}")
    if ridge_lambda < 0:
        raise NumericError(f"ridge_lambda must be >= 0, got {ridge_lambda}")

    X = feature_matrix(dataset.observables)
    Y = dataset.wrenches
    train, test = _split(len(dataset), dataset.sweeps, split_seed, test_size)

    scaler = StandardScaler().fit(X[train])
    Z = scaler.transform(X[train])
    bias = Y[train].mean(axis=0)
    W = solve_ridge(Z, Y[train] - bias, ridge_lambda)

    model = CalibrationModel(
        weights=W.T.copy(),
        bias=bias,
        feature_means=scaler.mean_.copy(),
        feature_scales=scaler.scale_.copy(),
        ridge_lambda=float(ridge_lambda),
    )
    metrics = _score(Y[test], model.predict_array(X[test]))
    logger.info(
        "Fitted %d/%d train/test samples, R2 %s",
        len(train),
        len(test),
        {a: (None if v is None else round(v, 4)) for a, v in metrics.r2.items()},
    )
    return model, metrics


def predict(model: CalibrationModel, obs: MoireObservables) -> Wrench:
    return Wrench.from_array(model.predict_array(feature_vector(obs))[0])


def evaluate(model: CalibrationModel, dataset: Dataset) -> Metrics:
    if len(dataset) == 0:
        raise InsufficientData("cannot evaluate on an empty dataset")
    return _score(dataset.wrenches, model.predict_array(feature_matrix(dataset.observables)))


# Tilt --------------------------------------------------------------------------

@dataclass(frozen=True)
class TiltCalibration:
    """[Tx, Ty] = matrix @ (c - center), c the brightness centroid in mm."""

    matrix: np.ndarray  # (2, 2), N*m per mm
    center: np.ndarray  # (2,), mm
    offset: np.ndarray  # (2,), N*m; equals -matrix @ center
    residual_norm: float
    n_samples: int

    def apply(self, centroid: Sequence[float]) -> np.ndarray:
        return self.matrix @ np.asarray(centroid, dtype=float) + self.offset

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "center": self.center.tolist(),
            "residual_norm": self.residual_norm,
            "n_samples": self.n_samples,
        }


def fit_tilt_matrix(dataset: Dataset, restrict: bool = True) -> TiltCalibration:
    """Least-squares tilt matrix from centroid shift.

    Args:
        dataset: samples with Tx/Ty variation at a fixed preload
        restrict: use only the tx/ty sweeps of the dataset

    Raises:
        SingularSystem: no tilt excitation, or centroids that do not span
            the plane.
    """
    data = dataset.subset(TILT_SWEEPS) if restrict else dataset
    if len(data) < 3:
        raise InsufficientData(f"tilt fit needs at least 3 samples, got {len(data)}")

    T = data.wrenches[:, [AXES.index(a) for a in TILT_AXES]]
    if np.all(np.ptp(T, axis=0) == 0):
        raise SingularSystem("no tilt excitation: Tx and Ty are constant")
    C = np.array([o.centroid for o in data.observables])
    A = np.column_stack([C, np.ones(len(C))])
    coef, _, rank, _ = np.linalg.lstsq(A, T, rcond=None)
    if rank < A.shape[1]:
        raise SingularSystem(f"centroid design matrix has rank {rank} < {A.shape[1]}")

    matrix = coef[:2].T
    offset = coef[2]
    center = -np.linalg.pinv(matrix) @ offset
    resid = float(np.linalg.norm(A @ coef - T))
    logger.info("Tilt matrix %s, residual %.3g N*m", np.round(matrix, 6).tolist(), resid)
    return TiltCalibration(matrix=matrix, center=center, offset=offset, residual_norm=resid, n_samples=len(data))
