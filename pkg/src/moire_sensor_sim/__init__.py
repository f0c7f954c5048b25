"""
Moire Sensor Simulator

Synthetic dual-grating moire tactile sensor: analytic fringe optics, a
wrench-driven deformation model, a fringe image renderer, physics feature
extraction, affine wrench calibration and a contact gate.
"""

__version__ = "1.0.0"
__author__ = "Moire Sensor Sim Project"

from moire_sensor_sim.errors import MoireSimError
from moire_sensor_sim.optics import Grating, SensorGeometry, moire_descriptor
from moire_sensor_sim.loads import MaterialModel, Wrench, wrench_to_deformation
from moire_sensor_sim.synth import ImageGray, RenderConfig, render
from moire_sensor_sim.features import FeatureExtractor, MoireObservables, extract_all
from moire_sensor_sim.estimator import CalibrationModel, fit, predict
from moire_sensor_sim.gate import ContactGate, GateConfig

__all__ = [
    "MoireSimError",
    "Grating",
    "SensorGeometry",
    "moire_descriptor",
    "MaterialModel",
    "Wrench",
    "wrench_to_deformation",
    "ImageGray",
    "RenderConfig",
    "render",
    "FeatureExtractor",
    "MoireObservables",
    "extract_all",
    "CalibrationModel",
    "fit",
    "predict",
    "ContactGate",
    "GateConfig",
]
