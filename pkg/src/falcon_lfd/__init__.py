"""Learning-from-demonstration and adaptive payload tracking for a 3-DOF delta haptic robot."""

from .config import ScenarioConfig, load_config
from .controller import AdaptiveController, Gains
from .dynamics import DynamicParams
from .kinematics import KinematicGeometry
from .lfd import fit_smoothing_spline, ingest_demo, synth_demo
from .scenario import run

__all__ = [
    "AdaptiveController",
    "DynamicParams",
    "Gains",
    "KinematicGeometry",
    "ScenarioConfig",
    "fit_smoothing_spline",
    "ingest_demo",
    "load_config",
    "run",
    "synth_demo",
]
