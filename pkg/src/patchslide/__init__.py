"""Quasi-static planar sliding of an object pushed through a frictional patch."""
from .errors import PatchSlideError
from .limit_surface import ObjectModel, PatchModel
from .scene import ContactScene
from .sim import ControllerConfig, Segment, SimConfig, Trajectory, run, run_controlled
from .solver import Mode, ModeSolution, diagonalize, solve

__all__ = [
    "ContactScene",
    "ControllerConfig",
    "Mode",
    "ModeSolution",
    "ObjectModel",
    "PatchModel",
    "PatchSlideError",
    "Segment",
    "SimConfig",
    "Trajectory",
    "diagonalize",
    "run",
    "run_controlled",
    "solve",
]

__version__ = "0.1.0"
