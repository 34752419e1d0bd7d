"""Sectional solver for coagulation with collisional breakage under singular kernels."""

from .grid import Grid, TruncationConfig, build_grid, locate
from .integrator import IntegratorConfig, Trajectory, integrate
from .kernel_model import (
    DaughterSpec,
    EfficiencySpec,
    KernelFamily,
    KernelSpec,
    check_admissibility,
)
from .operators import BACKEND, State, TestFunction, build_tables, rhs
from .scenario import Scenario, parse_scenario

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DaughterSpec",
    "EfficiencySpec",
    "Grid",
    "IntegratorConfig",
    "KernelFamily",
    "KernelSpec",
    "Scenario",
    "State",
    "TestFunction",
    "Trajectory",
    "TruncationConfig",
    "build_grid",
    "build_tables",
    "check_admissibility",
    "integrate",
    "locate",
    "parse_scenario",
    "rhs",
]
