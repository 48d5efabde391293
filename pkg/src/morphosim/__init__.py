"""Finite element simulation of morphogen-driven growth of a planar tissue."""

from .errors import MorphosimError
from .fields import ResponseFunction, ScalarField, VectorField
from .growth import DensitySpec, DomainSpec, SimConfig, SimState, StepReport, run, step
from .mesh import Mesh, build_disk_mesh, build_polygon_mesh

__all__ = [
    "DensitySpec", "DomainSpec", "Mesh", "MorphosimError", "ResponseFunction", "ScalarField", "SimConfig",
    "SimState", "StepReport", "VectorField", "build_disk_mesh", "build_polygon_mesh",
    "run", "step",
]
