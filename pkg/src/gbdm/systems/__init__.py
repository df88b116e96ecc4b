"""Benchmark systems: specs, simulators, incomplete physics and datasets."""

from gbdm.systems.dataset import (
    Dataset,
    DatasetHeader,
    EvaluationView,
    TrainingView,
    generate_dataset,
    load_dataset,
    write_dataset,
)
from gbdm.systems.physics import PhysicsModel, physics_rhs
from gbdm.systems.simulators import Trajectory, integrate, simulate
from gbdm.systems.specs import SYSTEMS, ParamRange, SystemSpec, get_spec


__all__ = [
    "SYSTEMS",
    "Dataset",
    "DatasetHeader",
    "EvaluationView",
    "ParamRange",
    "PhysicsModel",
    "SystemSpec",
    "Trajectory",
    "TrainingView",
    "generate_dataset",
    "get_spec",
    "integrate",
    "load_dataset",
    "physics_rhs",
    "simulate",
    "write_dataset",
]
