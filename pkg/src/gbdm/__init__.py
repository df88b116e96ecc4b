"""Variational grey-box dynamics matching.

Learns dynamical systems by composing an incomplete physics model with a
learned vector field, inferring physical parameters and latent
stochasticity with a structured variational posterior, and forecasting by
integrating the composed field.
"""

from __future__ import annotations

import logging.config
from pathlib import Path

from gbdm.exceptions import (
    CheckpointError,
    ConfigurationError,
    DatasetFormatError,
    GbdmError,
    NumericalError,
    ReportInputError,
    ShapeError,
    SimulationError,
    TrainingAbortedError,
    ValidationError,
)


# Construct the full path to the logging configuration file
_config_path = Path(__file__).parent / "logging.conf"

# Configure the logging using the file
if _config_path.exists():
    logging.config.fileConfig(_config_path, disable_existing_loggers=False)

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ConfigurationError",
    "DatasetFormatError",
    "GbdmError",
    "NumericalError",
    "ReportInputError",
    "ShapeError",
    "SimulationError",
    "TrainingAbortedError",
    "ValidationError",
    "__version__",
]
