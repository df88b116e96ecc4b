"""Pytest configuration and shared fixtures.

This module contains fixtures and configuration that are automatically
available to all tests in the tests directory.
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np
import pytest

from gbdm.config import build_config
from gbdm.numkit.random import Rng
from gbdm.numkit.tensor import Tensor, precision
from gbdm.systems.dataset import generate_dataset
from gbdm.systems.specs import get_spec


if TYPE_CHECKING:
    from collections.abc import Callable, Generator
    from pathlib import Path

    from gbdm.config import TrainConfig


# Configure logging for tests
logging.getLogger("gbdm").setLevel(logging.DEBUG)


# =============================================================================
# Fixtures for numerics
# =============================================================================


@pytest.fixture
def rng() -> Rng:
    """Provide a seeded random stream."""
    return Rng(1234)


def finite_difference(fn: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of ``x``."""
    grad = np.zeros_like(x, dtype=np.float64)
    for idx in np.ndindex(x.shape):
        plus = x.astype(np.float64).copy()
        minus = x.astype(np.float64).copy()
        plus[idx] += step
        minus[idx] -= step
        grad[idx] = (fn(plus) - fn(minus)) / (2.0 * step)
    return grad


@pytest.fixture
def fd() -> Callable[..., np.ndarray]:
    """Provide the central finite-difference helper."""
    return finite_difference


@pytest.fixture
def float64() -> Generator[None, None, None]:
    """Create tensors in float64 for the duration of a test."""
    with precision(np.float64):
        yield


@pytest.fixture
def make_tensor() -> Callable[..., Tensor]:
    """Provide a factory for trainable leaf tensors."""

    def factory(data: object, *, requires_grad: bool = True) -> Tensor:
        return Tensor(data, requires_grad=requires_grad)

    return factory


# =============================================================================
# Fixtures for datasets and configs
# =============================================================================


@pytest.fixture
def toy_data(tmp_path: Path) -> tuple[Path, Path]:
    """Small bimodal toy train and test files."""
    spec = get_spec("bimodal_toy")
    train = generate_dataset(spec, 8, 0, tmp_path / "data" / "toy_train.gbds", split="train", threads=1)
    test = generate_dataset(spec, 4, 0, tmp_path / "data" / "toy_test.gbds", split="test", threads=1)
    return train, test


@pytest.fixture
def rlc_data(tmp_path: Path) -> tuple[Path, Path]:
    """Small RLC train and test files."""
    spec = get_spec("rlc")
    train = generate_dataset(spec, 4, 0, tmp_path / "data" / "rlc_train.gbds", split="train", threads=1)
    test = generate_dataset(spec, 2, 0, tmp_path / "data" / "rlc_test.gbds", split="test", threads=1)
    return train, test


@pytest.fixture
def toy_config(toy_data: tuple[Path, Path]) -> Callable[..., TrainConfig]:
    """Factory for tiny bimodal toy configs; keyword arguments override keys."""
    train, test = toy_data

    def factory(**overrides: object) -> TrainConfig:
        values: dict[str, object] = {
            "system": "bimodal_toy",
            "train_data": str(train),
            "test_data": str(test),
            "method": "vgbdm",
            "seed": 0,
            "batch_size": 4,
            "total_steps": 6,
            "eval_every": 3,
            "eval_trajectories": 2,
            "eval_horizon": 5,
            "euler_substeps": 2,
        }
        values.update(overrides)
        return build_config(values)

    return factory


# =============================================================================
# Fixtures for logging
# =============================================================================


@pytest.fixture
def captured_logs(caplog: pytest.LogCaptureFixture) -> pytest.LogCaptureFixture:
    """Provide log capturing with DEBUG level enabled."""
    caplog.set_level(logging.DEBUG, logger="gbdm")
    return caplog


# =============================================================================
# Markers and hooks
# =============================================================================


def pytest_configure(config: pytest.Config) -> None:
    """Configure custom pytest markers."""
    config.addinivalue_line("markers", "slow: marks tests as slow running")
    config.addinivalue_line("markers", "integration: marks tests as integration tests")
    config.addinivalue_line("markers", "unit: marks tests as unit tests")


# =============================================================================
# Autouse fixtures
# =============================================================================


@pytest.fixture(autouse=True)
def _ensure_logging_propagates() -> Generator[None, None, None]:
    """Ensure logging propagates for test capture."""
    logger = logging.getLogger("gbdm")
    original_propagate = logger.propagate
    logger.propagate = True
    yield
    logger.propagate = original_propagate


@pytest.fixture(autouse=True)
def _small_worker_pool(monkeypatch: pytest.MonkeyPatch) -> None:
    """Keep worker pools small and deterministic in tests."""
    monkeypatch.setenv("GBDM_THREADS", "2")
