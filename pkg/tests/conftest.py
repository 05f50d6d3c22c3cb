"""Shared fixtures for the lasso-condition test suite."""

from pathlib import Path

import numpy as np
import pytest

from app.lasso_core import LassoInstance
from app.oracle1d import Instance1D

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def demo_instance() -> LassoInstance:
    """Well-posed single-row instance with support {1}."""
    return LassoInstance(y=[1.0], A=[[0.9, 0.3]], lam=0.01)


@pytest.fixture
def demo_1d() -> Instance1D:
    return Instance1D(y=1.0, a=[0.9, 0.3], lam=0.01)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def small_instances(rng):
    """A handful of Gaussian instances with m, N <= 6."""
    out = []
    for _ in range(12):
        m, n = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        out.append(LassoInstance(y=rng.standard_normal(m), A=rng.standard_normal((m, n)),
                                 lam=float(rng.uniform(0.1, 1.0))))
    return out


@pytest.fixture
def config_dir() -> Path:
    return CONFIG_DIR


@pytest.fixture(autouse=True)
def _quiet_env(monkeypatch):
    monkeypatch.setenv("LASSO_PROGRESS", "0")
    monkeypatch.delenv("LASSO_WORKERS", raising=False)
    monkeypatch.delenv("LASSO_LOG_LEVEL", raising=False)
    monkeypatch.delenv("LASSO_OUT_DIR", raising=False)
