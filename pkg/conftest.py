"""
Shared pytest fixtures.
"""
import json
import sys
from pathlib import Path

import numpy as np
import pytest

PROJECT_ROOT = Path(__file__).resolve().parent
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from src.functional import QuadratureSpec
from src.model import MixtureModel, MixtureTerm, SpinMeasure
from src.paths import StepPath
from src.symcone import random_psd
from src.varforms import OptimizerSpec


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def ising():
    return SpinMeasure.ising()


@pytest.fixture
def potts2():
    return SpinMeasure.potts(2)


@pytest.fixture
def ising_p2():
    """D = 1, xi(q) = 0.09 q^2."""
    return MixtureModel(1, (MixtureTerm(2, [0.3]),))


@pytest.fixture
def potts_symmetric():
    """D = 2, symmetric p = 2 mixture with beta = 0.5."""
    return MixtureModel(2, (MixtureTerm(2, [0.5, 0.5]),))


@pytest.fixture
def mixed_d2():
    """D = 2, p in {1, 2}, asymmetric weights."""
    return MixtureModel(2, (MixtureTerm(1, [0.4, 0.2]), MixtureTerm(2, [0.6, 0.3])))


@pytest.fixture
def gh():
    return QuadratureSpec(gh_nodes=12)


@pytest.fixture
def fast_spec():
    """Small optimizer budget for unit tests."""
    return OptimizerSpec(
        levels=1,
        restarts=2,
        max_evals=600,
        inner_restarts=1,
        inner_max_evals=400,
        outer_restarts=1,
        outer_max_evals=40,
        quadrature=QuadratureSpec(gh_nodes=12),
    )


def make_random_path(rng: np.random.Generator, dim: int, levels: int, scale: float = 0.4) -> StepPath:
    """Increasing random step path: cumulative sums of random PSD increments on a random grid."""
    cuts = np.sort(rng.uniform(0.05, 0.95, size=levels - 1))
    grid = (0.0,) + tuple(cuts) + (1.0,)
    increments = [random_psd(rng, dim, scale=scale / levels).entries for _ in range(levels)]
    return StepPath.from_arrays(grid, np.cumsum(increments, axis=0))


@pytest.fixture
def random_path():
    return make_random_path


@pytest.fixture
def write_json(tmp_path):
    """Write a JSON document under tmp_path and return its path."""

    def _write(name: str, data) -> Path:
        path = tmp_path / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return _write
