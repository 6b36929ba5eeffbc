from typing import Any

import numpy as np
import pytest

from blendconv.basis import BasisSet, orthogonalize
from blendconv.config import NetworkConfig
from blendconv.datasets import ShapeDataset, make_synthetic_dataset
from blendconv.network import BlendNet, Sample
from blendconv.transform import bin_point_cloud, normalize

COARSE = (10, 18, 9)
CLASSES = ["sphere-shell", "cube-surface", "torus"]


def pytest_addoption(parser: Any) -> None:
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow tests"
    )


def pytest_collection_modifyitems(config: Any, items: list[Any]) -> None:
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def basis2() -> BasisSet:
    return orthogonalize(2)


@pytest.fixture(scope="session")
def basis3() -> BasisSet:
    return orthogonalize(3)


@pytest.fixture(scope="session")
def basis5() -> BasisSet:
    return orthogonalize(5)


@pytest.fixture(scope="session")
def net(basis3: BasisSet) -> BlendNet:
    return BlendNet(basis3, NetworkConfig(lattice_dims=(4, 4, 4), fc_init_std=0.1))


@pytest.fixture(scope="session")
def shapes() -> ShapeDataset:
    return make_synthetic_dataset(CLASSES, 4, 0.01, seed=7, points=256)


@pytest.fixture(scope="session")
def samples(net: BlendNet, shapes: ShapeDataset) -> list[Sample]:
    return [
        net.prepare(bin_point_cloud(normalize(cloud), COARSE), label)
        for cloud, label in zip(shapes.clouds, shapes.labels)
    ]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
