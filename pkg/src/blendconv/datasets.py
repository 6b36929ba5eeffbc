"""Synthetic shape classes and file-backed shape datasets."""

from __future__ import annotations

import glob
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.transform import Rotation
from sklearn.model_selection import train_test_split

from blendconv.exceptions import ConfigError
from blendconv.parsers import POINT_CLOUD_SUFFIXES, load_point_cloud
from blendconv.transform import PointCloud, normalize

log = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
ShapeSampler = Callable[[int, np.random.Generator], FloatArray]

DEFAULT_POINTS = 1024
TORUS_RADII = (1.0, 0.4)


def _directions(count: int, rng: np.random.Generator) -> FloatArray:
    v = rng.normal(size=(count, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sample_sphere_shell(count: int, rng: np.random.Generator) -> FloatArray:
    return _directions(count, rng)


def sample_cube_surface(count: int, rng: np.random.Generator) -> FloatArray:
    points = rng.uniform(-1.0, 1.0, size=(count, 3))
    axis = rng.integers(0, 3, size=count)
    side = rng.choice([-1.0, 1.0], size=count)
    points[np.arange(count), axis] = side
    return points


def sample_torus(count: int, rng: np.random.Generator) -> FloatArray:
    major, minor = TORUS_RADII
    u = rng.uniform(0.0, 2 * np.pi, count)
    v = rng.uniform(0.0, 2 * np.pi, count)
    ring = major + minor * np.cos(v)
    return np.stack([ring * np.cos(u), ring * np.sin(u), minor * np.sin(v)], axis=1)


def _shell(inner: float) -> ShapeSampler:
    def sample(count: int, rng: np.random.Generator) -> FloatArray:
        # uniform in volume between the two radii
        radius = np.cbrt(rng.uniform(inner**3, 1.0, count))
        return _directions(count, rng) * radius[:, None]

    return sample


SHAPE_SAMPLERS: dict[str, ShapeSampler] = {
    "sphere-shell": sample_sphere_shell,
    "cube-surface": sample_cube_surface,
    "torus": sample_torus,
    "thin-shell": _shell(0.9),
    "thick-shell": _shell(0.3),
}


@dataclass
class ShapeDataset:
    clouds: list[PointCloud]
    labels: list[int]
    classes: list[str]

    def __len__(self) -> int:
        return len(self.clouds)

    def subset(self, indices: Sequence[int]) -> ShapeDataset:
        return ShapeDataset(
            [self.clouds[i] for i in indices],
            [self.labels[i] for i in indices],
            list(self.classes),
        )

    def class_counts(self) -> dict[str, int]:
        return {name: self.labels.count(i) for i, name in enumerate(self.classes)}


def jittered(cloud: PointCloud, sigma: float, rng: np.random.Generator) -> PointCloud:
    """Copy of a cloud with Gaussian noise added to every coordinate."""
    noise = rng.normal(0.0, sigma, cloud.points.shape) if sigma > 0 else 0.0
    return PointCloud(cloud.points + noise, cloud.texture.copy(), cloud.label)


def sample_shape(
    name: str,
    rng: np.random.Generator,
    points: int = DEFAULT_POINTS,
    jitter: float = 0.0,
    label: int | None = None,
) -> PointCloud:
    """
    Sample one shape of a class in a random pose.

    Raises:
        ConfigError: If the class has no sampler.
    """
    try:
        sampler = SHAPE_SAMPLERS[name]
    except KeyError:
        raise ConfigError(
            f'unknown shape class "{name}", choose from {", ".join(SHAPE_SAMPLERS)}'
        )
    surface = sampler(points, rng)
    pose = Rotation.random(None, rng)
    cloud = PointCloud(pose.apply(surface), label=label)
    return jittered(cloud, jitter, rng)


def make_synthetic_dataset(
    classes: Sequence[str],
    per_class: int,
    jitter: float,
    seed: int,
    points: int = DEFAULT_POINTS,
) -> ShapeDataset:
    """
    Balanced dataset of randomly posed synthetic shapes.

    Args:
        classes (Sequence[str]): Names from `SHAPE_SAMPLERS`.
        per_class (int): Shapes per class.
        jitter (float): Stddev of the Gaussian noise on every point.
        seed (int): Seed of the only random generator used.
        points (int): Points per shape.

    Returns:
        ShapeDataset: Shapes ordered by class.
    """
    if per_class < 1:
        raise ConfigError(f"per_class must be >= 1, got {per_class}")
    rng = np.random.default_rng(seed)
    clouds = []
    labels = []
    for label, name in enumerate(classes):
        for _ in range(per_class):
            clouds.append(sample_shape(name, rng, points, jitter, label))
            labels.append(label)
    log.debug(f"sampled {len(clouds)} synthetic shapes over {len(classes)} classes")
    return ShapeDataset(clouds, labels, list(classes))


def load_shape_files(pattern: str) -> ShapeDataset:
    """
    Load every point cloud matching a glob, labelled by parent directory.

    Raises:
        ConfigError: If nothing matches.
    """
    paths = sorted(
        Path(p)
        for p in glob.glob(pattern, recursive=True)
        if Path(p).suffix.lower() in POINT_CLOUD_SUFFIXES
    )
    if not paths:
        raise ConfigError(f'no point cloud files match "{pattern}"')

    classes = sorted({path.parent.name for path in paths})
    index = {name: i for i, name in enumerate(classes)}
    clouds = [load_point_cloud(path, index[path.parent.name]) for path in paths]
    labels = [index[path.parent.name] for path in paths]
    log.info(f"loaded {len(paths)} shapes in {len(classes)} classes")
    return ShapeDataset(clouds, labels, classes)


def split_dataset(
    dataset: ShapeDataset, test_fraction: float, seed: int
) -> tuple[ShapeDataset, ShapeDataset]:
    """Stratified train/test split."""
    indices = np.arange(len(dataset))
    if test_fraction <= 0:
        return dataset, dataset.subset([])
    train_idx, test_idx = train_test_split(
        indices, test_size=test_fraction, random_state=seed, stratify=dataset.labels
    )
    return dataset.subset(sorted(train_idx)), dataset.subset(sorted(test_idx))


def radial_histogram(cloud: PointCloud, bins: int = 16) -> FloatArray:
    """Normalized histogram of point radii after normalization."""
    radius = np.linalg.norm(normalize(cloud).points, axis=1)
    counts, _ = np.histogram(radius, bins=bins, range=(0.0, 1.0))
    return counts / max(counts.sum(), 1)


def chi2_distance(a: FloatArray, b: FloatArray) -> float:
    total = a + b
    safe = np.where(total > 0, total, 1.0)
    return float(0.5 * np.sum(np.where(total > 0, (a - b) ** 2 / safe, 0.0)))
