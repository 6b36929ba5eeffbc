from __future__ import annotations

import logging
from enum import Enum
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, Field, field_validator, model_validator

from blendconv.basis import RadialMode
from blendconv.convolution import TranslationMode
from blendconv.exceptions import ConfigError
from blendconv.files import load_config_file
from blendconv.utils import AttrDict

log = logging.getLogger(__name__)

GRID_PRESETS: dict[str, tuple[int, int, int]] = {
    "standard": (25, 36, 18),
    "coarse": (10, 18, 9),
}


def _positive_dims(value: Any) -> tuple[int, int, int]:
    dims = tuple(int(v) for v in value)
    if len(dims) != 3 or min(dims) < 1:
        raise ValueError(f"dims must be three positive counts, got {value}")
    return dims  # type: ignore[return-value]


class BasisConfig(BaseModel):
    n_max: int = Field(5, ge=0)
    mode: RadialMode = RadialMode.EXPONENTIAL
    quadrature_nodes: int = Field(128, ge=8)


class GridConfig(BaseModel):
    """Bin counts of the ball grid; a preset name overrides `dims`."""

    dims: tuple[int, int, int] = GRID_PRESETS["standard"]
    preset: Literal["standard", "coarse"] | None = None

    _check = field_validator("dims", mode="before")(_positive_dims)

    @model_validator(mode="after")
    def apply_preset(self) -> GridConfig:
        if self.preset is not None:
            self.dims = GRID_PRESETS[self.preset]
        return self


class KernelConfig(BaseModel):
    """Zonal Gaussian cap used for fixture and benchmark kernels."""

    kappa_phi: float = Field(1.0, gt=0)
    kappa_r: float = Field(8.0, gt=0)
    r0: float = Field(0.5, ge=0, le=1)


class ProjectionMode(str, Enum):
    LEARNED = "learned"
    ORTHOGONAL = "orthogonal"
    BASE = "base"

    def __str__(self) -> str:
        return self.value


class NetworkConfig(BaseModel):
    lattice_dims: tuple[int, int, int] = (8, 8, 8)
    channels1: int = Field(4, ge=1)
    channels2: int = Field(16, ge=1)
    groups1: int = Field(4, ge=1)
    groups2: int = Field(8, ge=1)
    translation: TranslationMode = TranslationMode.THEOREM
    projection: ProjectionMode = ProjectionMode.LEARNED
    gn_eps: float = Field(1e-5, gt=0)
    fc_init_std: float = Field(1e-4, ge=0)

    _check = field_validator("lattice_dims", mode="before")(_positive_dims)

    @model_validator(mode="after")
    def check_wiring(self) -> NetworkConfig:
        if self.channels2 % self.channels1:
            raise ValueError(
                f"channels2={self.channels2} must be a multiple of channels1={self.channels1}"
            )
        for channels, groups in ((self.channels1, self.groups1), (self.channels2, self.groups2)):
            if channels % groups:
                raise ValueError(f"{channels} channels cannot form {groups} groups")
        return self


class TrainConfig(BaseModel):
    lr_polynomial: float = Field(1e-5, gt=0)
    lr_kernel: float = Field(1e-2, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    iters_polynomial: int = Field(500, ge=0)
    iters_kernel: int = Field(2000, ge=0)
    batch_size: int = Field(16, ge=1)
    divergence_threshold: float = Field(1e6, gt=0)
    seed: int = 0
    log_every: int = Field(100, ge=1)


class DatasetConfig(BaseModel):
    """Synthetic shapes, or files matched by `glob` labelled by parent directory."""

    classes: list[str] = ["sphere-shell", "cube-surface", "torus"]
    per_class: int = Field(100, ge=1)
    # None reuses per_class, 0 holds out nothing
    test_per_class: int | None = Field(30, ge=0)
    points: int = Field(1024, ge=1)
    jitter: float = Field(0.01, ge=0)
    glob: str | None = None
    test_fraction: float = Field(0.2, ge=0, lt=1)


class RetrievalConfig(BaseModel):
    dim: int = Field(1000, ge=1)
    metrics: list[Literal["cosine", "euclidean", "kl", "bhattacharyya"]] = [
        "cosine",
        "euclidean",
        "kl",
        "bhattacharyya",
    ]
    jitter: float = Field(0.01, ge=0)


class BenchConfig(BaseModel):
    n_max_values: list[int] = [1, 2, 3, 4, 5]
    lattices: list[tuple[int, int, int]] = [(4, 4, 4), (8, 8, 8)]
    point_counts: list[int] = [1024, 10000]
    repeats: int = Field(3, ge=1)
    oracle_dims: tuple[int, int, int] = (40, 24, 36)
    oracle_shifts: list[float] = [0.1, 0.2, 0.3]


class RunConfig(BaseModel):
    basis: BasisConfig = BasisConfig()
    grid: GridConfig = GridConfig()
    kernel: KernelConfig = KernelConfig()
    network: NetworkConfig = NetworkConfig()
    train: TrainConfig = TrainConfig()
    dataset: DatasetConfig = DatasetConfig()
    retrieval: RetrievalConfig = RetrievalConfig()
    bench: BenchConfig = BenchConfig()
    seed: int = 0
    out_dir: Path = Path("out")
    threads: int | None = Field(None, ge=1)

    @model_validator(mode="after")
    def propagate_seed(self) -> RunConfig:
        self.train.seed = self.seed
        return self


def load_run_config(
    config_file: Path | None = None, overrides: dict[str, Any] | None = None
) -> RunConfig:
    """
    Resolve the run configuration: flags > config file > defaults.

    Args:
        config_file (Path | None): YAML or JSON file.
        overrides (dict[str, Any] | None): Nested values taken from flags.

    Returns:
        RunConfig: Validated configuration.

    Raises:
        ConfigError: If the file is missing or not a mapping.
    """
    merged = AttrDict(RunConfig().model_dump(mode="json"))

    if config_file is not None:
        if not config_file.is_file():
            raise ConfigError(f'config file not found at "{config_file}"')
        try:
            merged = merged + load_config_file(config_file)
        except ValueError as e:
            raise ConfigError(f"{config_file}: {e}") from e
        log.debug(f'loaded config from "{config_file}"')

    if overrides:
        merged = merged + overrides

    return RunConfig.model_validate(dict(merged))
