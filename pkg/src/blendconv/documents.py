"""
Versioned JSON documents for every persisted value.

Arrays are stored flat in row-major order next to their shape, complex
arrays as separate real and imaginary parts.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Literal, TypeVar

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, Field, ValidationError, model_validator

from blendconv.basis import BasisSet, MixingCoefficients, RadialMode
from blendconv.config import NetworkConfig
from blendconv.convolution import ConvField, ConvLattice
from blendconv.exceptions import ConfigError
from blendconv.files import load_json, save_json
from blendconv.network import BLOCKS, NetworkParams
from blendconv.retrieval import Descriptor, Gallery
from blendconv.transform import BallGrid, SpectralTensor

log = logging.getLogger(__name__)

FORMAT_VERSION = 1

Doc = TypeVar("Doc", bound="Document")


class Array(BaseModel):
    shape: list[int]
    values: list[float]

    @model_validator(mode="after")
    def check_size(self) -> Array:
        if int(np.prod(self.shape)) != len(self.values):
            raise ValueError(f"{len(self.values)} values do not fill shape {self.shape}")
        return self

    @classmethod
    def of(cls, array: Any) -> Array:
        array = np.asarray(array, dtype=np.float64)
        return cls(shape=list(array.shape), values=array.reshape(-1).tolist())

    def to_numpy(self) -> NDArray[np.float64]:
        return np.array(self.values, dtype=np.float64).reshape(self.shape)


class ComplexArray(BaseModel):
    shape: list[int]
    real: list[float]
    imag: list[float]

    @classmethod
    def of(cls, array: Any) -> ComplexArray:
        array = np.asarray(array, dtype=np.complex128)
        return cls(
            shape=list(array.shape),
            real=array.real.reshape(-1).tolist(),
            imag=array.imag.reshape(-1).tolist(),
        )

    def to_numpy(self) -> NDArray[np.complex128]:
        real = np.array(self.real, dtype=np.float64)
        imag = np.array(self.imag, dtype=np.float64)
        return (real + 1j * imag).reshape(self.shape)


class Document(BaseModel):
    format_version: int = FORMAT_VERSION

    @model_validator(mode="after")
    def check_version(self) -> Document:
        if self.format_version > FORMAT_VERSION:
            raise ValueError(
                f"document format {self.format_version} is newer than "
                f"supported {FORMAT_VERSION}"
            )
        return self


class BasisDocument(Document):
    kind: Literal["basis"] = "basis"
    n_max: int
    mode: RadialMode
    quadrature_nodes: int
    digest: str = ""
    forcing: Array
    mixing: Array
    coeffs: Array
    gram: Array
    norms: Array

    @classmethod
    def from_basis(cls, basis: BasisSet) -> BasisDocument:
        return cls(
            n_max=basis.n_max,
            mode=basis.mode,
            quadrature_nodes=basis.quadrature_nodes,
            digest=basis.digest,
            forcing=Array.of(basis.forcing),
            mixing=Array.of(basis.mixing.values),
            coeffs=Array.of(basis.coeffs),
            gram=Array.of(basis.gram),
            norms=Array.of(basis.norms),
        )

    def to_basis(self) -> BasisSet:
        basis = BasisSet(
            n_max=self.n_max,
            mode=self.mode,
            forcing=self.forcing.to_numpy(),
            mixing=MixingCoefficients(self.n_max, self.mixing.to_numpy()),
            coeffs=self.coeffs.to_numpy(),
            gram=self.gram.to_numpy(),
            norms=self.norms.to_numpy(),
            quadrature_nodes=self.quadrature_nodes,
        )
        if self.digest and basis.digest != self.digest:
            raise ConfigError(f"basis digest {basis.digest} does not match {self.digest}")
        return basis


class GridDocument(Document):
    kind: Literal["grid"] = "grid"
    dims: tuple[int, int, int]
    values: list[float]
    occupancy: list[int]

    @classmethod
    def from_grid(cls, grid: BallGrid) -> GridDocument:
        return cls(
            dims=grid.dims,
            values=grid.values.reshape(-1).tolist(),
            occupancy=grid.occupancy.reshape(-1).tolist(),
        )

    def to_grid(self) -> BallGrid:
        return BallGrid(self.dims, np.array(self.values), np.array(self.occupancy))


class TensorDocument(Document):
    kind: Literal["tensor"] = "tensor"
    n_max: int
    basis: str = ""
    moments: ComplexArray

    @classmethod
    def from_tensor(cls, tensor: SpectralTensor, basis: str = "") -> TensorDocument:
        return cls(n_max=tensor.n_max, basis=basis, moments=ComplexArray.of(tensor.moments))

    def to_tensor(self) -> SpectralTensor:
        return SpectralTensor(self.n_max, self.moments.to_numpy())


class FieldDocument(Document):
    kind: Literal["field"] = "field"
    radii: list[float]
    alphas: list[float]
    betas: list[float]
    values: Array
    provenance: dict[str, Any] = Field(default_factory=dict)

    @classmethod
    def from_field(cls, conv_field: ConvField) -> FieldDocument:
        lattice = conv_field.lattice
        return cls(
            radii=list(lattice.radii),
            alphas=list(lattice.alphas),
            betas=list(lattice.betas),
            values=Array.of(conv_field.values),
            provenance=conv_field.provenance,
        )

    def to_field(self) -> ConvField:
        lattice = ConvLattice(tuple(self.radii), tuple(self.alphas), tuple(self.betas))
        return ConvField(lattice, self.values.to_numpy(), dict(self.provenance))


class CheckpointDocument(Document):
    kind: Literal["checkpoint"] = "checkpoint"
    n_max: int
    basis: str
    network: NetworkConfig
    classes: list[str]
    blocks: dict[str, Array]

    @model_validator(mode="after")
    def check_blocks(self) -> CheckpointDocument:
        missing = set(BLOCKS) - set(self.blocks)
        if missing:
            raise ValueError(f"checkpoint is missing blocks {sorted(missing)}")
        return self

    @classmethod
    def from_params(
        cls,
        params: NetworkParams,
        basis: str,
        network: NetworkConfig,
        classes: list[str],
    ) -> CheckpointDocument:
        return cls(
            n_max=params.n_max,
            basis=basis,
            network=network,
            classes=classes,
            blocks={name: Array.of(array) for name, array in params.blocks().items()},
        )

    def to_params(self) -> NetworkParams:
        return NetworkParams(
            self.n_max, **{name: self.blocks[name].to_numpy() for name in BLOCKS}
        )


class GalleryEntry(BaseModel):
    id: str
    label: int
    values: list[float]


class GalleryDocument(Document):
    kind: Literal["gallery"] = "gallery"
    dim: int
    classes: list[str] = []
    entries: list[GalleryEntry]

    @classmethod
    def from_gallery(cls, gallery: Gallery, classes: list[str] | None = None) -> GalleryDocument:
        dim = len(gallery.descriptors[0]) if len(gallery) else 0
        return cls(
            dim=dim,
            classes=classes or [],
            entries=[
                GalleryEntry(id=i, label=label, values=d.values.tolist())
                for i, label, d in zip(gallery.ids, gallery.labels, gallery.descriptors)
            ],
        )

    def to_gallery(self) -> Gallery:
        return Gallery(
            [e.id for e in self.entries],
            [e.label for e in self.entries],
            [Descriptor(np.array(e.values), e.id) for e in self.entries],
        )


def save_document(file: Path, document: Document) -> None:
    save_json(file, document.model_dump(mode="json"))


def load_document(file: Path, model: type[Doc]) -> Doc:
    """
    Load and validate a document.

    Raises:
        ConfigError: If the file holds a different kind of document or
            fails validation.
    """
    data = load_json(file)
    expected = model.model_fields["kind"].default
    if data.get("kind") != expected:
        raise ConfigError(f'"{file}" is a {data.get("kind")!r} document, expected {expected!r}')
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f'invalid {expected} document "{file}": {e}') from e
