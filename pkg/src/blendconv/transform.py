"""
Point clouds, the binned ball grid and the spectral moments of a shape.

Moments are unnormalized projections onto Z_nlm = Q_nl Y_lm, realized as a
midpoint sum over the bin lattice. Reconstruction divides by ||Q_nl||^2, so
forward followed by reconstruct is a band-limited projection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cache
from typing import Any, Callable

import numpy as np
from numpy.typing import NDArray

from blendconv.basis import (
    BasisSet,
    MixingCoefficients,
    RadialMode,
    atoms,
    forcing_matrix,
    layout_coefficients,
    synthesize_radials,
)
from blendconv.exceptions import ConfigError, DegenerateCloudError, DomainError
from blendconv.harmonics import harmonic_table

log = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
ComplexArray = NDArray[np.complex128]
Dims = tuple[int, int, int]

NORMALIZED_RADIUS = 0.95


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Points in arbitrary units with one texture value each."""

    points: FloatArray
    texture: FloatArray = field(default_factory=lambda: np.zeros(0))
    label: int | None = None

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(points)):
            raise DomainError("point cloud has non-finite coordinates")
        texture = np.asarray(self.texture, dtype=np.float64).reshape(-1)
        if texture.size == 0:
            texture = np.ones(len(points))
        if len(texture) != len(points):
            raise DomainError(
                f"{len(texture)} texture values for {len(points)} points"
            )
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "texture", texture)

    def __len__(self) -> int:
        return len(self.points)

    def permuted(self, order: NDArray[np.int_]) -> PointCloud:
        return PointCloud(self.points[order], self.texture[order], self.label)


def normalize(cloud: PointCloud) -> PointCloud:
    """
    Center a cloud on its centroid and scale its farthest point to radius 0.95.

    Raises:
        DegenerateCloudError: If the cloud is empty or all points coincide.
    """
    if len(cloud) == 0:
        raise DegenerateCloudError("cannot normalize an empty point cloud")

    centered = cloud.points - cloud.points.mean(axis=0)
    extent = float(np.linalg.norm(centered, axis=1).max())
    if extent <= 1e-12 * max(1.0, float(np.abs(cloud.points).max())):
        raise DegenerateCloudError(
            f"point cloud of {len(cloud)} points has zero extent"
        )
    return PointCloud(centered * (NORMALIZED_RADIUS / extent), cloud.texture, cloud.label)


def _check_dims(dims: Any) -> Dims:
    values = tuple(int(d) for d in dims)
    if len(values) != 3 or min(values) < 1:
        raise ConfigError(f"grid dims must be three positive counts, got {dims}")
    return values  # type: ignore[return-value]


@cache
def _centers(dims: Dims) -> tuple[FloatArray, FloatArray, FloatArray]:
    n_r, n_theta, n_phi = dims
    r = (np.arange(n_r) + 0.5) / n_r
    theta = 2 * np.pi * (np.arange(n_theta) + 0.5) / n_theta
    phi = np.pi * (np.arange(n_phi) + 0.5) / n_phi
    for array in (r, theta, phi):
        array.setflags(write=False)
    return r, theta, phi


def spacing(dims: Dims) -> tuple[float, float, float]:
    n_r, n_theta, n_phi = dims
    return 1.0 / n_r, 2 * np.pi / n_theta, np.pi / n_phi


@dataclass(frozen=True, eq=False)
class BallGrid:
    """Texture values on the (r, theta, phi) bin lattice of the unit ball."""

    dims: Dims
    values: FloatArray
    occupancy: NDArray[np.int64]

    def __post_init__(self) -> None:
        dims = _check_dims(self.dims)
        values = np.asarray(self.values, dtype=np.float64).reshape(dims)
        occupancy = np.asarray(self.occupancy, dtype=np.int64).reshape(dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "occupancy", occupancy)

    @classmethod
    def from_values(cls, values: FloatArray) -> BallGrid:
        """Wrap a dense value array, with no occupancy information."""
        values = np.asarray(values, dtype=np.float64)
        return cls(values.shape, values, np.zeros(values.shape, dtype=np.int64))  # type: ignore[arg-type]

    @classmethod
    def zeros(cls, dims: Dims) -> BallGrid:
        return cls.from_values(np.zeros(_check_dims(dims)))

    @property
    def radii(self) -> FloatArray:
        return _centers(self.dims)[0]

    @property
    def azimuths(self) -> FloatArray:
        return _centers(self.dims)[1]

    @property
    def polars(self) -> FloatArray:
        return _centers(self.dims)[2]

    @property
    def point_count(self) -> int:
        return int(self.occupancy.sum())

    def scaled(self, factor: float) -> BallGrid:
        return BallGrid(self.dims, self.values * factor, self.occupancy)


def sample_function(
    dims: Dims, fn: Callable[[FloatArray, FloatArray, FloatArray], Any]
) -> BallGrid:
    """
    Sample f(r, theta, phi) at every bin center.

    Args:
        dims (Dims): Grid dims.
        fn (Callable): Vectorized function of (r, theta, phi).

    Returns:
        BallGrid: Grid with the real part of the samples.
    """
    r, theta, phi = _centers(_check_dims(dims))
    rr, tt, pp = np.meshgrid(r, theta, phi, indexing="ij")
    values = np.real(np.broadcast_to(fn(rr, tt, pp), rr.shape))
    return BallGrid.from_values(np.array(values, dtype=np.float64))


def bin_point_cloud(cloud: PointCloud, dims: Dims) -> BallGrid:
    """
    Bin a normalized cloud onto the ball lattice.

    Each bin holds the mean texture of its points, empty bins hold 0.

    Raises:
        DomainError: If a point lies on or outside the unit sphere.
    """
    dims = _check_dims(dims)
    n_r, n_theta, n_phi = dims
    points = cloud.points

    radius = np.linalg.norm(points, axis=1)
    outside = np.flatnonzero(radius >= 1.0)
    if outside.size:
        i = int(outside[0])
        raise DomainError(
            f"point {i} at radius {radius[i]:.6f} is outside the unit ball, "
            "normalize the cloud first"
        )

    theta = np.mod(np.arctan2(points[:, 1], points[:, 0]), 2 * np.pi)
    cos_phi = np.divide(
        points[:, 2], radius, out=np.ones_like(radius), where=radius > 0
    )
    phi = np.arccos(np.clip(cos_phi, -1.0, 1.0))

    i_r = np.minimum((radius * n_r).astype(np.int64), n_r - 1)
    i_theta = np.mod((theta / (2 * np.pi) * n_theta).astype(np.int64), n_theta)
    i_phi = np.minimum((phi / np.pi * n_phi).astype(np.int64), n_phi - 1)
    flat = (i_r * n_theta + i_theta) * n_phi + i_phi

    size = n_r * n_theta * n_phi
    occupancy = np.bincount(flat, minlength=size)
    sums = np.bincount(flat, weights=cloud.texture, minlength=size)
    values = np.divide(
        sums, occupancy, out=np.zeros(size), where=occupancy > 0
    )
    return BallGrid(dims, values.reshape(dims), occupancy.reshape(dims))


@dataclass(frozen=True, eq=False)
class SpectralTensor:
    """
    Moments Omega_nlm, stored densely as moments[n, l, m + n_max].

    Entries with l > n or |m| > l are zero.
    """

    n_max: int
    moments: ComplexArray

    def __post_init__(self) -> None:
        shape = (self.n_max + 1, self.n_max + 1, 2 * self.n_max + 1)
        moments = np.asarray(self.moments, dtype=np.complex128)
        if moments.shape != shape:
            raise ConfigError(
                f"moments for n_max={self.n_max} must have shape {shape}, "
                f"got {moments.shape}"
            )
        object.__setattr__(self, "moments", moments)

    @classmethod
    def zeros(cls, n_max: int) -> SpectralTensor:
        return cls(
            n_max, np.zeros((n_max + 1, n_max + 1, 2 * n_max + 1), dtype=np.complex128)
        )

    def __getitem__(self, key: tuple[int, int, int]) -> complex:
        n, l, m = key
        if not 0 <= l <= n <= self.n_max or abs(m) > l:
            raise DomainError(f"invalid moment index {key} for n_max={self.n_max}")
        return complex(self.moments[n, l, m + self.n_max])

    def conjugation_residual(self) -> float:
        """Largest |Omega_{n,l,-m} - (-1)^m conj(Omega_nlm)|."""
        m = np.arange(-self.n_max, self.n_max + 1)
        mirrored = ((-1.0) ** np.abs(m)) * np.conj(self.moments[:, :, ::-1])
        return float(np.abs(self.moments - mirrored).max(initial=0.0))

    def rotated_about_pole(self, delta_theta: float) -> SpectralTensor:
        """Moments of the shape rotated by delta_theta about +z."""
        m = np.arange(-self.n_max, self.n_max + 1)
        return SpectralTensor(self.n_max, self.moments * np.exp(-1j * m * delta_theta))

    def __add__(self, other: SpectralTensor) -> SpectralTensor:
        return SpectralTensor(self.n_max, self.moments + other.moments)

    def __mul__(self, factor: float) -> SpectralTensor:
        return SpectralTensor(self.n_max, self.moments * factor)

    __rmul__ = __mul__


@cache
def angular_projector(dims: Dims, l_max: int) -> ComplexArray:
    """conj(Y_lm) sin(phi) dtheta dphi at every angular bin center, (L, M, Ntheta, Nphi)."""
    _, theta, phi = _centers(dims)
    _, d_theta, d_phi = spacing(dims)
    table = np.conj(harmonic_table(l_max, theta, phi))
    table *= (np.sin(phi) * d_theta * d_phi)[None, None, None, :]
    table.setflags(write=False)
    return table


@cache
def _synthesis_table(dims: Dims, l_max: int) -> ComplexArray:
    _, theta, phi = _centers(dims)
    table = harmonic_table(l_max, theta, phi)
    table.setflags(write=False)
    return table


def radial_projector(dims: Dims, n_max: int, mode: RadialMode) -> FloatArray:
    """atom_j(r_i) r_i^2 dr at every radial bin center, (Nr, J)."""
    r, _, _ = _centers(dims)
    d_r = spacing(dims)[0]
    return atoms(r, mode, n_max + 1) * (r**2 * d_r)[:, None]


def projection_operator(grid: BallGrid, n_max: int, mode: RadialMode) -> ComplexArray:
    """
    Moments of the grid against every atom times every harmonic.

    Any radial family with atom coefficients q[n, l, j] has moments
    sum_j q[n, l, j] B[j, l, m], so this is computed once per grid and reused
    for every choice of mixing weights.

    Returns:
        ComplexArray: B[j, l, m + n_max].
    """
    angular = angular_projector(grid.dims, n_max)
    radial = radial_projector(grid.dims, n_max, mode)
    harmonics = np.einsum("ijk,lmjk->ilm", grid.values, angular)
    return np.einsum("ij,ilm->jlm", radial, harmonics)


def project_coefficients(
    coeffs: FloatArray, operator: ComplexArray, n_max: int
) -> SpectralTensor:
    """Contract flat radial coefficients with a projection operator."""
    layout = layout_coefficients(coeffs, n_max)
    return SpectralTensor(n_max, np.einsum("nlj,jlm->nlm", layout, operator))


def forward_moments(
    grid: BallGrid, basis: BasisSet, l_max: int | None = None
) -> SpectralTensor:
    """
    Spectral moments of a grid against the orthogonal basis.

    Args:
        grid (BallGrid): Input function.
        basis (BasisSet): Radial basis.
        l_max (int | None): Optional cap on the degree.

    Returns:
        SpectralTensor: Moments with band limit `basis.n_max`.
    """
    operator = projection_operator(grid, basis.n_max, basis.mode)
    tensor = project_coefficients(basis.coeffs, operator, basis.n_max)
    if l_max is not None and l_max < basis.n_max:
        moments = tensor.moments.copy()
        moments[:, max(l_max + 1, 0) :, :] = 0
        tensor = SpectralTensor(basis.n_max, moments)
    return tensor


def latent_project(
    grid: BallGrid,
    weights: MixingCoefficients,
    mode: RadialMode = RadialMode.EXPONENTIAL,
) -> SpectralTensor:
    """
    Moments against radials synthesized from arbitrary mixing weights.

    With the analytic coefficients this is exactly `forward_moments`; with
    zero weights the radials are the plain base functions.
    """
    coeffs = synthesize_radials(weights, forcing_matrix(weights.n_max, mode))
    operator = projection_operator(grid, weights.n_max, mode)
    return project_coefficients(coeffs, operator, weights.n_max)


def check_band_limit(tensor: SpectralTensor, basis: BasisSet) -> None:
    if tensor.n_max > basis.n_max:
        raise ConfigError(
            f"tensor band limit {tensor.n_max} exceeds basis band limit {basis.n_max}"
        )
    if tensor.n_max < basis.n_max:
        log.debug(
            f"using the first {tensor.n_max + 1} radial levels of a "
            f"n_max={basis.n_max} basis"
        )


def reconstruct(tensor: SpectralTensor, basis: BasisSet, dims: Dims) -> BallGrid:
    """
    Synthesize grid values Re sum Omega_nlm Z_nlm / ||Q_nl||^2 at bin centers.

    Raises:
        ConfigError: If the tensor band limit exceeds the basis band limit.
    """
    check_band_limit(tensor, basis)
    dims = _check_dims(dims)
    n = tensor.n_max
    r, _, _ = _centers(dims)

    radial = layout_coefficients(basis.coeffs, basis.n_max)[: n + 1, : n + 1]
    values_r = np.einsum("ij,nlj->inl", atoms(r, basis.mode, basis.size), radial)
    scaled = tensor.moments * basis.inverse_norms()[: n + 1, : n + 1, None]
    per_radius = np.einsum("inl,nlm->ilm", values_r, scaled)
    values = np.einsum("ilm,lmjk->ijk", per_radius, _synthesis_table(dims, n)).real
    return BallGrid.from_values(values)


def relative_error(reference: BallGrid, approximation: BallGrid) -> float:
    """Volume-weighted relative L2 difference between two grids."""
    if reference.dims != approximation.dims:
        raise ConfigError(f"grid dims differ: {reference.dims} vs {approximation.dims}")
    r, _, phi = _centers(reference.dims)
    weight = (r**2)[:, None, None] * np.sin(phi)[None, None, :]
    diff = np.sum(weight * (reference.values - approximation.values) ** 2)
    norm = np.sum(weight * reference.values**2)
    return float(np.sqrt(diff / norm)) if norm > 0 else float(np.sqrt(diff))
