"""
Blended convolution of a shape with zonal kernels that rotate and translate.

Every translation mode shares one spectral contraction,

    value(s, alpha, beta) = Re sum_{l,m,n,n'} K[s, l, n, n'] G[n', l]
                            Omega[n, l, m] Y_lm(alpha, beta),

and differs only in the radial kernel table K.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Any, Iterator

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import RegularGridInterpolator

from blendconv.basis import BasisSet, RadialMode, truncated_overlaps
from blendconv.exceptions import (
    ConfigError,
    DomainError,
    NonFiniteError,
    SymmetryViolationError,
    UnsupportedModeError,
)
from blendconv.harmonics import ZonalRotation, direction, harmonic_table, rotate_zonal
from blendconv.transform import (
    BallGrid,
    Dims,
    SpectralTensor,
    forward_moments,
    sample_function,
    spacing,
)

log = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
ComplexArray = NDArray[np.complex128]

ZONAL_TOLERANCE = 1e-9


class TranslationMode(str, Enum):
    """How the kernel's radial translation enters the contraction."""

    THEOREM = "theorem"
    EXACT = "exact"
    ROTATION = "rotation"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, eq=False)
class KernelSpectrum:
    """Moments Omega_{n',l,0} of a zonal kernel, stored as moments[n', l]."""

    n_max: int
    moments: FloatArray
    off_axis_residual: float = 0.0

    def __post_init__(self) -> None:
        moments = np.asarray(self.moments, dtype=np.float64)
        if moments.shape != (self.n_max + 1, self.n_max + 1):
            raise ConfigError(
                f"kernel spectrum for n_max={self.n_max} must be "
                f"{self.n_max + 1}x{self.n_max + 1}, got {moments.shape}"
            )
        object.__setattr__(self, "moments", moments)

    @classmethod
    def zeros(cls, n_max: int) -> KernelSpectrum:
        return cls(n_max, np.zeros((n_max + 1, n_max + 1)))


@dataclass(frozen=True)
class ConvQuery:
    r_prime: float
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not 0 <= self.r_prime < 1:
            raise DomainError(f"translation must lie in [0, 1), got {self.r_prime}")
        if not 0 <= self.alpha < 2 * math.pi or not 0 <= self.beta <= math.pi:
            raise DomainError(
                f"query angles out of range: alpha={self.alpha}, beta={self.beta}"
            )


@dataclass(frozen=True, eq=False)
class ConvLattice:
    """Tensor lattice of queries: translations x azimuths x polar angles."""

    radii: tuple[float, ...]
    alphas: tuple[float, ...]
    betas: tuple[float, ...]

    def __post_init__(self) -> None:
        for name in ("radii", "alphas", "betas"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        for r in self.radii:
            ConvQuery(r, 0.0, 0.0)
        for a in self.alphas:
            ConvQuery(0.0, a, 0.0)
        for b in self.betas:
            ConvQuery(0.0, 0.0, b)

    @classmethod
    def from_dims(cls, dims: Dims) -> ConvLattice:
        """Bin centers of a ball grid, read as (r', alpha, beta)."""
        n_r, n_a, n_b = dims
        if min(dims) < 1:
            raise ConfigError(f"lattice dims must be positive, got {dims}")
        return cls(
            radii=tuple((np.arange(n_r) + 0.5) / n_r),
            alphas=tuple(2 * np.pi * (np.arange(n_a) + 0.5) / n_a),
            betas=tuple(np.pi * (np.arange(n_b) + 0.5) / n_b),
        )

    @classmethod
    def angular(cls, n_alpha: int, n_beta: int, r_prime: float = 0.0) -> ConvLattice:
        grid = cls.from_dims((1, n_alpha, n_beta))
        return cls((r_prime,), grid.alphas, grid.betas)

    @property
    def dims(self) -> Dims:
        return len(self.radii), len(self.alphas), len(self.betas)

    @property
    def size(self) -> int:
        return len(self.radii) * len(self.alphas) * len(self.betas)

    def __iter__(self) -> Iterator[ConvQuery]:
        for r in self.radii:
            for a in self.alphas:
                for b in self.betas:
                    yield ConvQuery(r, a, b)

    def to_dict(self) -> dict[str, Any]:
        return {
            "radii": list(self.radii),
            "alphas": list(self.alphas),
            "betas": list(self.betas),
        }


@dataclass(frozen=True, eq=False)
class ConvField:
    """Convolution values over a query lattice."""

    lattice: ConvLattice
    values: FloatArray
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.lattice.dims:
            raise ConfigError(
                f"field shape {values.shape} does not match lattice {self.lattice.dims}"
            )
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("convolution field has non-finite values")
        object.__setattr__(self, "values", values)

    def argmax(self) -> tuple[int, int, int]:
        index = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return int(index[0]), int(index[1]), int(index[2])


def is_zonal(grid: BallGrid) -> float:
    """Largest spread of a grid's values along the azimuth."""
    if grid.values.size == 0:
        return 0.0
    return float((grid.values.max(axis=1) - grid.values.min(axis=1)).max())


def _require_zonal(grid: BallGrid) -> None:
    variation = is_zonal(grid)
    if variation > ZONAL_TOLERANCE:
        raise SymmetryViolationError(variation)


def kernel_spectrum(kernel_grid: BallGrid, basis: BasisSet) -> KernelSpectrum:
    """
    The m = 0 moments of a kernel that is symmetric around the north pole.

    Raises:
        SymmetryViolationError: If the kernel varies with the azimuth.
    """
    _require_zonal(kernel_grid)
    moments = forward_moments(kernel_grid, basis).moments
    center = basis.n_max
    off_axis = np.delete(moments, center, axis=2)
    residual = float(np.abs(off_axis).max(initial=0.0))
    log.debug(f"kernel off-axis moment residual {residual:.3e}")
    return KernelSpectrum(basis.n_max, moments[:, :, center].real.copy(), residual)


def _require_exponential(basis: BasisSet) -> None:
    if basis.mode is not RadialMode.EXPONENTIAL:
        raise UnsupportedModeError(
            f"blended convolution needs an exponential-mode basis, got {basis.mode}"
        )


@lru_cache(maxsize=16)
def kernel_table(
    basis: BasisSet, radii: tuple[float, ...], translation: TranslationMode
) -> FloatArray:
    """
    Radial kernel table K[s, l, n, n'] for every translation in `radii`.

    Raises:
        UnsupportedModeError: If the basis is not in exponential mode.
    """
    _require_exponential(basis)
    size = basis.size
    n = np.arange(size)[:, None, None]
    n_prime = np.arange(size)[None, :, None]
    l = np.arange(size)[None, None, :]
    inverse = basis.inverse_norms()

    tables = []
    for s in radii:
        if translation is TranslationMode.THEOREM:
            factor = np.exp((n - l) * s) - np.exp((n_prime - l) * s)
            table = 4 * np.pi / 3 * basis.gram * factor
        elif translation is TranslationMode.EXACT:
            scale = np.sqrt(4 * np.pi / (2 * np.arange(size) + 1))
            table = (
                truncated_overlaps(basis, s)
                * inverse[:, None, :]
                * inverse[None, :, :]
                * scale[None, None, :]
            )
        else:
            table = 4 * np.pi / 3 * np.eye(size)[:, :, None] * inverse[:, None, :]
        tables.append(np.transpose(table, (2, 0, 1)))

    out = np.array(tables).reshape(len(radii), size, size, size)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=16)
def lattice_harmonics(n_max: int, lattice: ConvLattice) -> ComplexArray:
    """Y_lm at every lattice direction, shape (L, M, A, B)."""
    table = harmonic_table(n_max, lattice.alphas, lattice.betas)
    table.setflags(write=False)
    return table


def contract(
    kernel: FloatArray, spectrum: FloatArray, moments: ComplexArray, harmonics: ComplexArray
) -> FloatArray:
    """
    The shared spectral contraction.

    Args:
        kernel (FloatArray): K[s, l, n, n'].
        spectrum (FloatArray): G[n', l].
        moments (ComplexArray): Omega[n, l, m].
        harmonics (ComplexArray): Y[l, m, a, b].

    Returns:
        FloatArray: values[s, a, b].
    """
    mixed = np.einsum("slnp,pl->sln", kernel, spectrum)
    weighted = np.einsum("sln,nlm->slm", mixed, moments)
    return np.einsum("slm,lmab->sab", weighted, harmonics).real


def _check_band_limits(
    f_tensor: SpectralTensor, g_spec: KernelSpectrum, basis: BasisSet
) -> None:
    if f_tensor.n_max != g_spec.n_max:
        raise ConfigError(
            f"shape band limit {f_tensor.n_max} does not match kernel band limit "
            f"{g_spec.n_max}"
        )
    if f_tensor.n_max > basis.n_max:
        raise ConfigError(
            f"band limit {f_tensor.n_max} exceeds basis band limit {basis.n_max}"
        )


@lru_cache(maxsize=32)
def pose_rotations(
    alphas: tuple[float, ...], betas: tuple[float, ...]
) -> tuple[ZonalRotation, ...]:
    """Degree-one zonal rotation of every (alpha, beta) pose, alpha-major."""
    return tuple(rotate_zonal(1, a, b) for a in alphas for b in betas)


def _provenance(
    basis: BasisSet, n_max: int, lattice: ConvLattice, translation: TranslationMode
) -> dict[str, Any]:
    return {
        "basis": basis.digest,
        "n_max": n_max,
        "mode": str(basis.mode),
        "translation": str(translation),
        "poses": [pose.to_dict() for pose in pose_rotations(lattice.alphas, lattice.betas)],
    }


def blended_conv(
    f_tensor: SpectralTensor,
    g_spec: KernelSpectrum,
    basis: BasisSet,
    lattice: ConvLattice,
    translation: TranslationMode = TranslationMode.THEOREM,
) -> ConvField:
    """
    Convolve a shape with a zonal kernel over a lattice of poses.

    Args:
        f_tensor (SpectralTensor): Shape moments.
        g_spec (KernelSpectrum): Kernel moments.
        basis (BasisSet): Exponential-mode basis the moments were taken in.
        lattice (ConvLattice): Query lattice.
        translation (TranslationMode): Radial kernel table. Defaults to theorem.

    Returns:
        ConvField: Values over the lattice.
    """
    _require_exponential(basis)
    _check_band_limits(f_tensor, g_spec, basis)
    n = f_tensor.n_max

    kernel = kernel_table(basis, lattice.radii, translation)[:, : n + 1, : n + 1, : n + 1]
    values = contract(
        kernel, g_spec.moments, f_tensor.moments, lattice_harmonics(n, lattice)
    )
    return ConvField(lattice, values, _provenance(basis, n, lattice, translation))


def rotation_only_conv(
    f_tensor: SpectralTensor,
    g_spec: KernelSpectrum,
    basis: BasisSet,
    lattice: ConvLattice,
) -> ConvField:
    """Rotation-only ablation: the diagonal n = n' contraction, no translation."""
    angular = ConvLattice((0.0,), lattice.alphas, lattice.betas)
    return blended_conv(f_tensor, g_spec, basis, angular, TranslationMode.ROTATION)


def _clamped_profile(grid: BallGrid) -> RegularGridInterpolator:
    r, phi = grid.radii, grid.polars
    profile = grid.values[:, 0, :]
    r_nodes = np.concatenate([[0.0], r, [1.0]])
    phi_nodes = np.concatenate([[0.0], phi, [np.pi]])
    padded = np.pad(profile, 1, mode="edge")
    return RegularGridInterpolator((r_nodes, phi_nodes), padded, method="linear")


def spatial_conv_oracle(f_grid: BallGrid, g_grid: BallGrid, query: ConvQuery) -> float:
    """
    Evaluate the convolution integral directly on the shape's bin lattice.

    The kernel is rotated so its pole points at (alpha, beta), translated
    radially so that it is sampled at r + r', and is zero where r + r' >= 1.
    It is read off its own lattice by linear interpolation in (r, phi).

    Raises:
        SymmetryViolationError: If the kernel grid is not zonal.
    """
    _require_zonal(g_grid)
    return float(_oracle_values(f_grid, _clamped_profile(g_grid), [query])[0])


def _oracle_values(
    f_grid: BallGrid, profile: RegularGridInterpolator, queries: list[ConvQuery]
) -> FloatArray:
    r, theta, phi = f_grid.radii, f_grid.azimuths, f_grid.polars
    d_r, d_theta, d_phi = spacing(f_grid.dims)
    points = direction(theta[:, None], phi[None, :])
    measure = (
        f_grid.values
        * (r**2 * d_r)[:, None, None]
        * (np.sin(phi) * d_theta * d_phi)[None, None, :]
    )

    out = np.zeros(len(queries))
    for q, query in enumerate(queries):
        pole = direction(query.alpha, query.beta)
        gamma = np.arccos(np.clip(points @ pole, -1.0, 1.0))
        shifted = r + query.r_prime
        inside = shifted < 1.0
        rr = np.broadcast_to(np.minimum(shifted, 1.0)[:, None, None], f_grid.dims)
        gg = np.broadcast_to(gamma[None, :, :], f_grid.dims)
        samples = profile(np.stack([rr, gg], axis=-1)) * inside[:, None, None]
        out[q] = float(np.sum(measure * samples))
    return out


def oracle_field(f_grid: BallGrid, g_grid: BallGrid, lattice: ConvLattice) -> ConvField:
    """`spatial_conv_oracle` over every query of a lattice."""
    _require_zonal(g_grid)
    values = _oracle_values(f_grid, _clamped_profile(g_grid), list(lattice))
    return ConvField(lattice, values.reshape(lattice.dims), {"oracle": True})


def gaussian_cap_kernel(
    dims: Dims, kappa_phi: float, kappa_r: float, r0: float
) -> BallGrid:
    """Zonal kernel exp(-kappa_phi phi^2) exp(-kappa_r (r - r0)^2)."""
    return sample_function(
        dims,
        lambda r, _theta, phi: np.exp(-kappa_phi * phi**2) * np.exp(-kappa_r * (r - r0) ** 2),
    )


@dataclass(frozen=True)
class FlopCount:
    multiplies: int = 0
    adds: int = 0
    transcendentals: int = 0

    @property
    def total(self) -> int:
        return self.multiplies + self.adds + self.transcendentals

    def __add__(self, other: FlopCount) -> FlopCount:
        return FlopCount(
            self.multiplies + other.multiplies,
            self.adds + other.adds,
            self.transcendentals + other.transcendentals,
        )

    def scaled(self, factor: int) -> FlopCount:
        return FlopCount(
            self.multiplies * factor, self.adds * factor, self.transcendentals * factor
        )


def radial_levels(n_max: int, l: int) -> int:
    """Number of radials of degree l that are not identically zero."""
    return max(n_max - l + 1 - (1 if l == 0 else 0), 0)


def query_flops(n_max: int) -> FlopCount:
    """
    Cost of one query of the theorem-mode contraction.

    Per degree l with P nonzero radials: the kernel mixing costs one
    subtraction, two products and one accumulation per off-diagonal (n, n')
    pair; the complex moment sum two products and two accumulations per
    (n, m); the final real part two products and two additions per m.
    Exponentials e^{js} for j = 1..n_max and every Y_lm are the
    transcendental evaluations.
    """
    if n_max < 0:
        raise DomainError(f"band limit must be >= 0, got {n_max}")
    count = FlopCount()
    for l in range(n_max + 1):
        p = radial_levels(n_max, l)
        if p == 0:
            continue
        orders = 2 * l + 1
        work = 2 * p * (p - 1) + 2 * p * orders + 2 * orders
        count = count + FlopCount(work, work, orders)
    if count.total:
        count = count + FlopCount(0, 0, n_max)
    return count


def flop_count(n_max: int, lattice_dims: Dims) -> FlopCount:
    """Closed-form operation count of one blended convolution over a lattice."""
    if min(lattice_dims) < 0:
        raise DomainError(f"lattice dims must be >= 0, got {lattice_dims}")
    queries = int(np.prod(lattice_dims))
    return query_flops(n_max).scaled(queries)
