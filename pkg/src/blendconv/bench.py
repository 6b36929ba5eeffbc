"""Operation counts and wall time of the blended convolution over a sweep."""

from __future__ import annotations

import logging
from dataclasses import astuple, dataclass, fields

import numpy as np

from blendconv.basis import BasisSet, orthogonalize
from blendconv.config import BenchConfig, KernelConfig
from blendconv.convolution import (
    ConvField,
    ConvLattice,
    TranslationMode,
    blended_conv,
    flop_count,
    gaussian_cap_kernel,
    kernel_spectrum,
    oracle_field,
)
from blendconv.datasets import sample_shape
from blendconv.transform import (
    Dims,
    bin_point_cloud,
    forward_moments,
    normalize,
    reconstruct,
)
from blendconv.utils import Timer

log = logging.getLogger(__name__)

ORACLE_ANGLES = (8, 8)


@dataclass(frozen=True)
class BenchRow:
    n_max: int
    lattice: str
    points: int
    multiplies: int
    adds: int
    transcendentals: int
    per_query_flops: int
    wall_ns: int

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class OracleRow:
    n_max: int
    r_prime: float
    theorem_error: float
    exact_error: float

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _lattice_name(dims: Dims) -> str:
    return "x".join(str(d) for d in dims)


def field_error(field: ConvField, reference: ConvField) -> float:
    """Relative L2 difference of two fields over the same lattice."""
    norm = float(np.linalg.norm(reference.values))
    diff = float(np.linalg.norm(field.values - reference.values))
    return diff / norm if norm > 0 else diff


def run_sweep(
    config: BenchConfig,
    kernel: KernelConfig,
    grid_dims: Dims,
    seed: int,
) -> list[BenchRow]:
    """
    Time the theorem-mode convolution for every (n_max, lattice, points).

    The shape is binned before the clock starts, so the timed work depends
    only on the band limit and the lattice.
    """
    rng = np.random.default_rng(seed)
    kernel_grid = gaussian_cap_kernel(grid_dims, kernel.kappa_phi, kernel.kappa_r, kernel.r0)
    rows = []

    for n_max in config.n_max_values:
        basis = orthogonalize(n_max)
        g_spec = kernel_spectrum(kernel_grid, basis)
        for points in config.point_counts:
            cloud = normalize(sample_shape("sphere-shell", rng, points, 0.01))
            tensor = forward_moments(bin_point_cloud(cloud, grid_dims), basis)
            for dims in config.lattices:
                lattice = ConvLattice.from_dims(dims)
                blended_conv(tensor, g_spec, basis, lattice)
                best = None
                for _ in range(config.repeats):
                    timer = Timer()
                    blended_conv(tensor, g_spec, basis, lattice)
                    elapsed = timer.elapsed_ns
                    best = elapsed if best is None else min(best, elapsed)

                count = flop_count(n_max, lattice.dims)
                per_query = count.total // max(lattice.size, 1)
                rows.append(
                    BenchRow(
                        n_max,
                        _lattice_name(lattice.dims),
                        points,
                        count.multiplies,
                        count.adds,
                        count.transcendentals,
                        per_query,
                        int(best or 0),
                    )
                )
                log.debug(f"n_max={n_max} lattice={_lattice_name(dims)} points={points}: {best} ns")
    return rows


def oracle_errors(
    basis: BasisSet,
    config: BenchConfig,
    kernel: KernelConfig,
    seed: int,
) -> list[OracleRow]:
    """Theorem and exact fields against the direct spatial integral."""
    rng = np.random.default_rng(seed)
    dims = config.oracle_dims
    cloud = normalize(sample_shape("torus", rng, 4096, 0.01))
    f_tensor = forward_moments(bin_point_cloud(cloud, dims), basis)
    f_grid = reconstruct(f_tensor, basis, dims)
    g_grid = gaussian_cap_kernel(dims, kernel.kappa_phi, kernel.kappa_r, kernel.r0)
    g_spec = kernel_spectrum(g_grid, basis)

    rows = []
    for shift in config.oracle_shifts:
        lattice = ConvLattice.angular(*ORACLE_ANGLES, r_prime=shift)
        reference = oracle_field(f_grid, g_grid, lattice)
        errors = [
            field_error(blended_conv(f_tensor, g_spec, basis, lattice, mode), reference)
            for mode in (TranslationMode.THEOREM, TranslationMode.EXACT)
        ]
        rows.append(OracleRow(basis.n_max, shift, *errors))
    return rows


def as_rows(items: list[BenchRow] | list[OracleRow]) -> list[tuple[object, ...]]:
    return [astuple(item) for item in items]
