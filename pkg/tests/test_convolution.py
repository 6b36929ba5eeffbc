import math

import numpy as np
import pytest

from blendconv.basis import BasisSet, RadialMode, orthogonalize
from blendconv.convolution import (
    ConvLattice,
    ConvQuery,
    KernelSpectrum,
    TranslationMode,
    blended_conv,
    flop_count,
    gaussian_cap_kernel,
    is_zonal,
    kernel_spectrum,
    kernel_table,
    oracle_field,
    pose_rotations,
    query_flops,
    rotation_only_conv,
    spatial_conv_oracle,
)
from blendconv.datasets import sample_shape
from blendconv.exceptions import (
    ConfigError,
    DomainError,
    SymmetryViolationError,
    UnsupportedModeError,
)
from blendconv.harmonics import sph_harm
from blendconv.transform import (
    BallGrid,
    PointCloud,
    SpectralTensor,
    bin_point_cloud,
    forward_moments,
    normalize,
    reconstruct,
    sample_function,
)
from tests.oracles import OpCounter, counted_query, rotate_about_z

DIMS = (25, 36, 18)


def cloud_tensor(basis: BasisSet, name: str = "torus", seed: int = 2) -> SpectralTensor:
    cloud = normalize(sample_shape(name, np.random.default_rng(seed), 4096))
    return forward_moments(bin_point_cloud(cloud, DIMS), basis)


def cap_spectrum(basis: BasisSet, dims: tuple[int, int, int] = DIMS) -> KernelSpectrum:
    return kernel_spectrum(gaussian_cap_kernel(dims, 1.0, 8.0, 0.5), basis)


def band_limited_kernel(basis: BasisSet, dims: tuple[int, int, int]) -> BallGrid:
    """A zonal kernel that lies in the span of the basis."""
    moments = np.zeros((basis.size, basis.size, 2 * basis.n_max + 1), dtype=complex)
    moments[:, :, basis.n_max] = cap_spectrum(basis, dims).moments
    return reconstruct(SpectralTensor(basis.n_max, moments), basis, dims)


def random_tensor(basis: BasisSet, seed: int) -> SpectralTensor:
    rng = np.random.default_rng(seed)
    n_max = basis.n_max
    moments = np.zeros((n_max + 1, n_max + 1, 2 * n_max + 1), dtype=complex)
    for n in range(1, n_max + 1):
        for l in range(n + 1):
            for m in range(-l, l + 1):
                value = complex(rng.normal(), rng.normal())
                moments[n, l, m + n_max] = value * math.sqrt(basis.norm(n, l))
    return SpectralTensor(n_max, moments)


def test_gaussian_cap_is_zonal() -> None:
    assert is_zonal(gaussian_cap_kernel(DIMS, 1.0, 8.0, 0.5)) == 0.0


def test_zero_kernel_spectrum(basis3: BasisSet) -> None:
    spectrum = kernel_spectrum(BallGrid.zeros(DIMS), basis3)
    assert not spectrum.moments.any()
    assert spectrum.off_axis_residual == 0.0


def test_single_element_kernel_spectrum(basis2: BasisSet) -> None:
    radial = basis2.radial(2, 1)
    grid = sample_function(DIMS, lambda r, t, p: radial(r) * sph_harm((1, 0), t, p).real)
    spectrum = kernel_spectrum(grid, basis2)
    norm = basis2.norm(2, 1)
    assert spectrum.moments[2, 1] == pytest.approx(norm, rel=3e-2)
    others = spectrum.moments.copy()
    others[2, 1] = 0
    assert np.abs(others).max() < 1e-2 * norm


def test_non_zonal_kernel(basis2: BasisSet) -> None:
    grid = sample_function(DIMS, lambda r, t, p: r * np.cos(t) * np.sin(p))
    with pytest.raises(SymmetryViolationError) as info:
        kernel_spectrum(grid, basis2)
    assert info.value.variation > 0.1


def test_zero_kernel_gives_zero_field(basis3: BasisSet) -> None:
    field = blended_conv(
        cloud_tensor(basis3), KernelSpectrum.zeros(3), basis3, ConvLattice.from_dims((4, 4, 4))
    )
    assert field.values.shape == (4, 4, 4)
    assert not field.values.any()


def test_no_translation_gives_zero_field(basis3: BasisSet) -> None:
    field = blended_conv(
        cloud_tensor(basis3), cap_spectrum(basis3), basis3, ConvLattice.angular(6, 6, 0.0)
    )
    assert not field.values.any()


def test_truncated_sum_basis_is_rejected() -> None:
    basis = orthogonalize(2, RadialMode.TRUNCATED_SUM)
    with pytest.raises(UnsupportedModeError):
        blended_conv(
            SpectralTensor.zeros(2), KernelSpectrum.zeros(2), basis, ConvLattice.angular(2, 2)
        )


def test_band_limit_mismatch(basis3: BasisSet) -> None:
    with pytest.raises(ConfigError):
        blended_conv(
            SpectralTensor.zeros(3), KernelSpectrum.zeros(2), basis3, ConvLattice.angular(2, 2)
        )


def test_query_domain() -> None:
    with pytest.raises(DomainError):
        ConvQuery(1.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        ConvQuery(0.5, -0.1, 0.0)
    with pytest.raises(DomainError):
        ConvLattice((0.1,), (0.0,), (4.0,))


def test_bilinear(basis3: BasisSet) -> None:
    lattice = ConvLattice.from_dims((3, 4, 4))
    f1 = cloud_tensor(basis3, "torus")
    f2 = cloud_tensor(basis3, "cube-surface")
    g = cap_spectrum(basis3)
    combined = blended_conv(f1 * 2.0 + f2 * -1.5, g, basis3, lattice).values
    expected = (
        2.0 * blended_conv(f1, g, basis3, lattice).values
        - 1.5 * blended_conv(f2, g, basis3, lattice).values
    )
    np.testing.assert_allclose(combined, expected, rtol=1e-10, atol=1e-12)

    g2 = KernelSpectrum(3, 3.0 * g.moments)
    np.testing.assert_allclose(
        blended_conv(f1, g2, basis3, lattice).values,
        3.0 * blended_conv(f1, g, basis3, lattice).values,
        rtol=1e-12,
        atol=1e-14,
    )


def test_rotation_about_pole_shifts_field(basis3: BasisSet) -> None:
    lattice = ConvLattice.angular(8, 6, 0.2)
    tensor = cloud_tensor(basis3, "cube-surface")
    g = cap_spectrum(basis3)
    field = blended_conv(tensor, g, basis3, lattice).values
    rotated = blended_conv(tensor.rotated_about_pole(np.pi / 4), g, basis3, lattice).values
    scale = np.abs(field).max()
    np.testing.assert_allclose(rotated, np.roll(field, 1, axis=1), atol=1e-10 * scale)

    _, a, b = np.unravel_index(np.argmax(field), field.shape)
    _, ra, rb = np.unravel_index(np.argmax(rotated), rotated.shape)
    assert (ra, rb) == ((a + 1) % 8, b)


def test_rotating_the_cloud_shifts_the_peak(basis3: BasisSet) -> None:
    rng = np.random.default_rng(6)
    cube = sample_shape("cube-surface", rng, 10_000).points
    blob = rng.normal((1.1, 0.4, 0.5), 0.08, size=(3000, 3))
    points = np.concatenate([cube, blob])
    lattice = ConvLattice.angular(8, 6, 0.2)
    g = cap_spectrum(basis3)

    def peak(cloud: np.ndarray) -> tuple[int, int, int]:
        grid = bin_point_cloud(normalize(PointCloud(cloud)), DIMS)
        return blended_conv(forward_moments(grid, basis3), g, basis3, lattice).argmax()

    _, a, b = peak(points)
    _, ra, rb = peak(rotate_about_z(points, np.pi / 4))
    shift = (ra - (a + 1)) % 8
    assert min(shift, 8 - shift) <= 2
    assert abs(rb - b) <= 2


def test_rotation_only_self_match_peaks_at_pole(basis3: BasisSet) -> None:
    kernel = gaussian_cap_kernel(DIMS, 1.0, 8.0, 0.5)
    g = kernel_spectrum(kernel, basis3)
    field = rotation_only_conv(forward_moments(kernel, basis3), g, basis3, ConvLattice.angular(4, 16))
    assert field.values.shape == (1, 4, 16)
    assert field.argmax()[2] == 0


def test_provenance(basis3: BasisSet) -> None:
    lattice = ConvLattice.angular(2, 3, 0.1)
    field = blended_conv(SpectralTensor.zeros(3), KernelSpectrum.zeros(3), basis3, lattice)
    assert field.provenance["basis"] == basis3.digest
    assert field.provenance["translation"] == "theorem"
    assert len(field.provenance["poses"]) == 6

    again = blended_conv(SpectralTensor.zeros(3), KernelSpectrum.zeros(3), basis3, lattice)
    assert again.provenance["poses"] == field.provenance["poses"]
    assert again.provenance["poses"] is not field.provenance["poses"]
    assert pose_rotations(lattice.alphas, lattice.betas) is pose_rotations(
        lattice.alphas, lattice.betas
    )


def test_kernel_tables_are_evicted(basis3: BasisSet) -> None:
    assert kernel_table.cache_info().maxsize is not None
    kernel_table(basis3, (0.1,), TranslationMode.THEOREM)
    assert kernel_table.cache_info().currsize <= kernel_table.cache_info().maxsize


def test_oracle_at_identity_is_inner_product() -> None:
    dims = (12, 16, 10)
    rng = np.random.default_rng(0)
    f_grid = BallGrid.from_values(rng.normal(size=dims))
    g_grid = gaussian_cap_kernel(dims, 1.0, 8.0, 0.5)

    r, phi = f_grid.radii, f_grid.polars
    volume = (1 / dims[0]) * (2 * np.pi / dims[1]) * (np.pi / dims[2])
    weight = (r**2)[:, None, None] * np.sin(phi)[None, None, :] * volume
    expected = float(np.sum(f_grid.values * g_grid.values * weight))

    value = spatial_conv_oracle(f_grid, g_grid, ConvQuery(0.0, 0.0, 0.0))
    assert value == pytest.approx(expected, rel=1e-9)


def test_oracle_zero_kernel() -> None:
    f_grid = BallGrid.from_values(np.ones(DIMS))
    assert spatial_conv_oracle(f_grid, BallGrid.zeros(DIMS), ConvQuery(0.3, 1.0, 1.0)) == 0.0


def _oracle_error(basis: BasisSet, dims: tuple[int, int, int], r_prime: float) -> float:
    f_grid = reconstruct(random_tensor(basis, 11), basis, dims)
    g_grid = band_limited_kernel(basis, dims)
    lattice = ConvLattice.angular(4, 4, r_prime)

    spectral = blended_conv(
        random_tensor(basis, 11), kernel_spectrum(g_grid, basis), basis, lattice,
        TranslationMode.EXACT,
    ).values
    direct = oracle_field(f_grid, g_grid, lattice).values
    return float(np.linalg.norm(spectral - direct) / np.linalg.norm(direct))


@pytest.mark.parametrize("r_prime", [0.1, 0.2, 0.3])
def test_exact_translation_matches_spatial_oracle(basis3: BasisSet, r_prime: float) -> None:
    coarse = _oracle_error(basis3, (40, 24, 36), r_prime)
    fine = _oracle_error(basis3, (80, 48, 72), r_prime)
    assert coarse < 0.1
    assert fine < coarse


def test_flop_count_examples() -> None:
    assert flop_count(0, (8, 8, 8)).multiplies == 0
    assert flop_count(0, (8, 8, 8)).total == 0
    single = flop_count(3, (1, 1, 1))
    assert flop_count(3, (2, 1, 1)) == single.scaled(2)
    assert flop_count(3, (8, 8, 8)) == query_flops(3).scaled(512)
    for n_max in range(6):
        assert query_flops(n_max).total <= query_flops(n_max + 1).total


def test_flop_count_matches_instrumented_queries(basis5: BasisSet) -> None:
    lattice = ConvLattice.from_dims((8, 8, 8))
    tensor = cloud_tensor(basis5)
    spectrum = cap_spectrum(basis5)
    field = blended_conv(tensor, spectrum, basis5, lattice).values

    counter = OpCounter()
    values = np.array(
        [
            counted_query(
                basis5, spectrum.moments, tensor.moments, q.r_prime, q.alpha, q.beta, counter
            )
            for q in lattice
        ]
    ).reshape(lattice.dims)

    expected = flop_count(5, lattice.dims)
    assert counter.multiplies == expected.multiplies
    assert counter.adds == expected.adds
    assert counter.transcendentals == expected.transcendentals
    scale = np.abs(field).max()
    np.testing.assert_allclose(values, field, rtol=1e-9, atol=1e-12 * scale)
