import math

import numpy as np
import pytest

from blendconv.basis import (
    BasisSet,
    MixingCoefficients,
    RadialMode,
    RadialPolynomial,
    base_function,
    element_index,
    gauss_legendre,
    orthogonality_residual,
    orthogonalize,
    power_coefficients,
    radial_inner_product,
    synthesize_radials,
    theorem_inner_product,
    translate_radial,
    translated_inner_product,
    truncated_overlaps,
)
from blendconv.exceptions import (
    DomainError,
    NonFiniteError,
    UnsupportedModeError,
)
from tests.oracles import rational_radials


def test_base_function_examples() -> None:
    assert base_function(0, 0, 0.5, RadialMode.EXPONENTIAL) == 0.0
    assert base_function(1, 1, 0.0, RadialMode.EXPONENTIAL) == -1.0
    assert base_function(1, 0, 0.5, RadialMode.TRUNCATED_SUM) == pytest.approx(1.5)
    assert base_function(1, 0, 0.5, RadialMode.EXPONENTIAL) == pytest.approx(
        math.exp(0.5)
    )


def test_base_function_vectorized() -> None:
    r = np.linspace(0, 1, 7)
    values = base_function(3, 1, r, RadialMode.EXPONENTIAL)
    np.testing.assert_allclose(values, -3 * np.exp(2 * r))


@pytest.mark.parametrize("r", [-0.1, 1.5, float("nan")])
def test_base_function_outside_ball(r: float) -> None:
    with pytest.raises(DomainError):
        base_function(1, 0, r, RadialMode.EXPONENTIAL)


@pytest.mark.parametrize("n, l", [(-1, 0), (1, 2), (2, -1)])
def test_base_function_bad_index(n: int, l: int) -> None:
    with pytest.raises(DomainError):
        base_function(n, l, 0.5, RadialMode.EXPONENTIAL)


def test_inner_product_examples() -> None:
    assert radial_inner_product(lambda r: np.ones_like(r), lambda r: np.ones_like(r)) == (
        pytest.approx(1 / 3, abs=1e-14)
    )
    assert radial_inner_product(lambda r: r, lambda r: r) == pytest.approx(
        1 / 5, abs=1e-14
    )


def test_inner_product_symmetric() -> None:
    p = lambda r: np.exp(2 * r)  # noqa: E731
    q = lambda r: 1 - r**2  # noqa: E731
    assert radial_inner_product(p, q) == pytest.approx(radial_inner_product(q, p))


def test_inner_product_not_finite() -> None:
    with pytest.raises(NonFiniteError, match="r="):
        radial_inner_product(lambda r: 1 / (r - r), lambda r: r)


def test_gauss_legendre_is_cached_and_read_only() -> None:
    nodes, weights = gauss_legendre(16)
    assert gauss_legendre(16)[0] is nodes
    assert weights.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        nodes[0] = 0.0


@pytest.mark.parametrize("mode", list(RadialMode))
def test_orthogonality(mode: RadialMode) -> None:
    basis = orthogonalize(5, mode)
    assert orthogonality_residual(basis) < 1e-9


def test_norms_positive_except_origin(basis5: BasisSet) -> None:
    assert basis5.norm(0, 0) == 0.0
    assert basis5.radial(0, 0).is_zero
    for n in range(1, 6):
        for l in range(n + 1):
            assert basis5.norm(n, l) > 0


def test_negative_band_limit() -> None:
    with pytest.raises(DomainError):
        orthogonalize(-1)


def test_band_limit_zero() -> None:
    basis = orthogonalize(0)
    assert basis.radial(0, 0).is_zero
    assert orthogonality_residual(basis) == 0.0
    assert len(basis.mixing) == 0


def test_truncated_sum_first_radials() -> None:
    basis = orthogonalize(3, RadialMode.TRUNCATED_SUM)
    r = np.linspace(0, 1, 5)
    np.testing.assert_allclose(basis.radial(1, 1)(r), -np.ones_like(r))
    np.testing.assert_allclose(basis.radial(1, 0)(r), 1 + r)


def test_truncated_sum_matches_exact_arithmetic() -> None:
    n_max = 5
    derived = power_coefficients(orthogonalize(n_max, RadialMode.TRUNCATED_SUM))
    exact = rational_radials(n_max)
    for key, coeffs in exact.items():
        expected = np.array([float(c) for c in coeffs])
        scale = max(1.0, float(np.abs(expected).max()))
        np.testing.assert_allclose(derived[key], expected, rtol=0, atol=1e-6 * scale)


def test_power_coefficients_need_truncated_sum(basis3: BasisSet) -> None:
    with pytest.raises(UnsupportedModeError):
        power_coefficients(basis3)


def test_mixing_coefficients_project_base_functions(basis3: BasisSet) -> None:
    mode = basis3.mode
    for n, l, k, m in basis3.mixing.keys():
        if m != l:
            assert basis3.mixing[n, l, k, m] == 0.0
            continue
        if (k, m) == (0, 0):
            continue
        radial = basis3.radial(k, m)
        expected = radial_inner_product(
            lambda r: base_function(n, l, r, mode), radial
        ) / basis3.norm(k, m)
        assert basis3.mixing[n, l, k, m] == pytest.approx(expected, rel=1e-8, abs=1e-10)


def test_mixing_key_domain(basis3: BasisSet) -> None:
    with pytest.raises(DomainError):
        basis3.mixing[2, 1, 2, 0]
    with pytest.raises(DomainError):
        basis3.mixing[4, 0, 1, 0]


def test_synthesis_reproduces_derived_radials(basis3: BasisSet) -> None:
    weights = MixingCoefficients(basis3.n_max, basis3.mixing.values.copy())
    np.testing.assert_array_equal(
        synthesize_radials(weights, basis3.forcing), basis3.coeffs
    )


def test_synthesis_without_mixing_gives_base_functions(basis3: BasisSet) -> None:
    coeffs = synthesize_radials(MixingCoefficients.zeros(3), basis3.forcing)
    np.testing.assert_array_equal(coeffs, basis3.forcing)


def test_gram_table_by_quadrature(basis3: BasisSet) -> None:
    mode = basis3.mode
    for l in range(4):
        for n in range(l, 4):
            for n_prime in range(l, 4):
                expected = radial_inner_product(
                    lambda r: base_function(n, l, r, mode),
                    basis3.radial(n_prime, l),
                )
                assert basis3.gram[n, n_prime, l] == pytest.approx(
                    expected, rel=1e-9, abs=1e-10
                )


def test_digest_is_stable() -> None:
    assert orthogonalize(2).digest == orthogonalize(2).digest
    assert len(orthogonalize(2).digest) == 16
    assert orthogonalize(3).digest != orthogonalize(3, RadialMode.TRUNCATED_SUM).digest


@pytest.mark.parametrize("s", [0.0, 0.1, 0.3, 0.6])
def test_translation_is_exact(basis5: BasisSet, s: float) -> None:
    r = np.linspace(0, 1 - s, 41)
    for (n, l), radial in basis5.radials.items():
        shifted = translate_radial(basis5, n, l, s)
        expected = radial(r + s)
        scale = max(1.0, float(np.abs(expected).max()))
        np.testing.assert_allclose(shifted(r), expected, rtol=0, atol=1e-10 * scale)


def test_translation_by_zero_is_identity(basis3: BasisSet) -> None:
    shifted = translate_radial(basis3, 3, 1, 0.0)
    np.testing.assert_array_equal(shifted.coeffs, basis3.radial(3, 1).coeffs)


def test_translation_domain(basis3: BasisSet) -> None:
    for s in (-0.1, 1.0, float("inf")):
        with pytest.raises(DomainError):
            translate_radial(basis3, 2, 1, s)
    with pytest.raises(UnsupportedModeError):
        translate_radial(orthogonalize(2, RadialMode.TRUNCATED_SUM), 1, 0, 0.2)


@pytest.mark.parametrize("s", [0.1, 0.3])
def test_translated_inner_product_matches_quadrature(basis5: BasisSet, s: float) -> None:
    for l in range(6):
        for n in range(max(l, 1), 6):
            shifted = translate_radial(basis5, n, l, s)
            for n_prime in range(max(l, 1), 6):
                target = basis5.radial(n_prime, l)
                expected = radial_inner_product(shifted, target)
                scale = math.sqrt(
                    radial_inner_product(shifted, shifted) * basis5.norm(n_prime, l)
                )
                assert translated_inner_product(basis5, n, n_prime, l, s) == (
                    pytest.approx(expected, rel=1e-8, abs=1e-10 * scale)
                )


@pytest.mark.parametrize("s", [0.1, 0.3])
def test_pairwise_form_where_it_is_exact(basis5: BasisSet, s: float) -> None:
    for l in range(6):
        for n in range(max(l, 1), 6):
            for n_prime in range(l, 6):
                if n_prime != n - 1 and n_prime <= n:
                    continue
                exact = translated_inner_product(basis5, n, n_prime, l, s)
                scale = math.sqrt(basis5.norm(n, l) * basis5.norm(n_prime, l)) + 1e-12
                assert theorem_inner_product(basis5, n, n_prime, l, s) == (
                    pytest.approx(exact, rel=1e-7, abs=1e-9 * scale)
                )


def test_pairwise_form_vanishes_on_diagonal(basis5: BasisSet) -> None:
    s = 0.2
    for l in range(6):
        for n in range(max(l, 1), 6):
            assert theorem_inner_product(basis5, n, n, l, s) == 0.0
            assert translated_inner_product(basis5, n, n, l, s) == pytest.approx(
                math.exp((n - l) * s) * basis5.norm(n, l), rel=1e-8
            )


def test_truncated_overlaps(basis3: BasisSet) -> None:
    s = 0.25
    table = truncated_overlaps(basis3, s)
    x, w = gauss_legendre(256, 0.0, 1.0 - s)
    for l in range(4):
        for n in range(l, 4):
            for n_prime in range(l, 4):
                expected = float(
                    np.sum(
                        w * x**2 * basis3.radial(n, l)(x) * basis3.radial(n_prime, l)(x + s)
                    )
                )
                assert table[n, n_prime, l] == pytest.approx(expected, rel=1e-9, abs=1e-12)
    np.testing.assert_allclose(
        truncated_overlaps(basis3, 0.0)[:, :, 0].diagonal(), basis3.norms[:, 0], rtol=1e-12
    )


def test_radial_polynomial_checks_length() -> None:
    with pytest.raises(DomainError):
        RadialPolynomial(2, 1, RadialMode.EXPONENTIAL, np.zeros(2))


def test_basis_tables_are_read_only(basis3: BasisSet) -> None:
    with pytest.raises(ValueError):
        basis3.coeffs[element_index(1, 0), 0] = 1.0
