"""
Radial function family in the unit ball.

Every radial is stored as a coefficient vector over the atoms of its mode:
powers r^k for truncated sums, exponentials e^{kr} for the exponential form.
Gram-Schmidt runs separately for every degree l; angular orthogonality across
degrees comes from the spherical harmonics.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cache, cached_property
from typing import Any, Callable, Iterator

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import solve_triangular

from blendconv.exceptions import (
    DegeneracyError,
    DomainError,
    NonFiniteError,
    UnsupportedModeError,
)
from blendconv.utils import Timer

log = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

DEFAULT_NODES = 128
DEGENERACY_THRESHOLD = 1e-14


class RadialMode(str, Enum):
    """Which base radial family is used."""

    TRUNCATED_SUM = "truncated-sum"
    EXPONENTIAL = "exponential"

    def __str__(self) -> str:
        return self.value


@cache
def gauss_legendre(
    n: int, a: float = 0.0, b: float = 1.0
) -> tuple[FloatArray, FloatArray]:
    """
    Gauss-Legendre nodes and weights on the interval [a, b].

    Args:
        n (int): Number of nodes.
        a (float): Lower bound. Defaults to 0.
        b (float): Upper bound. Defaults to 1.

    Returns:
        tuple[FloatArray, FloatArray]: Read-only (nodes, weights).
    """
    if n < 1:
        raise DomainError(f"quadrature needs at least one node, got {n}")
    knots, weights = np.polynomial.legendre.leggauss(n)
    knots_a_b = 0.5 * (b - a) * knots + 0.5 * (b + a)
    weights_a_b = 0.5 * (b - a) * weights
    knots_a_b.setflags(write=False)
    weights_a_b.setflags(write=False)
    return knots_a_b, weights_a_b


def element_index(n: int, l: int) -> int:
    """Flat index of the (n, l) element, ordered by n then l."""
    return n * (n + 1) // 2 + l


def element_count(n_max: int) -> int:
    return (n_max + 1) * (n_max + 2) // 2


def element_pairs(n_max: int) -> list[tuple[int, int]]:
    return [(n, l) for n in range(n_max + 1) for l in range(n + 1)]


def check_index(n: int, l: int, n_max: int | None = None) -> None:
    if n < 0 or l < 0 or l > n:
        raise DomainError(f"invalid radial index (n={n}, l={l}), need 0 <= l <= n")
    if n_max is not None and n > n_max:
        raise DomainError(f"radial index n={n} exceeds band limit {n_max}")


def atoms(r: Any, mode: RadialMode, size: int) -> FloatArray:
    """
    Evaluate the atom functions of a mode.

    Args:
        r (Any): Radii, scalar or array.
        mode (RadialMode): Atom family.
        size (int): Number of atoms, k = 0..size-1.

    Returns:
        FloatArray: Array of shape `r.shape + (size,)`.
    """
    radii = np.asarray(r, dtype=np.float64)
    k = np.arange(size, dtype=np.float64)
    if mode is RadialMode.EXPONENTIAL:
        return np.exp(np.multiply.outer(radii, k))
    # numpy defines 0.0 ** 0 as 1
    return np.power.outer(radii, k)


def atom_gram(mode: RadialMode, size: int) -> FloatArray:
    """
    Closed-form r^2-weighted inner products between atoms on [0, 1].

    Args:
        mode (RadialMode): Atom family.
        size (int): Number of atoms.

    Returns:
        FloatArray: Symmetric matrix G[i, j] = <atom_i, atom_j>.
    """
    i, j = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    total = (i + j).astype(np.float64)
    if mode is RadialMode.TRUNCATED_SUM:
        return 1.0 / (total + 3.0)

    out = np.full((size, size), 1.0 / 3.0)
    a = total[total > 0]
    out[total > 0] = np.exp(a) * (1 / a - 2 / a**2 + 2 / a**3) - 2 / a**3
    return out


def base_coefficients(n: int, l: int, mode: RadialMode, size: int) -> FloatArray:
    """Atom coefficients of the base function f_nl, zero padded to `size`."""
    check_index(n, l)
    coeffs = np.zeros(size)
    scale = (-1) ** l * n
    if mode is RadialMode.EXPONENTIAL:
        coeffs[n - l] = scale
    else:
        for k in range(n + 1):
            # python ints give 0 ** 0 == 1, so l == n is the constant term
            coeffs[k] = scale * (n - l) ** k / math.factorial(k)
    return coeffs


def forcing_matrix(n_max: int, mode: RadialMode) -> FloatArray:
    """Stack of every base function's coefficients, one row per element."""
    size = n_max + 1
    return np.array(
        [base_coefficients(n, l, mode, size) for n, l in element_pairs(n_max)]
    ).reshape(element_count(n_max), size)


def base_function(n: int, l: int, r: Any, mode: RadialMode) -> Any:
    """
    Evaluate the base radial f_nl.

    Args:
        n (int): Radial index, n >= 0.
        l (int): Degree, 0 <= l <= n.
        r (Any): Radius in [0, 1], scalar or array.
        mode (RadialMode): Truncated sum or exponential form.

    Returns:
        Any: float for scalar input, array otherwise.

    Raises:
        DomainError: On invalid indices or radii outside [0, 1].
    """
    check_index(n, l)
    radii = np.asarray(r, dtype=np.float64)
    if np.any(~np.isfinite(radii)) or np.any(radii < 0) or np.any(radii > 1):
        raise DomainError(f"radius must lie in [0, 1], got {r}")
    values = atoms(radii, mode, n + 1) @ base_coefficients(n, l, mode, n + 1)
    if values.ndim == 0:
        return float(values)
    return values


@dataclass(frozen=True, eq=False)
class RadialPolynomial:
    """
    One radial element as coefficients over the atoms of `mode`.

    Evaluation does not check the radius, so translated arguments
    beyond the ball can be evaluated analytically.
    """

    n: int
    l: int
    mode: RadialMode
    coeffs: FloatArray

    def __post_init__(self) -> None:
        check_index(self.n, self.l)
        if len(self.coeffs) != self.n + 1:
            raise DomainError(
                f"Q_{self.n}{self.l} needs {self.n + 1} coefficients, "
                f"got {len(self.coeffs)}"
            )

    def __call__(self, r: Any) -> Any:
        values = atoms(r, self.mode, len(self.coeffs)) @ self.coeffs
        if np.ndim(values) == 0:
            return float(values)
        return values

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coeffs)


def radial_inner_product(
    p: Callable[[FloatArray], Any],
    q: Callable[[FloatArray], Any],
    nodes: int = DEFAULT_NODES,
) -> float:
    """
    r^2-weighted inner product on [0, 1] by Gauss-Legendre quadrature.

    Args:
        p (Callable): First radial function, vectorized over radii.
        q (Callable): Second radial function.
        nodes (int): Quadrature node count. Defaults to 128.

    Returns:
        float: The integral of p(r) q(r) r^2 over [0, 1].

    Raises:
        NonFiniteError: If either function is not finite at a node.
    """
    x, w = gauss_legendre(nodes)
    pv = np.broadcast_to(np.asarray(p(x), dtype=np.float64), x.shape)
    qv = np.broadcast_to(np.asarray(q(x), dtype=np.float64), x.shape)
    for values in (pv, qv):
        bad = ~np.isfinite(values)
        if bad.any():
            raise NonFiniteError(
                f"radial function is not finite at r={x[np.argmax(bad)]!r}"
            )
    return float(np.sum(w * x**2 * pv * qv))


@cache
def mixing_mask(n_max: int) -> NDArray[np.bool_]:
    """Which (n, l, k, m) keys exist: 0 <= m <= k <= n - 1."""
    pairs = element_pairs(n_max)
    mask = np.zeros((len(pairs), len(pairs)), dtype=bool)
    for e, (n, _) in enumerate(pairs):
        for f, (k, _) in enumerate(pairs):
            mask[e, f] = k < n
    mask.setflags(write=False)
    return mask


@dataclass(frozen=True, eq=False)
class MixingCoefficients:
    """
    Coefficients C_nlkm (analytic) or W_nlkm (trainable).

    Stored as a strictly lower triangular matrix over flat element indices,
    values[e(n, l), e(k, m)].
    """

    n_max: int
    values: FloatArray

    def __post_init__(self) -> None:
        size = element_count(self.n_max)
        if self.values.shape != (size, size):
            raise DomainError(
                f"mixing matrix for n_max={self.n_max} must be {size}x{size}, "
                f"got {self.values.shape}"
            )

    @classmethod
    def zeros(cls, n_max: int) -> MixingCoefficients:
        size = element_count(n_max)
        return cls(n_max, np.zeros((size, size)))

    @classmethod
    def from_dense(cls, n_max: int, values: FloatArray) -> MixingCoefficients:
        """Build from a dense matrix, dropping entries outside the key set."""
        return cls(n_max, np.where(mixing_mask(n_max), values, 0.0))

    @property
    def mask(self) -> NDArray[np.bool_]:
        return mixing_mask(self.n_max)

    def keys(self) -> Iterator[tuple[int, int, int, int]]:
        for n, l in element_pairs(self.n_max):
            for k in range(n):
                for m in range(k + 1):
                    yield n, l, k, m

    def __getitem__(self, key: tuple[int, int, int, int]) -> float:
        n, l, k, m = key
        check_index(n, l, self.n_max)
        check_index(k, m, self.n_max)
        if k >= n:
            raise DomainError(f"no mixing coefficient for {key}, need k < n")
        return float(self.values[element_index(n, l), element_index(k, m)])

    def __len__(self) -> int:
        return int(self.mask.sum())

    def copy(self) -> MixingCoefficients:
        return MixingCoefficients(self.n_max, self.values.copy())


def synthesize_radials(weights: MixingCoefficients, forcing: FloatArray) -> FloatArray:
    """
    Solve Q = F - W Q for every radial at once.

    Args:
        weights (MixingCoefficients): C or W, strictly lower triangular.
        forcing (FloatArray): Base function coefficients, one row per element.

    Returns:
        FloatArray: Radial coefficients, one row per element.
    """
    system = np.eye(len(forcing)) + weights.values
    return np.asarray(
        solve_triangular(system, forcing, lower=True, unit_diagonal=True),
        dtype=np.float64,
    )


def _frozen(array: FloatArray) -> FloatArray:
    array = np.ascontiguousarray(array, dtype=np.float64)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class BasisSet:
    """
    The orthogonalized radial family up to a band limit.

    Attributes:
        n_max: Band limit.
        mode: Atom family of every radial.
        forcing: Base function coefficients, shape (E, n_max + 1).
        mixing: Analytic mixing coefficients.
        coeffs: Radial coefficients, shape (E, n_max + 1).
        gram: gram[n, n', l] = <f_nl, Q_n'l>.
        norms: norms[n, l] = ||Q_nl||^2.
    """

    n_max: int
    mode: RadialMode
    forcing: FloatArray
    mixing: MixingCoefficients
    coeffs: FloatArray
    gram: FloatArray
    norms: FloatArray
    quadrature_nodes: int = DEFAULT_NODES

    def __post_init__(self) -> None:
        for name in ("forcing", "coeffs", "gram", "norms"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(
            self.mixing, "values", _frozen(self.mixing.values)
        )

    @property
    def size(self) -> int:
        return self.n_max + 1

    def radial(self, n: int, l: int) -> RadialPolynomial:
        check_index(n, l, self.n_max)
        row = self.coeffs[element_index(n, l), : n + 1].copy()
        return RadialPolynomial(n, l, self.mode, row)

    @property
    def radials(self) -> dict[tuple[int, int], RadialPolynomial]:
        return {(n, l): self.radial(n, l) for n, l in element_pairs(self.n_max)}

    def norm(self, n: int, l: int) -> float:
        check_index(n, l, self.n_max)
        return float(self.norms[n, l])

    def evaluate(self, r: Any) -> FloatArray:
        """Every radial at radii `r`, shape `r.shape + (E,)`."""
        return atoms(r, self.mode, self.size) @ self.coeffs.T

    def inverse_norms(self) -> FloatArray:
        """1 / ||Q_nl||^2, zero where the radial vanishes."""
        out = np.zeros_like(self.norms)
        np.divide(1.0, self.norms, out=out, where=self.norms > 0)
        return out

    @cached_property
    def digest(self) -> str:
        """Stable content hash used to tag derived artifacts."""
        payload = json.dumps(
            {
                "n_max": self.n_max,
                "mode": str(self.mode),
                "coeffs": self.coeffs.tolist(),
                "mixing": self.mixing.values.tolist(),
            }
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def layout_coefficients(coeffs: FloatArray, n_max: int) -> FloatArray:
    """Rearrange flat radial rows into a (n, l, atom) array, zero where l > n."""
    out = np.zeros((n_max + 1, n_max + 1, n_max + 1))
    for e, (n, l) in enumerate(element_pairs(n_max)):
        out[n, l] = coeffs[e]
    return out


def flatten_coefficients(grid: FloatArray, n_max: int) -> FloatArray:
    """Inverse of `layout_coefficients`."""
    return np.array([grid[n, l] for n, l in element_pairs(n_max)]).reshape(
        element_count(n_max), n_max + 1
    )


def radial_tables(
    n_max: int,
    mode: RadialMode,
    forcing: FloatArray,
    coeffs: FloatArray,
    nodes: int = DEFAULT_NODES,
) -> tuple[FloatArray, FloatArray]:
    """
    Norm and gram tables of a radial family by quadrature.

    Returns:
        tuple[FloatArray, FloatArray]: norms[n, l] and gram[n, n', l].
    """
    x, w = gauss_legendre(nodes)
    weight = w * x**2
    basis_atoms = atoms(x, mode, n_max + 1)
    q_values = basis_atoms @ coeffs.T
    f_values = basis_atoms @ forcing.T
    products = (f_values * weight[:, None]).T @ q_values
    squares = np.einsum("qe,q,qe->e", q_values, weight, q_values)

    norms = np.zeros((n_max + 1, n_max + 1))
    gram = np.zeros((n_max + 1, n_max + 1, n_max + 1))
    pairs = element_pairs(n_max)
    for e, (n, l) in enumerate(pairs):
        norms[n, l] = squares[e]
        for n_prime in range(l, n_max + 1):
            gram[n, n_prime, l] = products[e, element_index(n_prime, l)]
    return norms, gram


def orthogonalize(
    n_max: int,
    mode: RadialMode = RadialMode.EXPONENTIAL,
    nodes: int = DEFAULT_NODES,
) -> BasisSet:
    """
    Derive the orthogonal radial family by weighted Gram-Schmidt.

    Elements are processed with n ascending and l ascending. Each Q_nl is
    orthogonalized against the Q_kl of the same degree that already exist,
    with one re-orthogonalization pass. The returned radials are synthesized
    from the accumulated coefficients, so the same synthesis fed with those
    coefficients reproduces them exactly.

    Args:
        n_max (int): Band limit, >= 0.
        mode (RadialMode): Atom family. Defaults to exponential.
        nodes (int): Gauss-Legendre node count. Defaults to 128.

    Returns:
        BasisSet: The derived basis.

    Raises:
        DomainError: If n_max is negative.
        DegeneracyError: If an element other than Q_00 has vanishing norm.
    """
    if n_max < 0:
        raise DomainError(f"band limit must be >= 0, got {n_max}")

    timer = Timer()
    x, w = gauss_legendre(nodes)
    weight = w * x**2
    basis_atoms = atoms(x, mode, n_max + 1)
    forcing = forcing_matrix(n_max, mode)
    pairs = element_pairs(n_max)

    mixing = np.zeros((len(pairs), len(pairs)))
    partial = np.zeros_like(forcing)
    samples = np.zeros((len(pairs), len(x)))
    norms = np.zeros(len(pairs))

    for e, (n, l) in enumerate(pairs):
        if n == 0:
            continue

        previous = [element_index(k, l) for k in range(max(l, 1), n)]
        residual = basis_atoms @ forcing[e]
        for _ in range(2):
            for p in previous:
                c = float(np.dot(weight * residual, samples[p])) / norms[p]
                residual = residual - c * samples[p]
                mixing[e, p] += c

        partial[e] = forcing[e] - mixing[e, previous] @ partial[previous]
        samples[e] = basis_atoms @ partial[e]
        norms[e] = float(np.dot(weight * samples[e], samples[e]))
        if norms[e] < DEGENERACY_THRESHOLD:
            raise DegeneracyError(
                f"Q_{n}{l} is degenerate, squared norm {norms[e]:.3e}"
            )

    analytic = MixingCoefficients(n_max, mixing)
    coeffs = synthesize_radials(analytic, forcing)
    norm_table, gram = radial_tables(n_max, mode, forcing, coeffs, nodes)

    log.debug(f"orthogonalized {len(pairs)} radials ({mode}) in {timer.elapsed:.3f}s")

    return BasisSet(
        n_max=n_max,
        mode=mode,
        forcing=forcing,
        mixing=analytic,
        coeffs=coeffs,
        gram=gram,
        norms=norm_table,
        quadrature_nodes=nodes,
    )


def orthogonality_residual(basis: BasisSet, nodes: int | None = None) -> float:
    """
    Largest |<Q_nl, Q_n'l>| over distinct radials of the same degree.

    Returns:
        float: Zero when the band limit has no such pair.
    """
    x, w = gauss_legendre(nodes or basis.quadrature_nodes)
    values = basis.evaluate(x)
    products = (values * (w * x**2)[:, None]).T @ values

    worst = 0.0
    for l in range(basis.n_max + 1):
        for n in range(l, basis.n_max + 1):
            for n_prime in range(n + 1, basis.n_max + 1):
                value = products[element_index(n, l), element_index(n_prime, l)]
                worst = max(worst, abs(float(value)))
    return worst


def _require_exponential(basis: BasisSet) -> None:
    if basis.mode is not RadialMode.EXPONENTIAL:
        raise UnsupportedModeError(
            f"radial translation is exact only in exponential mode, basis is {basis.mode}"
        )


def _check_shift(r_shift: float) -> None:
    if not np.isfinite(r_shift) or not 0 <= r_shift < 1:
        raise DomainError(f"radial shift must lie in [0, 1), got {r_shift}")


def translate_radial(basis: BasisSet, n: int, l: int, r_shift: float) -> RadialPolynomial:
    """
    Expansion of Q_nl(r + r_shift) over the exponential atoms.

    Each atom translates to itself times e^{k r_shift}, so the result is exact
    for every element, not only the single-exponential ones.

    Raises:
        UnsupportedModeError: For truncated-sum bases.
    """
    _require_exponential(basis)
    _check_shift(r_shift)
    radial = basis.radial(n, l)
    k = np.arange(n + 1, dtype=np.float64)
    return RadialPolynomial(n, l, basis.mode, radial.coeffs * np.exp(k * r_shift))


def translated_inner_product(
    basis: BasisSet, n: int, n_prime: int, l: int, r_shift: float
) -> float:
    """Closed form of <Q_nl(. + r_shift), Q_n'l> over [0, 1]."""
    check_index(n_prime, l, basis.n_max)
    shifted = translate_radial(basis, n, l, r_shift)
    target = basis.coeffs[element_index(n_prime, l)]
    gram = atom_gram(basis.mode, basis.size)
    return float(shifted.coeffs @ gram[: n + 1] @ target)


def theorem_inner_product(
    basis: BasisSet, n: int, n_prime: int, l: int, r_shift: float
) -> float:
    """
    Pairwise-exponential closed form gram(n, n', l) (e^{(n-l)s} - e^{(n'-l)s}).

    Agrees with `translated_inner_product` for n' = n - 1 and n' > n; it
    vanishes on the diagonal n' = n.
    """
    _require_exponential(basis)
    _check_shift(r_shift)
    check_index(n, l, basis.n_max)
    check_index(n_prime, l, basis.n_max)
    factor = math.exp((n - l) * r_shift) - math.exp((n_prime - l) * r_shift)
    return float(basis.gram[n, n_prime, l]) * factor


def truncated_overlaps(basis: BasisSet, r_shift: float) -> FloatArray:
    """
    Overlaps of every radial with every shifted radial inside the ball.

    Args:
        basis (BasisSet): Exponential-mode basis.
        r_shift (float): Radial translation in [0, 1).

    Returns:
        FloatArray: out[n, n', l] = integral over [0, 1 - s] of
            Q_nl(r) Q_n'l(r + s) r^2 dr.
    """
    _require_exponential(basis)
    _check_shift(r_shift)
    x, w = gauss_legendre(basis.quadrature_nodes, 0.0, 1.0 - r_shift)
    plain = basis.evaluate(x)
    shifted = basis.evaluate(np.asarray(x) + r_shift)
    products = (plain * (w * x**2)[:, None]).T @ shifted

    out = np.zeros((basis.size, basis.size, basis.size))
    for e, (n, l) in enumerate(element_pairs(basis.n_max)):
        for n_prime in range(l, basis.n_max + 1):
            out[n, n_prime, l] = products[e, element_index(n_prime, l)]
    return out


def power_coefficients(basis: BasisSet) -> dict[tuple[int, int], FloatArray]:
    """Radials of a truncated-sum basis as power-series coefficients."""
    if basis.mode is not RadialMode.TRUNCATED_SUM:
        raise UnsupportedModeError("power coefficients need a truncated-sum basis")
    return {key: radial.coeffs for key, radial in basis.radials.items()}
