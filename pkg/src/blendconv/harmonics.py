"""Associated Legendre functions, complex spherical harmonics and zonal rotation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cache
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy.special import gammaln

from blendconv.exceptions import DomainError

FloatArray = NDArray[np.float64]
ComplexArray = NDArray[np.complex128]


@dataclass(frozen=True)
class AngularIndex:
    l: int
    m: int

    def __post_init__(self) -> None:
        if self.l < 0 or abs(self.m) > self.l:
            raise DomainError(f"invalid angular index (l={self.l}, m={self.m})")


def assoc_legendre(l: int, m: int, x: Any) -> Any:
    """
    Associated Legendre function P_l^m with the Condon-Shortley phase.

    Uses the upward recurrence in l starting from P_m^m.

    Args:
        l (int): Degree.
        m (int): Order, 0 <= m <= l.
        x (Any): Argument in [-1, 1], scalar or array.

    Returns:
        Any: float for scalar input, array otherwise.
    """
    if l < 0 or m < 0 or m > l:
        raise DomainError(f"invalid Legendre index (l={l}, m={m})")
    xs = np.asarray(x, dtype=np.float64)
    if np.any(~np.isfinite(xs)) or np.any(np.abs(xs) > 1):
        raise DomainError(f"Legendre argument must lie in [-1, 1], got {x}")

    somx2 = np.sqrt(np.clip((1.0 - xs) * (1.0 + xs), 0.0, None))
    p_mm = np.ones_like(xs)
    fact = 1.0
    for _ in range(m):
        p_mm = -p_mm * fact * somx2
        fact += 2.0

    if l == m:
        result = p_mm
    else:
        p_prev = p_mm
        p_curr = xs * (2 * m + 1) * p_mm
        for ll in range(m + 2, l + 1):
            p_next = ((2 * ll - 1) * xs * p_curr - (ll + m - 1) * p_prev) / (ll - m)
            p_prev, p_curr = p_curr, p_next
        result = p_curr

    if result.ndim == 0:
        return float(result)
    return result


def _normalization(l: int, m: int) -> float:
    log_ratio = gammaln(l - m + 1) - gammaln(l + m + 1)
    return math.sqrt((2 * l + 1) / (4 * math.pi) * math.exp(log_ratio))


def sph_harm(idx: AngularIndex | tuple[int, int], theta: Any, phi: Any) -> Any:
    """
    Complex spherical harmonic Y_lm(theta, phi).

    Y_lm = (-1)^m N_lm P_l^m(cos phi) e^{i m theta} for m >= 0, and
    Y_{l,-m} = (-1)^m conj(Y_lm) for negative orders.

    Args:
        idx (AngularIndex | tuple[int, int]): Degree and order.
        theta (Any): Azimuth in [0, 2 pi).
        phi (Any): Polar angle in [0, pi], measured from +z.

    Returns:
        Any: complex for scalar input, array otherwise.
    """
    if not isinstance(idx, AngularIndex):
        idx = AngularIndex(*idx)
    l, m = idx.l, idx.m

    thetas = np.asarray(theta, dtype=np.float64)
    phis = np.asarray(phi, dtype=np.float64)
    if np.any(phis < 0) or np.any(phis > np.pi):
        raise DomainError(f"polar angle must lie in [0, pi], got {phi}")

    order = abs(m)
    values = (
        (-1) ** order
        * _normalization(l, order)
        * np.asarray(assoc_legendre(l, order, np.cos(phis)))
        * np.exp(1j * order * thetas)
    )
    if m < 0:
        values = (-1) ** order * np.conj(values)

    if np.ndim(values) == 0:
        return complex(values)
    return values


def harmonic_table(l_max: int, theta: Any, phi: Any) -> ComplexArray:
    """
    Every Y_lm with l <= l_max on a tensor grid of angles.

    Args:
        l_max (int): Highest degree.
        theta (Any): 1-D azimuths.
        phi (Any): 1-D polar angles.

    Returns:
        ComplexArray: table[l, m + l_max, i, j] = Y_lm(theta_i, phi_j),
            zero where |m| > l.
    """
    thetas = np.asarray(theta, dtype=np.float64)
    phis = np.asarray(phi, dtype=np.float64)
    t, p = np.meshgrid(thetas, phis, indexing="ij")
    table = np.zeros(
        (l_max + 1, 2 * l_max + 1, len(thetas), len(phis)), dtype=np.complex128
    )
    for l in range(l_max + 1):
        for m in range(-l, l + 1):
            table[l, m + l_max] = sph_harm((l, m), t, p)
    return table


def harmonic_values(l_max: int, theta: float, phi: float) -> ComplexArray:
    """Every Y_lm at one direction, out[l, m + l_max]."""
    return harmonic_table(l_max, [theta], [phi])[:, :, 0, 0]


@cache
def angular_quadrature(l_max: int) -> tuple[FloatArray, FloatArray, FloatArray]:
    """
    Product quadrature on the sphere, exact for products of harmonics up to l_max.

    Azimuths are equiangular, polar nodes are Gauss-Legendre in cos(phi).

    Returns:
        tuple[FloatArray, FloatArray, FloatArray]: (theta, phi, weights) where
            weights[i, j] already includes the sin(phi) area element.
    """
    n_theta = 4 * (l_max + 1)
    n_phi = 2 * (l_max + 1)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    x, w = np.polynomial.legendre.leggauss(n_phi)
    phi = np.arccos(x[::-1])
    weights = np.outer(np.full(n_theta, 2 * np.pi / n_theta), w[::-1])
    for array in (theta, phi, weights):
        array.setflags(write=False)
    return theta, phi, weights


def direction(theta: Any, phi: Any) -> FloatArray:
    """Unit vectors for (azimuth, polar) angles, last axis xyz."""
    t = np.asarray(theta, dtype=np.float64)
    p = np.asarray(phi, dtype=np.float64)
    return np.stack(
        [np.sin(p) * np.cos(t), np.sin(p) * np.sin(t), np.cos(p)], axis=-1
    )


def pose_matrix(alpha: float, beta: float) -> FloatArray:
    """Rotation R_z(alpha) R_y(beta), which carries +z to direction (alpha, beta)."""
    ca, sa = math.cos(alpha), math.sin(alpha)
    cb, sb = math.cos(beta), math.sin(beta)
    rz = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    return rz @ ry


@dataclass(frozen=True, eq=False)
class ZonalRotation:
    """Coefficients c_m of a rotated zonal harmonic over Y_l,-l..Y_l,l."""

    l: int
    alpha: float
    beta: float
    coeffs: ComplexArray

    def coefficient(self, m: int) -> complex:
        return complex(self.coeffs[m + self.l])

    def __call__(self, theta: Any, phi: Any) -> Any:
        """
        Evaluate the rotated zonal harmonic at azimuth `theta`, polar angle `phi`.

        Angles broadcast like numpy arrays. Equals Y_l0 of the direction
        rotated back by the pose.
        """
        return sum(
            self.coefficient(m) * sph_harm((self.l, m), theta, phi)
            for m in range(-self.l, self.l + 1)
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "l": self.l,
            "alpha": self.alpha,
            "beta": self.beta,
            "real": self.coeffs.real.tolist(),
            "imag": self.coeffs.imag.tolist(),
        }


def rotate_zonal(l: int, alpha: float, beta: float) -> ZonalRotation:
    """
    Rotate the zonal harmonic Y_l0 so its pole points at (alpha, beta).

    Args:
        l (int): Degree.
        alpha (float): Azimuth of the new pole, in [0, 2 pi).
        beta (float): Polar angle of the new pole, in [0, pi].

    Returns:
        ZonalRotation: c_m = sqrt(4 pi / (2l + 1)) conj(Y_lm(alpha, beta)).
    """
    if l < 0:
        raise DomainError(f"degree must be >= 0, got {l}")
    if not 0 <= alpha < 2 * math.pi or not 0 <= beta <= math.pi:
        raise DomainError(f"rotation angles out of range: alpha={alpha}, beta={beta}")

    scale = math.sqrt(4 * math.pi / (2 * l + 1))
    coeffs = np.array(
        [scale * np.conj(sph_harm((l, m), alpha, beta)) for m in range(-l, l + 1)],
        dtype=np.complex128,
    )
    return ZonalRotation(l=l, alpha=alpha, beta=beta, coeffs=coeffs)
