"""
Exact reference computations used only by the test suite.

Everything here is deliberately slow: rational arithmetic for the radial
Gram-Schmidt and the Legendre functions, and a scalar evaluator that counts
every floating point operation of one convolution query.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from blendconv.basis import BasisSet
from blendconv.harmonics import sph_harm

Poly = list[Fraction]


def _pad(p: Poly, size: int) -> Poly:
    return p + [Fraction(0)] * (size - len(p))


def _inner(p: Poly, q: Poly) -> Fraction:
    """Integral of p(r) q(r) r^2 over [0, 1] for power-series coefficients."""
    return sum(
        (a * b * Fraction(1, i + j + 3) for i, a in enumerate(p) for j, b in enumerate(q)),
        Fraction(0),
    )


def truncated_base(n: int, l: int) -> Poly:
    scale = (-1) ** l * n
    return [Fraction(scale * (n - l) ** k, math.factorial(k)) for k in range(n + 1)]


def rational_radials(n_max: int) -> dict[tuple[int, int], Poly]:
    """Truncated-sum radials by exact Gram-Schmidt within each degree."""
    out: dict[tuple[int, int], Poly] = {}
    for l in range(n_max + 1):
        for n in range(l, n_max + 1):
            f = truncated_base(n, l)
            q = list(f)
            for k in range(max(l, 1), n):
                prev = out[(k, l)]
                c = _inner(f, prev) / _inner(prev, prev)
                prev = _pad(prev, len(q))
                q = [a - c * b for a, b in zip(q, prev)]
            out[(n, l)] = q
    return out


def _poly_mul(p: Poly, q: Poly) -> Poly:
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return out


def _derive(p: Poly) -> Poly:
    return [k * c for k, c in enumerate(p)][1:] or [Fraction(0)]


def rodrigues_legendre(l: int, m: int, x: float) -> float:
    """P_l^m(x) with the Condon-Shortley phase, from the Rodrigues formula."""
    p: Poly = [Fraction(1)]
    for _ in range(l):
        p = _poly_mul(p, [Fraction(-1), Fraction(0), Fraction(1)])
    for _ in range(l + m):
        p = _derive(p)
    p = [c / (2**l * math.factorial(l)) for c in p]

    exact_x = Fraction(x)
    value = sum((c * exact_x**k for k, c in enumerate(p)), Fraction(0))
    return (-1) ** m * math.sqrt(1.0 - x * x) ** m * float(value)


@dataclass
class OpCounter:
    multiplies: int = 0
    adds: int = 0
    transcendentals: int = 0

    def exp(self, x: float) -> Counted:
        self.transcendentals += 1
        return Counted(math.exp(x), self)

    def harmonic(self, l: int, m: int, alpha: float, beta: float) -> complex:
        self.transcendentals += 1
        return complex(sph_harm((l, m), alpha, beta))


@dataclass
class Counted:
    value: float
    counter: OpCounter

    def _other(self, other: Counted | float) -> float:
        return other.value if isinstance(other, Counted) else float(other)

    def __mul__(self, other: Counted | float) -> Counted:
        self.counter.multiplies += 1
        return Counted(self.value * self._other(other), self.counter)

    def __add__(self, other: Counted | float) -> Counted:
        self.counter.adds += 1
        return Counted(self.value + self._other(other), self.counter)

    def __sub__(self, other: Counted | float) -> Counted:
        self.counter.adds += 1
        return Counted(self.value - self._other(other), self.counter)


def counted_query(
    basis: BasisSet,
    kernel: np.ndarray,
    moments: np.ndarray,
    r_prime: float,
    alpha: float,
    beta: float,
    counter: OpCounter,
) -> float:
    """
    One theorem-mode query evaluated scalar by scalar.

    Args:
        basis (BasisSet): Exponential basis.
        kernel (np.ndarray): Kernel spectrum, kernel[n', l].
        moments (np.ndarray): Shape moments, moments[n, l, m + n_max].
        r_prime (float): Radial translation.
        alpha (float): Azimuth of the pose.
        beta (float): Polar angle of the pose.
        counter (OpCounter): Receives every operation.

    Returns:
        float: The field value at the query.
    """
    n_max = basis.n_max
    scaled_gram = 4 * math.pi / 3 * basis.gram
    exps = [Counted(1.0, counter)] + [counter.exp(j * r_prime) for j in range(1, n_max + 1)]

    total = Counted(0.0, counter)
    for l in range(n_max + 1):
        radials = [n for n in range(l, n_max + 1) if (n, l) != (0, 0)]
        if not radials:
            continue

        mixed = {}
        for n in radials:
            acc = Counted(0.0, counter)
            for p in radials:
                if p == n:
                    continue
                factor = exps[n - l] - exps[p - l]
                acc = acc + (factor * float(scaled_gram[n, p, l])) * float(kernel[p, l])
            mixed[n] = acc

        for m in range(-l, l + 1):
            real = Counted(0.0, counter)
            imag = Counted(0.0, counter)
            for n in radials:
                omega = complex(moments[n, l, m + n_max])
                real = real + mixed[n] * omega.real
                imag = imag + mixed[n] * omega.imag
            y = counter.harmonic(l, m, alpha, beta)
            total = total + (real * y.real - imag * y.imag)

    return total.value


def rotate_about_z(points: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    rotation = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return points @ rotation.T


def unit_phase(m: int, angle: float) -> complex:
    return cmath.exp(-1j * m * angle)
