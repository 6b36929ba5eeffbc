"""
The two-layer blended convolution network with a hand-written backward pass.

Every layer is a linear map in the trainable parameters, followed by group
normalization and ReLU, so the gradient is a chain of tensor contractions.
Complex gradients follow the convention g = dL/dRe(z) + i dL/dIm(z).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import solve_triangular
from scipy.special import logsumexp, softmax

from blendconv.basis import (
    BasisSet,
    MixingCoefficients,
    flatten_coefficients,
    layout_coefficients,
    mixing_mask,
    synthesize_radials,
)
from blendconv.config import NetworkConfig, ProjectionMode
from blendconv.convolution import (
    ConvLattice,
    kernel_table,
    lattice_harmonics,
)
from blendconv.exceptions import ConfigError, DomainError, NonFiniteError
from blendconv.transform import (
    BallGrid,
    angular_projector,
    projection_operator,
    radial_projector,
)

log = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
ComplexArray = NDArray[np.complex128]

POLYNOMIAL_BLOCKS = ("projection",)
KERNEL_BLOCKS = (
    "kernels1",
    "kernels2",
    "gn1_scale",
    "gn1_shift",
    "gn2_scale",
    "gn2_shift",
    "fc_weight",
    "fc_bias",
)
BLOCKS = POLYNOMIAL_BLOCKS + KERNEL_BLOCKS


def kernel_mask(n_max: int) -> NDArray[np.bool_]:
    """Valid kernel spectrum entries [n', l]: l <= n', without the zero radial."""
    size = n_max + 1
    n_prime, l = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    mask = l <= n_prime
    mask[0, 0] = False
    return mask


@dataclass
class NetworkParams:
    """
    Trainable state of the network.

    Attributes:
        projection: Mixing weights W over flat element indices, shared by both
            latent projections.
        kernels1: Layer-1 kernel spectra, [kernel, n', l].
        kernels2: Layer-2 kernel spectra, [kernel, n', l].
        fc_weight: Class logits from the flattened layer-2 features.
    """

    n_max: int
    projection: FloatArray
    kernels1: FloatArray
    kernels2: FloatArray
    gn1_scale: FloatArray
    gn1_shift: FloatArray
    gn2_scale: FloatArray
    gn2_shift: FloatArray
    fc_weight: FloatArray
    fc_bias: FloatArray

    @property
    def mixing(self) -> MixingCoefficients:
        return MixingCoefficients(self.n_max, self.projection)

    @property
    def classes(self) -> int:
        return int(self.fc_bias.shape[0])

    def blocks(self) -> dict[str, FloatArray]:
        return {name: getattr(self, name) for name in BLOCKS}

    def copy(self) -> NetworkParams:
        return NetworkParams(
            self.n_max, **{name: array.copy() for name, array in self.blocks().items()}
        )

    def zeros_like(self) -> NetworkParams:
        return NetworkParams(
            self.n_max,
            **{name: np.zeros_like(array) for name, array in self.blocks().items()},
        )

    def equals(self, other: NetworkParams) -> bool:
        """Bit-for-bit equality of every block."""
        return self.n_max == other.n_max and all(
            np.array_equal(a, other.blocks()[name]) for name, a in self.blocks().items()
        )


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Stacked convolution fields, values[kernel, r', alpha, beta]."""

    values: FloatArray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 4:
            raise ConfigError(f"feature map must be 4-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("feature map has non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def kernels(self) -> int:
        return int(self.values.shape[0])


@dataclass
class _NormCache:
    normalized: FloatArray
    inv_std: FloatArray
    groups: int


def _check_groups(kernels: int, groups: int) -> None:
    if groups < 1 or kernels % groups:
        raise ConfigError(f"{kernels} kernels cannot be split into {groups} groups")


def _group_norm(
    values: FloatArray,
    groups: int,
    eps: float,
    scale: FloatArray,
    shift: FloatArray,
) -> tuple[FloatArray, _NormCache]:
    kernels = values.shape[0]
    _check_groups(kernels, groups)
    grouped = values.reshape(groups, -1)
    mean = grouped.mean(axis=1, keepdims=True)
    var = grouped.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    normalized = ((grouped - mean) * inv_std).reshape(values.shape)
    out = normalized * scale[:, None, None, None] + shift[:, None, None, None]
    return out, _NormCache(normalized, inv_std, groups)


def _group_norm_backward(
    grad: FloatArray, cache: _NormCache, scale: FloatArray
) -> tuple[FloatArray, FloatArray, FloatArray]:
    g_shift = grad.sum(axis=(1, 2, 3))
    g_scale = (grad * cache.normalized).sum(axis=(1, 2, 3))
    g_norm = (grad * scale[:, None, None, None]).reshape(cache.groups, -1)
    normalized = cache.normalized.reshape(cache.groups, -1)
    g_values = cache.inv_std * (
        g_norm
        - g_norm.mean(axis=1, keepdims=True)
        - normalized * (g_norm * normalized).mean(axis=1, keepdims=True)
    )
    return g_values.reshape(grad.shape), g_scale, g_shift


def group_norm(
    features: FeatureMap,
    groups: int,
    eps: float = 1e-5,
    scale: FloatArray | None = None,
    shift: FloatArray | None = None,
) -> FeatureMap:
    """
    Normalize each group of kernels to zero mean and unit variance.

    Args:
        features (FeatureMap): Input fields.
        groups (int): Number of groups, must divide the kernel count.
        eps (float): Added to the variance.
        scale (FloatArray | None): Per-kernel scale, ones by default.
        shift (FloatArray | None): Per-kernel shift, zeros by default.

    Returns:
        FeatureMap: Normalized fields.

    Raises:
        ConfigError: If the kernel count is not divisible by `groups`.
    """
    kernels = features.kernels
    scale = np.ones(kernels) if scale is None else np.asarray(scale, dtype=np.float64)
    shift = np.zeros(kernels) if shift is None else np.asarray(shift, dtype=np.float64)
    out, _ = _group_norm(features.values, groups, eps, scale, shift)
    return FeatureMap(out)


def _check_label(logits: FloatArray, label: int) -> None:
    if not 0 <= label < len(logits):
        raise DomainError(f"label {label} out of range for {len(logits)} classes")


def loss(logits: FloatArray, label: int) -> float:
    """Softmax cross-entropy, computed through log-sum-exp."""
    logits = np.asarray(logits, dtype=np.float64)
    _check_label(logits, label)
    return float(logsumexp(logits) - logits[label])


def loss_gradient(logits: FloatArray, label: int) -> FloatArray:
    """d loss / d logits = softmax(logits) - onehot(label)."""
    logits = np.asarray(logits, dtype=np.float64)
    _check_label(logits, label)
    grad = softmax(logits)
    grad[label] -= 1.0
    return np.asarray(grad, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class Sample:
    """A binned shape with its input projection operator computed once."""

    grid: BallGrid
    operator: ComplexArray
    label: int = 0


@dataclass
class _Trace:
    coeffs: FloatArray
    radial: FloatArray
    operator1: ComplexArray
    moments1: ComplexArray
    mixed1: FloatArray
    weighted1: ComplexArray
    norm1: _NormCache
    pre1: FloatArray
    act1: FloatArray
    operator2: ComplexArray
    moments2: ComplexArray
    mixed2: FloatArray
    weighted2: ComplexArray
    norm2: _NormCache
    pre2: FloatArray
    act2: FloatArray
    logits: FloatArray = field(default_factory=lambda: np.zeros(0))


class BlendNet:
    """
    Two blended convolution layers and a fully connected head.

    Kernel tables come from the frozen orthogonal basis; the latent
    projections use the trainable mixing weights.
    """

    def __init__(self, basis: BasisSet, config: NetworkConfig | None = None) -> None:
        self.basis = basis
        self.config = config or NetworkConfig()
        self.n_max = basis.n_max
        self.lattice = ConvLattice.from_dims(self.config.lattice_dims)
        self.kernel = kernel_table(basis, self.lattice.radii, self.config.translation)
        self.harmonics = lattice_harmonics(self.n_max, self.lattice)
        self.radial2 = radial_projector(self.config.lattice_dims, self.n_max, basis.mode)
        self.angular2 = angular_projector(self.config.lattice_dims, self.n_max)
        self.kernel_mask = kernel_mask(self.n_max)
        self.projection_mask = mixing_mask(self.n_max)
        self.fan_out = self.config.channels2 // self.config.channels1
        self.sources = np.arange(self.config.channels2) // self.fan_out

    @property
    def feature_size(self) -> int:
        return self.config.channels2 * self.lattice.size

    @property
    def frozen_projection(self) -> bool:
        return self.config.projection is not ProjectionMode.LEARNED

    def block_masks(self, params: NetworkParams) -> dict[str, NDArray[np.bool_]]:
        """Entries of each block that are real parameters."""
        masks = {
            name: np.ones(array.shape, dtype=bool)
            for name, array in params.blocks().items()
        }
        masks["projection"] = self.projection_mask.copy()
        for name in ("kernels1", "kernels2"):
            masks[name] = np.broadcast_to(self.kernel_mask, masks[name].shape).copy()
        return masks

    def init_params(self, classes: int, rng: np.random.Generator) -> NetworkParams:
        """
        Random initial parameters.

        Projection weights start at the analytic mixing coefficients, or at
        zero for the base-function projection. Kernel spectra are Gaussian
        with stddev 1/sqrt(number of spectrum terms).
        """
        if classes < 1:
            raise ConfigError(f"need at least one class, got {classes}")
        cfg = self.config
        size = self.basis.size
        terms = int(self.kernel_mask.sum())
        std = 1.0 / np.sqrt(max(terms, 1))

        if cfg.projection is ProjectionMode.BASE:
            projection = np.zeros_like(self.basis.mixing.values)
        else:
            projection = np.array(self.basis.mixing.values, dtype=np.float64)

        kernels1 = rng.normal(0.0, std, (cfg.channels1, size, size)) * self.kernel_mask
        kernels2 = rng.normal(0.0, std, (cfg.channels2, size, size)) * self.kernel_mask
        fc_weight = rng.normal(0.0, cfg.fc_init_std, (classes, self.feature_size))

        return NetworkParams(
            n_max=self.n_max,
            projection=projection,
            kernels1=kernels1,
            kernels2=kernels2,
            gn1_scale=np.ones(cfg.channels1),
            gn1_shift=np.zeros(cfg.channels1),
            gn2_scale=np.ones(cfg.channels2),
            gn2_shift=np.zeros(cfg.channels2),
            fc_weight=fc_weight,
            fc_bias=np.zeros(classes),
        )

    def prepare(self, grid: BallGrid, label: int = 0) -> Sample:
        return Sample(grid, projection_operator(grid, self.n_max, self.basis.mode), label)

    def _check_params(self, params: NetworkParams) -> None:
        cfg = self.config
        size = self.basis.size
        expected = {
            "kernels1": (cfg.channels1, size, size),
            "kernels2": (cfg.channels2, size, size),
            "projection": self.projection_mask.shape,
        }
        for name, shape in expected.items():
            actual = getattr(params, name).shape
            if actual != shape:
                raise ConfigError(f"{name} has shape {actual}, expected {shape}")
        if params.fc_weight.shape[1:] != (self.feature_size,):
            raise ConfigError(
                f"fc layer expects {params.fc_weight.shape[1]} features, "
                f"the lattice gives {self.feature_size}"
            )

    def _trace(self, params: NetworkParams, sample: Sample) -> _Trace:
        cfg = self.config
        self._check_params(params)

        coeffs = synthesize_radials(params.mixing, self.basis.forcing)
        radial = layout_coefficients(coeffs, self.n_max)

        moments1 = np.einsum("nlj,jlm->nlm", radial, sample.operator)
        mixed1 = np.einsum("slnp,kpl->ksln", self.kernel, params.kernels1)
        weighted1 = np.einsum("ksln,nlm->kslm", mixed1, moments1)
        field1 = np.einsum("kslm,lmab->ksab", weighted1, self.harmonics).real
        pre1, norm1 = _group_norm(
            field1, cfg.groups1, cfg.gn_eps, params.gn1_scale, params.gn1_shift
        )
        act1 = np.maximum(pre1, 0.0)

        # each layer-1 field is a ball grid over the (r', alpha, beta) lattice
        per_radius = np.einsum("csab,lmab->cslm", act1, self.angular2)
        operator2 = np.einsum("sj,cslm->cjlm", self.radial2, per_radius)
        moments2 = np.einsum("nlj,cjlm->cnlm", radial, operator2)
        mixed2 = np.einsum("slnp,kpl->ksln", self.kernel, params.kernels2)
        weighted2 = np.einsum("ksln,knlm->kslm", mixed2, moments2[self.sources])
        field2 = np.einsum("kslm,lmab->ksab", weighted2, self.harmonics).real
        pre2, norm2 = _group_norm(
            field2, cfg.groups2, cfg.gn_eps, params.gn2_scale, params.gn2_shift
        )
        act2 = np.maximum(pre2, 0.0)

        trace = _Trace(
            coeffs, radial, sample.operator, moments1, mixed1, weighted1, norm1, pre1, act1,
            operator2, moments2, mixed2, weighted2, norm2, pre2, act2,
        )
        trace.logits = params.fc_weight @ act2.reshape(-1) + params.fc_bias
        return trace

    def forward(self, params: NetworkParams, sample: Sample | BallGrid) -> FloatArray:
        """
        Class logits of one shape.

        Args:
            params (NetworkParams): Network state.
            sample (Sample | BallGrid): Prepared sample or a raw grid.

        Returns:
            FloatArray: One logit per class.
        """
        if isinstance(sample, BallGrid):
            sample = self.prepare(sample)
        return self._trace(params, sample).logits

    def features(self, params: NetworkParams, sample: Sample | BallGrid) -> FeatureMap:
        """Layer-2 fields after normalization and ReLU."""
        if isinstance(sample, BallGrid):
            sample = self.prepare(sample)
        return FeatureMap(self._trace(params, sample).act2)

    def _backward(
        self, params: NetworkParams, trace: _Trace, g_logits: FloatArray
    ) -> NetworkParams:
        grads = params.zeros_like()
        harmonics_conj = np.conj(self.harmonics)

        act2 = trace.act2.reshape(-1)
        grads.fc_weight = np.outer(g_logits, act2)
        grads.fc_bias = g_logits.copy()
        g_act2 = (params.fc_weight.T @ g_logits).reshape(trace.act2.shape)

        g_pre2 = g_act2 * (trace.pre2 > 0)
        g_field2, grads.gn2_scale, grads.gn2_shift = _group_norm_backward(
            g_pre2, trace.norm2, params.gn2_scale
        )
        g_weighted2 = np.einsum("ksab,lmab->kslm", g_field2, harmonics_conj)
        sources = trace.moments2[self.sources]
        g_mixed2 = np.einsum("kslm,knlm->ksln", g_weighted2, np.conj(sources)).real
        grads.kernels2 = np.einsum("slnp,ksln->kpl", self.kernel, g_mixed2) * self.kernel_mask
        g_sources = np.einsum("ksln,kslm->knlm", trace.mixed2, g_weighted2)
        g_moments2 = g_sources.reshape(
            self.config.channels1, self.fan_out, *g_sources.shape[1:]
        ).sum(axis=1)

        g_radial = np.einsum("cnlm,cjlm->nlj", g_moments2, np.conj(trace.operator2)).real
        g_operator2 = np.einsum("nlj,cnlm->cjlm", trace.radial, g_moments2)
        g_per_radius = np.einsum("sj,cjlm->cslm", self.radial2, g_operator2)
        g_act1 = np.einsum("cslm,lmab->csab", g_per_radius, np.conj(self.angular2)).real

        g_pre1 = g_act1 * (trace.pre1 > 0)
        g_field1, grads.gn1_scale, grads.gn1_shift = _group_norm_backward(
            g_pre1, trace.norm1, params.gn1_scale
        )
        g_weighted1 = np.einsum("ksab,lmab->kslm", g_field1, harmonics_conj)
        g_mixed1 = np.einsum("kslm,nlm->ksln", g_weighted1, np.conj(trace.moments1)).real
        grads.kernels1 = np.einsum("slnp,ksln->kpl", self.kernel, g_mixed1) * self.kernel_mask
        g_moments1 = np.einsum("ksln,kslm->nlm", trace.mixed1, g_weighted1)
        g_radial += np.einsum("nlm,jlm->nlj", g_moments1, np.conj(trace.operator1)).real

        if not self.frozen_projection:
            g_coeffs = flatten_coefficients(g_radial, self.n_max)
            system = np.eye(len(g_coeffs)) + params.projection
            adjoint = solve_triangular(
                system, g_coeffs, trans="T", lower=True, unit_diagonal=True
            )
            grads.projection = -(adjoint @ trace.coeffs.T) * self.projection_mask
        return grads

    def loss_and_gradient(
        self,
        params: NetworkParams,
        batch: Sequence[Sample],
        active: Iterable[str] | None = None,
    ) -> tuple[float, NetworkParams]:
        """
        Mean loss of a batch and its exact gradient.

        Args:
            params (NetworkParams): Network state.
            batch (Sequence[Sample]): Prepared, labelled samples.
            active (Iterable[str] | None): Blocks to differentiate; the
                others get exactly zero gradients. All blocks by default.

        Returns:
            tuple[float, NetworkParams]: Mean loss and mean gradient.

        Raises:
            NonFiniteError: Naming the first block with a non-finite gradient.
        """
        if not batch:
            raise ConfigError("cannot differentiate an empty batch")
        total = 0.0
        grads = params.zeros_like()
        for sample in batch:
            trace = self._trace(params, sample)
            total += loss(trace.logits, sample.label)
            sample_grads = self._backward(
                params, trace, loss_gradient(trace.logits, sample.label)
            )
            for name, array in sample_grads.blocks().items():
                getattr(grads, name)[...] += array

        keep = set(BLOCKS if active is None else active)
        for name, array in grads.blocks().items():
            if name not in keep:
                array[...] = 0.0
                continue
            array /= len(batch)
            if not np.all(np.isfinite(array)):
                raise NonFiniteError(f"non-finite gradient in parameter block {name}")
        return total / len(batch), grads

    def batch_loss(self, params: NetworkParams, batch: Sequence[Sample]) -> float:
        return float(np.mean([loss(self.forward(params, s), s.label) for s in batch]))

    def predict(self, params: NetworkParams, samples: Sequence[Sample]) -> NDArray[np.int_]:
        return np.array(
            [int(np.argmax(self.forward(params, s))) for s in samples], dtype=np.int64
        )


def accuracy(predicted: Sequence[int], labels: Sequence[int]) -> float:
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    if len(labels) == 0:
        return 0.0
    return float(np.mean(predicted == labels))
