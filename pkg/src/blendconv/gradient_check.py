"""Central finite differences against the network's reverse-mode gradient."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from blendconv.exceptions import NondifferentiableError
from blendconv.network import BlendNet, NetworkParams, Sample

log = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

DEFAULT_STEP = 1e-5


def _is_kink(values: Sequence[float], atol: float, rtol: float) -> bool:
    _, (residuals, _, _, _) = np.polynomial.polynomial.polyfit(
        range(len(values)), values, deg=2, full=True
    )
    residual = float(np.sqrt(residuals[0] / len(values))) if len(residuals) else 0.0
    spread = max(values) - min(values)
    return residual > atol + rtol * spread


def numerical_gradient(
    fn: Callable[[], float],
    array: FloatArray,
    indices: Sequence[tuple[int, ...]],
    eps: float = DEFAULT_STEP,
    detect_nondifferentiable: bool = False,
    diff_atol: float = 0.0,
    diff_rtol: float = 1e-2,
) -> FloatArray:
    """
    Central differences of a scalar function at selected entries of `array`.

    `array` is perturbed in place and restored after every evaluation.

    Args:
        fn (Callable[[], float]): Scalar function reading `array`.
        array (FloatArray): Parameter array.
        indices (Sequence[tuple[int, ...]]): Entries to differentiate.
        eps (float): Step.
        detect_nondifferentiable (bool): Sample five points and fit a
            quadratic to catch stencils crossing a kink.
        diff_atol (float): Absolute fit tolerance.
        diff_rtol (float): Fit tolerance relative to the sampled spread.

    Returns:
        FloatArray: One derivative per index.

    Raises:
        NondifferentiableError: If the quadratic fit fails at some entry.
    """

    def at(index: tuple[int, ...], delta: float, orig: float) -> float:
        array[index] = orig + delta
        try:
            return fn()
        finally:
            array[index] = orig

    out = np.zeros(len(indices))
    for i, index in enumerate(indices):
        orig = float(array[index])
        if detect_nondifferentiable:
            center = fn()
            values = [
                at(index, -eps, orig),
                at(index, -eps / 2, orig),
                center,
                at(index, eps / 2, orig),
                at(index, eps, orig),
            ]
            if _is_kink(values, diff_atol, diff_rtol):
                raise NondifferentiableError(
                    f"non-differentiable point at index {index}, samples {values}"
                )
            out[i] = (values[4] - values[0]) / (2 * eps)
        else:
            out[i] = (at(index, eps, orig) - at(index, -eps, orig)) / (2 * eps)
    return out


@dataclass(frozen=True)
class BlockCheck:
    name: str
    entries: int
    relative_error: float


def relative_error(numerical: FloatArray, analytic: FloatArray) -> float:
    scale = max(float(np.linalg.norm(numerical)), float(np.linalg.norm(analytic)))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(numerical - analytic)) / scale


def check_gradients(
    net: BlendNet,
    params: NetworkParams,
    batch: Sequence[Sample],
    rng: np.random.Generator,
    samples: int = 50,
    eps: float = DEFAULT_STEP,
    blocks: Sequence[str] | None = None,
    detect_nondifferentiable: bool = False,
    diff_atol: float = 1e-10,
    diff_rtol: float = 1e-2,
) -> list[BlockCheck]:
    """
    Compare reverse-mode and finite-difference gradients block by block.

    Up to `samples` random valid entries are drawn from every block.

    Args:
        net (BlendNet): Network.
        params (NetworkParams): Point of evaluation, perturbed and restored.
        batch (Sequence[Sample]): Labelled samples.
        rng (np.random.Generator): Chooses the entries.
        samples (int): Entries per block.
        eps (float): Finite-difference step.
        blocks (Sequence[str] | None): Blocks to check, all by default.
        detect_nondifferentiable (bool): Reject entries whose stencil
            crosses a kink of the loss, such as a group with zero variance.
        diff_atol (float): Absolute fit tolerance of the kink test.
        diff_rtol (float): Relative fit tolerance of the kink test.

    Returns:
        list[BlockCheck]: Relative error of every checked block.

    Raises:
        NondifferentiableError: If detection is on and some entry sits on a kink.
    """
    _, analytic = net.loss_and_gradient(params, batch)
    masks = net.block_masks(params)
    names = list(blocks) if blocks is not None else list(params.blocks())
    if net.frozen_projection and "projection" in names:
        names.remove("projection")

    results = []
    for name in names:
        array = getattr(params, name)
        valid = np.argwhere(masks[name])
        if len(valid) == 0:
            continue
        chosen = valid[rng.choice(len(valid), min(samples, len(valid)), replace=False)]
        indices = [tuple(int(i) for i in row) for row in chosen]
        numerical = numerical_gradient(
            lambda: net.batch_loss(params, batch),
            array,
            indices,
            eps,
            detect_nondifferentiable=detect_nondifferentiable,
            diff_atol=diff_atol,
            diff_rtol=diff_rtol,
        )
        expected = np.array([getattr(analytic, name)[index] for index in indices])
        error = relative_error(numerical, expected)
        log.debug(f"gradient check {name}: {len(indices)} entries, error {error:.3e}")
        results.append(BlockCheck(name, len(indices), error))
    return results
