"""Two-phase Adam training of the blended convolution network."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from blendconv.config import TrainConfig
from blendconv.exceptions import ConfigError, DivergenceError
from blendconv.network import (
    KERNEL_BLOCKS,
    POLYNOMIAL_BLOCKS,
    BlendNet,
    NetworkParams,
    Sample,
)
from blendconv.utils import Timer

log = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class HistoryEntry:
    step: int
    phase: int
    loss: float


@dataclass
class Adam:
    """Adam over a named set of parameter blocks."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first: dict[str, FloatArray] = field(default_factory=dict)
    second: dict[str, FloatArray] = field(default_factory=dict)

    def step(self, params: NetworkParams, grads: NetworkParams, blocks: Sequence[str]) -> None:
        """Update `blocks` of `params` in place."""
        self.step_count += 1
        t = self.step_count
        for name in blocks:
            grad = getattr(grads, name)
            m = self.first.setdefault(name, np.zeros_like(grad))
            v = self.second.setdefault(name, np.zeros_like(grad))
            m *= self.beta1
            m += (1 - self.beta1) * grad
            v *= self.beta2
            v += (1 - self.beta2) * grad**2
            m_hat = m / (1 - self.beta1**t)
            v_hat = v / (1 - self.beta2**t)
            getattr(params, name)[...] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainResult:
    params: NetworkParams
    history: list[HistoryEntry]

    @property
    def losses(self) -> list[float]:
        return [entry.loss for entry in self.history]


def _phases(net: BlendNet, config: TrainConfig) -> list[tuple[int, tuple[str, ...], float, int]]:
    phases = []
    if net.frozen_projection:
        log.info(f"projection is {net.config.projection}, skipping the polynomial phase")
    else:
        phases.append((1, POLYNOMIAL_BLOCKS, config.lr_polynomial, config.iters_polynomial))
    phases.append((2, KERNEL_BLOCKS, config.lr_kernel, config.iters_kernel))
    return phases


def train(
    net: BlendNet,
    samples: Sequence[Sample],
    config: TrainConfig,
    classes: int | None = None,
    params: NetworkParams | None = None,
) -> TrainResult:
    """
    Train the projection weights, then the kernels, normalization and head.

    Each phase has its own Adam state and touches only its own blocks.
    Batches are drawn without replacement from a generator seeded with
    `config.seed`, so runs are reproducible bit for bit.

    Args:
        net (BlendNet): Network.
        samples (Sequence[Sample]): Labelled training samples.
        config (TrainConfig): Schedule and optimizer settings.
        classes (int | None): Class count, inferred from labels by default.
        params (NetworkParams | None): Starting point, random by default.

    Returns:
        TrainResult: Final parameters and per-step loss history.

    Raises:
        ConfigError: If the samples cover fewer than two classes.
        DivergenceError: If the loss exceeds the divergence threshold.
    """
    labels = sorted({sample.label for sample in samples})
    if len(labels) < 2:
        raise ConfigError(f"training needs at least 2 classes, got {len(labels)}")
    classes = classes or labels[-1] + 1

    rng = np.random.default_rng(config.seed)
    if params is None:
        params = net.init_params(classes, rng)
    else:
        params = params.copy()

    history: list[HistoryEntry] = []
    timer = Timer()
    batch_size = min(config.batch_size, len(samples))
    step = 0

    for phase, blocks, lr, iters in _phases(net, config):
        optimizer = Adam(lr, config.beta1, config.beta2, config.adam_eps)
        for i in range(iters):
            chosen = rng.choice(len(samples), batch_size, replace=False)
            batch = [samples[int(j)] for j in chosen]
            value, grads = net.loss_and_gradient(params, batch, active=blocks)

            history.append(HistoryEntry(step, phase, value))
            if not math.isfinite(value) or value > config.divergence_threshold:
                raise DivergenceError(
                    f"loss {value} at step {step} (phase {phase}) diverged", history
                )

            optimizer.step(params, grads, blocks)
            if (i + 1) % config.log_every == 0:
                log.info(f"phase {phase} step {i + 1}/{iters}: loss {value:.4f}")
            step += 1

    log.info(f"trained {step} steps in {timer.elapsed:.1f} seconds")
    return TrainResult(params, history)
