"""Concurrent sampling and flow training.

One iteration k of the loop is: advance the walker ensemble through
``update_stride`` kernel sweeps, pushing each new ensemble snapshot into a
FIFO buffer, then evaluate the forward-KL loss over the concatenated
buffer and apply one Adam update to the flow.  Sweeps alternate between
the flow move (every (k_lang + 1)-th sweep, counted across iteration
boundaries) and the Langevin move.  The loss treats the buffered positions
as constants; no gradient flows through the sampling that produced them.

The default ``update_stride`` of 1 gives the fully interleaved loop (one
sweep, one update).  The reference experiments use larger strides; the
flow then adapts slowly relative to the walkers, which keeps the coupled
dynamics stable when the target has well-separated modes.  With a stride
of 1 the flow chases the ensemble fast enough that a finite ensemble can
lose a mode for good: once the last walkers leave it, the buffer flushes,
the flow forgets the region within a few updates, and neither kernel can
propose a way back.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .flow import RealNvpFlow
from .nn import AdamState, adam_step
from .samplers import MALA, ULA, KernelStats, WalkerEnsemble, langevin_step, nf_mh_step
from .targets import TargetPosterior

__all__ = [
    "TrainConfig",
    "IterationRecord",
    "RunMetrics",
    "NonFiniteLossError",
    "sample_train",
    "acceptance_rate_window",
    "NF_KERNEL",
    "LANGEVIN_KERNEL",
    "MIXED_KERNEL",
]

NF_KERNEL = "nf"
LANGEVIN_KERNEL = "langevin"
MIXED_KERNEL = "mixed"


@dataclass(frozen=True)
class TrainConfig:
    """Settings of the sampling/training loop."""

    tau: float
    k_max: int
    k_lang: int = 1
    learning_rate: float = 1e-3
    n_walkers: int = 1
    buffer_len: int = 1
    update_stride: int = 1
    langevin_mode: str = ULA
    master_seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_stab: float = 1e-8

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if self.k_max < 0:
            raise ValueError("k_max must be >= 0")
        if self.k_lang < 0:
            raise ValueError("k_lang must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.n_walkers < 1:
            raise ValueError("n_walkers must be >= 1")
        if self.buffer_len < 1:
            raise ValueError("buffer_len must be >= 1")
        if self.update_stride < 1:
            raise ValueError("update_stride must be >= 1")
        if self.langevin_mode not in (ULA, MALA):
            raise ValueError(f"langevin_mode must be '{ULA}' or '{MALA}'")


@dataclass
class IterationRecord:
    """Per-iteration diagnostics; rates pool all sweeps of that iteration.

    ``kernel`` names the move that ran, or "mixed" when an iteration spans
    sweeps of both kinds (update_stride > 1 with k_lang > 0).
    """

    iteration: int
    kernel: str
    loss: float
    nf_proposed: int = 0
    nf_accepted: int = 0
    langevin_proposed: int = 0
    langevin_accepted: int = 0

    @property
    def nf_acc_rate(self) -> float:
        return self.nf_accepted / self.nf_proposed if self.nf_proposed else 0.0

    @property
    def langevin_acc_rate(self) -> float:
        return self.langevin_accepted / self.langevin_proposed if self.langevin_proposed else 0.0


@dataclass
class RunMetrics:
    records: list[IterationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])


class NonFiniteLossError(RuntimeError):
    """Raised when the training loss stops being finite.

    ``diagnostics`` holds a JSON-friendly snapshot of the failing state.
    """

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


def sample_train(
    config: TrainConfig,
    target: TargetPosterior,
    flow: RealNvpFlow,
    initial_positions,
    checkpoint_hook: Callable[[int, RealNvpFlow, WalkerEnsemble], None] | None = None,
) -> tuple[np.ndarray, RealNvpFlow, RunMetrics]:
    """Run the interleaved sampling/training loop.

    Each of the k_max iterations performs ``update_stride`` kernel sweeps
    and one Adam update.  Returns (history, flow, metrics) where history is
    a (k_max + 1, n_walkers, dim) array of positions, row 0 being the start
    and row k + 1 the ensemble after iteration k's sweeps.  The flow is
    trained in place.  ``checkpoint_hook``, when given, is called as
    hook(iteration, flow, ensemble) after each parameter update.
    """
    initial_positions = np.array(initial_positions, dtype=float)
    if initial_positions.shape != (config.n_walkers, target.dim):
        raise ValueError(
            f"initial positions must be ({config.n_walkers}, {target.dim}), "
            f"got {initial_positions.shape}"
        )
    if flow.dim != target.dim:
        raise ValueError(f"flow dim {flow.dim} does not match target dim {target.dim}")

    ensemble = WalkerEnsemble.from_positions(initial_positions, target, config.master_seed)
    history = np.empty((config.k_max + 1, config.n_walkers, target.dim))
    history[0] = ensemble.positions
    metrics = RunMetrics()
    buffer: deque[np.ndarray] = deque(maxlen=config.buffer_len)
    adam = AdamState.for_arrays(
        flow.parameter_arrays(), config.beta1, config.beta2, config.epsilon_stab
    )

    for k in range(config.k_max):
        stats = KernelStats()
        kinds = set()
        for j in range(config.update_stride):
            # sweep parity runs across iteration boundaries so the nf/langevin
            # cadence is independent of where the updates fall
            sweep = k * config.update_stride + j
            kernel = NF_KERNEL if sweep % (config.k_lang + 1) == 0 else LANGEVIN_KERNEL
            kinds.add(kernel)
            try:
                if kernel == NF_KERNEL:
                    nf_mh_step(ensemble, target, flow, stats)
                else:
                    langevin_step(ensemble, target, config.tau, config.langevin_mode, stats)
            except FloatingPointError as exc:
                # a diverged flow or posterior overflow first shows up inside
                # the kernel; report it the same way as a non-finite loss
                raise NonFiniteLossError(
                    f"kernel failure at iteration {k}: {exc}",
                    _diagnostics(k, kernel, float("nan"), ensemble, len(buffer)),
                ) from exc
            buffer.append(ensemble.positions.copy())
        history[k + 1] = ensemble.positions
        label = next(iter(kinds)) if len(kinds) == 1 else MIXED_KERNEL

        batch = np.concatenate(buffer, axis=0)
        loss, grads = flow.loss_and_gradients(batch)
        if not np.isfinite(loss):
            raise NonFiniteLossError(
                f"non-finite loss {loss} at iteration {k}",
                _diagnostics(k, label, loss, ensemble, len(buffer)),
            )
        try:
            adam_step(adam, flow.parameter_arrays(), grads, config.learning_rate)
        except FloatingPointError as exc:
            raise NonFiniteLossError(
                f"non-finite gradient at iteration {k}: {exc}",
                _diagnostics(k, label, loss, ensemble, len(buffer)),
            ) from exc

        metrics.records.append(
            IterationRecord(
                iteration=k,
                kernel=label,
                loss=loss,
                nf_proposed=stats.nf_proposed,
                nf_accepted=stats.nf_accepted,
                langevin_proposed=stats.langevin_proposed,
                langevin_accepted=stats.langevin_accepted,
            )
        )
        if checkpoint_hook is not None:
            checkpoint_hook(k, flow, ensemble)

    return history, flow, metrics


def _diagnostics(k: int, kernel: str, loss: float, ensemble: WalkerEnsemble, n_buffer: int) -> dict:
    pos = ensemble.positions
    worst = int(np.argmax(np.max(np.abs(pos), axis=1)))
    return {
        "iteration": k,
        "kernel": kernel,
        "loss": float(loss),
        "buffer_snapshots": n_buffer,
        "position_abs_max": float(np.max(np.abs(pos))),
        "worst_walker": worst,
        "worst_walker_position": pos[worst].tolist(),
        "log_post_min": float(np.min(ensemble.cached_log_post)),
        "log_post_max": float(np.max(ensemble.cached_log_post)),
    }


def acceptance_rate_window(metrics: RunMetrics, window: int) -> tuple[float, bool]:
    """Mean NF acceptance over the last ``window`` iterations with NF sweeps.

    Returns (rate, partial); ``partial`` is True when fewer than ``window``
    such iterations exist, in which case all available ones are used (the
    rate over an empty set is 0 by convention).
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    nf_records = [r for r in metrics.records if r.nf_proposed > 0]
    tail = nf_records[-window:]
    partial = len(tail) < window
    proposed = sum(r.nf_proposed for r in tail)
    accepted = sum(r.nf_accepted for r in tail)
    return (accepted / proposed if proposed else 0.0, partial)
