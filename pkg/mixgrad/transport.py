"""
Learn a weight vector by pulling it toward a target with NGMG updates.

Each iteration computes the deficit wells of the current estimate against the
target (positions where the estimate undershoots), turns them into an NGMG
field, applies the update and renormalizes.

Two update rules are available:

additive
    pi <- normalize(pi + eta * NGMG(deficit(pi, target))). This is the
    algorithm as usually stated. The zero kernel diagonal means a well never
    receives mass from its own deficit, so sharp targets are not reachable.
routed (default)
    Every surplus position j sends its surplus to the wells i in proportion to
    the individual NGMG terms M_ji * |L_i| (row-normalized, computed in log
    space so distant wells never underflow). Inflow is capped at each well's
    deficit and the surplus positions give up exactly the accepted inflow.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import softmax

from mixgrad.basis import Basis, WeightVector, check_compatible, fit_weights, initial_weights
from mixgrad.errors import InvariantError, NumericalError
from mixgrad.metrics import w1_integral
from mixgrad.ngmg import KernelMatrix, deficit, kernel, ngmg_gradient

log = logging.getLogger(__name__)


class UpdateRule(str, Enum):
    routed = "routed"
    additive = "additive"


class TransportStatus(str, Enum):
    converged = "converged"
    max_iters_reached = "max_iters_reached"


@dataclass(frozen=True)
class TransportConfig:
    step_size: float = 1.0
    tolerance: float = 1e-3
    max_iters: int = 2000
    kernel_scale: float | None = None
    record_trace: bool = True
    record_snapshots: bool = False
    update: UpdateRule = UpdateRule.routed

    def __post_init__(self):
        if not (math.isfinite(self.step_size) and self.step_size > 0):
            raise InvariantError(f"step_size must be > 0, got {self.step_size}")
        if not (math.isfinite(self.tolerance) and self.tolerance > 0):
            raise InvariantError(f"tolerance must be > 0, got {self.tolerance}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise InvariantError(f"max_iters must be an integer >= 1, got {self.max_iters}")
        if self.kernel_scale is not None and not self.kernel_scale > 0:
            raise InvariantError(f"kernel_scale must be > 0, got {self.kernel_scale}")
        object.__setattr__(self, "update", UpdateRule(self.update))


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    w1: float
    ngmg_norm: float
    loss: float
    snapshot: np.ndarray | None = None


@dataclass
class TransportTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def append(self, record: TraceRecord) -> None:
        if self.records and record.iteration <= self.records[-1].iteration:
            raise InvariantError("trace iterations must be strictly increasing")
        self.records.append(record)

    @property
    def w1(self) -> list[float]:
        return [r.w1 for r in self.records]

    @property
    def iterations(self) -> list[int]:
        return [r.iteration for r in self.records]

    def rows(self) -> list[dict]:
        return [{"iter": r.iteration, "w1": r.w1, "ngmg_norm": r.ngmg_norm} for r in self.records]


@dataclass(frozen=True)
class TransportResult:
    weights: WeightVector
    trace: TransportTrace
    status: TransportStatus
    iterations: int


def normalize(v) -> WeightVector:
    """Clamp negatives to zero and rescale to unit mass. A WeightVector maps to itself."""
    if isinstance(v, WeightVector):
        return v
    arr = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NumericalError("cannot normalize a non-finite vector")
    clamped = np.maximum(arr, 0.0)
    total = float(clamped.sum())
    if not total > 0:
        raise InvariantError("cannot normalize: no positive entries after clamping")
    out = clamped / total
    # idempotent on vectors that already hold unit mass
    if np.array_equal(clamped, arr) and total == 1.0:
        out = arr.copy()
    return WeightVector(out)


# ---------- update rules ----------
def _additive_step(pi: np.ndarray, target: np.ndarray, k: KernelMatrix, eta: float) -> np.ndarray:
    return pi + eta * ngmg_gradient(k, deficit(pi, target))


def _routed_step(pi: np.ndarray, target: np.ndarray, k: KernelMatrix, eta: float) -> np.ndarray:
    need = -deficit(pi, target).values
    surplus = np.maximum(pi - target, 0.0)
    wells = need > 0
    donors = surplus > 0
    if not wells.any() or not donors.any():
        return pi.copy()

    # log of the NGMG terms M_ji * |L_i| up to the shared pdf constant
    pos = k.positions
    d2 = (pos[donors, None] - pos[None, wells]) ** 2
    logits = -d2 / (2.0 * k.kernel_scale ** 2) + np.log(need[wells])[None, :]
    plan = softmax(logits, axis=1)

    inflow = surplus[donors] @ plan
    accepted = np.minimum(need[wells], eta * inflow)
    moved = float(accepted.sum())
    out = pi.copy()
    out[wells] += accepted
    out[donors] -= surplus[donors] * (moved / float(surplus[donors].sum()))
    return out


_STEPS = {
    UpdateRule.additive: _additive_step,
    UpdateRule.routed: _routed_step,
}


def _record(trace: TransportTrace, it: int, basis: Basis, pi: WeightVector, target: WeightVector,
            k: KernelMatrix, config: TransportConfig) -> float:
    l = deficit(pi, target)
    loss = l.norm
    if config.record_trace:
        trace.append(TraceRecord(
            iteration=it,
            w1=w1_integral(basis, pi, target),
            ngmg_norm=float(np.sum(ngmg_gradient(k, l))),
            loss=loss,
            snapshot=pi.weights.copy() if config.record_snapshots else None,
        ))
    return loss


def transport(basis: Basis, target: WeightVector, init: WeightVector,
              config: TransportConfig | None = None) -> TransportResult:
    """
    Iterate until ‖deficit(pi, target)‖₁ <= tolerance or max_iters updates
    have been applied. Iteration 0 records the initial state.
    """
    config = config or TransportConfig()
    check_compatible(basis, target, init)
    k = kernel(basis, config.kernel_scale)
    step = _STEPS[config.update]
    trace = TransportTrace()

    pi = init
    loss = _record(trace, 0, basis, pi, target, k, config)
    it = 0
    while loss > config.tolerance and it < config.max_iters:
        it += 1
        updated = step(pi.weights, target.weights, k, config.step_size)
        if not np.all(np.isfinite(updated)):
            raise NumericalError(f"non-finite transport update at iteration {it}")
        pi = normalize(updated)
        loss = _record(trace, it, basis, pi, target, k, config)

    status = TransportStatus.converged if loss <= config.tolerance else TransportStatus.max_iters_reached
    log.info("transport %s after %d iterations (loss %.3g, rule %s)", status.value, it, loss, config.update.value)
    return TransportResult(weights=pi, trace=trace, status=status, iterations=it)


def learn_density(basis: Basis, data, init: WeightVector | None = None,
                  config: TransportConfig | None = None) -> TransportResult:
    """Transport toward the expansion weights fitted from data."""
    target = fit_weights(basis, data)
    return transport(basis, target, init if init is not None else initial_weights(basis), config)
